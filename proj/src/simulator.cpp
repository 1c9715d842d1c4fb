#include "riskid/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "riskid/rng.hpp"

namespace riskid::sim {

using scene::BoundingBox;
using scene::Intention;
using scene::Point3;
using scene::Response;
using scene::Stimulus;
using scene::StuffCategory;
using scene::StuffRegion;
using scene::ThingCategory;
using scene::Tracklet;
using scene::TrackletFrame;

namespace {

constexpr const char* kKindNames[] = {
    "none", "congestion", "crossing_pedestrian", "crossing_vehicle",
    "parked_vehicle"};

struct ObjectSize {
  double w, h;
};

ObjectSize object_size(ThingCategory c) {
  switch (c) {
    case ThingCategory::kCar: return {1.8, 1.5};
    case ThingCategory::kPerson: return {0.5, 1.7};
    case ThingCategory::kBicycle: return {0.6, 1.6};
    case ThingCategory::kMotorcycle: return {0.8, 1.5};
    case ThingCategory::kBus: return {2.5, 3.0};
    case ThingCategory::kTrain: return {3.0, 3.5};
    case ThingCategory::kTruck: return {2.4, 2.8};
  }
  return {1.8, 1.5};
}

// Straight-line motion plan in the camera frame.
struct ObjectPlan {
  ThingCategory category = ThingCategory::kCar;
  double x0 = 0.0, z0 = 5.0;   // ground position at frame 0
  double vx = 0.0, vz = 0.0;   // m/s
  bool is_cause = false;

  double x_at(int frame, double dt) const { return x0 + vx * frame * dt; }
  double z_at(int frame, double dt) const { return z0 + vz * frame * dt; }
};

double ground_v(double z, const SimConfig& cfg) {
  return cfg.height / 2.0 + cfg.focal * cfg.camera_height / z;
}

std::optional<TrackletFrame> project_object(double x, double z,
                                            ThingCategory cat,
                                            const SimConfig& cfg) {
  if (z < 2.1) return std::nullopt;
  const ObjectSize sz = object_size(cat);
  const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
  const double u = cx + cfg.focal * x / z;
  const double vc = cy + cfg.focal * (cfg.camera_height - sz.h / 2.0) / z;
  const double half_w = 0.5 * cfg.focal * sz.w / z;
  const double half_h = 0.5 * cfg.focal * sz.h / z;
  int x1 = static_cast<int>(std::lround(u - half_w));
  int x2 = static_cast<int>(std::lround(u + half_w));
  int y1 = static_cast<int>(std::lround(vc - half_h));
  int y2 = static_cast<int>(std::lround(vc + half_h));
  if (x2 <= x1) x2 = x1 + 1;
  if (y2 <= y1) y2 = y1 + 1;
  if (x1 < 0 || y1 < 0 || x2 > cfg.width || y2 > cfg.height) {
    return std::nullopt;
  }
  return TrackletFrame{BoundingBox{x1, y1, x2, y2}, z};
}

void append_band(std::vector<BoundingBox>& rects, double za, double zb,
                 double xl, double xr, const SimConfig& cfg) {
  const double zm = 0.5 * (za + zb);
  const double cx = cfg.width / 2.0;
  int y1 = static_cast<int>(std::lround(ground_v(zb, cfg)));
  int y2 = static_cast<int>(std::lround(ground_v(za, cfg)));
  int x1 = static_cast<int>(std::lround(cx + cfg.focal * xl / zm));
  int x2 = static_cast<int>(std::lround(cx + cfg.focal * xr / zm));
  x1 = std::clamp(x1, 0, cfg.width);
  x2 = std::clamp(x2, 0, cfg.width);
  y1 = std::clamp(y1, 0, cfg.height);
  y2 = std::clamp(y2, 0, cfg.height);
  if (x2 > x1 && y2 > y1) rects.push_back(BoundingBox{x1, y1, x2, y2});
}

StuffRegion banded_region(StuffCategory cat, const std::vector<double>& zs,
                          double xl, double xr, int frames,
                          const SimConfig& cfg) {
  StuffRegion region;
  region.category = cat;
  std::vector<BoundingBox> rects;
  for (std::size_t i = 0; i + 1 < zs.size(); ++i) {
    append_band(rects, zs[i], zs[i + 1], xl, xr, cfg);
  }
  region.rects.assign(frames, rects);
  return region;
}

struct BuildSpec {
  Intention intention = Intention::kBackground;
  bool want_stop = false;
  ReactiveKind kind = ReactiveKind::kNone;
  bool confound = false;
  bool light_only = false;
  bool single_cause = false;
  bool force_near_distractor = false;
  bool isolation_family = false;
};

ThingCategory pick_vehicle(Rng& rng) {
  const double r = rng.uniform();
  if (r < 0.60) return ThingCategory::kCar;
  if (r < 0.75) return ThingCategory::kTruck;
  if (r < 0.85) return ThingCategory::kBus;
  if (r < 0.95) return ThingCategory::kMotorcycle;
  return ThingCategory::kBicycle;
}

// Margin-inflated corridor test used while placing non-cause objects, so
// that pixel quantization of the final boxes cannot flip them inside.
bool near_corridor(double x, double z, Intention intention,
                   const SimConfig& cfg) {
  if (z < cfg.corridor_near - 0.15 || z > cfg.corridor_depth + 0.3) {
    return false;
  }
  return std::fabs(x - corridor_center(z, intention, cfg)) <=
         cfg.corridor_half_width + 0.18;
}

bool plan_avoids_corridor(const ObjectPlan& plan, Intention intention,
                          int total_frames, const SimConfig& cfg) {
  for (int t = 0; t < total_frames; ++t) {
    if (near_corridor(plan.x_at(t, cfg.dt()), plan.z_at(t, cfg.dt()),
                      intention, cfg)) {
      return false;
    }
  }
  return true;
}

int visible_frames(const ObjectPlan& plan, const SimConfig& cfg) {
  int n = 0;
  for (int t = 0; t < cfg.frames; ++t) {
    if (project_object(plan.x_at(t, cfg.dt()), plan.z_at(t, cfg.dt()),
                       plan.category, cfg)) {
      ++n;
    }
  }
  return n;
}

std::optional<ObjectPlan> sample_bystander(Rng& rng, Intention intention,
                                           int total_frames,
                                           const SimConfig& cfg,
                                           int forced_type = -1) {
  for (int attempt = 0; attempt < 24; ++attempt) {
    ObjectPlan plan;
    const int type = forced_type >= 0 ? forced_type : rng.weighted_index(
        std::array<double, 5>{0.30, 0.20, 0.20, 0.15, 0.15});
    switch (type) {
      case 0: {  // parked at the roadside
        plan.category = pick_vehicle(rng);
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        plan.x0 = side * rng.uniform(1.7, 4.0);
        plan.z0 = rng.uniform(2.4, 8.0);
        break;
      }
      case 1: {  // near distractor: close to the driver, off the path
        plan.category = rng.bernoulli(0.75) ? ThingCategory::kCar
                                            : ThingCategory::kPerson;
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        plan.x0 = side * rng.uniform(1.5, 2.2);
        plan.z0 = rng.uniform(2.3, 3.4);
        break;
      }
      case 2: {  // oncoming traffic on the left
        plan.category = pick_vehicle(rng);
        plan.x0 = -rng.uniform(1.8, 3.0);
        plan.z0 = rng.uniform(6.0, 13.0);
        plan.vz = -rng.uniform(0.5, 1.1);
        break;
      }
      case 3: {  // traffic ahead moving away
        plan.category = pick_vehicle(rng);
        plan.x0 = rng.uniform(-0.4, 0.4);
        plan.z0 = rng.uniform(7.6, 10.0);
        plan.vz = rng.uniform(0.3, 0.8);
        break;
      }
      default: {  // crosser that stays short of the path inside the horizon
        plan.category = rng.bernoulli(0.6) ? ThingCategory::kPerson
                                           : ThingCategory::kBicycle;
        const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
        const int entry = 34 + rng.uniform_int(11);
        const double ze = rng.uniform(2.5, 4.2);
        const double speed = rng.uniform(0.35, 0.6);
        plan.vx = -side * speed;
        plan.x0 = side * (cfg.corridor_half_width + 0.25) -
                  plan.vx * entry * cfg.dt();
        plan.z0 = ze;
        break;
      }
    }
    if (plan_avoids_corridor(plan, intention, total_frames, cfg) &&
        visible_frames(plan, cfg) >= 2) {
      return plan;
    }
  }
  return std::nullopt;
}

ObjectPlan sample_cause(Rng& rng, Intention intention, ReactiveKind kind,
                        const SimConfig& cfg) {
  ObjectPlan plan;
  plan.is_cause = true;
  const double hw = cfg.corridor_half_width;
  switch (kind) {
    case ReactiveKind::kCongestion: {
      plan.category = pick_vehicle(rng);
      plan.z0 = rng.uniform(2.5, 3.4);
      plan.x0 = corridor_center(plan.z0, intention, cfg) +
                rng.uniform(-0.2, 0.2);
      plan.vz = rng.uniform(-0.03, 0.05);
      break;
    }
    case ReactiveKind::kParkedVehicle: {
      plan.category = rng.bernoulli(0.7) ? ThingCategory::kCar
                                         : ThingCategory::kTruck;
      plan.z0 = rng.uniform(2.4, 3.8);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      plan.x0 = corridor_center(plan.z0, intention, cfg) +
                side * hw * rng.uniform(0.35, 0.65);
      break;
    }
    case ReactiveKind::kCrossingPedestrian:
    case ReactiveKind::kCrossingVehicle: {
      const bool ped = kind == ReactiveKind::kCrossingPedestrian;
      if (ped) {
        plan.category = rng.bernoulli(0.8) ? ThingCategory::kPerson
                                           : ThingCategory::kBicycle;
      } else {
        const double r = rng.uniform();
        plan.category = r < 0.7 ? ThingCategory::kCar
                        : r < 0.85 ? ThingCategory::kMotorcycle
                                   : ThingCategory::kBicycle;
      }
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const int entry = 18 + rng.uniform_int(7);  // frames 18..24
      const double ze = ped ? rng.uniform(2.5, 3.8) : rng.uniform(2.7, 4.2);
      const double speed = ped ? rng.uniform(0.45, 0.9) : rng.uniform(0.9, 1.7);
      plan.vx = -side * speed;
      plan.vz = rng.uniform(-0.2, 0.15);
      const double xe = corridor_center(ze, intention, cfg) +
                        side * hw * rng.uniform(0.2, 0.5);
      plan.x0 = xe - plan.vx * entry * cfg.dt();
      plan.z0 = ze - plan.vz * entry * cfg.dt();
      break;
    }
    case ReactiveKind::kNone:
      break;
  }
  return plan;
}

void add_furniture(scene::Clip& clip, const BuildSpec& spec, Rng& rng,
                   const SimConfig& cfg) {
  const int T = cfg.frames;
  // road: everything below the principal row
  StuffRegion road;
  road.category = StuffCategory::kRoad;
  road.rects.assign(
      T, {BoundingBox{0, cfg.height / 2 + 1, cfg.width, cfg.height}});
  clip.stuff.push_back(road);

  // intended-path footprint painted as lane markings
  const std::vector<double> zs{1.3, 1.8, 2.4, 3.2, 4.2, 5.5, 7.0};
  StuffRegion markings;
  markings.category = StuffCategory::kLaneMarkings;
  {
    std::vector<BoundingBox> rects;
    for (std::size_t i = 0; i + 1 < zs.size(); ++i) {
      const double zm = 0.5 * (zs[i] + zs[i + 1]);
      const double c = corridor_center(zm, spec.intention, cfg);
      append_band(rects, zs[i], zs[i + 1], c - cfg.corridor_half_width,
                  c + cfg.corridor_half_width, cfg);
    }
    markings.rects.assign(T, rects);
  }
  clip.stuff.push_back(markings);

  if (spec.isolation_family) return;  // keep diagnostics scenes bare

  if (spec.intention == Intention::kCrosswalkPassing ||
      spec.kind == ReactiveKind::kCrossingPedestrian) {
    const double z_cw = rng.uniform(2.9, 4.3);
    clip.stuff.push_back(banded_region(StuffCategory::kCrosswalk,
                                       {z_cw - 0.35, z_cw + 0.35}, -3.5, 3.5,
                                       T, cfg));
  }
  if (spec.intention == Intention::kIntersectionPassing) {
    clip.stuff.push_back(banded_region(StuffCategory::kTrafficIsland,
                                       {4.0, 5.2, 6.5}, -3.6, -2.4, T, cfg));
  }
  if (spec.intention == Intention::kRailroadPassing) {
    clip.stuff.push_back(banded_region(StuffCategory::kLaneSeparator,
                                       {1.5, 2.2, 3.2, 4.8, 7.0}, -1.7, -1.3,
                                       T, cfg));
  }
  if (spec.intention == Intention::kMerge) {
    clip.stuff.push_back(banded_region(StuffCategory::kServiceLane,
                                       {2.0, 3.2, 5.0, 7.0}, 2.2, 3.6, T,
                                       cfg));
  }
  if (spec.intention == Intention::kUTurn) {
    StuffRegion sign;
    sign.category = StuffCategory::kTrafficSign;
    sign.rects.assign(T, {BoundingBox{164, 88, 180, 104}});
    clip.stuff.push_back(sign);
  }
  const bool has_light = spec.intention == Intention::kIntersectionPassing ||
                         spec.kind == ReactiveKind::kCongestion ||
                         rng.bernoulli(0.25);
  if (has_light) {
    StuffRegion light;
    light.category = StuffCategory::kTrafficLight;
    light.state = spec.confound ? 1.0 : 0.0;
    light.rects.assign(T, {BoundingBox{104, 16, 120, 40}});
    clip.stuff.push_back(light);
  }
}

struct BuiltScene {
  Scenario scenario;
  std::vector<ObjectPlan> plans;  // shuffled, aligned with tracklets
};

// Simulates plans into a clip + latent trajectories; returns nullopt when a
// structural constraint fails (missing boxes, occluded box centers).
std::optional<BuiltScene> realize(const BuildSpec& spec,
                                  std::vector<ObjectPlan> plans, Rng& rng,
                                  const SimConfig& cfg, std::uint64_t seed) {
  const int T = cfg.frames;
  const int total = T + cfg.horizon;

  // shuffle so tracklet ids carry no information about the cause
  for (int i = static_cast<int>(plans.size()) - 1; i > 0; --i) {
    std::swap(plans[i], plans[rng.uniform_int(i + 1)]);
  }

  BuiltScene built;
  Scenario& s = built.scenario;
  s.seed = seed;
  s.horizon = cfg.horizon;
  s.corridor_half_width = cfg.corridor_half_width;
  s.corridor_depth = cfg.corridor_depth;
  s.corridor_near = cfg.corridor_near;
  s.clip.frames = T;
  s.clip.width = cfg.width;
  s.clip.height = cfg.height;
  s.clip.intrinsics = cfg.intrinsics();
  s.clip.depth.camera_height = cfg.camera_height;
  s.clip.depth.sky_depth = cfg.sky_depth;
  add_furniture(s.clip, spec, rng, cfg);

  s.latents.resize(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const ObjectPlan& p = plans[i];
    Tracklet t;
    t.id = static_cast<int>(i) + 1;
    t.category = p.category;
    t.score = rng.uniform(0.55, 0.95);
    t.frames.resize(T);
    s.latents[i].resize(total);
    const ObjectSize sz = object_size(p.category);
    for (int f = 0; f < total; ++f) {
      const double x = p.x_at(f, cfg.dt());
      const double z = p.z_at(f, cfg.dt());
      Point3 latent{x, cfg.camera_height - sz.h / 2.0, z};
      if (f < T) {
        auto tf = project_object(x, z, p.category, cfg);
        if (tf) {
          t.frames[f] = tf;
          latent = scene::unproject(tf->box.center_u(), tf->box.center_v(),
                                    tf->depth, s.clip.intrinsics);
        }
      }
      s.latents[i][f] = latent;
    }
    if (!t.has_any_box() ) return std::nullopt;
    s.clip.tracklets.push_back(std::move(t));
  }

  // per-frame top-scoring retention
  for (int f = 0; f < T; ++f) {
    std::vector<std::pair<double, int>> present;
    for (std::size_t i = 0; i < s.clip.tracklets.size(); ++i) {
      if (s.clip.tracklets[i].frames[f]) {
        present.push_back({s.clip.tracklets[i].score, static_cast<int>(i)});
      }
    }
    if (static_cast<int>(present.size()) > cfg.k_max) {
      std::sort(present.begin(), present.end(),
                [](auto& a, auto& b) { return a.first > b.first; });
      for (std::size_t j = cfg.k_max; j < present.size(); ++j) {
        s.clip.tracklets[present[j].second].frames[f].reset();
      }
    }
  }
  for (const Tracklet& t : s.clip.tracklets) {
    if (!t.has_any_box()) return std::nullopt;
  }

  // box centers must not be occluded by a nearer box, so that the depth
  // query recovers each latent exactly
  for (int f = 0; f < T; ++f) {
    for (const Tracklet& t : s.clip.tracklets) {
      if (!t.frames[f]) continue;
      const TrackletFrame& tf = *t.frames[f];
      for (const Tracklet& other : s.clip.tracklets) {
        if (other.id == t.id || !other.frames[f]) continue;
        const TrackletFrame& of = *other.frames[f];
        if (of.depth < tf.depth &&
            of.box.contains(tf.box.center_u(), tf.box.center_v())) {
          return std::nullopt;
        }
      }
    }
  }
  built.plans = std::move(plans);
  return built;
}

bool latent_intersects_window(const Scenario& s, int obj, int from, int to,
                              const SimConfig& cfg, Intention intention) {
  for (int f = from; f <= to; ++f) {
    if (in_corridor(s.latents[obj][f], intention, cfg)) return true;
  }
  return false;
}

// Full labeling pass: per-frame stimulus layer, response, cause.
void label_scenario(Scenario& s, const BuildSpec& spec, const SimConfig& cfg,
                    Rng& rng) {
  const int T = cfg.frames;
  const int last = T + cfg.horizon - 1;
  s.truth.intention = spec.intention;
  s.truth.confound = spec.confound;
  s.truth.kind = spec.want_stop ? spec.kind : ReactiveKind::kNone;

  const int maneuver_start =
      spec.intention == Intention::kBackground ? 0 : rng.uniform_int(T / 2 + 1);
  s.labels.goal.assign(T, Intention::kBackground);
  for (int f = maneuver_start; f < T; ++f) {
    s.labels.goal[f] = spec.intention;
  }

  const Stimulus active_kind = spec.kind == ReactiveKind::kParkedVehicle
                                   ? Stimulus::kDeviate
                                   : Stimulus::kStop;
  s.labels.stimulus.assign(T, Stimulus::kNone);
  for (int t = 0; t < T; ++t) {
    bool active = spec.confound;
    if (!active) {
      const int from = t + 1;
      const int to = std::min(t + cfg.horizon, last);
      for (std::size_t i = 0; i < s.latents.size() && !active; ++i) {
        active = latent_intersects_window(s, static_cast<int>(i), from, to,
                                          cfg, spec.intention);
      }
    }
    if (active) s.labels.stimulus[t] = active_kind;
  }
  const scene::ClipLabels labels = scene::derive_clip_labels(s.labels, T);
  s.truth.response = labels.response;

  // cause: nearest corridor-intersecting object over the response window
  s.truth.cause_id.reset();
  if (s.truth.response == Response::kStop) {
    const Point3 ego = scene::ego_anchor(s.clip, T - 1);
    double best = 0.0;
    for (std::size_t i = 0; i < s.latents.size(); ++i) {
      double nearest = -1.0;
      for (int f = T; f <= last; ++f) {
        if (in_corridor(s.latents[i][f], spec.intention, cfg)) {
          const double d = scene::distance(s.latents[i][f], ego);
          if (nearest < 0.0 || d < nearest) nearest = d;
        }
      }
      if (nearest >= 0.0) {
        const int id = s.clip.tracklets[i].id;
        if (!s.truth.cause_id || nearest < best ||
            (nearest == best && id < *s.truth.cause_id)) {
          s.truth.cause_id = id;
          best = nearest;
        }
      }
    }
  }
}

std::optional<Scenario> try_build(const BuildSpec& spec, Rng& rng,
                                  const SimConfig& cfg, std::uint64_t seed) {
  const int total = cfg.frames + cfg.horizon;
  std::vector<ObjectPlan> plans;
  if (spec.want_stop && !spec.light_only) {
    std::optional<ObjectPlan> cause;
    for (int i = 0; i < 24 && !cause; ++i) {
      ObjectPlan p = sample_cause(rng, spec.intention, spec.kind, cfg);
      if (visible_frames(p, cfg) >= 4) cause = p;
    }
    if (!cause) return std::nullopt;
    plans.push_back(*cause);
    if (!spec.single_cause && rng.bernoulli(0.2)) {
      // occasional second reactive object in train/test1 scenes
      ObjectPlan p = sample_cause(
          rng, spec.intention,
          rng.bernoulli(0.5) ? ReactiveKind::kCrossingVehicle
                             : ReactiveKind::kCrossingPedestrian,
          cfg);
      if (visible_frames(p, cfg) >= 3) plans.push_back(p);
    }
  }
  int n_target = cfg.min_objects +
                 rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
  n_target = std::max(n_target, static_cast<int>(plans.size()));
  bool want_distractor =
      spec.force_near_distractor || rng.bernoulli(0.6);
  if (want_distractor && static_cast<int>(plans.size()) < n_target) {
    auto p = sample_bystander(rng, spec.intention, total, cfg, 1);
    if (!p) return std::nullopt;
    plans.push_back(*p);
  }
  while (static_cast<int>(plans.size()) < n_target) {
    auto p = sample_bystander(rng, spec.intention, total, cfg);
    if (!p) return std::nullopt;
    plans.push_back(*p);
  }

  auto built = realize(spec, std::move(plans), rng, cfg, seed);
  if (!built) return std::nullopt;
  Scenario& s = built->scenario;
  label_scenario(s, spec, cfg, rng);

  // the realized labels must match the intent of the construction
  const bool is_stop = s.truth.response == Response::kStop;
  if (is_stop != spec.want_stop) return std::nullopt;
  if (spec.want_stop && !spec.light_only && !s.truth.cause_id) {
    return std::nullopt;
  }
  if (spec.light_only && s.truth.cause_id) return std::nullopt;
  if (spec.single_cause) {
    if (!s.truth.cause_id || s.clip.tracklets.size() < 2) return std::nullopt;
    if (counterfactual_response(s, *s.truth.cause_id) != Response::kGo) {
      return std::nullopt;
    }
    for (const Tracklet& t : s.clip.tracklets) {
      if (t.id != *s.truth.cause_id &&
          counterfactual_response(s, t.id) != Response::kStop) {
        return std::nullopt;
      }
    }
  }
  return s;
}

Scenario build_with_retries(const BuildSpec& spec, std::uint64_t seed,
                            const SimConfig& cfg) {
  for (std::uint64_t attempt = 0; attempt < 128; ++attempt) {
    Rng rng(Rng::derive(seed, attempt + 1));
    auto s = try_build(spec, rng, cfg, seed);
    if (s) return std::move(*s);
  }
  throw Error("generation_failed",
              "could not realize a scenario for seed " + std::to_string(seed));
}

}  // namespace

const char* to_string(ReactiveKind k) {
  return kKindNames[static_cast<int>(k)];
}

ReactiveKind reactive_kind_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i) {
    if (s == kKindNames[i]) return static_cast<ReactiveKind>(i);
  }
  throw Error("bad_enum", "unknown reactive kind: " + s);
}

int Scenario::tracklet_index(int id) const {
  for (std::size_t i = 0; i < clip.tracklets.size(); ++i) {
    if (clip.tracklets[i].id == id) return static_cast<int>(i);
  }
  return -1;
}

double corridor_center(double z, Intention intention, const SimConfig& cfg) {
  double slope = 0.0;
  switch (intention) {
    case Intention::kLeftTurn: slope = -1.0; break;
    case Intention::kRightTurn: slope = 1.0; break;
    case Intention::kLeftLaneChange: slope = -0.35; break;
    case Intention::kRightLaneChange: slope = 0.35; break;
    case Intention::kLeftLaneBranch: slope = -0.55; break;
    case Intention::kRightLaneBranch: slope = 0.55; break;
    case Intention::kUTurn: slope = -1.4; break;
    default: slope = 0.0; break;
  }
  (void)cfg;
  constexpr double kBendStart = 2.0;
  return slope * std::max(0.0, z - kBendStart);
}

bool in_corridor(const Point3& p, Intention intention, const SimConfig& cfg) {
  if (p.z < cfg.corridor_near || p.z > cfg.corridor_depth) return false;
  return std::fabs(p.x - corridor_center(p.z, intention, cfg)) <=
         cfg.corridor_half_width;
}

Scenario generate_scenario(std::uint64_t seed, const SimConfig& cfg) {
  Rng head(seed);
  BuildSpec spec;
  spec.intention =
      static_cast<Intention>(head.weighted_index(cfg.intention_weights));
  spec.want_stop = head.uniform() >= cfg.go_fraction;
  if (spec.want_stop) {
    spec.kind = static_cast<ReactiveKind>(
        1 + head.weighted_index(std::array<double, 4>{0.25, 0.25, 0.30, 0.20}));
    if (spec.kind == ReactiveKind::kCongestion &&
        head.bernoulli(cfg.confound_prob)) {
      spec.confound = true;
      spec.light_only = head.bernoulli(cfg.light_only_prob);
    }
  }
  return build_with_retries(spec, seed, cfg);
}

Scenario generate_reactive_scenario(std::uint64_t seed, const SimConfig& cfg,
                                    std::optional<ReactiveKind> kind) {
  Rng head(seed);
  BuildSpec spec;
  spec.intention =
      static_cast<Intention>(head.weighted_index(cfg.intention_weights));
  spec.want_stop = true;
  spec.single_cause = true;
  spec.force_near_distractor = true;
  spec.kind = kind.value_or(static_cast<ReactiveKind>(
      1 + head.weighted_index(std::array<double, 4>{0.25, 0.20, 0.30, 0.25})));
  return build_with_retries(spec, seed, cfg);
}

IsolationScenario generate_isolation_scenario(std::uint64_t seed,
                                              const SimConfig& cfg,
                                              int grid_cells) {
  const int cell = cfg.width / grid_cells;
  for (std::uint64_t attempt = 0; attempt < 128; ++attempt) {
    Rng rng(Rng::derive(seed, 1000 + attempt));
    BuildSpec spec;
    spec.intention = Intention::kBackground;
    spec.isolation_family = true;
    SimConfig base = cfg;
    base.min_objects = 2;
    base.max_objects = 3;
    auto built = try_build(spec, rng, base, seed);
    if (!built) continue;
    Scenario s = std::move(*built);

    // cell-aligned far-left billboard object, two cells wide and high,
    // straddling the horizon rows so the cells it covers hold nothing else
    Rng irng(Rng::derive(seed, 777 + attempt));
    const int c0 = 1 + irng.uniform_int(3);
    const int r0 = grid_cells / 2 - 1;  // rows r0, r0+1 around the horizon
    BoundingBox box{c0 * cell, r0 * cell, (c0 + 2) * cell, (r0 + 2) * cell};
    const double z_iso = irng.uniform(16.0, 20.0);

    // the isolated cells (expanded by one for bilinear supports) must be
    // clear of every other box and of non-road stuff rectangles
    const int gx1 = (c0 - 1) * cell, gx2 = (c0 + 3) * cell;
    const int gy1 = (r0 - 1) * cell, gy2 = (r0 + 3) * cell;
    bool clear = true;
    for (const Tracklet& t : s.clip.tracklets) {
      for (const auto& f : t.frames) {
        if (!f) continue;
        if (f->box.x2 > gx1 && f->box.x1 < gx2 && f->box.y2 > gy1 &&
            f->box.y1 < gy2) {
          clear = false;
        }
      }
    }
    for (const StuffRegion& region : s.clip.stuff) {
      if (region.category == StuffCategory::kRoad) continue;
      for (const auto& rects : region.rects) {
        for (const BoundingBox& r : rects) {
          if (r.x2 > box.x1 && r.x1 < box.x2 && r.y2 > box.y1 &&
              r.y1 < box.y2) {
            clear = false;
          }
        }
      }
    }
    if (!clear) continue;

    Tracklet iso;
    iso.id = static_cast<int>(s.clip.tracklets.size()) + 1;
    iso.category = ThingCategory::kCar;
    iso.score = 0.9;
    iso.frames.assign(cfg.frames, TrackletFrame{box, z_iso});
    const Point3 latent = scene::unproject(box.center_u(), box.center_v(),
                                           z_iso, s.clip.intrinsics);
    s.clip.tracklets.push_back(iso);
    s.latents.push_back(
        std::vector<Point3>(cfg.frames + cfg.horizon, latent));

    // verify the 3D gate margin against every node in every frame
    const double margin = 3.0 + 0.5;
    bool gated_off = true;
    for (int f = 0; f < cfg.frames && gated_off; ++f) {
      if (scene::distance(latent, scene::ego_anchor(s.clip, f)) <= margin) {
        gated_off = false;
      }
      for (std::size_t i = 0; i + 1 < s.latents.size(); ++i) {
        if (scene::distance(latent, s.latents[i][f]) <= margin) {
          gated_off = false;
        }
      }
    }
    if (!gated_off) continue;
    return IsolationScenario{std::move(s), iso.id};
  }
  throw Error("generation_failed",
              "could not realize an isolation scenario for seed " +
                  std::to_string(seed));
}

scene::Response counterfactual_response(const Scenario& s,
                                        int removed_tracklet_id) {
  const int idx = s.tracklet_index(removed_tracklet_id);
  if (idx < 0) {
    throw Error("unknown_tracklet",
                "counterfactual_response: no tracklet with id " +
                    std::to_string(removed_tracklet_id));
  }
  if (s.truth.confound) return Response::kStop;
  SimConfig cfg;
  cfg.frames = s.clip.frames;
  cfg.horizon = s.horizon;
  cfg.corridor_half_width = s.corridor_half_width;
  cfg.corridor_depth = s.corridor_depth;
  cfg.corridor_near = s.corridor_near;
  const int from = s.clip.frames;
  const int to = s.clip.frames + s.horizon - 1;
  for (std::size_t i = 0; i < s.latents.size(); ++i) {
    if (static_cast<int>(i) == idx) continue;
    for (int f = from; f <= to; ++f) {
      if (in_corridor(s.latents[i][f], s.truth.intention, cfg)) {
        return Response::kStop;
      }
    }
  }
  return Response::kGo;
}

Dataset generate_dataset(const SimConfig& cfg, int n_train, int n_test1,
                         int n_test2, std::uint64_t base_seed) {
  if (n_train <= 0 || n_test1 <= 0 || n_test2 <= 0) {
    throw Error("bad_arg", "generate_dataset: counts must be positive");
  }
  Dataset d;
  d.train.reserve(n_train);
  d.test1.reserve(n_test1);
  d.test2.reserve(n_test2);
  for (int i = 0; i < n_train; ++i) {
    d.train.push_back(generate_scenario(base_seed + i, cfg));
  }
  for (int i = 0; i < n_test1; ++i) {
    d.test1.push_back(generate_scenario(base_seed + 1'000'000 + i, cfg));
  }
  for (int i = 0; i < n_test2; ++i) {
    d.test2.push_back(
        generate_reactive_scenario(base_seed + 2'000'000 + i, cfg));
  }
  return d;
}

}  // namespace riskid::sim
