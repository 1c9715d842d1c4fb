#include "riskid/scene.hpp"

#include <algorithm>
#include <cmath>

namespace riskid::scene {

namespace {

constexpr const char* kThingNames[] = {
    "car", "person", "bicycle", "motorcycle", "bus", "train", "truck"};
constexpr const char* kStuffNames[] = {
    "crosswalk", "lane_markings", "lane_separator", "road", "service_lane",
    "traffic_island", "traffic_light", "traffic_sign"};
constexpr const char* kIntentionNames[] = {"BG",  "IP",  "LT",  "RT",
                                           "LLC", "RLC", "LLB", "RLB",
                                           "CP",  "RP",  "MG",  "UT"};
constexpr const char* kResponseNames[] = {"go", "stop"};
constexpr const char* kStimulusNames[] = {"none", "stop", "deviate"};

template <typename Enum, std::size_t N>
Enum from_string(const std::string& s, const char* const (&names)[N],
                 const char* what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (s == names[i]) return static_cast<Enum>(i);
  }
  throw Error("bad_enum", std::string("unknown ") + what + ": " + s);
}

}  // namespace

const char* to_string(ThingCategory c) {
  return kThingNames[static_cast<int>(c)];
}
const char* to_string(StuffCategory c) {
  return kStuffNames[static_cast<int>(c)];
}
const char* to_string(Intention i) {
  return kIntentionNames[static_cast<int>(i)];
}
const char* to_string(Response r) { return kResponseNames[static_cast<int>(r)]; }
const char* to_string(Stimulus s) { return kStimulusNames[static_cast<int>(s)]; }

ThingCategory thing_category_from_string(const std::string& s) {
  return from_string<ThingCategory>(s, kThingNames, "thing category");
}
StuffCategory stuff_category_from_string(const std::string& s) {
  return from_string<StuffCategory>(s, kStuffNames, "stuff category");
}
Intention intention_from_string(const std::string& s) {
  return from_string<Intention>(s, kIntentionNames, "intention");
}
Response response_from_string(const std::string& s) {
  return from_string<Response>(s, kResponseNames, "response");
}
Stimulus stimulus_from_string(const std::string& s) {
  return from_string<Stimulus>(s, kStimulusNames, "stimulus");
}

// ---------------------------------------------------------------------------

BinaryMask BinaryMask::ones(int height, int width) {
  BinaryMask m;
  m.height = height;
  m.width = width;
  m.data.assign(static_cast<std::size_t>(height) * width, 1);
  return m;
}

std::size_t BinaryMask::count_zeros() const {
  std::size_t n = 0;
  for (std::uint8_t v : data) {
    if (v == 0) ++n;
  }
  return n;
}

bool Tracklet::has_any_box() const {
  for (const auto& f : frames) {
    if (f.has_value()) return true;
  }
  return false;
}

const Tracklet* Clip::find_tracklet(int id) const {
  for (const Tracklet& t : tracklets) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

// ---------------------------------------------------------------------------

Point3 unproject(double u, double v, double depth,
                 const CameraIntrinsics& k) {
  if (k.fx == 0.0 || k.fy == 0.0) {
    throw Error("bad_intrinsics", "camera intrinsics are not invertible");
  }
  Point3 p;
  p.x = depth * (u - k.cx) / k.fx;
  p.y = depth * (v - k.cy) / k.fy;
  p.z = depth;
  return p;
}

double distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double depth_at(const Clip& clip, int frame, double u, double v) {
  double best = -1.0;
  for (const Tracklet& t : clip.tracklets) {
    if (frame >= static_cast<int>(t.frames.size()) || !t.frames[frame]) {
      continue;
    }
    const TrackletFrame& tf = *t.frames[frame];
    if (tf.box.contains(u, v) && (best < 0.0 || tf.depth < best)) {
      best = tf.depth;
    }
  }
  if (best >= 0.0) return best;
  const CameraIntrinsics& k = clip.intrinsics;
  if (v > k.cy) {
    return std::min(clip.depth.sky_depth,
                    clip.depth.camera_height * k.fy / (v - k.cy));
  }
  return clip.depth.sky_depth;
}

std::optional<Point3> thing_anchor(const Clip& clip, const Tracklet& tracklet,
                                   int frame) {
  if (frame >= static_cast<int>(tracklet.frames.size()) ||
      !tracklet.frames[frame]) {
    return std::nullopt;
  }
  const TrackletFrame& tf = *tracklet.frames[frame];
  return unproject(tf.box.center_u(), tf.box.center_v(), tf.depth,
                   clip.intrinsics);
}

Point3 ego_anchor(const Clip& clip, int frame) {
  const double u = clip.width / 2.0;
  const double v = clip.height - 1.0;
  return unproject(u, v, depth_at(clip, frame, u, v), clip.intrinsics);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const int ix1 = std::max(a.x1, b.x1);
  const int iy1 = std::max(a.y1, b.y1);
  const int ix2 = std::min(a.x2, b.x2);
  const int iy2 = std::min(a.y2, b.y2);
  const std::int64_t inter =
      static_cast<std::int64_t>(std::max(0, ix2 - ix1)) *
      std::max(0, iy2 - iy1);
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------

BinaryMask mask_generate(int height, int width, const BoundingBox& box) {
  BinaryMask m = BinaryMask::ones(height, width);
  BoundingBox clipped{std::clamp(box.x1, 0, width), std::clamp(box.y1, 0, height),
                      std::clamp(box.x2, 0, width),
                      std::clamp(box.y2, 0, height)};
  for (int v = clipped.y1; v < clipped.y2; ++v) {
    for (int u = clipped.x1; u < clipped.x2; ++u) {
      m.data[static_cast<std::size_t>(v) * width + u] = 0;
    }
  }
  m.zero_box = clipped;
  return m;
}

int stuff_priority(StuffCategory c) {
  switch (c) {
    case StuffCategory::kTrafficLight: return 7;
    case StuffCategory::kTrafficSign: return 6;
    case StuffCategory::kCrosswalk: return 5;
    case StuffCategory::kLaneSeparator: return 4;
    case StuffCategory::kTrafficIsland: return 3;
    case StuffCategory::kServiceLane: return 2;
    case StuffCategory::kLaneMarkings: return 1;
    case StuffCategory::kRoad: return 0;
  }
  return 0;
}

BinaryMask stuff_mask(const Clip& clip, int region_index, int frame) {
  if (region_index < 0 ||
      region_index >= static_cast<int>(clip.stuff.size())) {
    throw Error("bad_arg", "stuff_mask: region index out of range");
  }
  const StuffRegion& region = clip.stuff[region_index];
  BinaryMask m;
  m.height = clip.height;
  m.width = clip.width;
  m.data.assign(static_cast<std::size_t>(clip.height) * clip.width, 0);
  if (frame >= static_cast<int>(region.rects.size())) return m;
  const int my_priority = stuff_priority(region.category);
  for (const BoundingBox& r : region.rects[frame]) {
    const int x1 = std::clamp(r.x1, 0, clip.width);
    const int x2 = std::clamp(r.x2, 0, clip.width);
    const int y1 = std::clamp(r.y1, 0, clip.height);
    const int y2 = std::clamp(r.y2, 0, clip.height);
    for (int v = y1; v < y2; ++v) {
      for (int u = x1; u < x2; ++u) {
        m.data[static_cast<std::size_t>(v) * clip.width + u] = 1;
      }
    }
  }
  // Remove pixels owned by Thing boxes.
  for (const Tracklet& t : clip.tracklets) {
    if (frame >= static_cast<int>(t.frames.size()) || !t.frames[frame]) {
      continue;
    }
    const BoundingBox& b = t.frames[frame]->box;
    const int x1 = std::clamp(b.x1, 0, clip.width);
    const int x2 = std::clamp(b.x2, 0, clip.width);
    const int y1 = std::clamp(b.y1, 0, clip.height);
    const int y2 = std::clamp(b.y2, 0, clip.height);
    for (int v = y1; v < y2; ++v) {
      for (int u = x1; u < x2; ++u) {
        m.data[static_cast<std::size_t>(v) * clip.width + u] = 0;
      }
    }
  }
  // Remove pixels claimed by higher-priority stuff regions.
  for (const StuffRegion& other : clip.stuff) {
    if (&other == &region) continue;
    if (stuff_priority(other.category) <= my_priority) continue;
    if (frame >= static_cast<int>(other.rects.size())) continue;
    for (const BoundingBox& r : other.rects[frame]) {
      const int x1 = std::clamp(r.x1, 0, clip.width);
      const int x2 = std::clamp(r.x2, 0, clip.width);
      const int y1 = std::clamp(r.y1, 0, clip.height);
      const int y2 = std::clamp(r.y2, 0, clip.height);
      for (int v = y1; v < y2; ++v) {
        for (int u = x1; u < x2; ++u) {
          m.data[static_cast<std::size_t>(v) * clip.width + u] = 0;
        }
      }
    }
  }
  return m;
}

ClipLabels derive_clip_labels(const LabelLayers& layers, int frames) {
  if (frames <= 0 || static_cast<int>(layers.goal.size()) < frames ||
      static_cast<int>(layers.stimulus.size()) < frames) {
    throw Error("empty_labels",
                "derive_clip_labels: layers do not cover the clip");
  }
  ClipLabels out;
  out.intention = layers.goal[frames - 1];
  const Stimulus last = layers.stimulus[frames - 1];
  out.response = last == Stimulus::kNone ? Response::kGo : Response::kStop;
  return out;
}

}  // namespace riskid::scene
