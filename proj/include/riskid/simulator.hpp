#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskid/scene.hpp"

namespace riskid::sim {

// All lengths are meters, speeds meters/second; frames advance at 3 fps.
struct SimConfig {
  int frames = 20;
  int horizon = 10;  // latent frames simulated past the clip for labeling
  int width = 224, height = 224;
  double focal = 112.0;  // fx = fy; principal point at the frame center
  int k_max = 12;        // per-frame top-scoring tracklet retention
  int min_objects = 2;
  int max_objects = 6;
  double go_fraction = 0.8;  // Go:Stop 4:1
  std::array<double, scene::kIntentionCount> intention_weights = {
      0.30, 0.15, 0.10, 0.10, 0.06, 0.06, 0.04, 0.04, 0.05, 0.03, 0.04, 0.03};
  double corridor_half_width = 0.9;
  double corridor_depth = 7.0;
  double corridor_near = 0.3;
  double confound_prob = 0.25;    // red light among congestion scenes
  double light_only_prob = 0.3;   // confound scenes without a lead vehicle
  double camera_height = 1.2;
  double sky_depth = 30.0;

  double dt() const { return 1.0 / 3.0; }
  scene::CameraIntrinsics intrinsics() const {
    return {focal, focal, width / 2.0, height / 2.0};
  }
};

enum class ReactiveKind {
  kNone, kCongestion, kCrossingPedestrian, kCrossingVehicle, kParkedVehicle,
};
const char* to_string(ReactiveKind k);
ReactiveKind reactive_kind_from_string(const std::string& s);

struct ScenarioTruth {
  scene::Response response = scene::Response::kGo;
  scene::Intention intention = scene::Intention::kBackground;
  std::optional<int> cause_id;  // present iff a Thing object is the cause
  bool confound = false;        // red-light state forces Stop by itself
  ReactiveKind kind = ReactiveKind::kNone;
};

struct Scenario {
  std::uint64_t seed = 0;
  scene::Clip clip;
  scene::LabelLayers labels;
  ScenarioTruth truth;
  int horizon = 0;
  // corridor geometry the labels were derived with
  double corridor_half_width = 0.9;
  double corridor_depth = 7.0;
  double corridor_near = 0.3;
  // Latent 3D positions per tracklet (same order as clip.tracklets) for
  // frames [0, clip.frames + horizon).  Where a box exists the latent is the
  // unprojection of its center, so projection consistency is exact.
  std::vector<std::vector<scene::Point3>> latents;

  int tracklet_index(int id) const;
};

// Lateral center of the intended-path corridor at depth z.
double corridor_center(double z, scene::Intention intention,
                       const SimConfig& config);
bool in_corridor(const scene::Point3& p, scene::Intention intention,
                 const SimConfig& config);

// Deterministic in `seed`; the label is produced by the generative rule:
// Stop iff some Thing object's latent trajectory enters the intended-path
// corridor within the horizon window after the clip, or a red-light
// confound is active.
Scenario generate_scenario(std::uint64_t seed, const SimConfig& config);

// Reactive-family generator: Stop scenarios with exactly one Thing cause,
// no confound, and at least one near non-cause distractor.  Used for the
// identification test split.
Scenario generate_reactive_scenario(
    std::uint64_t seed, const SimConfig& config,
    std::optional<ReactiveKind> kind = std::nullopt);

// Diagnostic family: one extra object placed so that it is spatially gated
// off from every node in every frame and its pixels fall in feature cells
// nothing else reads (cell-aligned box, clear of all sample supports and
// stuff masks).  `grid_cells` is the feature-grid resolution the guarantee
// is constructed for.
struct IsolationScenario {
  Scenario scenario;
  int isolated_id = 0;
};
IsolationScenario generate_isolation_scenario(std::uint64_t seed,
                                              const SimConfig& config,
                                              int grid_cells = 28);

// Oracle: re-evaluates the generative rule with one object deleted.
scene::Response counterfactual_response(const Scenario& scenario,
                                        int removed_tracklet_id);

struct Dataset {
  std::vector<Scenario> train;
  std::vector<Scenario> test1;
  std::vector<Scenario> test2;
};

// Splits draw from disjoint seed ranges; train/test1 mix Go and Stop at the
// configured ratio, test2 holds single-cause reactive scenarios only.
Dataset generate_dataset(const SimConfig& config, int n_train, int n_test1,
                         int n_test2, std::uint64_t base_seed);

}  // namespace riskid::sim
