#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "riskid/diff.hpp"
#include "riskid/scene.hpp"
#include "riskid/simulator.hpp"

namespace riskid::features {

// Channel layout of the content grids: one coverage channel per Thing
// category, one per Stuff category, and a traffic-light state channel.
inline constexpr int kThingChannels = scene::kThingCategoryCount;      // 0..6
inline constexpr int kStuffChannelOffset = kThingChannels;             // 7
inline constexpr int kLightChannel =
    kThingChannels + scene::kStuffCategoryCount;                       // 15
inline constexpr int kInteractionChannels = kLightChannel + 1;         // 16
// The intention tap reads road-infrastructure content only (stuff + light);
// Thing pixels never contribute, so interventions on objects cannot leak
// into the intention representation.
inline constexpr int kIntentionChannels = scene::kStuffCategoryCount + 1;

struct FeatureConfig {
  int grid = 28;      // H' = W' cells per side
  int feat_dim = 32;  // D

  int cells() const { return grid * grid; }
};

// --- pixel ownership (shared by the reference and cached paths) ---
// A pixel belongs to the nearest Thing box covering it, else to the
// highest-priority stuff region, else to nobody (sky).
struct PixelOwner {
  int channel = -1;          // interaction-channel index, -1 when unowned
  double light_state = 0.0;  // owning traffic light's state, if any
};
PixelOwner resolve_owner(const scene::Clip& clip, int frame, int u, int v);

// Dense content of one frame at grid resolution, reference per-pixel path.
// `mask` may be null (all ones).  Masked pixels contribute to nothing.
struct FrameContent {
  std::vector<double> coverage;  // cells() x kInteractionChannels, row-major
  std::vector<double> unmasked;  // cells(), fraction of unmasked pixels
};
FrameContent frame_content(const scene::Clip& clip, int frame,
                           const scene::BinaryMask* mask,
                           const FeatureConfig& config);

// --- spec-level feature operations ---

// Area-weighted 2x2 quadrant pooling support for a box: each quadrant is a
// weighted average of the grid cells it overlaps.
struct RoiSupport {
  std::vector<diff::GatherSample> quadrants;  // size 4
};
RoiSupport roi_support(const scene::BoundingBox& box, int frame_w,
                       int frame_h, int grid);

// Quadrant samples followed by coordinate-wise max -> 1 x D.
diff::Var roi_feature(diff::Tape& tape, diff::Var grid,
                      const RoiSupport& support);

// Block max-pooling: output cell is 1 iff any covered source pixel is 1.
scene::BinaryMask downsample_mask(const scene::BinaryMask& mask, int th,
                                  int tw);

// Row-major indices of the ON cells of a grid-sized mask.
std::vector<int> mask_cells(const scene::BinaryMask& mask);

// Mean of the grid rows selected by a downsampled binary mask; errors on an
// all-zero mask.
diff::Var mask_align(diff::Tape& tape, diff::Var grid,
                     const scene::BinaryMask& downsampled);

// --- backbone ---

struct BackboneVars {
  diff::Var interaction_embed;  // kInteractionChannels x D
  diff::Var interaction_pos;    // cells() x D
  diff::Var intention_embed;    // kIntentionChannels x D
  diff::Var intention_pool;     // frames x cells()
};

struct BackboneOut {
  std::vector<diff::Var> grids;  // per frame, cells() x D
  diff::Var intention;           // 1 x D
};

// Reference forward pass: per-cell content coverage times learnable
// embeddings plus a positional code attenuated by the unmasked fraction.
// The intention head pools stuff content over space and time.  An empty
// `masks` vector means no intervention.
BackboneOut backbone_forward(diff::Tape& tape, const sim::Scenario& scenario,
                             const std::vector<scene::BinaryMask>& masks,
                             const BackboneVars& vars,
                             const FeatureConfig& config);

// --- cached pipeline used by training and prediction ---

struct StuffNode {
  int region = -1;
  scene::StuffCategory category = scene::StuffCategory::kRoad;
  std::vector<int> cells;       // ON cells of the downsampled visible mask
  double min_dist_to_ego = 0.0; // over unprojected mask cell centers
};

struct PreparedFrame {
  struct CountEntry {
    std::uint16_t cell;
    std::uint8_t channel;
    std::uint16_t count;  // owned pixels of this channel inside the cell
  };
  std::vector<CountEntry> counts;  // base content, no intervention
  double light_state = 0.0;
  std::vector<int> things;                  // visible tracklet indices
  std::vector<scene::Point3> thing_anchors; // aligned with `things`
  scene::Point3 ego;
  std::vector<StuffNode> stuff;
};

struct PreparedScenario {
  std::shared_ptr<const sim::Scenario> scenario;
  FeatureConfig config;
  std::vector<PreparedFrame> frames;
  // per-cell pixel areas (floor-split blocks may be uneven)
  std::vector<double> cell_area;
};

PreparedScenario prepare_scenario(const sim::Scenario& scenario,
                                  const FeatureConfig& config);

// Dense inputs for one forward pass; `removed_id` masks that tracklet's
// boxes and drops its node, mirroring Algorithm-style interventions.
struct MaterializedFrame {
  diff::Tensor interaction_cov;  // cells() x kInteractionChannels
  diff::Tensor intention_cov;    // cells() x kIntentionChannels
  std::vector<double> unmasked;  // cells()
  std::vector<int> things;       // tracklet indices after removal
  std::vector<int> thing_ids;
  std::vector<scene::Point3> thing_anchors;
  std::vector<RoiSupport> thing_supports;
  scene::Point3 ego;
  RoiSupport ego_support;
  const std::vector<StuffNode>* stuff = nullptr;
};
std::vector<MaterializedFrame> materialize(const PreparedScenario& prepared,
                                           std::optional<int> removed_id);

}  // namespace riskid::features
