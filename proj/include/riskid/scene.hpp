#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskid/error.hpp"

namespace riskid::scene {

// Traffic participants whose state can be influenced by other objects.
enum class ThingCategory {
  kCar, kPerson, kBicycle, kMotorcycle, kBus, kTrain, kTruck,
};
inline constexpr int kThingCategoryCount = 7;

// Scene elements that are not influenced by other objects.
enum class StuffCategory {
  kCrosswalk, kLaneMarkings, kLaneSeparator, kRoad, kServiceLane,
  kTrafficIsland, kTrafficLight, kTrafficSign,
};
inline constexpr int kStuffCategoryCount = 8;

// Tactical maneuver labels, one per clip frame on the goal-oriented layer.
enum class Intention {
  kBackground, kIntersectionPassing, kLeftTurn, kRightTurn,
  kLeftLaneChange, kRightLaneChange, kLeftLaneBranch, kRightLaneBranch,
  kCrosswalkPassing, kRailroadPassing, kMerge, kUTurn,
};
inline constexpr int kIntentionCount = 12;

enum class Response { kGo, kStop };
enum class Stimulus { kNone, kStop, kDeviate };

const char* to_string(ThingCategory c);
const char* to_string(StuffCategory c);
const char* to_string(Intention i);
const char* to_string(Response r);
const char* to_string(Stimulus s);
ThingCategory thing_category_from_string(const std::string& s);
StuffCategory stuff_category_from_string(const std::string& s);
Intention intention_from_string(const std::string& s);
Response response_from_string(const std::string& s);
Stimulus stimulus_from_string(const std::string& s);

struct CameraIntrinsics {
  double fx = 112.0, fy = 112.0;
  double cx = 112.0, cy = 112.0;
};

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Pixel-aligned box over half-open intervals [x1,x2) x [y1,y2).
struct BoundingBox {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int width() const { return x2 - x1; }
  int height() const { return y2 - y1; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool contains(double u, double v) const {
    return u >= x1 && u < x2 && v >= y1 && v < y2;
  }
  double center_u() const { return 0.5 * (x1 + x2); }
  double center_v() const { return 0.5 * (y1 + y2); }
};

// H x W grid of {0,1}.  When the mask came from mask_generate, the zeroed
// rectangle is kept as a hint so feature extraction can take an exact
// arithmetic shortcut; generic masks fall back to per-pixel scanning.
struct BinaryMask {
  int height = 0, width = 0;
  std::vector<std::uint8_t> data;  // row-major, values 0/1
  std::optional<BoundingBox> zero_box;

  static BinaryMask ones(int height, int width);
  std::uint8_t at(int v, int u) const {
    return data[static_cast<std::size_t>(v) * width + u];
  }
  std::size_t count_zeros() const;
};

// Observed state of one tracklet in one frame.  `depth` is the scene depth
// of the object surface (constant over the box).
struct TrackletFrame {
  BoundingBox box;
  double depth = 0.0;
};

struct Tracklet {
  int id = 0;
  ThingCategory category = ThingCategory::kCar;
  double score = 1.0;  // detection confidence used for top-K retention
  std::vector<std::optional<TrackletFrame>> frames;

  bool has_any_box() const;
};

// Stuff regions are unions of axis-aligned rectangles per frame; the visible
// mask excludes pixels occluded by Thing boxes or higher-priority Stuff.
struct StuffRegion {
  StuffCategory category = StuffCategory::kRoad;
  double state = 0.0;  // scalar state channel (traffic light: 1 when red)
  std::vector<std::vector<BoundingBox>> rects;  // per frame
};

// Parametric depth background: ground plane below the principal row and a
// constant far depth above it.  Object depths come from tracklet frames.
struct DepthModel {
  double camera_height = 1.2;
  double sky_depth = 30.0;
};

struct Clip {
  int frames = 0;
  int width = 0, height = 0;
  CameraIntrinsics intrinsics;
  DepthModel depth;
  std::vector<Tracklet> tracklets;
  std::vector<StuffRegion> stuff;

  const Tracklet* find_tracklet(int id) const;
};

struct LabelLayers {
  std::vector<Intention> goal;
  std::vector<Stimulus> stimulus;
};

struct ClipLabels {
  Intention intention;
  Response response;
};

// --- geometry ---

// (x,y,z) = depth * K^-1 * (u,v,1) for the 3x3 pinhole intrinsics.
Point3 unproject(double u, double v, double depth,
                 const CameraIntrinsics& intrinsics);
double distance(const Point3& a, const Point3& b);

// Scene depth at a pixel: nearest Thing box covering it, else the ground
// plane (capped at sky_depth), else sky.
double depth_at(const Clip& clip, int frame, double u, double v);

// Box-center anchor of a tracklet in camera coordinates, when visible.
std::optional<Point3> thing_anchor(const Clip& clip, const Tracklet& tracklet,
                                   int frame);
// Driver anchor: the middle-bottom pixel of the frame, unprojected.
Point3 ego_anchor(const Clip& clip, int frame);

double iou(const BoundingBox& a, const BoundingBox& b);

// --- masks & labels ---

// Ones everywhere except zeros inside `box` (clamped to the frame).
BinaryMask mask_generate(int height, int width, const BoundingBox& box);

// Visible-pixel mask of one stuff region: its rectangles minus pixels owned
// by any Thing box or by a higher-priority stuff region.
BinaryMask stuff_mask(const Clip& clip, int region_index, int frame);

// Occlusion priority among stuff categories (higher value wins a pixel).
int stuff_priority(StuffCategory c);

// Clip label from the per-frame layers: intention is the last frame's goal
// label; stop and deviate stimuli both map to a Stop response.
ClipLabels derive_clip_labels(const LabelLayers& layers, int frames);

}  // namespace riskid::scene
