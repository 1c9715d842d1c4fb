#include <cmath>

#include "doctest.h"
#include "riskid/rng.hpp"
#include "riskid/scene.hpp"

using namespace riskid::scene;
using riskid::Rng;

TEST_CASE("unproject with identity intrinsics") {
  CameraIntrinsics k{1.0, 1.0, 0.0, 0.0};
  Point3 p = unproject(2.0, 3.0, 2.0, k);
  CHECK(p.x == 4.0);
  CHECK(p.y == 6.0);
  CHECK(p.z == 2.0);
}

TEST_CASE("unproject with scaled focal lengths") {
  CameraIntrinsics k{2.0, 2.0, 0.0, 0.0};
  Point3 p = unproject(2.0, 3.0, 1.0, k);
  CHECK(p.x == 1.0);
  CHECK(p.y == 1.5);
  CHECK(p.z == 1.0);
}

TEST_CASE("unproject with zero depth lands at the origin") {
  CameraIntrinsics k{2.0, 3.0, 1.0, 1.0};
  Point3 p = unproject(5.0, 7.0, 0.0, k);
  CHECK(p.x == 0.0);
  CHECK(p.y == 0.0);
  CHECK(p.z == 0.0);
}

TEST_CASE("unproject rejects non-invertible intrinsics") {
  CameraIntrinsics k{0.0, 1.0, 0.0, 0.0};
  CHECK_THROWS_AS(unproject(1.0, 1.0, 1.0, k), riskid::Error);
}

TEST_CASE("projecting an unprojected pixel recovers it") {
  Rng rng(5);
  CameraIntrinsics k{112.0, 112.0, 112.0, 112.0};
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform(0.0, 224.0);
    const double v = rng.uniform(0.0, 224.0);
    const double depth = rng.uniform(0.5, 30.0);
    Point3 p = unproject(u, v, depth, k);
    const double u2 = k.fx * p.x / p.z + k.cx;
    const double v2 = k.fy * p.y / p.z + k.cy;
    CHECK(std::fabs(u2 - u) < 1e-9);
    CHECK(std::fabs(v2 - v) < 1e-9);
  }
}

TEST_CASE("distance basics") {
  CHECK(distance({0, 0, 0}, {3, 4, 0}) == 5.0);
  CHECK(distance({1, 2, 3}, {1, 2, 3}) == 0.0);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    Point3 a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    Point3 b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
    CHECK(distance(a, b) == distance(b, a));
  }
}

TEST_CASE("derive_clip_labels follows the last frame") {
  LabelLayers layers;
  layers.goal = {Intention::kBackground, Intention::kBackground,
                 Intention::kLeftTurn};
  layers.stimulus = {Stimulus::kNone, Stimulus::kNone, Stimulus::kNone};
  ClipLabels labels = derive_clip_labels(layers, 3);
  CHECK(labels.intention == Intention::kLeftTurn);
  CHECK(labels.response == Response::kGo);

  layers.stimulus[2] = Stimulus::kDeviate;
  labels = derive_clip_labels(layers, 3);
  CHECK(labels.response == Response::kStop);

  layers.stimulus[2] = Stimulus::kStop;
  labels = derive_clip_labels(layers, 3);
  CHECK(labels.response == Response::kStop);
}

TEST_CASE("derive_clip_labels rejects empty layers") {
  LabelLayers layers;
  CHECK_THROWS_AS(derive_clip_labels(layers, 1), riskid::Error);
}

TEST_CASE("mask_generate zeroes exactly the box") {
  BinaryMask m = mask_generate(4, 4, BoundingBox{1, 1, 3, 3});
  CHECK(m.count_zeros() == 4);
  for (int v = 0; v < 4; ++v) {
    for (int u = 0; u < 4; ++u) {
      const bool inside = u >= 1 && u < 3 && v >= 1 && v < 3;
      CHECK(m.at(v, u) == (inside ? 0 : 1));
    }
  }
}

TEST_CASE("mask_generate degenerate and frame-size boxes") {
  CHECK(mask_generate(4, 4, BoundingBox{2, 2, 2, 2}).count_zeros() == 0);
  CHECK(mask_generate(4, 4, BoundingBox{0, 0, 4, 4}).count_zeros() == 16);
}

TEST_CASE("mask zero count equals box area for random boxes") {
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    int x1 = rng.uniform_int(20), y1 = rng.uniform_int(20);
    int x2 = x1 + rng.uniform_int(20 - x1 + 1);
    int y2 = y1 + rng.uniform_int(20 - y1 + 1);
    BoundingBox box{x1, y1, x2, y2};
    CHECK(mask_generate(20, 20, box).count_zeros() ==
          static_cast<std::size_t>(box.area()));
  }
}

TEST_CASE("iou of identical, shifted, and disjoint boxes") {
  BoundingBox a{0, 0, 10, 10};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, BoundingBox{5, 0, 15, 10}) == doctest::Approx(1.0 / 3.0));
  CHECK(iou(a, BoundingBox{20, 20, 30, 30}) == 0.0);
  // adjacent boxes under half-open intervals do not overlap
  CHECK(iou(a, BoundingBox{10, 0, 20, 10}) == 0.0);
}

TEST_CASE("depth_at prefers the nearest covering box") {
  Clip clip;
  clip.frames = 1;
  clip.width = clip.height = 224;
  Tracklet near;
  near.id = 1;
  near.frames = {TrackletFrame{BoundingBox{100, 100, 120, 120}, 3.0}};
  Tracklet far;
  far.id = 2;
  far.frames = {TrackletFrame{BoundingBox{90, 90, 130, 130}, 8.0}};
  clip.tracklets = {far, near};
  CHECK(depth_at(clip, 0, 110, 110) == 3.0);
  CHECK(depth_at(clip, 0, 95, 95) == 8.0);
  // ground plane below the principal row, sky above
  CHECK(depth_at(clip, 0, 10, 223) ==
        doctest::Approx(1.2 * 112.0 / (223.0 - 112.0)));
  CHECK(depth_at(clip, 0, 10, 50) == clip.depth.sky_depth);
}

TEST_CASE("stuff_mask excludes thing boxes and higher-priority stuff") {
  Clip clip;
  clip.frames = 1;
  clip.width = clip.height = 32;
  StuffRegion road;
  road.category = StuffCategory::kRoad;
  road.rects = {{BoundingBox{0, 16, 32, 32}}};
  StuffRegion markings;
  markings.category = StuffCategory::kLaneMarkings;
  markings.rects = {{BoundingBox{12, 20, 20, 28}}};
  clip.stuff = {road, markings};
  Tracklet t;
  t.id = 1;
  t.frames = {TrackletFrame{BoundingBox{0, 16, 8, 24}, 4.0}};
  clip.tracklets = {t};

  BinaryMask road_mask = stuff_mask(clip, 0, 0);
  CHECK(road_mask.at(17, 4) == 0);   // occluded by the thing box
  CHECK(road_mask.at(22, 16) == 0);  // claimed by lane markings
  CHECK(road_mask.at(17, 10) == 1);
  BinaryMask mark_mask = stuff_mask(clip, 1, 0);
  CHECK(mark_mask.at(22, 16) == 1);
  CHECK(mark_mask.at(17, 10) == 0);
}
