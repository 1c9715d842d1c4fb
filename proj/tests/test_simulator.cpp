#include <cmath>
#include <set>

#include "doctest.h"
#include "riskid/simulator.hpp"
#include "support/compare.hpp"

using namespace riskid;
using namespace riskid::sim;
using riskid::testsupport::scenarios_identical;

TEST_CASE("same seed gives bit-identical scenarios") {
  SimConfig cfg;
  for (std::uint64_t seed : {1ull, 77ull, 4321ull}) {
    Scenario a = generate_scenario(seed, cfg);
    Scenario b = generate_scenario(seed, cfg);
    CHECK(scenarios_identical(a, b));
  }
}

TEST_CASE("reactive scenario stops because of its cause") {
  SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Scenario s = generate_reactive_scenario(seed, cfg);
    CHECK(s.truth.response == scene::Response::kStop);
    REQUIRE(s.truth.cause_id.has_value());
    CHECK_FALSE(s.truth.confound);
    CHECK(counterfactual_response(s, *s.truth.cause_id) ==
          scene::Response::kGo);
    for (const auto& t : s.clip.tracklets) {
      if (t.id != *s.truth.cause_id) {
        CHECK(counterfactual_response(s, t.id) == scene::Response::kStop);
      }
    }
  }
}

TEST_CASE("zero-object config yields Go with no cause") {
  SimConfig cfg;
  cfg.min_objects = 0;
  cfg.max_objects = 0;
  cfg.go_fraction = 1.0;
  Scenario s = generate_scenario(12, cfg);
  CHECK(s.clip.tracklets.empty());
  CHECK(s.truth.response == scene::Response::kGo);
  CHECK_FALSE(s.truth.cause_id.has_value());
}

TEST_CASE("removing an object outside the corridor keeps the label") {
  SimConfig cfg;
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Scenario s = generate_scenario(seed, cfg);
    for (const auto& t : s.clip.tracklets) {
      if (s.truth.cause_id && t.id == *s.truth.cause_id) continue;
      if (s.truth.response == scene::Response::kGo) {
        CHECK(counterfactual_response(s, t.id) == scene::Response::kGo);
      }
    }
  }
}

TEST_CASE("red-light congestion keeps stopping after the lead is removed") {
  SimConfig cfg;
  cfg.go_fraction = 0.0;
  cfg.confound_prob = 1.0;
  cfg.light_only_prob = 0.0;
  int found = 0;
  for (std::uint64_t seed = 0; seed < 200 && found < 5; ++seed) {
    Scenario s = generate_scenario(seed, cfg);
    if (!s.truth.confound || !s.truth.cause_id) continue;
    ++found;
    CHECK(counterfactual_response(s, *s.truth.cause_id) ==
          scene::Response::kStop);
  }
  CHECK(found == 5);
}

TEST_CASE("counterfactual_response rejects unknown ids") {
  SimConfig cfg;
  Scenario s = generate_scenario(5, cfg);
  CHECK_THROWS_AS(counterfactual_response(s, 9999), Error);
}

TEST_CASE("dataset splits have requested sizes and disjoint seeds") {
  SimConfig cfg;
  Dataset d = generate_dataset(cfg, 30, 10, 5, 900);
  CHECK(d.train.size() == 30);
  CHECK(d.test1.size() == 10);
  CHECK(d.test2.size() == 5);
  std::set<std::uint64_t> seeds;
  for (const auto& s : d.train) seeds.insert(s.seed);
  for (const auto& s : d.test1) seeds.insert(s.seed);
  for (const auto& s : d.test2) seeds.insert(s.seed);
  CHECK(seeds.size() == 45);
}

TEST_CASE("go fraction tracks the configured 4:1 ratio") {
  SimConfig cfg;
  int go = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Scenario s = generate_scenario(42'000 + i, cfg);
    if (s.truth.response == scene::Response::kGo) ++go;
  }
  const double frac = static_cast<double>(go) / n;
  CHECK(frac > 0.77);
  CHECK(frac < 0.83);
}

TEST_CASE("test2 scenarios flip to Go exactly when the cause is removed") {
  SimConfig cfg;
  Dataset d = generate_dataset(cfg, 1, 1, 25, 31337);
  for (const auto& s : d.test2) {
    REQUIRE(s.truth.cause_id.has_value());
    CHECK(counterfactual_response(s, *s.truth.cause_id) ==
          scene::Response::kGo);
    CHECK(s.clip.tracklets.size() >= 2);
    for (const auto& t : s.clip.tracklets) {
      if (t.id != *s.truth.cause_id) {
        CHECK(counterfactual_response(s, t.id) == scene::Response::kStop);
      }
    }
  }
}

TEST_CASE("box centers unproject back to the latent positions") {
  SimConfig cfg;
  for (std::uint64_t seed = 500; seed < 520; ++seed) {
    Scenario s = generate_scenario(seed, cfg);
    for (std::size_t i = 0; i < s.clip.tracklets.size(); ++i) {
      const auto& t = s.clip.tracklets[i];
      for (int f = 0; f < s.clip.frames; ++f) {
        if (!t.frames[f]) continue;
        const double u = t.frames[f]->box.center_u();
        const double v = t.frames[f]->box.center_v();
        const double depth = scene::depth_at(s.clip, f, u, v);
        const scene::Point3 p =
            scene::unproject(u, v, depth, s.clip.intrinsics);
        CHECK(scene::distance(p, s.latents[i][f]) < 1e-6);
      }
    }
  }
}

TEST_CASE("dataset generation is a pure function of its inputs") {
  SimConfig cfg;
  Dataset a = generate_dataset(cfg, 5, 3, 2, 777);
  Dataset b = generate_dataset(cfg, 5, 3, 2, 777);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(scenarios_identical(a.train[i], b.train[i]));
  }
  for (std::size_t i = 0; i < a.test2.size(); ++i) {
    CHECK(scenarios_identical(a.test2[i], b.test2[i]));
  }
}

TEST_CASE("isolation scenarios keep the extra object fully gated off") {
  SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    IsolationScenario iso = generate_isolation_scenario(seed, cfg);
    const Scenario& s = iso.scenario;
    const int idx = s.tracklet_index(iso.isolated_id);
    REQUIRE(idx >= 0);
    for (int f = 0; f < s.clip.frames; ++f) {
      const scene::Point3 p = s.latents[idx][f];
      CHECK(scene::distance(p, scene::ego_anchor(s.clip, f)) > 3.0);
      for (std::size_t j = 0; j < s.latents.size(); ++j) {
        if (static_cast<int>(j) == idx) continue;
        CHECK(scene::distance(p, s.latents[j][f]) > 3.0);
      }
    }
  }
}
