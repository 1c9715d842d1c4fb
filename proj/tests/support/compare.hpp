#pragma once

#include <cmath>

#include "riskid/simulator.hpp"

namespace riskid::testsupport {

// Field-by-field bit equality of two scenarios.
inline bool scenarios_identical(const sim::Scenario& a,
                                const sim::Scenario& b) {
  if (a.seed != b.seed || a.horizon != b.horizon) return false;
  if (a.clip.frames != b.clip.frames || a.clip.width != b.clip.width ||
      a.clip.height != b.clip.height) {
    return false;
  }
  if (a.truth.response != b.truth.response ||
      a.truth.intention != b.truth.intention ||
      a.truth.cause_id != b.truth.cause_id ||
      a.truth.confound != b.truth.confound || a.truth.kind != b.truth.kind) {
    return false;
  }
  if (a.labels.goal != b.labels.goal ||
      a.labels.stimulus != b.labels.stimulus) {
    return false;
  }
  if (a.clip.tracklets.size() != b.clip.tracklets.size()) return false;
  for (std::size_t i = 0; i < a.clip.tracklets.size(); ++i) {
    const auto& ta = a.clip.tracklets[i];
    const auto& tb = b.clip.tracklets[i];
    if (ta.id != tb.id || ta.category != tb.category || ta.score != tb.score ||
        ta.frames.size() != tb.frames.size()) {
      return false;
    }
    for (std::size_t f = 0; f < ta.frames.size(); ++f) {
      if (ta.frames[f].has_value() != tb.frames[f].has_value()) return false;
      if (!ta.frames[f]) continue;
      const auto& fa = *ta.frames[f];
      const auto& fb = *tb.frames[f];
      if (fa.depth != fb.depth || fa.box.x1 != fb.box.x1 ||
          fa.box.y1 != fb.box.y1 || fa.box.x2 != fb.box.x2 ||
          fa.box.y2 != fb.box.y2) {
        return false;
      }
    }
  }
  if (a.clip.stuff.size() != b.clip.stuff.size()) return false;
  for (std::size_t i = 0; i < a.clip.stuff.size(); ++i) {
    const auto& sa = a.clip.stuff[i];
    const auto& sb = b.clip.stuff[i];
    if (sa.category != sb.category || sa.state != sb.state ||
        sa.rects.size() != sb.rects.size()) {
      return false;
    }
    for (std::size_t f = 0; f < sa.rects.size(); ++f) {
      if (sa.rects[f].size() != sb.rects[f].size()) return false;
      for (std::size_t r = 0; r < sa.rects[f].size(); ++r) {
        const auto& ra = sa.rects[f][r];
        const auto& rb = sb.rects[f][r];
        if (ra.x1 != rb.x1 || ra.y1 != rb.y1 || ra.x2 != rb.x2 ||
            ra.y2 != rb.y2) {
          return false;
        }
      }
    }
  }
  if (a.latents.size() != b.latents.size()) return false;
  for (std::size_t i = 0; i < a.latents.size(); ++i) {
    if (a.latents[i].size() != b.latents[i].size()) return false;
    for (std::size_t f = 0; f < a.latents[i].size(); ++f) {
      if (a.latents[i][f].x != b.latents[i][f].x ||
          a.latents[i][f].y != b.latents[i][f].y ||
          a.latents[i][f].z != b.latents[i][f].z) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace riskid::testsupport
