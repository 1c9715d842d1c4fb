#include "riskid/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace riskid::features {

using diff::GatherSample;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using scene::BinaryMask;
using scene::BoundingBox;
using scene::Clip;
using scene::StuffCategory;

namespace {

// floor-split block boundaries, matching downsample_mask
inline int block_lo(int i, int src, int dst) {
  return static_cast<int>((static_cast<std::int64_t>(i) * src) / dst);
}

}  // namespace

PixelOwner resolve_owner(const Clip& clip, int frame, int u, int v) {
  PixelOwner owner;
  double best_depth = -1.0;
  for (const scene::Tracklet& t : clip.tracklets) {
    if (frame >= static_cast<int>(t.frames.size()) || !t.frames[frame]) {
      continue;
    }
    const scene::TrackletFrame& tf = *t.frames[frame];
    if (tf.box.contains(u, v) && (best_depth < 0.0 || tf.depth < best_depth)) {
      best_depth = tf.depth;
      owner.channel = static_cast<int>(t.category);
      owner.light_state = 0.0;
    }
  }
  if (owner.channel >= 0) return owner;
  int best_priority = -1;
  for (const scene::StuffRegion& region : clip.stuff) {
    if (frame >= static_cast<int>(region.rects.size())) continue;
    const int pri = scene::stuff_priority(region.category);
    if (pri <= best_priority) continue;
    for (const BoundingBox& r : region.rects[frame]) {
      if (r.contains(u, v)) {
        best_priority = pri;
        owner.channel = kStuffChannelOffset + static_cast<int>(region.category);
        owner.light_state =
            region.category == StuffCategory::kTrafficLight ? region.state
                                                            : 0.0;
        break;
      }
    }
  }
  return owner;
}

FrameContent frame_content(const Clip& clip, int frame,
                           const BinaryMask* mask,
                           const FeatureConfig& config) {
  if (mask && (mask->height != clip.height || mask->width != clip.width)) {
    throw Error("shape_mismatch", "frame_content: mask dims do not match");
  }
  const int g = config.grid;
  FrameContent out;
  out.coverage.assign(static_cast<std::size_t>(g) * g * kInteractionChannels,
                      0.0);
  out.unmasked.assign(static_cast<std::size_t>(g) * g, 0.0);
  for (int r = 0; r < g; ++r) {
    const int y0 = block_lo(r, clip.height, g);
    const int y1 = block_lo(r + 1, clip.height, g);
    for (int c = 0; c < g; ++c) {
      const int x0 = block_lo(c, clip.width, g);
      const int x1 = block_lo(c + 1, clip.width, g);
      const int cell = r * g + c;
      const double area = static_cast<double>((y1 - y0) * (x1 - x0));
      double* cov = out.coverage.data() +
                    static_cast<std::size_t>(cell) * kInteractionChannels;
      int unmasked_pixels = 0;
      for (int v = y0; v < y1; ++v) {
        for (int u = x0; u < x1; ++u) {
          if (mask && mask->at(v, u) == 0) continue;
          ++unmasked_pixels;
          const PixelOwner owner = resolve_owner(clip, frame, u, v);
          if (owner.channel < 0) continue;
          cov[owner.channel] += 1.0;
          if (owner.channel ==
                  kStuffChannelOffset +
                      static_cast<int>(StuffCategory::kTrafficLight) &&
              owner.light_state != 0.0) {
            cov[kLightChannel] += owner.light_state;
          }
        }
      }
      for (int ch = 0; ch < kInteractionChannels; ++ch) cov[ch] /= area;
      out.unmasked[cell] = unmasked_pixels / area;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

RoiSupport roi_support(const BoundingBox& box, int frame_w, int frame_h,
                       int grid) {
  if (box.width() <= 0 || box.height() <= 0) {
    throw Error("degenerate_box", "roi_support: box has no area");
  }
  if (box.x1 < 0 || box.y1 < 0 || box.x2 > frame_w || box.y2 > frame_h) {
    throw Error("bad_arg", "roi_support: box outside the frame");
  }
  RoiSupport support;
  support.quadrants.resize(4);
  const double mid_x = box.x1 + box.width() / 2.0;
  const double mid_y = box.y1 + box.height() / 2.0;
  const double xs[3] = {static_cast<double>(box.x1), mid_x,
                        static_cast<double>(box.x2)};
  const double ys[3] = {static_cast<double>(box.y1), mid_y,
                        static_cast<double>(box.y2)};
  int q = 0;
  for (int qy = 0; qy < 2; ++qy) {
    for (int qx = 0; qx < 2; ++qx, ++q) {
      const double x0 = xs[qx], x1 = xs[qx + 1];
      const double y0 = ys[qy], y1 = ys[qy + 1];
      const double quad_area = (x1 - x0) * (y1 - y0);
      GatherSample& gs = support.quadrants[q];
      for (int r = 0; r < grid; ++r) {
        const double cy0 = block_lo(r, frame_h, grid);
        const double cy1 = block_lo(r + 1, frame_h, grid);
        const double oy = std::min(y1, cy1) - std::max(y0, cy0);
        if (oy <= 0.0) continue;
        for (int c = 0; c < grid; ++c) {
          const double cx0 = block_lo(c, frame_w, grid);
          const double cx1 = block_lo(c + 1, frame_w, grid);
          const double ox = std::min(x1, cx1) - std::max(x0, cx0);
          if (ox <= 0.0) continue;
          gs.cells.push_back(r * grid + c);
          gs.weights.push_back(ox * oy / quad_area);
        }
      }
    }
  }
  return support;
}

Var roi_feature(Tape& tape, Var grid, const RoiSupport& support) {
  return tape.col_max(tape.gather_rows(grid, support.quadrants));
}

BinaryMask downsample_mask(const BinaryMask& mask, int th, int tw) {
  if (th > mask.height || tw > mask.width || th <= 0 || tw <= 0) {
    throw Error("bad_arg", "downsample_mask: bad target dims");
  }
  BinaryMask out;
  out.height = th;
  out.width = tw;
  out.data.assign(static_cast<std::size_t>(th) * tw, 0);
  for (int r = 0; r < th; ++r) {
    const int y0 = block_lo(r, mask.height, th);
    const int y1 = block_lo(r + 1, mask.height, th);
    for (int c = 0; c < tw; ++c) {
      const int x0 = block_lo(c, mask.width, tw);
      const int x1 = block_lo(c + 1, mask.width, tw);
      std::uint8_t any = 0;
      for (int v = y0; v < y1 && !any; ++v) {
        for (int u = x0; u < x1; ++u) {
          if (mask.at(v, u)) {
            any = 1;
            break;
          }
        }
      }
      out.data[static_cast<std::size_t>(r) * tw + c] = any;
    }
  }
  return out;
}

std::vector<int> mask_cells(const BinaryMask& mask) {
  std::vector<int> cells;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i]) cells.push_back(static_cast<int>(i));
  }
  return cells;
}

Var mask_align(Tape& tape, Var grid, const BinaryMask& downsampled) {
  const std::vector<int> cells = mask_cells(downsampled);
  if (cells.empty()) {
    throw Error("empty_region", "mask_align: downsampled mask is all zero");
  }
  return tape.masked_mean(grid, cells);
}

// ---------------------------------------------------------------------------

namespace {

Var frame_grid(Tape& tape, const FrameContent& content,
               const BackboneVars& vars, const FeatureConfig& config) {
  Var cov = tape.leaf({config.cells(), kInteractionChannels},
                      content.coverage, false);
  Var grid = tape.matmul(cov, vars.interaction_embed);
  return tape.add(grid,
                  tape.row_scale(vars.interaction_pos, content.unmasked));
}

std::vector<double> stuff_slice(const std::vector<double>& coverage,
                                int cells) {
  std::vector<double> out(static_cast<std::size_t>(cells) *
                          kIntentionChannels);
  for (int cell = 0; cell < cells; ++cell) {
    std::memcpy(
        out.data() + static_cast<std::size_t>(cell) * kIntentionChannels,
        coverage.data() +
            static_cast<std::size_t>(cell) * kInteractionChannels +
            kStuffChannelOffset,
        sizeof(double) * kIntentionChannels);
  }
  return out;
}

}  // namespace

BackboneOut backbone_forward(Tape& tape, const sim::Scenario& scenario,
                             const std::vector<BinaryMask>& masks,
                             const BackboneVars& vars,
                             const FeatureConfig& config) {
  const Clip& clip = scenario.clip;
  if (!masks.empty() && static_cast<int>(masks.size()) != clip.frames) {
    throw Error("shape_mismatch",
                "backbone_forward: one mask per frame required");
  }
  BackboneOut out;
  std::vector<Var> pooled;
  for (int f = 0; f < clip.frames; ++f) {
    const BinaryMask* mask = masks.empty() ? nullptr : &masks[f];
    const FrameContent content = frame_content(clip, f, mask, config);
    out.grids.push_back(frame_grid(tape, content, vars, config));
    Var stuff_cov = tape.leaf({config.cells(), kIntentionChannels},
                              stuff_slice(content.coverage, config.cells()),
                              false);
    Var pool_row = tape.slice_row(vars.intention_pool, f);
    pooled.push_back(tape.matmul(pool_row, stuff_cov));
  }
  out.intention = tape.matmul(tape.add_n(pooled), vars.intention_embed);
  return out;
}

// ---------------------------------------------------------------------------

PreparedScenario prepare_scenario(const sim::Scenario& scenario,
                                  const FeatureConfig& config) {
  PreparedScenario prepared;
  prepared.scenario = std::make_shared<const sim::Scenario>(scenario);
  prepared.config = config;
  const Clip& clip = prepared.scenario->clip;
  const int g = config.grid;

  prepared.cell_area.resize(config.cells());
  for (int r = 0; r < g; ++r) {
    const int h =
        block_lo(r + 1, clip.height, g) - block_lo(r, clip.height, g);
    for (int c = 0; c < g; ++c) {
      const int w =
          block_lo(c + 1, clip.width, g) - block_lo(c, clip.width, g);
      prepared.cell_area[r * g + c] = static_cast<double>(h * w);
    }
  }

  prepared.frames.resize(clip.frames);
  for (int f = 0; f < clip.frames; ++f) {
    PreparedFrame& pf = prepared.frames[f];
    std::vector<std::array<std::uint16_t, kInteractionChannels>> counts(
        config.cells());
    for (auto& arr : counts) arr.fill(0);
    for (int r = 0; r < g; ++r) {
      const int y0 = block_lo(r, clip.height, g);
      const int y1 = block_lo(r + 1, clip.height, g);
      for (int c = 0; c < g; ++c) {
        const int x0 = block_lo(c, clip.width, g);
        const int x1 = block_lo(c + 1, clip.width, g);
        for (int v = y0; v < y1; ++v) {
          for (int u = x0; u < x1; ++u) {
            const PixelOwner owner = resolve_owner(clip, f, u, v);
            if (owner.channel >= 0) ++counts[r * g + c][owner.channel];
          }
        }
      }
    }
    const int light_channel =
        kStuffChannelOffset + static_cast<int>(StuffCategory::kTrafficLight);
    for (int cell = 0; cell < config.cells(); ++cell) {
      for (int ch = 0; ch < kInteractionChannels; ++ch) {
        const int count =
            ch == kLightChannel ? counts[cell][light_channel] : counts[cell][ch];
        if (count > 0) {
          pf.counts.push_back({static_cast<std::uint16_t>(cell),
                               static_cast<std::uint8_t>(ch),
                               static_cast<std::uint16_t>(count)});
        }
      }
    }
    for (const scene::StuffRegion& region : clip.stuff) {
      if (region.category == StuffCategory::kTrafficLight) {
        pf.light_state = region.state;
      }
    }

    pf.ego = scene::ego_anchor(clip, f);
    for (std::size_t i = 0; i < clip.tracklets.size(); ++i) {
      auto anchor = scene::thing_anchor(clip, clip.tracklets[i], f);
      if (anchor) {
        pf.things.push_back(static_cast<int>(i));
        pf.thing_anchors.push_back(*anchor);
      }
    }
    for (std::size_t ri = 0; ri < clip.stuff.size(); ++ri) {
      const BinaryMask visible =
          scene::stuff_mask(clip, static_cast<int>(ri), f);
      const BinaryMask down = downsample_mask(visible, g, g);
      StuffNode node;
      node.region = static_cast<int>(ri);
      node.category = clip.stuff[ri].category;
      node.cells = mask_cells(down);
      if (node.cells.empty()) continue;
      double best = -1.0;
      for (int cell : node.cells) {
        const int r = cell / g, c = cell % g;
        const double u = 0.5 * (block_lo(c, clip.width, g) +
                                block_lo(c + 1, clip.width, g));
        const double v = 0.5 * (block_lo(r, clip.height, g) +
                                block_lo(r + 1, clip.height, g));
        const scene::Point3 p = scene::unproject(
            u, v, scene::depth_at(clip, f, u, v), clip.intrinsics);
        const double d = scene::distance(p, pf.ego);
        if (best < 0.0 || d < best) best = d;
      }
      node.min_dist_to_ego = best;
      pf.stuff.push_back(std::move(node));
    }
  }
  return prepared;
}

std::vector<MaterializedFrame> materialize(const PreparedScenario& prepared,
                                           std::optional<int> removed_id) {
  const Clip& clip = prepared.scenario->clip;
  const FeatureConfig& config = prepared.config;
  const int g = config.grid;
  int removed_index = -1;
  if (removed_id) {
    removed_index = prepared.scenario->tracklet_index(*removed_id);
    if (removed_index < 0) {
      throw Error("unknown_tracklet", "materialize: no tracklet with id " +
                                          std::to_string(*removed_id));
    }
  }

  std::vector<MaterializedFrame> frames(clip.frames);
  const BoundingBox frame_box{0, 0, clip.width, clip.height};
  const RoiSupport ego_support =
      roi_support(frame_box, clip.width, clip.height, g);

  for (int f = 0; f < clip.frames; ++f) {
    const PreparedFrame& pf = prepared.frames[f];
    MaterializedFrame& mf = frames[f];
    std::vector<double> cov(
        static_cast<std::size_t>(config.cells()) * kInteractionChannels, 0.0);
    mf.unmasked.assign(config.cells(), 1.0);
    for (const PreparedFrame::CountEntry& e : pf.counts) {
      double value = e.count / prepared.cell_area[e.cell];
      if (e.channel == kLightChannel) value *= pf.light_state;
      cov[static_cast<std::size_t>(e.cell) * kInteractionChannels +
          e.channel] = value;
    }

    // intervention: recompute the cells touched by the removed box with its
    // pixels masked out
    if (removed_index >= 0 && clip.tracklets[removed_index].frames[f]) {
      const BoundingBox& box = clip.tracklets[removed_index].frames[f]->box;
      const BinaryMask mask =
          scene::mask_generate(clip.height, clip.width, box);
      const int r0 = std::clamp(box.y1 * g / clip.height, 0, g - 1);
      const int r1 = std::clamp((box.y2 - 1) * g / clip.height, 0, g - 1);
      const int c0 = std::clamp(box.x1 * g / clip.width, 0, g - 1);
      const int c1 = std::clamp((box.x2 - 1) * g / clip.width, 0, g - 1);
      for (int r = r0; r <= r1; ++r) {
        const int y0 = block_lo(r, clip.height, g);
        const int y1 = block_lo(r + 1, clip.height, g);
        for (int c = c0; c <= c1; ++c) {
          const int x0 = block_lo(c, clip.width, g);
          const int x1 = block_lo(c + 1, clip.width, g);
          const int cell = r * g + c;
          double* cc = cov.data() +
                       static_cast<std::size_t>(cell) * kInteractionChannels;
          std::fill(cc, cc + kInteractionChannels, 0.0);
          int unmasked_pixels = 0;
          for (int v = y0; v < y1; ++v) {
            for (int u = x0; u < x1; ++u) {
              if (mask.at(v, u) == 0) continue;
              ++unmasked_pixels;
              const PixelOwner owner = resolve_owner(clip, f, u, v);
              if (owner.channel < 0) continue;
              cc[owner.channel] += 1.0;
              if (owner.channel ==
                      kStuffChannelOffset +
                          static_cast<int>(StuffCategory::kTrafficLight) &&
                  owner.light_state != 0.0) {
                cc[kLightChannel] += owner.light_state;
              }
            }
          }
          for (int ch = 0; ch < kInteractionChannels; ++ch) {
            cc[ch] /= prepared.cell_area[cell];
          }
          mf.unmasked[cell] = unmasked_pixels / prepared.cell_area[cell];
        }
      }
    }

    std::vector<double> stuff_cov(
        static_cast<std::size_t>(config.cells()) * kIntentionChannels);
    for (int cell = 0; cell < config.cells(); ++cell) {
      std::memcpy(stuff_cov.data() +
                      static_cast<std::size_t>(cell) * kIntentionChannels,
                  cov.data() +
                      static_cast<std::size_t>(cell) * kInteractionChannels +
                      kStuffChannelOffset,
                  sizeof(double) * kIntentionChannels);
    }
    mf.interaction_cov =
        Tensor({config.cells(), kInteractionChannels}, std::move(cov));
    mf.intention_cov =
        Tensor({config.cells(), kIntentionChannels}, std::move(stuff_cov));

    for (std::size_t k = 0; k < pf.things.size(); ++k) {
      const int idx = pf.things[k];
      if (idx == removed_index) continue;
      mf.things.push_back(idx);
      mf.thing_ids.push_back(clip.tracklets[idx].id);
      mf.thing_anchors.push_back(pf.thing_anchors[k]);
      mf.thing_supports.push_back(roi_support(
          clip.tracklets[idx].frames[f]->box, clip.width, clip.height, g));
    }
    mf.ego = pf.ego;
    mf.ego_support = ego_support;
    mf.stuff = &pf.stuff;
  }
  return frames;
}

}  // namespace riskid::features
