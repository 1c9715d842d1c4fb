#include "riskid/graphs.hpp"

#include <cmath>
#include <limits>

namespace riskid::graphs {

using diff::Tape;
using diff::Tensor;
using diff::Var;

int spatial_gate(const scene::Point3& a, const scene::Point3& b, double mu) {
  return scene::distance(a, b) <= mu ? 1 : 0;
}

namespace {

double min_distance(const NodeGeometry& a, const NodeGeometry& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const scene::Point3& p : a.points) {
    for (const scene::Point3& q : b.points) {
      best = std::min(best, scene::distance(p, q));
    }
  }
  return best;
}

}  // namespace

std::vector<std::uint8_t> gate_matrix(const std::vector<NodeGeometry>& nodes,
                                      GraphMode mode, double mu) {
  const int n = static_cast<int>(nodes.size());
  if (n == 0) throw Error("empty_nodes", "gate_matrix: no nodes");
  std::vector<std::uint8_t> gate(static_cast<std::size_t>(n) * n, 0);
  const int ego = n - 1;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        gate[static_cast<std::size_t>(i) * n + j] = 1;  // d = 0
        continue;
      }
      if (mode == GraphMode::kEgoStuff && i != ego && j != ego) {
        continue;  // no Stuff-Stuff interaction
      }
      gate[static_cast<std::size_t>(i) * n + j] =
          min_distance(nodes[i], nodes[j]) <= mu ? 1 : 0;
    }
  }
  return gate;
}

double appearance_relation(std::span<const double> x_i,
                           std::span<const double> x_j, const Tensor& w,
                           const Tensor& w_prime) {
  const int d = w.rows();
  if (w.cols() != d || w_prime.rows() != d || w_prime.cols() != d ||
      static_cast<int>(x_i.size()) != d ||
      static_cast<int>(x_j.size()) != d) {
    throw Error("shape_mismatch", "appearance_relation: dims do not agree");
  }
  double acc = 0.0;
  for (int r = 0; r < d; ++r) {
    double left_acc = 0.0;
    double right = 0.0;
    for (int c = 0; c < d; ++c) {
      left_acc += w.at(r, c) * x_i[c];
      right += w_prime.at(r, c) * x_j[c];
    }
    acc += left_acc * right;
  }
  return acc / std::sqrt(static_cast<double>(d));
}

Var build_affinity(Tape& tape, Var node_features,
                   const std::vector<std::uint8_t>& gate, Var w_left,
                   Var w_right) {
  const auto& shape = tape.shape(node_features);
  const int n = shape[0];
  const int d = shape[1];
  if (n == 0) throw Error("empty_nodes", "build_affinity: no nodes");
  if (gate.size() != static_cast<std::size_t>(n) * n) {
    throw Error("shape_mismatch", "build_affinity: gate size mismatch");
  }
  // rows of X are node features; (X W^T)(X W'^T)^T gives all pairwise
  // appearance relations at once
  Var left = tape.matmul_nt(node_features, w_left);
  Var right = tape.matmul_nt(node_features, w_right);
  Var scores =
      tape.scale(tape.matmul_nt(left, right), 1.0 / std::sqrt(double(d)));
  return tape.masked_softmax_rows(scores, gate);
}

Var gcn_layer(Tape& tape, Var affinity, Var features, Var weight,
              Var ln_scale, Var ln_shift) {
  Var messages = tape.matmul(tape.matmul(affinity, features), weight);
  Var pre = tape.add(messages, features);
  return tape.relu(tape.layer_norm_rows(pre, ln_scale, ln_shift));
}

int correlation_identify(const Tensor& ego_thing_affinity,
                         const std::vector<int>& thing_ids) {
  const int n = ego_thing_affinity.rows();
  if (ego_thing_affinity.cols() != n || n < 1) {
    throw Error("shape_mismatch", "correlation_identify: non-square affinity");
  }
  if (thing_ids.empty() ||
      static_cast<int>(thing_ids.size()) != n - 1) {
    throw Error("no_things",
                "correlation_identify: needs at least one Thing node");
  }
  const int ego = n - 1;
  int best = -1;
  double best_w = -1.0;
  for (int j = 0; j < n - 1; ++j) {
    const double w = ego_thing_affinity.at(ego, j);
    if (w > best_w || (w == best_w && best >= 0 && thing_ids[j] < thing_ids[best])) {
      best = j;
      best_w = w;
    }
  }
  return thing_ids[best];
}

EdgeExport export_edges(const Tensor& affinity, double threshold,
                        const std::vector<EdgeExportNode>& nodes) {
  const int n = affinity.rows();
  if (affinity.cols() != n) {
    throw Error("shape_mismatch", "export_edges: non-square affinity");
  }
  if (static_cast<int>(nodes.size()) != n) {
    throw Error("shape_mismatch", "export_edges: node metadata mismatch");
  }
  EdgeExport out;
  out.nodes = nodes;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double w = 0.5 * (affinity.at(i, j) + affinity.at(j, i));
      if (w > threshold) {
        out.edges.push_back({i, j, w});
      }
    }
  }
  return out;
}

}  // namespace riskid::graphs
