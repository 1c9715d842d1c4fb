#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskid/diff.hpp"
#include "riskid/scene.hpp"

namespace riskid::graphs {

enum class GraphMode { kEgoThing, kEgoStuff };

// Node geometry for the spatial gate: a single anchor for Thing/Ego nodes or
// the unprojected cells of a downsampled mask for Stuff nodes.  Pair distance
// is the minimum over the two point sets.
struct NodeGeometry {
  std::vector<scene::Point3> points;
};

// Hard binary gate (inclusive threshold).
int spatial_gate(const scene::Point3& a, const scene::Point3& b, double mu);

// Pairwise gate matrix, nodes ordered objects-then-Ego (Ego last).  In
// EgoStuff mode every Stuff-Stuff pair is forced to zero; diagonals always
// pass.
std::vector<std::uint8_t> gate_matrix(const std::vector<NodeGeometry>& nodes,
                                      GraphMode mode, double mu);

// Scaled appearance relation (w x_i)^T (w' x_j) / sqrt(D); plain scalar path
// used by diagnostics and tests.
double appearance_relation(std::span<const double> x_i,
                           std::span<const double> x_j,
                           const diff::Tensor& w, const diff::Tensor& w_prime);

// Row-normalized affinity: row i is the gated softmax over j of
// exp(appearance relation), with exact zeros where the gate is off.
diff::Var build_affinity(diff::Tape& tape, diff::Var node_features,
                         const std::vector<std::uint8_t>& gate,
                         diff::Var w_left, diff::Var w_right);

// One message-passing layer: ReLU(LayerNorm(G X W + X)).
diff::Var gcn_layer(diff::Tape& tape, diff::Var affinity, diff::Var features,
                    diff::Var weight, diff::Var ln_scale, diff::Var ln_shift);

// Correlation baseline: the Thing node with the highest attention weight in
// the Ego row of the last-frame affinity; ties break to the lower id.
int correlation_identify(const diff::Tensor& ego_thing_affinity,
                         const std::vector<int>& thing_ids);

struct EdgeExportNode {
  std::string id;        // tracklet id or "ego"
  std::string category;  // thing category name or "ego"
  scene::Point3 anchor;
};
struct EdgeExportEdge {
  int i = 0, j = 0;  // node indices, i < j
  double weight = 0.0;
};
struct EdgeExport {
  std::vector<EdgeExportNode> nodes;
  std::vector<EdgeExportEdge> edges;
};

// Undirected edges where the symmetrized weight (G(i,j)+G(j,i))/2 exceeds
// the threshold strictly.
EdgeExport export_edges(const diff::Tensor& affinity, double threshold,
                        const std::vector<EdgeExportNode>& nodes);

}  // namespace riskid::graphs
