#include "riskid/diff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>

namespace riskid::diff {

namespace {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw Error("bad_shape", "negative dimension in tensor shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(int rows, int cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)),
      values_(std::make_shared<const std::vector<double>>(std::move(values))) {
  if (shape_product(shape_) != values_->size()) {
    throw Error("bad_shape", "tensor value count does not match shape");
  }
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::row(std::vector<double> values) {
  int n = static_cast<int>(values.size());
  return Tensor({1, n}, std::move(values));
}

double Tensor::item() const {
  if (size() != 1) throw Error("bad_shape", "item() on non-scalar tensor");
  return (*values_)[0];
}

bool Tensor::all_finite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

int Tape::push(Node&& node) {
  if (validate_finite_) {
    for (double v : node.value) {
      if (!std::isfinite(v)) {
        throw Error("non_finite", "non-finite value produced during forward");
      }
    }
  }
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 ||
      v.id >= static_cast<int>(nodes_.size())) {
    throw Error("bad_var", "variable does not belong to this tape");
  }
  return nodes_[v.id];
}

void Tape::shape_error(const char* op, const std::string& det) const {
  throw Error("shape_mismatch", std::string(op) + ": " + det);
}

void Tape::check_same_shape(const char* op, Var a, Var b) const {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows || na.cols != nb.cols) {
    shape_error(op, shape_str(na.rows, na.cols) + " vs " +
                        shape_str(nb.rows, nb.cols));
  }
}

Var Tape::leaf(const Tensor& t, bool requires_grad) {
  return leaf(t.shape(), t.values(), requires_grad);
}

Var Tape::leaf(std::vector<int> shape, std::span<const double> values,
               bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  if (shape.size() == 1) {
    n.rows = 1;
    n.cols = shape[0];
  } else if (shape.size() == 2) {
    n.rows = shape[0];
    n.cols = shape[1];
  } else {
    shape_error("leaf", "rank must be 1 or 2");
  }
  if (static_cast<std::size_t>(n.rows) * n.cols != values.size()) {
    shape_error("leaf", "value count does not match shape");
  }
  n.needs_grad = requires_grad;
  n.value.assign(values.begin(), values.end());
  return Var{this, push(std::move(n))};
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cols != nb.rows) {
    shape_error("matmul", shape_str(na.rows, na.cols) + " vs " +
                              shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = Op::kMatmul;
  n.rows = na.rows;
  n.cols = nb.cols;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
  const int m = na.rows, k = na.cols, p = nb.cols;
  const double* A = na.value.data();
  const double* B = nb.value.data();
  double* C = n.value.data();
  for (int i = 0; i < m; ++i) {
    const double* ar = A + static_cast<std::size_t>(i) * k;
    double* cr = C + static_cast<std::size_t>(i) * p;
    for (int kk = 0; kk < k; ++kk) {
      const double av = ar[kk];
      if (av == 0.0) continue;
      const double* br = B + static_cast<std::size_t>(kk) * p;
      for (int j = 0; j < p; ++j) cr[j] += av * br[j];
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::matmul_nt(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.cols != nb.cols) {
    shape_error("matmul_nt", shape_str(na.rows, na.cols) + " vs " +
                                 shape_str(nb.rows, nb.cols) + "^T");
  }
  Node n;
  n.op = Op::kMatmulNT;
  n.rows = na.rows;
  n.cols = nb.rows;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
  const int m = na.rows, k = na.cols, p = nb.rows;
  for (int i = 0; i < m; ++i) {
    const double* ar = na.value.data() + static_cast<std::size_t>(i) * k;
    double* cr = n.value.data() + static_cast<std::size_t>(i) * p;
    for (int j = 0; j < p; ++j) {
      const double* br = nb.value.data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += ar[kk] * br[kk];
      cr[j] = acc;
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  check_same_shape("add", a, b);
  const Node& na = node(a);
  const Node& nb = node(b);
  Node n;
  n.op = Op::kAdd;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = na.value[i] + nb.value[i];
  }
  return Var{this, push(std::move(n))};
}

Var Tape::add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw Error("bad_arg", "add_n: empty operand list");
  const Node& first = node(xs[0]);
  Node n;
  n.op = Op::kAddN;
  n.rows = first.rows;
  n.cols = first.cols;
  n.value.assign(first.value.size(), 0.0);
  for (Var x : xs) {
    const Node& nx = node(x);
    if (nx.rows != n.rows || nx.cols != n.cols) {
      shape_error("add_n", shape_str(n.rows, n.cols) + " vs " +
                               shape_str(nx.rows, nx.cols));
    }
    n.inputs.push_back(x.id);
    n.needs_grad = n.needs_grad || nx.needs_grad;
    for (std::size_t i = 0; i < n.value.size(); ++i) {
      n.value[i] += nx.value[i];
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::mul(Var a, Var b) {
  check_same_shape("mul", a, b);
  const Node& na = node(a);
  const Node& nb = node(b);
  Node n;
  n.op = Op::kMul;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = na.value[i] * nb.value[i];
  }
  return Var{this, push(std::move(n))};
}

Var Tape::scale(Var a, double c) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kScale;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.aux_d = {c};
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] = c * na.value[i];
  return Var{this, push(std::move(n))};
}

Var Tape::row_scale(Var a, std::span<const double> factors) {
  const Node& na = node(a);
  if (static_cast<int>(factors.size()) != na.rows) {
    shape_error("row_scale", "factor count " +
                                 std::to_string(factors.size()) + " vs rows " +
                                 std::to_string(na.rows));
  }
  Node n;
  n.op = Op::kRowScale;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.aux_d.assign(factors.begin(), factors.end());
  n.value.resize(na.value.size());
  for (int r = 0; r < n.rows; ++r) {
    const double f = n.aux_d[r];
    for (int c = 0; c < n.cols; ++c) {
      n.value[static_cast<std::size_t>(r) * n.cols + c] =
          f * na.value[static_cast<std::size_t>(r) * n.cols + c];
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::exp(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kExp;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = std::exp(na.value[i]);
  }
  return Var{this, push(std::move(n))};
}

Var Tape::relu(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kRelu;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = na.value[i] > 0.0 ? na.value[i] : 0.0;
  }
  return Var{this, push(std::move(n))};
}

Var Tape::sigmoid(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kSigmoid;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = 1.0 / (1.0 + std::exp(-na.value[i]));
  }
  return Var{this, push(std::move(n))};
}

Var Tape::tanh(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kTanh;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.value.resize(na.value.size());
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    n.value[i] = std::tanh(na.value[i]);
  }
  return Var{this, push(std::move(n))};
}

Var Tape::softmax_rows(Var a) {
  const Node& na = node(a);
  Node n;
  n.op = Op::kSoftmax;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.value.resize(na.value.size());
  for (int r = 0; r < n.rows; ++r) {
    const double* in = na.value.data() + static_cast<std::size_t>(r) * n.cols;
    double* out = n.value.data() + static_cast<std::size_t>(r) * n.cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < n.cols; ++c) mx = std::max(mx, in[c]);
    double sum = 0.0;
    for (int c = 0; c < n.cols; ++c) {
      out[c] = std::exp(in[c] - mx);
      sum += out[c];
    }
    for (int c = 0; c < n.cols; ++c) out[c] /= sum;
  }
  return Var{this, push(std::move(n))};
}

Var Tape::masked_softmax_rows(Var a, std::span<const std::uint8_t> mask) {
  const Node& na = node(a);
  if (mask.size() != na.value.size()) {
    shape_error("masked_softmax", "mask size " + std::to_string(mask.size()) +
                                      " vs " + shape_str(na.rows, na.cols));
  }
  Node n;
  n.op = Op::kMaskedSoftmax;
  n.rows = na.rows;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.aux_b.assign(mask.begin(), mask.end());
  n.value.assign(na.value.size(), 0.0);
  for (int r = 0; r < n.rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * n.cols;
    const double* in = na.value.data() + off;
    const std::uint8_t* m = n.aux_b.data() + off;
    double* out = n.value.data() + off;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (int c = 0; c < n.cols; ++c) {
      if (m[c]) {
        mx = std::max(mx, in[c]);
        any = true;
      }
    }
    if (!any) {
      throw Error("empty_row", "masked_softmax: row " + std::to_string(r) +
                                   " has no unmasked entries");
    }
    double sum = 0.0;
    for (int c = 0; c < n.cols; ++c) {
      if (m[c]) {
        out[c] = std::exp(in[c] - mx);
        sum += out[c];
      }
    }
    for (int c = 0; c < n.cols; ++c) {
      if (m[c]) out[c] /= sum;
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta) {
  const Node& nx = node(x);
  const Node& ng = node(gamma);
  const Node& nb = node(beta);
  if (ng.rows != 1 || nb.rows != 1 || ng.cols != nx.cols ||
      nb.cols != nx.cols) {
    shape_error("layer_norm", "x " + shape_str(nx.rows, nx.cols) + ", gamma " +
                                  shape_str(ng.rows, ng.cols) + ", beta " +
                                  shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = Op::kLayerNorm;
  n.rows = nx.rows;
  n.cols = nx.cols;
  n.inputs = {x.id, gamma.id, beta.id};
  n.needs_grad = nx.needs_grad || ng.needs_grad || nb.needs_grad;
  n.value.resize(nx.value.size());
  // cache per-row mean and inverse stddev for backward
  n.aux_d.resize(2 * static_cast<std::size_t>(n.rows));
  for (int r = 0; r < n.rows; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * n.cols;
    const double* in = nx.value.data() + off;
    double mean = 0.0;
    for (int c = 0; c < n.cols; ++c) mean += in[c];
    mean /= n.cols;
    double var = 0.0;
    for (int c = 0; c < n.cols; ++c) {
      const double d = in[c] - mean;
      var += d * d;
    }
    var /= n.cols;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    n.aux_d[2 * r] = mean;
    n.aux_d[2 * r + 1] = inv_std;
    for (int c = 0; c < n.cols; ++c) {
      n.value[off + c] =
          ng.value[c] * ((in[c] - mean) * inv_std) + nb.value[c];
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::concat_cols(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  if (na.rows != nb.rows) {
    shape_error("concat_cols", shape_str(na.rows, na.cols) + " vs " +
                                   shape_str(nb.rows, nb.cols));
  }
  Node n;
  n.op = Op::kConcatCols;
  n.rows = na.rows;
  n.cols = na.cols + nb.cols;
  n.inputs = {a.id, b.id};
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.aux_i = {na.cols};
  n.value.resize(static_cast<std::size_t>(n.rows) * n.cols);
  for (int r = 0; r < n.rows; ++r) {
    double* out = n.value.data() + static_cast<std::size_t>(r) * n.cols;
    std::memcpy(out, na.value.data() + static_cast<std::size_t>(r) * na.cols,
                sizeof(double) * na.cols);
    std::memcpy(out + na.cols,
                nb.value.data() + static_cast<std::size_t>(r) * nb.cols,
                sizeof(double) * nb.cols);
  }
  return Var{this, push(std::move(n))};
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw Error("bad_arg", "stack_rows: empty operand list");
  const Node& first = node(rows[0]);
  Node n;
  n.op = Op::kStackRows;
  n.rows = static_cast<int>(rows.size());
  n.cols = first.cols;
  n.value.resize(static_cast<std::size_t>(n.rows) * n.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Node& nr = node(rows[i]);
    if (nr.rows != 1 || nr.cols != n.cols) {
      shape_error("stack_rows", "operand " + std::to_string(i) + " is " +
                                    shape_str(nr.rows, nr.cols));
    }
    n.inputs.push_back(rows[i].id);
    n.needs_grad = n.needs_grad || nr.needs_grad;
    std::memcpy(n.value.data() + i * n.cols, nr.value.data(),
                sizeof(double) * n.cols);
  }
  return Var{this, push(std::move(n))};
}

Var Tape::slice_row(Var a, int row) {
  const Node& na = node(a);
  if (row < 0 || row >= na.rows) {
    shape_error("slice_row", "row " + std::to_string(row) + " of " +
                                 shape_str(na.rows, na.cols));
  }
  Node n;
  n.op = Op::kSliceRow;
  n.rows = 1;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.aux_i = {row};
  n.value.assign(na.value.begin() + static_cast<std::size_t>(row) * na.cols,
                 na.value.begin() + static_cast<std::size_t>(row + 1) * na.cols);
  return Var{this, push(std::move(n))};
}

Var Tape::col_max(Var a) {
  const Node& na = node(a);
  if (na.rows < 1) shape_error("col_max", "empty input");
  Node n;
  n.op = Op::kColMax;
  n.rows = 1;
  n.cols = na.cols;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  n.aux_i.assign(na.cols, 0);  // argmax row per column (first maximum)
  n.value.resize(na.cols);
  for (int c = 0; c < na.cols; ++c) {
    double best = na.value[c];
    int best_r = 0;
    for (int r = 1; r < na.rows; ++r) {
      const double v = na.value[static_cast<std::size_t>(r) * na.cols + c];
      if (v > best) {
        best = v;
        best_r = r;
      }
    }
    n.value[c] = best;
    n.aux_i[c] = best_r;
  }
  return Var{this, push(std::move(n))};
}

Var Tape::mean_all(Var a) {
  const Node& na = node(a);
  if (na.value.empty()) shape_error("mean_all", "empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.rows = 1;
  n.cols = 1;
  n.inputs = {a.id};
  n.needs_grad = na.needs_grad;
  double sum = 0.0;
  for (double v : na.value) sum += v;
  n.value = {sum / static_cast<double>(na.value.size())};
  return Var{this, push(std::move(n))};
}

Var Tape::gather_rows(Var grid, const std::vector<GatherSample>& samples) {
  const Node& ng = node(grid);
  if (samples.empty()) shape_error("gather_rows", "no samples");
  Node n;
  n.op = Op::kGatherRows;
  n.rows = static_cast<int>(samples.size());
  n.cols = ng.cols;
  n.inputs = {grid.id};
  n.needs_grad = ng.needs_grad;
  n.samples = samples;
  n.value.assign(static_cast<std::size_t>(n.rows) * n.cols, 0.0);
  for (int s = 0; s < n.rows; ++s) {
    const GatherSample& gs = samples[s];
    if (gs.cells.size() != gs.weights.size()) {
      shape_error("gather_rows", "cells/weights size mismatch");
    }
    double* out = n.value.data() + static_cast<std::size_t>(s) * n.cols;
    for (std::size_t k = 0; k < gs.cells.size(); ++k) {
      if (gs.cells[k] < 0 || gs.cells[k] >= ng.rows) {
        shape_error("gather_rows", "cell index out of range");
      }
      const double w = gs.weights[k];
      const double* row =
          ng.value.data() + static_cast<std::size_t>(gs.cells[k]) * ng.cols;
      for (int c = 0; c < n.cols; ++c) out[c] += w * row[c];
    }
  }
  return Var{this, push(std::move(n))};
}

Var Tape::masked_mean(Var grid, std::span<const int> cells) {
  const Node& ng = node(grid);
  if (cells.empty()) {
    throw Error("empty_region", "masked_mean: mask selects no cells");
  }
  Node n;
  n.op = Op::kMaskedMean;
  n.rows = 1;
  n.cols = ng.cols;
  n.inputs = {grid.id};
  n.needs_grad = ng.needs_grad;
  n.aux_i.assign(cells.begin(), cells.end());
  n.value.assign(ng.cols, 0.0);
  for (int cell : cells) {
    if (cell < 0 || cell >= ng.rows) {
      shape_error("masked_mean", "cell index out of range");
    }
    const double* row =
        ng.value.data() + static_cast<std::size_t>(cell) * ng.cols;
    for (int c = 0; c < ng.cols; ++c) n.value[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(cells.size());
  for (int c = 0; c < ng.cols; ++c) n.value[c] *= inv;
  return Var{this, push(std::move(n))};
}

Var Tape::nll_index(Var probs, int index) {
  const Node& np = node(probs);
  if (np.rows != 1) shape_error("nll_index", "expects a 1xN probability row");
  if (index < 0 || index >= np.cols) {
    shape_error("nll_index", "class index " + std::to_string(index) +
                                 " out of range for " +
                                 shape_str(np.rows, np.cols));
  }
  Node n;
  n.op = Op::kNllIndex;
  n.rows = 1;
  n.cols = 1;
  n.inputs = {probs.id};
  n.needs_grad = np.needs_grad;
  n.aux_i = {index};
  n.value = {-std::log(std::max(np.value[index], kLogClamp))};
  return Var{this, push(std::move(n))};
}

Tensor Tape::value(Var v) const {
  const Node& n = node(v);
  return Tensor({n.rows, n.cols}, n.value);
}

std::span<const double> Tape::values(Var v) const { return node(v).value; }

const std::vector<int>& Tape::shape(Var v) const {
  static thread_local std::vector<int> shape;
  const Node& n = node(v);
  shape = {n.rows, n.cols};
  return shape;
}

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.needs_grad || grads_.empty() ||
      grads_[v.id].empty()) {
    throw Error("no_grad", "no gradient recorded for this variable");
  }
  return grads_[v.id];
}

void Tape::backward(Var scalar_output) {
  const Node& out = node(scalar_output);
  if (out.rows != 1 || out.cols != 1) {
    throw Error("non_scalar",
                "backward requires a scalar output, got " +
                    shape_str(out.rows, out.cols));
  }
  grads_.assign(nodes_.size(), {});
  auto ensure = [&](int id) -> std::vector<double>& {
    if (grads_[id].empty()) grads_[id].assign(nodes_[id].value.size(), 0.0);
    return grads_[id];
  };
  ensure(scalar_output.id)[0] = 1.0;

  for (int id = scalar_output.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || grads_[id].empty()) continue;
    const std::vector<double>& g = grads_[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        const int m = a.rows, k = a.cols, p = b.cols;
        if (a.needs_grad) {
          std::vector<double>& ga = ensure(n.inputs[0]);
          // dA = dC * B^T
          for (int i = 0; i < m; ++i) {
            const double* gr = g.data() + static_cast<std::size_t>(i) * p;
            double* gar = ga.data() + static_cast<std::size_t>(i) * k;
            for (int kk = 0; kk < k; ++kk) {
              const double* br =
                  b.value.data() + static_cast<std::size_t>(kk) * p;
              double acc = 0.0;
              for (int j = 0; j < p; ++j) acc += gr[j] * br[j];
              gar[kk] += acc;
            }
          }
        }
        if (b.needs_grad) {
          std::vector<double>& gb = ensure(n.inputs[1]);
          // dB = A^T * dC
          for (int i = 0; i < m; ++i) {
            const double* ar =
                a.value.data() + static_cast<std::size_t>(i) * k;
            const double* gr = g.data() + static_cast<std::size_t>(i) * p;
            for (int kk = 0; kk < k; ++kk) {
              const double av = ar[kk];
              if (av == 0.0) continue;
              double* gbr = gb.data() + static_cast<std::size_t>(kk) * p;
              for (int j = 0; j < p; ++j) gbr[j] += av * gr[j];
            }
          }
        }
        break;
      }
      case Op::kMatmulNT: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        const int m = a.rows, k = a.cols, p = b.rows;
        if (a.needs_grad) {
          std::vector<double>& ga = ensure(n.inputs[0]);
          // dA = dC * B
          for (int i = 0; i < m; ++i) {
            const double* gr = g.data() + static_cast<std::size_t>(i) * p;
            double* gar = ga.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < p; ++j) {
              const double gv = gr[j];
              if (gv == 0.0) continue;
              const double* br =
                  b.value.data() + static_cast<std::size_t>(j) * k;
              for (int kk = 0; kk < k; ++kk) gar[kk] += gv * br[kk];
            }
          }
        }
        if (b.needs_grad) {
          std::vector<double>& gb = ensure(n.inputs[1]);
          // dB = dC^T * A
          for (int i = 0; i < m; ++i) {
            const double* gr = g.data() + static_cast<std::size_t>(i) * p;
            const double* ar =
                a.value.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < p; ++j) {
              const double gv = gr[j];
              if (gv == 0.0) continue;
              double* gbr = gb.data() + static_cast<std::size_t>(j) * k;
              for (int kk = 0; kk < k; ++kk) gbr[kk] += gv * ar[kk];
            }
          }
        }
        break;
      }
      case Op::kAdd: {
        for (int which = 0; which < 2; ++which) {
          if (nodes_[n.inputs[which]].needs_grad) {
            std::vector<double>& gi = ensure(n.inputs[which]);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
          }
        }
        break;
      }
      case Op::kAddN: {
        for (int input : n.inputs) {
          if (nodes_[input].needs_grad) {
            std::vector<double>& gi = ensure(input);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
          }
        }
        break;
      }
      case Op::kMul: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        if (a.needs_grad) {
          std::vector<double>& ga = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value[i];
        }
        if (b.needs_grad) {
          std::vector<double>& gb = ensure(n.inputs[1]);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value[i];
        }
        break;
      }
      case Op::kScale: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += n.aux_d[0] * g[i];
        }
        break;
      }
      case Op::kRowScale: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (int r = 0; r < n.rows; ++r) {
            const double f = n.aux_d[r];
            for (int c = 0; c < n.cols; ++c) {
              const std::size_t i = static_cast<std::size_t>(r) * n.cols + c;
              gi[i] += f * g[i];
            }
          }
        }
        break;
      }
      case Op::kExp: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * n.value[i];
        }
        break;
      }
      case Op::kRelu: {
        const Node& a = nodes_[n.inputs[0]];
        if (a.needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (a.value[i] > 0.0) gi[i] += g[i];
          }
        }
        break;
      }
      case Op::kSigmoid: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            gi[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
          }
        }
        break;
      }
      case Op::kTanh: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (std::size_t i = 0; i < g.size(); ++i) {
            gi[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
          }
        }
        break;
      }
      case Op::kSoftmax: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (int r = 0; r < n.rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * n.cols;
            double dot = 0.0;
            for (int c = 0; c < n.cols; ++c) {
              dot += g[off + c] * n.value[off + c];
            }
            for (int c = 0; c < n.cols; ++c) {
              gi[off + c] += n.value[off + c] * (g[off + c] - dot);
            }
          }
        }
        break;
      }
      case Op::kMaskedSoftmax: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (int r = 0; r < n.rows; ++r) {
            const std::size_t off = static_cast<std::size_t>(r) * n.cols;
            double dot = 0.0;
            for (int c = 0; c < n.cols; ++c) {
              if (n.aux_b[off + c]) dot += g[off + c] * n.value[off + c];
            }
            for (int c = 0; c < n.cols; ++c) {
              if (n.aux_b[off + c]) {
                gi[off + c] += n.value[off + c] * (g[off + c] - dot);
              }
            }
          }
        }
        break;
      }
      case Op::kLayerNorm: {
        const Node& x = nodes_[n.inputs[0]];
        const Node& ga_ = nodes_[n.inputs[1]];
        const bool need_x = x.needs_grad;
        const bool need_g = nodes_[n.inputs[1]].needs_grad;
        const bool need_b = nodes_[n.inputs[2]].needs_grad;
        std::vector<double>* gx = need_x ? &ensure(n.inputs[0]) : nullptr;
        std::vector<double>* gg = need_g ? &ensure(n.inputs[1]) : nullptr;
        std::vector<double>* gb = need_b ? &ensure(n.inputs[2]) : nullptr;
        const int d = n.cols;
        for (int r = 0; r < n.rows; ++r) {
          const std::size_t off = static_cast<std::size_t>(r) * d;
          const double mean = n.aux_d[2 * r];
          const double inv_std = n.aux_d[2 * r + 1];
          // xhat and dxhat per row
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int c = 0; c < d; ++c) {
            const double xhat = (x.value[off + c] - mean) * inv_std;
            const double dxhat = g[off + c] * ga_.value[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            if (gg) (*gg)[c] += g[off + c] * xhat;
            if (gb) (*gb)[c] += g[off + c];
          }
          if (gx) {
            for (int c = 0; c < d; ++c) {
              const double xhat = (x.value[off + c] - mean) * inv_std;
              const double dxhat = g[off + c] * ga_.value[c];
              (*gx)[off + c] += inv_std * (dxhat - (sum_dxhat +
                                                    xhat * sum_dxhat_xhat) /
                                                       static_cast<double>(d));
            }
          }
        }
        break;
      }
      case Op::kConcatCols: {
        const Node& a = nodes_[n.inputs[0]];
        const Node& b = nodes_[n.inputs[1]];
        const int ca = n.aux_i[0];
        if (a.needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (int r = 0; r < n.rows; ++r) {
            for (int c = 0; c < ca; ++c) {
              gi[static_cast<std::size_t>(r) * ca + c] +=
                  g[static_cast<std::size_t>(r) * n.cols + c];
            }
          }
        }
        if (b.needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[1]);
          const int cb = b.cols;
          for (int r = 0; r < n.rows; ++r) {
            for (int c = 0; c < cb; ++c) {
              gi[static_cast<std::size_t>(r) * cb + c] +=
                  g[static_cast<std::size_t>(r) * n.cols + ca + c];
            }
          }
        }
        break;
      }
      case Op::kStackRows: {
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          if (nodes_[n.inputs[i]].needs_grad) {
            std::vector<double>& gi = ensure(n.inputs[i]);
            for (int c = 0; c < n.cols; ++c) {
              gi[c] += g[i * n.cols + c];
            }
          }
        }
        break;
      }
      case Op::kSliceRow: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          const std::size_t off =
              static_cast<std::size_t>(n.aux_i[0]) * n.cols;
          for (int c = 0; c < n.cols; ++c) gi[off + c] += g[c];
        }
        break;
      }
      case Op::kColMax: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          for (int c = 0; c < n.cols; ++c) {
            gi[static_cast<std::size_t>(n.aux_i[c]) * n.cols + c] += g[c];
          }
        }
        break;
      }
      case Op::kMeanAll: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          const double gv = g[0] / static_cast<double>(gi.size());
          for (double& v : gi) v += gv;
        }
        break;
      }
      case Op::kGatherRows: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          const int d = n.cols;
          for (int s = 0; s < n.rows; ++s) {
            const GatherSample& gs = n.samples[s];
            const double* gr = g.data() + static_cast<std::size_t>(s) * d;
            for (std::size_t k = 0; k < gs.cells.size(); ++k) {
              double* row =
                  gi.data() + static_cast<std::size_t>(gs.cells[k]) * d;
              const double w = gs.weights[k];
              for (int c = 0; c < d; ++c) row[c] += w * gr[c];
            }
          }
        }
        break;
      }
      case Op::kMaskedMean: {
        if (nodes_[n.inputs[0]].needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          const double inv = 1.0 / static_cast<double>(n.aux_i.size());
          for (int cell : n.aux_i) {
            double* row = gi.data() + static_cast<std::size_t>(cell) * n.cols;
            for (int c = 0; c < n.cols; ++c) row[c] += inv * g[c];
          }
        }
        break;
      }
      case Op::kNllIndex: {
        const Node& p = nodes_[n.inputs[0]];
        if (p.needs_grad) {
          std::vector<double>& gi = ensure(n.inputs[0]);
          const int idx = n.aux_i[0];
          const double pv = p.value[idx];
          if (pv >= kLogClamp) gi[idx] += -g[0] / pv;
          // clamped region is flat: zero gradient
        }
        break;
      }
    }
  }
}

// ---------------------------------------------------------------------------

double finite_diff_check(const std::function<Var(Tape&, Var)>& f,
                         const Tensor& point, double h) {
  std::vector<double> autodiff;
  {
    Tape tape;
    Var x = tape.leaf(point, true);
    Var y = f(tape, x);
    tape.backward(y);
    auto g = tape.grad(x);
    autodiff.assign(g.begin(), g.end());
  }
  auto eval = [&](std::span<const double> values) {
    Tape tape;
    Var x = tape.leaf(point.shape(), values, false);
    Var y = f(tape, x);
    return tape.value(y).item();
  };
  return fd_max_rel_error(eval, point.values(), autodiff, h);
}

double fd_max_rel_error(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> point,
                        std::span<const double> grad, double h,
                        std::span<const std::size_t> indices) {
  std::vector<double> values(point.begin(), point.end());
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(point.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  double worst = 0.0;
  for (std::size_t i : indices) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f(values);
    values[i] = saved - h;
    const double down = f(values);
    values[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double ad = grad[i];
    const double denom = std::max({std::fabs(fd), std::fabs(ad), 1e-6});
    worst = std::max(worst, std::fabs(fd - ad) / denom);
  }
  return worst;
}

}  // namespace riskid::diff
