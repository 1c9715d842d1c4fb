#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "riskid/error.hpp"

namespace riskid::diff {

// Dense row-major tensor of doubles.  Immutable value type; copies share
// storage.  Rank is arbitrary but every operation below works on rank-2
// (vectors are 1xN, scalars 1x1).
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<int> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int> shape);
  static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
  static Tensor row(std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }
  std::size_t size() const { return values_ ? values_->size() : 0; }
  bool empty() const { return size() == 0; }

  std::span<const double> values() const {
    return values_ ? std::span<const double>(*values_)
                   : std::span<const double>();
  }
  double at(int r, int c) const { return (*values_)[r * cols() + c]; }
  double item() const;  // requires size()==1

  bool all_finite() const;

 private:
  std::vector<int> shape_;
  std::shared_ptr<const std::vector<double>> values_;
};

class Tape;

// Handle to a node on a tape.  Cheap to copy; valid as long as the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// One weighted gather over grid rows: value = sum_i weights[i]*grid[cells[i]].
struct GatherSample {
  std::vector<int> cells;
  std::vector<double> weights;
};

// Reverse-mode tape.  Operations evaluate eagerly and record themselves in
// topological order; backward() walks the record once in reverse.
class Tape {
 public:
  explicit Tape(bool validate_finite = false)
      : validate_finite_(validate_finite) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(const Tensor& t, bool requires_grad = false);
  Var leaf(std::vector<int> shape, std::span<const double> values,
           bool requires_grad = false);
  Var constant(double v) { return leaf(Tensor::scalar(v), false); }

  // --- arithmetic ---
  Var matmul(Var a, Var b);     // [m,k]x[k,n]
  Var matmul_nt(Var a, Var b);  // A * B^T : [m,k]x[n,k]
  Var add(Var a, Var b);
  Var add_n(const std::vector<Var>& xs);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  // Row i of `a` multiplied by factors[i]; factors are data, not tracked.
  Var row_scale(Var a, std::span<const double> factors);

  // --- elementwise nonlinearities ---
  Var exp(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);

  // --- structured ops ---
  Var softmax_rows(Var a);
  // Gated softmax: entries with mask==0 are exactly zero in the output and
  // excluded from the normalization.  mask is row-major, same shape as `a`.
  Var masked_softmax_rows(Var a, std::span<const std::uint8_t> mask);
  // Row-wise layer normalization with per-feature affine; eps = 1e-5.
  Var layer_norm_rows(Var x, Var gamma, Var beta);
  Var concat_cols(Var a, Var b);
  Var stack_rows(const std::vector<Var>& rows);  // each 1xD -> NxD
  Var slice_row(Var a, int row);                 // 1xD copy of one row
  Var col_max(Var a);                            // 1xD max over rows
  Var mean_all(Var a);                           // 1x1
  // Weighted row gathers from a GxD grid -> (samples.size() x D).
  Var gather_rows(Var grid, const std::vector<GatherSample>& samples);
  // Mean of the listed grid rows -> 1xD.  cells must be non-empty.
  Var masked_mean(Var grid, std::span<const int> cells);
  // Negative log-likelihood of class `index` in a 1xN probability row;
  // probabilities are clamped below at 1e-12 before the log.
  Var nll_index(Var probs, int index);

  // --- access ---
  Tensor value(Var v) const;
  std::span<const double> values(Var v) const;
  const std::vector<int>& shape(Var v) const;

  // Computes gradients of a scalar output w.r.t. every requires_grad leaf.
  // May be called repeatedly; each call recomputes from scratch.
  void backward(Var scalar_output);
  // Gradient of the last backward() w.r.t. `v` (must need grad).
  std::span<const double> grad(Var v) const;

  std::size_t node_count() const { return nodes_.size(); }

  static constexpr double kLayerNormEps = 1e-5;
  static constexpr double kLogClamp = 1e-12;

 private:
  enum class Op : std::uint8_t {
    kLeaf, kMatmul, kMatmulNT, kAdd, kAddN, kMul, kScale, kRowScale,
    kExp, kRelu, kSigmoid, kTanh, kSoftmax, kMaskedSoftmax, kLayerNorm,
    kConcatCols, kStackRows, kSliceRow, kColMax, kMeanAll, kGatherRows,
    kMaskedMean, kNllIndex,
  };

  struct Node {
    Op op;
    int rows = 0, cols = 0;
    bool needs_grad = false;
    std::vector<int> inputs;
    std::vector<double> value;
    // op-specific payloads
    std::vector<int> aux_i;
    std::vector<double> aux_d;
    std::vector<std::uint8_t> aux_b;
    std::vector<GatherSample> samples;
  };

  int push(Node&& node);
  const Node& node(Var v) const;
  void check_same_shape(const char* op, Var a, Var b) const;
  [[noreturn]] void shape_error(const char* op, const std::string& det) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool validate_finite_ = false;
};

// Free-function sugar mirroring the tape ops.
inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }

// Max relative error between the autodiff gradient of `f` at `point` and a
// central finite difference with step `h`.  `f` builds a scalar expression
// from a leaf holding the point.  Denominator floored at 1e-6 so that
// numerically-zero gradients compare cleanly.
double finite_diff_check(const std::function<Var(Tape&, Var)>& f,
                         const Tensor& point, double h);

// Same comparison for a plain scalar function against a precomputed gradient,
// restricted to `indices` (all coordinates when empty).
double fd_max_rel_error(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> point,
                        std::span<const double> grad, double h,
                        std::span<const std::size_t> indices = {});

}  // namespace riskid::diff
