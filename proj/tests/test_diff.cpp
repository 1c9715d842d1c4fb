#include <cmath>
#include <vector>

#include "doctest.h"
#include "riskid/diff.hpp"
#include "riskid/optim.hpp"
#include "riskid/rng.hpp"

using riskid::Rng;
using namespace riskid::diff;

namespace {

Tensor random_tensor(Rng& rng, int rows, int cols, double lo = -1.0,
                     double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor({rows, cols}, std::move(v));
}

}  // namespace

TEST_CASE("matmul against identity") {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  Var eye = tape.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
  Tensor out = tape.value(tape.matmul(a, eye));
  CHECK(out.at(0, 0) == 1.0);
  CHECK(out.at(0, 1) == 2.0);
  CHECK(out.at(1, 0) == 3.0);
  CHECK(out.at(1, 1) == 4.0);
}

TEST_CASE("matmul shape mismatch raises structured error") {
  Tape tape;
  Var a = tape.leaf(Tensor::zeros({2, 3}));
  Var b = tape.leaf(Tensor::zeros({4, 5}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), "matmul: 2x3 vs 4x5",
                       riskid::Error);
}

TEST_CASE("softmax of a constant row is uniform") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({0.0, 0.0, 0.0}));
  Tensor p = tape.value(tape.softmax_rows(x));
  for (int c = 0; c < 3; ++c) {
    CHECK(p.at(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows are nonnegative and normalized") {
  Rng rng(11);
  for (int it = 0; it < 50; ++it) {
    Tape tape;
    Tensor x = random_tensor(rng, 4, 7, -30.0, 30.0);
    Tensor p = tape.value(tape.softmax_rows(tape.leaf(x)));
    for (int r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int c = 0; c < 7; ++c) {
        CHECK(p.at(r, c) >= 0.0);
        sum += p.at(r, c);
      }
      CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("layer_norm of a constant vector is zero before affine terms") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({2.5, 2.5, 2.5, 2.5}));
  Var gamma = tape.leaf(Tensor::row({1, 1, 1, 1}));
  Var beta = tape.leaf(Tensor::row({0, 0, 0, 0}));
  Tensor y = tape.value(tape.layer_norm_rows(x, gamma, beta));
  for (int c = 0; c < 4; ++c) CHECK(y.at(0, c) == 0.0);
}

TEST_CASE("linear gradient") {
  Tape tape;
  Var w = tape.leaf(Tensor::scalar(5.0), true);
  Var x = tape.leaf(Tensor::scalar(3.0));
  Var y = tape.mul(w, x);
  tape.backward(y);
  CHECK(tape.grad(w)[0] == 3.0);
}

TEST_CASE("softmax + cross-entropy gradient is p minus one-hot") {
  Tape tape;
  Var logits = tape.leaf(Tensor::row({0.7, 0.7}), true);
  Var p = tape.softmax_rows(logits);
  Var loss = tape.nll_index(p, 0);
  tape.backward(loss);
  auto g = tape.grad(logits);
  CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("backward on the same tape twice is deterministic") {
  Rng rng(3);
  Tape tape;
  Var x = tape.leaf(random_tensor(rng, 3, 3), true);
  Var w = tape.leaf(random_tensor(rng, 3, 3), true);
  Var y = tape.mean_all(tape.tanh(tape.matmul(x, w)));
  tape.backward(y);
  std::vector<double> first(tape.grad(w).begin(), tape.grad(w).end());
  tape.backward(y);
  std::vector<double> second(tape.grad(w).begin(), tape.grad(w).end());
  CHECK(first == second);
}

TEST_CASE("backward rejects non-scalar outputs") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.0, 2.0}), true);
  CHECK_THROWS_AS(tape.backward(x), riskid::Error);
}

TEST_CASE("finite differences: linear function is exact") {
  Tensor point = Tensor::row({1.0, -2.0, 0.5});
  double err = finite_diff_check(
      [](Tape& t, Var x) {
        Var w = t.leaf(Tensor({3, 1}, {2.0, -1.0, 4.0}));
        return t.matmul(x, w);
      },
      point, 1e-4);
  CHECK(err <= 1e-10);
}

TEST_CASE("finite differences: softmax cross-entropy at random logits") {
  Rng rng(17);
  for (int it = 0; it < 20; ++it) {
    Tensor point = random_tensor(rng, 1, 6, -2.0, 2.0);
    double err = finite_diff_check(
        [](Tape& t, Var x) { return t.nll_index(t.softmax_rows(x), 2); },
        point, 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite differences: relu away from the kink") {
  Rng rng(23);
  for (int it = 0; it < 20; ++it) {
    std::vector<double> v(8);
    for (double& x : v) {
      double m = rng.uniform(0.1, 1.5);
      x = rng.bernoulli(0.5) ? m : -m;
    }
    Tensor point = Tensor::row(v);
    double err = finite_diff_check(
        [](Tape& t, Var x) { return t.mean_all(t.relu(x)); }, point, 1e-4);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("finite differences across every differentiable op") {
  Rng rng(101);
  // Each entry builds a scalar expression exercising one op; points are
  // seeded and kept away from kinks where relevant.
  struct Case {
    const char* name;
    std::function<Var(Tape&, Var)> f;
    int rows, cols;
  };
  std::vector<Case> cases;
  cases.push_back({"matmul", [](Tape& t, Var x) {
    Var w = t.leaf(Tensor({4, 3}, {0.3, -0.2, 0.5, 1.0, 0.4, -0.7,
                                   0.2, 0.1, -1.2, 0.8, -0.3, 0.6}), false);
    return t.mean_all(t.matmul(x, w));
  }, 3, 4});
  cases.push_back({"matmul_nt", [](Tape& t, Var x) {
    Var w = t.leaf(Tensor({2, 4}, {0.3, -0.2, 0.5, 1.0, 0.4, -0.7, 0.2, 0.1}),
                   false);
    return t.mean_all(t.matmul_nt(x, w));
  }, 3, 4});
  cases.push_back({"add", [](Tape& t, Var x) {
    return t.mean_all(t.add(x, t.mul(x, x)));
  }, 2, 5});
  cases.push_back({"add_n", [](Tape& t, Var x) {
    return t.mean_all(t.add_n({x, x, t.mul(x, x)}));
  }, 2, 5});
  cases.push_back({"mul", [](Tape& t, Var x) {
    return t.mean_all(t.mul(x, t.tanh(x)));
  }, 2, 5});
  cases.push_back({"scale", [](Tape& t, Var x) {
    return t.mean_all(t.scale(x, -2.5));
  }, 2, 5});
  cases.push_back({"row_scale", [](Tape& t, Var x) {
    const double f[] = {0.5, -1.5};
    return t.mean_all(t.row_scale(x, std::span<const double>(f, 2)));
  }, 2, 5});
  cases.push_back({"exp", [](Tape& t, Var x) {
    return t.mean_all(t.exp(x));
  }, 2, 5});
  cases.push_back({"sigmoid", [](Tape& t, Var x) {
    return t.mean_all(t.sigmoid(x));
  }, 2, 5});
  cases.push_back({"tanh", [](Tape& t, Var x) {
    return t.mean_all(t.tanh(x));
  }, 2, 5});
  cases.push_back({"softmax", [](Tape& t, Var x) {
    return t.nll_index(t.slice_row(t.softmax_rows(x), 1), 0);
  }, 3, 5});
  cases.push_back({"masked_softmax", [](Tape& t, Var x) {
    static const std::uint8_t mask[] = {1, 0, 1, 1, 0, 1, 1, 0, 1, 1,
                                        1, 1, 0, 1, 1};
    Var p = t.masked_softmax_rows(x, std::span<const std::uint8_t>(mask, 15));
    return t.nll_index(t.slice_row(p, 0), 2);
  }, 3, 5});
  cases.push_back({"layer_norm", [](Tape& t, Var x) {
    Var gamma = t.leaf(Tensor::row({1.2, 0.8, -0.5, 1.0, 0.3}), false);
    Var beta = t.leaf(Tensor::row({0.1, -0.2, 0.3, 0.0, 0.5}), false);
    return t.mean_all(t.layer_norm_rows(x, gamma, beta));
  }, 3, 5});
  cases.push_back({"layer_norm gamma/beta", [](Tape& t, Var x) {
    Var base = t.leaf(Tensor({2, 5}, {0.4, -0.9, 1.4, 0.2, -0.3,
                                      1.1, 0.7, -1.5, 0.9, 0.0}), false);
    Var gamma = t.slice_row(x, 0);
    Var beta = t.slice_row(x, 1);
    return t.mean_all(t.layer_norm_rows(base, gamma, beta));
  }, 2, 5});
  cases.push_back({"concat_cols", [](Tape& t, Var x) {
    return t.mean_all(t.concat_cols(x, t.mul(x, x)));
  }, 2, 5});
  cases.push_back({"stack+slice", [](Tape& t, Var x) {
    Var a = t.slice_row(x, 0);
    Var b = t.slice_row(x, 1);
    return t.mean_all(t.mul(t.stack_rows({a, b, a}), t.stack_rows({b, a, b})));
  }, 2, 5});
  cases.push_back({"col_max", [](Tape& t, Var x) {
    return t.mean_all(t.col_max(x));
  }, 4, 5});
  cases.push_back({"gather_rows", [](Tape& t, Var x) {
    std::vector<GatherSample> s(2);
    s[0].cells = {0, 2, 3};
    s[0].weights = {0.25, 0.5, 0.25};
    s[1].cells = {1};
    s[1].weights = {1.0};
    return t.mean_all(t.gather_rows(x, s));
  }, 4, 5});
  cases.push_back({"masked_mean", [](Tape& t, Var x) {
    static const int cells[] = {0, 2, 3};
    return t.mean_all(t.masked_mean(x, std::span<const int>(cells, 3)));
  }, 4, 5});

  for (const Case& c : cases) {
    CAPTURE(c.name);
    for (int rep = 0; rep < 5; ++rep) {
      Tensor point = random_tensor(rng, c.rows, c.cols, -1.5, 1.5);
      // keep col_max selections stable under the FD step
      if (std::string(c.name) == "col_max") {
        std::vector<double> vals(point.values().begin(),
                                 point.values().end());
        for (std::size_t i = 0; i < vals.size(); ++i) {
          vals[i] += 0.01 * static_cast<double>(i);
        }
        point = Tensor({c.rows, c.cols}, vals);
      }
      const double err = finite_diff_check(c.f, point, 1e-4);
      CHECK_MESSAGE(err < 1e-4, c.name << " rep " << rep << " err " << err);
    }
  }
}

TEST_CASE("two-layer network gradient matches finite differences") {
  Rng rng(7);
  // weights live in the point tensor: 6x4 = first layer (4x6 reshaped),
  // pattern below slices rows out of a packed parameter block.
  const int in_dim = 4, hidden = 5;
  Tensor x_data = random_tensor(rng, 1, in_dim);
  Tensor point = random_tensor(rng, in_dim + hidden + 2, hidden, -0.8, 0.8);
  auto builder = [&](Tape& t, Var params) {
    Var x = t.leaf(x_data, false);
    std::vector<Var> w1_rows, w2_rows;
    for (int r = 0; r < in_dim; ++r) w1_rows.push_back(t.slice_row(params, r));
    Var w1 = t.stack_rows(w1_rows);
    for (int r = 0; r < hidden; ++r) {
      w2_rows.push_back(t.slice_row(params, in_dim + r));
    }
    Var w2 = t.stack_rows(w2_rows);
    Var b1 = t.slice_row(params, in_dim + hidden);
    Var h = t.tanh(t.add(t.matmul(x, w1), b1));
    Var out = t.matmul(h, w2);  // 1 x hidden
    return t.nll_index(t.softmax_rows(out), 3);
  };
  const double err = finite_diff_check(builder, point, 1e-4);
  CHECK(err < 1e-4);
}

TEST_CASE("adam first step with the documented constants") {
  std::vector<double> w{1.0};
  std::vector<double> g{2.0};
  AdamSlot slot;
  AdamConfig cfg;
  cfg.lr = 0.001;
  adam_step(w, g, slot, cfg, 1);
  const double expected = 1.0 - 0.001 * (2.0 / (2.0 + 1e-8));
  CHECK(w[0] == doctest::Approx(expected).epsilon(1e-15));
  CHECK(w[0] == doctest::Approx(0.999).epsilon(1e-9));
}

TEST_CASE("adam leaves parameters unchanged for zero gradient") {
  std::vector<double> w{0.37, -1.2};
  std::vector<double> g{0.0, 0.0};
  AdamSlot slot;
  AdamConfig cfg;
  adam_step(w, g, slot, cfg, 1);
  CHECK(w[0] == 0.37);
  CHECK(w[1] == -1.2);
}

TEST_CASE("adam strictly decreases a quadratic over two steps") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamSlot slot;
  std::vector<double> w{1.0};
  double prev_loss = w[0] * w[0];
  for (std::int64_t t = 1; t <= 2; ++t) {
    std::vector<double> g{2.0 * w[0]};
    adam_step(w, g, slot, cfg, t);
    const double loss = w[0] * w[0];
    CHECK(loss < prev_loss);
    prev_loss = loss;
  }
}

TEST_CASE("adam rejects mismatched shapes") {
  std::vector<double> w{1.0, 2.0};
  std::vector<double> g{1.0};
  AdamSlot slot;
  AdamConfig cfg;
  CHECK_THROWS_AS(adam_step(w, g, slot, cfg, 1), riskid::Error);
}

TEST_CASE("gradient matches finite differences at 100 seeded points") {
  Rng rng(2024);
  auto f = [](Tape& t, Var x) {
    Var w = t.leaf(Tensor({6, 3}, {0.3, -0.2, 0.5, 1.0, 0.4, -0.7, 0.2, 0.1,
                                   -1.2, 0.8, -0.3, 0.6, -0.4, 0.9, 0.25,
                                   -0.6, 0.7, 0.35}), false);
    Var h = t.sigmoid(t.matmul(x, w));
    return t.nll_index(t.softmax_rows(h), 1);
  };
  for (int i = 0; i < 100; ++i) {
    Tensor point = random_tensor(rng, 1, 6, -1.2, 1.2);
    CHECK(finite_diff_check(f, point, 1e-4) < 1e-4);
  }
}
