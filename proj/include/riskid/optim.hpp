#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "riskid/diff.hpp"

namespace riskid::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment estimates for one parameter tensor.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
};

// Bias-corrected Adam update applied in place.  `t` is the 1-based step
// count shared by every tensor updated in the same optimizer step.
void adam_step(std::span<double> values, std::span<const double> grads,
               AdamSlot& slot, const AdamConfig& config, std::int64_t t);

// Convenience wrapper for a named parameter set.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config) : config_(config) {}

  // Applies one step to every entry of `grads`; keys must identify stable
  // parameter tensors.  Iteration is in key order, so updates are
  // deterministic.
  void step(std::map<std::string, std::vector<double>>& params,
            const std::map<std::string, std::vector<double>>& grads);

  std::int64_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::map<std::string, AdamSlot> slots_;
  std::int64_t t_ = 0;
};

}  // namespace riskid::diff
