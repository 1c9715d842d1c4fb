#include "riskid/optim.hpp"

#include <cmath>

#include "riskid/error.hpp"

namespace riskid::diff {

void adam_step(std::span<double> values, std::span<const double> grads,
               AdamSlot& slot, const AdamConfig& config, std::int64_t t) {
  if (values.size() != grads.size()) {
    throw Error("shape_mismatch", "adam_step: parameter count " +
                                      std::to_string(values.size()) +
                                      " vs gradient count " +
                                      std::to_string(grads.size()));
  }
  if (slot.m.empty()) {
    slot.m.assign(values.size(), 0.0);
    slot.v.assign(values.size(), 0.0);
  } else if (slot.m.size() != values.size()) {
    throw Error("shape_mismatch", "adam_step: moment shapes do not match");
  }
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    slot.m[i] = config.beta1 * slot.m[i] + (1.0 - config.beta1) * g;
    slot.v[i] = config.beta2 * slot.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    values[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void AdamOptimizer::step(
    std::map<std::string, std::vector<double>>& params,
    const std::map<std::string, std::vector<double>>& grads) {
  ++t_;
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) {
      throw Error("unknown_param", "adam: no parameter named " + name);
    }
    adam_step(it->second, grad, slots_[name], config_, t_);
  }
}

}  // namespace riskid::diff
