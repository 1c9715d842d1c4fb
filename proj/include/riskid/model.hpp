#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "riskid/diff.hpp"
#include "riskid/features.hpp"
#include "riskid/graphs.hpp"
#include "riskid/simulator.hpp"

namespace riskid::model {

struct ModelConfig {
  int frames = 20;
  int grid = 28;
  int feat_dim = 32;   // D
  int hidden = 64;     // H
  int decoder_len = 3;
  double mu_thing = 3.0;
  double mu_stuff = 0.6;
  // auxiliary per-step decoder response loss (off by default; the decoder
  // states still feed the future gate either way)
  bool step_response_loss = false;

  features::FeatureConfig feature_config() const {
    return features::FeatureConfig{grid, feat_dim};
  }
};

struct Param {
  std::vector<int> shape;
  std::vector<double> values;
};

// Named parameter tensors; iteration order is the map's key order, which
// keeps every consumer deterministic.
class ParameterStore {
 public:
  std::map<std::string, Param>& map() { return params_; }
  const std::map<std::string, Param>& map() const { return params_; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  static ParameterStore initialized(const ModelConfig& config,
                                    std::uint64_t seed);

 private:
  std::map<std::string, Param> params_;
};

struct ResponseDist {
  double p_go = 0.5;
  double p_stop = 0.5;
};

struct IntentionDist {
  std::array<double, scene::kIntentionCount> p{};
};

struct Checkpoint {
  ModelConfig config;
  ParameterStore params;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// --- differentiable forward pass ---

struct LstmVars {
  diff::Var wxi, whi, bi;
  diff::Var wxf, whf, bf;
  diff::Var wxg, whg, bg;
  diff::Var wxo, who, bo;
};

struct ParamVars {
  features::BackboneVars backbone;
  diff::Var thing_attn_left, thing_attn_right;
  std::vector<std::array<diff::Var, 3>> thing_layers;  // weight, ln_scale, ln_shift
  diff::Var stuff_attn_left, stuff_attn_right;
  std::vector<std::array<diff::Var, 3>> stuff_layers;
  LstmVars encoder;
  LstmVars decoder;
  LstmVars sta;
  diff::Var intent_proj_w, intent_proj_b;
  diff::Var feedback;  // 2 x H embedding of the previous step's distribution
  diff::Var step_head_w, step_head_b;
  diff::Var response_w, response_b;
  diff::Var intention_w, intention_b;
};

ParamVars leaf_params(diff::Tape& tape, const ParameterStore& params,
                      const ModelConfig& config, bool requires_grad);

// One LSTM cell step; returns {h', c'}.
std::pair<diff::Var, diff::Var> lstm_step(diff::Tape& tape,
                                          const LstmVars& vars, diff::Var x,
                                          diff::Var h, diff::Var c);

struct EncodeResult {
  diff::Var final_state;              // 1 x H
  std::vector<diff::Var> states;      // per frame hidden states
};
// LSTM over the per-frame fused Ego features, zero initial state.
EncodeResult encode_interactions(diff::Tape& tape, const ParamVars& vars,
                                 const std::vector<diff::Var>& fused,
                                 const ModelConfig& config);

struct DecodeResult {
  diff::Var response_logits;  // 1 x 2
  diff::Var response_probs;
  std::vector<diff::Var> step_logits;
};
// TRN decoding: the decoder runs decoder_len steps from a hidden state
// seeded by the intention representation; the future gate sums the decoder
// states; the accumulator consumes [encoder state, future context].
DecodeResult trn_decode(diff::Tape& tape, const ParamVars& vars,
                        diff::Var interaction_repr, diff::Var intention_repr,
                        const ModelConfig& config);

diff::Var intention_head(diff::Tape& tape, const ParamVars& vars,
                         diff::Var intention_repr);  // 1 x 12 probabilities

struct ForwardOptions {
  bool intention_only = false;   // stage-1 path: skip graphs and TRN
  bool want_diagnostics = false; // record per-frame Ego-Thing affinities
};

struct ForwardResult {
  diff::Var response_logits;
  diff::Var response_probs;
  diff::Var intention_logits;
  diff::Var intention_probs;
  std::vector<diff::Var> step_logits;
  // diagnostics (values, not graph nodes)
  std::vector<diff::Tensor> ego_thing_affinity;  // per frame
  std::vector<std::vector<int>> thing_ids;       // per frame node order
};

ForwardResult run_model(diff::Tape& tape, const ParamVars& vars,
                        const std::vector<features::MaterializedFrame>& frames,
                        const ModelConfig& config,
                        const ForwardOptions& options = {});

// --- inference ---

struct PredictDiagnostics {
  std::vector<diff::Tensor> ego_thing_affinity;
  std::vector<std::vector<int>> thing_ids;
  std::vector<scene::Point3> thing_anchors_last;  // last frame with nodes
};

std::pair<ResponseDist, IntentionDist> predict(
    const sim::Scenario& scenario, std::optional<int> intervention_id,
    const Checkpoint& checkpoint, PredictDiagnostics* diagnostics = nullptr);

// Same, amortizing the per-scenario preparation across repeated calls.
std::pair<ResponseDist, IntentionDist> predict_prepared(
    const features::PreparedScenario& prepared,
    std::optional<int> intervention_id, const Checkpoint& checkpoint,
    PredictDiagnostics* diagnostics = nullptr);

}  // namespace riskid::model
