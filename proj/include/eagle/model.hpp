#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "eagle/cohort.hpp"
#include "eagle/ops.hpp"
#include "eagle/rng.hpp"
#include "eagle/tape.hpp"
#include "eagle/tensor.hpp"

namespace eagle {

template <typename T>
using PerModality = std::array<T, kNumModalities>;

inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

struct ModelConfig {
  PerModality<std::size_t> input_dims{};
  PerModality<std::vector<std::size_t>> encoder_layers{
      std::vector<std::size_t>{512, 256, 128}, std::vector<std::size_t>{512, 256, 128},
      std::vector<std::size_t>{64, 32}};
  std::size_t common_dim = 128;
  std::size_t attention_heads = 8;
  double attention_dropout = 0.1;
  std::vector<std::size_t> fusion_layers{256, 128, 64};
  double dropout = 0.3;
  double aux_weight = 0.1;

  std::size_t encoded_dim(Modality m) const { return encoder_layers[index_of(m)].back(); }
  std::size_t fused_dim() const { return kNumModalities * common_dim; }
  std::size_t final_dim() const { return fusion_layers.back(); }
};

void validate(const ModelConfig& cfg);

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]
};

// linear -> batchnorm -> ReLU -> dropout
struct DenseBlockParams {
  LinearParams linear;
  Tensor gamma;
  Tensor beta;
  BatchNormState running;
};

struct ModelParams {
  ModelConfig config;
  PerModality<std::vector<DenseBlockParams>> encoders;
  PerModality<LinearParams> projections;
  LinearParams attn_query, attn_key, attn_value, attn_output;
  std::vector<DenseBlockParams> fusion;
  LinearParams cox_head;
  LinearParams event_head;

  // Visits every learnable tensor in a fixed declared order.
  void for_each_param(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const;
  // Visits batch-norm running statistics in declared order.
  void for_each_buffer(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_buffer(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  std::vector<Tensor*> learnable();
  std::size_t param_count() const;
};

// Xavier-uniform weights, zero biases, unit batch-norm scale.
ModelParams init_params(const ModelConfig& cfg, Rng rng);

struct ReductionReport {
  std::size_t param_count = 0;
  std::size_t input_total = 0;
  std::size_t final_dim = 0;
  double retained_ratio = 0.0;   // final_dim / input_total
  double reduction_ratio = 0.0;  // 1 - retained_ratio
};

ReductionReport count_params(const ModelConfig& cfg);

// Tape-level network bound to a parameter set. Eval-mode use needs only
// const parameters; train mode updates batch-norm statistics in `trainable`.
class Network {
 public:
  Network(Tape& tape, const ModelParams& params, bool track_grads);
  Network(Tape& tape, ModelParams& params, bool track_grads, bool allow_train);

  Var encode(Modality m, Var x, Mode mode, Rng& rng);

  struct Fused {
    Var fused;                        // [b x 3*common]
    PerModality<Var> projected;       // tokens before attention
    PerModality<Var> attended;        // tokens after attention + residual
    Tensor attention_weights;         // [b x heads x 3 x 3]
  };
  Fused fuse(const PerModality<Var>& encoded, Mode mode, Rng& rng);

  struct Heads {
    Var representation;  // [b x final]
    Var risk;            // [b x 1]
    Var event_logit;     // [b x 1]
  };
  Heads predict_from_fused(Var fused, Mode mode, Rng& rng);

  struct Graph {
    PerModality<Var> encoded;
    Fused fusion;
    Heads heads;
  };
  Graph forward(const PerModality<Var>& inputs, Mode mode, Rng& rng);

  // Everything downstream of the encoders; the attribution target.
  Var risk_from_encoded(const PerModality<Var>& encoded, Mode mode, Rng& rng);

  const std::vector<Var>& param_vars() const { return param_vars_; }
  std::vector<Tensor> param_grads() const;

 private:
  struct BoundBlock {
    ops::Linear linear;
    Var gamma, beta;
    const BatchNormState* running = nullptr;
    BatchNormState* update = nullptr;
  };

  void bind(bool track_grads);
  ops::Linear bind_linear(const LinearParams& p, const std::string& name, bool track);
  std::vector<BoundBlock> bind_blocks(const std::vector<DenseBlockParams>& blocks, std::vector<DenseBlockParams>* mut,
                                      const std::string& name, bool track);
  Var run_blocks(const std::vector<BoundBlock>& blocks, Var x, Mode mode, Rng& rng);

  Tape& tape_;
  const ModelParams& params_;
  ModelParams* trainable_ = nullptr;
  std::vector<Var> param_vars_;
  PerModality<std::vector<BoundBlock>> encoders_;
  PerModality<ops::Linear> projections_;
  ops::AttentionProjections attention_;
  std::vector<BoundBlock> fusion_;
  ops::Linear cox_head_, event_head_;
};

// Stacks a batch of records into per-modality input matrices.
PerModality<Tensor> stack_inputs(const std::vector<ProcessedRecord>& records, const std::vector<std::size_t>& rows,
                                 const ModelConfig& cfg);
PerModality<Tensor> stack_inputs(const std::vector<ProcessedRecord>& records, const ModelConfig& cfg);

struct ForwardOutput {
  std::vector<double> risk;
  std::vector<double> event_logit;
  PerModality<Tensor> encoded;   // h_m, [b x width_m]
  PerModality<Tensor> attended;  // [b x common]
  Tensor attention_weights;      // [b x heads x 3 x 3]
};

// Eval-mode forward pass with all intermediates retained.
ForwardOutput predict(const ModelParams& params, const std::vector<ProcessedRecord>& records);

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  PreprocessStats preprocess;
  int fold = -1;
  std::vector<std::string> validation_ids;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace eagle
