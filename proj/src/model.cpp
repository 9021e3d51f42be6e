#include "eagle/model.hpp"

#include <cmath>

#include "eagle/error.hpp"

namespace eagle {

void validate(const ModelConfig& cfg) {
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    const std::string name(modality_name(m));
    if (cfg.input_dims[i] == 0) fail(ErrorCode::InvalidConfig, "input_dims." + name + " must be positive");
    if (cfg.encoder_layers[i].empty()) fail(ErrorCode::InvalidConfig, "encoder_layers." + name + " is empty");
    for (auto w : cfg.encoder_layers[i])
      if (w == 0) fail(ErrorCode::InvalidConfig, "encoder_layers." + name + " has a zero width");
  }
  if (cfg.fusion_layers.empty()) fail(ErrorCode::InvalidConfig, "fusion_layers is empty");
  for (auto w : cfg.fusion_layers)
    if (w == 0) fail(ErrorCode::InvalidConfig, "fusion_layers has a zero width");
  if (cfg.common_dim == 0 || cfg.attention_heads == 0)
    fail(ErrorCode::InvalidConfig, "common_dim and attention_heads must be positive");
  if (cfg.common_dim % cfg.attention_heads != 0)
    fail(ErrorCode::InvalidConfig, "common_dim " + std::to_string(cfg.common_dim) + " not divisible by " +
                                       std::to_string(cfg.attention_heads) + " attention heads");
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0)) fail(ErrorCode::InvalidConfig, "dropout must be in [0, 1)");
  if (!(cfg.attention_dropout >= 0.0 && cfg.attention_dropout < 1.0))
    fail(ErrorCode::InvalidConfig, "attention_dropout must be in [0, 1)");
  if (!(cfg.aux_weight >= 0.0)) fail(ErrorCode::InvalidConfig, "aux_weight must be >= 0");
}

namespace {

template <typename Params, typename Fn>
void visit_params(Params& p, Fn&& fn) {
  auto linear = [&](const std::string& name, auto& l) {
    fn(name + ".weight", l.weight);
    fn(name + ".bias", l.bias);
  };
  auto blocks = [&](const std::string& name, auto& bs) {
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const std::string prefix = name + "." + std::to_string(i);
      linear(prefix + ".linear", bs[i].linear);
      fn(prefix + ".bn.gamma", bs[i].gamma);
      fn(prefix + ".bn.beta", bs[i].beta);
    }
  };
  for (Modality m : kModalities) blocks("encoder." + std::string(modality_name(m)), p.encoders[index_of(m)]);
  for (Modality m : kModalities) linear("projection." + std::string(modality_name(m)), p.projections[index_of(m)]);
  linear("attention.query", p.attn_query);
  linear("attention.key", p.attn_key);
  linear("attention.value", p.attn_value);
  linear("attention.output", p.attn_output);
  blocks("fusion", p.fusion);
  linear("cox_head", p.cox_head);
  linear("event_head", p.event_head);
}

template <typename Params, typename Fn>
void visit_buffers(Params& p, Fn&& fn) {
  auto blocks = [&](const std::string& name, auto& bs) {
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const std::string prefix = name + "." + std::to_string(i) + ".bn";
      fn(prefix + ".running_mean", bs[i].running.running_mean);
      fn(prefix + ".running_var", bs[i].running.running_var);
    }
  };
  for (Modality m : kModalities) blocks("encoder." + std::string(modality_name(m)), p.encoders[index_of(m)]);
  blocks("fusion", p.fusion);
}

LinearParams make_linear(std::size_t in, std::size_t out, Rng& rng) {
  LinearParams l{Tensor({in, out}), Tensor({1, out})};
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (auto& w : l.weight.data()) w = rng.uniform(-bound, bound);
  return l;
}

std::vector<DenseBlockParams> make_blocks(std::size_t in, const std::vector<std::size_t>& widths, Rng& rng) {
  std::vector<DenseBlockParams> out;
  for (auto w : widths) {
    DenseBlockParams b;
    b.linear = make_linear(in, w, rng);
    b.gamma = Tensor({1, w}, 1.0);
    b.beta = Tensor({1, w}, 0.0);
    b.running.running_mean = Tensor({1, w}, 0.0);
    b.running.running_var = Tensor({1, w}, 1.0);
    out.push_back(std::move(b));
    in = w;
  }
  return out;
}

std::size_t block_count(std::size_t in, const std::vector<std::size_t>& widths) {
  std::size_t n = 0;
  for (auto w : widths) {
    n += in * w + w + 2 * w;
    in = w;
  }
  return n;
}

}  // namespace

void ModelParams::for_each_param(const std::function<void(const std::string&, Tensor&)>& fn) { visit_params(*this, fn); }
void ModelParams::for_each_param(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_params(*this, fn);
}
void ModelParams::for_each_buffer(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_buffers(*this, fn);
}
void ModelParams::for_each_buffer(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_buffers(*this, fn);
}

std::vector<Tensor*> ModelParams::learnable() {
  std::vector<Tensor*> out;
  for_each_param([&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::size_t ModelParams::param_count() const {
  std::size_t n = 0;
  for_each_param([&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

ModelParams init_params(const ModelConfig& cfg, Rng rng) {
  validate(cfg);
  Rng r = rng.derive(stream::kInit);
  ModelParams p;
  p.config = cfg;
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    p.encoders[i] = make_blocks(cfg.input_dims[i], cfg.encoder_layers[i], r);
  }
  for (Modality m : kModalities) p.projections[index_of(m)] = make_linear(cfg.encoded_dim(m), cfg.common_dim, r);
  p.attn_query = make_linear(cfg.common_dim, cfg.common_dim, r);
  p.attn_key = make_linear(cfg.common_dim, cfg.common_dim, r);
  p.attn_value = make_linear(cfg.common_dim, cfg.common_dim, r);
  p.attn_output = make_linear(cfg.common_dim, cfg.common_dim, r);
  p.fusion = make_blocks(cfg.fused_dim(), cfg.fusion_layers, r);
  p.cox_head = make_linear(cfg.final_dim(), 1, r);
  p.event_head = make_linear(cfg.final_dim(), 1, r);
  return p;
}

ReductionReport count_params(const ModelConfig& cfg) {
  validate(cfg);
  ReductionReport rep;
  std::size_t n = 0;
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    n += block_count(cfg.input_dims[i], cfg.encoder_layers[i]);
    n += cfg.encoded_dim(m) * cfg.common_dim + cfg.common_dim;
    rep.input_total += cfg.input_dims[i];
  }
  n += 4 * (cfg.common_dim * cfg.common_dim + cfg.common_dim);
  n += block_count(cfg.fused_dim(), cfg.fusion_layers);
  n += 2 * (cfg.final_dim() + 1);
  rep.param_count = n;
  rep.final_dim = cfg.final_dim();
  rep.retained_ratio = static_cast<double>(rep.final_dim) / static_cast<double>(rep.input_total);
  rep.reduction_ratio = 1.0 - rep.retained_ratio;
  return rep;
}

// ---- Network --------------------------------------------------------------

Network::Network(Tape& tape, const ModelParams& params, bool track_grads) : tape_(tape), params_(params) {
  validate(params.config);
  bind(track_grads);
}

Network::Network(Tape& tape, ModelParams& params, bool track_grads, bool allow_train)
    : tape_(tape), params_(params), trainable_(allow_train ? &params : nullptr) {
  validate(params.config);
  bind(track_grads);
}

ops::Linear Network::bind_linear(const LinearParams& p, const std::string& name, bool track) {
  ops::Linear l{tape_.leaf(p.weight, track, name + ".weight"), tape_.leaf(p.bias, track, name + ".bias")};
  param_vars_.push_back(l.weight);
  param_vars_.push_back(l.bias);
  return l;
}

std::vector<Network::BoundBlock> Network::bind_blocks(const std::vector<DenseBlockParams>& blocks,
                                                      std::vector<DenseBlockParams>* mut, const std::string& name,
                                                      bool track) {
  std::vector<BoundBlock> out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string prefix = name + "." + std::to_string(i);
    BoundBlock b;
    b.linear = bind_linear(blocks[i].linear, prefix + ".linear", track);
    b.gamma = tape_.leaf(blocks[i].gamma, track, prefix + ".bn.gamma");
    b.beta = tape_.leaf(blocks[i].beta, track, prefix + ".bn.beta");
    param_vars_.push_back(b.gamma);
    param_vars_.push_back(b.beta);
    b.running = &blocks[i].running;
    b.update = mut ? &(*mut)[i].running : nullptr;
    out.push_back(b);
  }
  return out;
}

void Network::bind(bool track) {
  // Binding order must match ModelParams::for_each_param.
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    encoders_[i] = bind_blocks(params_.encoders[i], trainable_ ? &trainable_->encoders[i] : nullptr,
                               "encoder." + std::string(modality_name(m)), track);
  }
  for (Modality m : kModalities)
    projections_[index_of(m)] =
        bind_linear(params_.projections[index_of(m)], "projection." + std::string(modality_name(m)), track);
  attention_.query = bind_linear(params_.attn_query, "attention.query", track);
  attention_.key = bind_linear(params_.attn_key, "attention.key", track);
  attention_.value = bind_linear(params_.attn_value, "attention.value", track);
  attention_.output = bind_linear(params_.attn_output, "attention.output", track);
  fusion_ = bind_blocks(params_.fusion, trainable_ ? &trainable_->fusion : nullptr, "fusion", track);
  cox_head_ = bind_linear(params_.cox_head, "cox_head", track);
  event_head_ = bind_linear(params_.event_head, "event_head", track);
}

Var Network::run_blocks(const std::vector<BoundBlock>& blocks, Var x, Mode mode, Rng& rng) {
  for (const auto& b : blocks) {
    Var h = ops::linear(tape_, x, b.linear);
    if (mode == Mode::Train) {
      if (!b.update) fail(ErrorCode::InvalidConfig, "train-mode forward on a network bound to frozen parameters");
      h = ops::batchnorm(tape_, h, b.gamma, b.beta, *b.update, Mode::Train);
    } else {
      h = ops::batchnorm(tape_, h, b.gamma, b.beta, *b.running);
    }
    h = ops::relu(tape_, h);
    x = ops::dropout(tape_, h, params_.config.dropout, mode, rng);
  }
  return x;
}

Var Network::encode(Modality m, Var x, Mode mode, Rng& rng) {
  const auto& cfg = params_.config;
  const Tensor& xv = tape_.value(x);
  if (xv.rank() != 2 || xv.cols() != cfg.input_dims[index_of(m)])
    fail(ErrorCode::ShapeMismatch, std::string(modality_name(m)) + " input " + shape_str(xv.shape()) +
                                       ", expected width " + std::to_string(cfg.input_dims[index_of(m)]));
  return run_blocks(encoders_[index_of(m)], x, mode, rng);
}

Network::Fused Network::fuse(const PerModality<Var>& encoded, Mode mode, Rng& rng) {
  const auto& cfg = params_.config;
  Fused f;
  std::size_t batch = 0;
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    const Tensor& h = tape_.value(encoded[i]);
    if (h.rank() != 2 || h.cols() != cfg.encoded_dim(m))
      fail(ErrorCode::ShapeMismatch, std::string(modality_name(m)) + " encoding " + shape_str(h.shape()) +
                                         ", expected width " + std::to_string(cfg.encoded_dim(m)));
    if (m == Modality::Imaging) batch = h.rows();
    if (h.rows() != batch) fail(ErrorCode::ShapeMismatch, "encodings disagree on batch size");
    f.projected[i] = ops::linear(tape_, encoded[i], projections_[i]);
  }
  const std::vector<Var> tokens(f.projected.begin(), f.projected.end());
  const Var seq = ops::interleave_rows(tape_, tokens);
  auto attn = ops::multi_head_attention(tape_, seq, seq, seq, attention_, cfg.attention_heads, kNumModalities,
                                        cfg.attention_dropout, mode, rng);
  const Var residual = ops::add(tape_, seq, attn.out);
  f.fused = ops::reshape(tape_, residual, {batch, cfg.fused_dim()});
  for (Modality m : kModalities)
    f.attended[index_of(m)] = ops::slice_cols(tape_, f.fused, index_of(m) * cfg.common_dim, cfg.common_dim);
  f.attention_weights = attn.weights.reshaped({batch, cfg.attention_heads, kNumModalities, kNumModalities});
  return f;
}

Network::Heads Network::predict_from_fused(Var fused, Mode mode, Rng& rng) {
  Heads h;
  h.representation = run_blocks(fusion_, fused, mode, rng);
  h.risk = ops::linear(tape_, h.representation, cox_head_);
  h.event_logit = ops::linear(tape_, h.representation, event_head_);
  return h;
}

Network::Graph Network::forward(const PerModality<Var>& inputs, Mode mode, Rng& rng) {
  const std::size_t b = tape_.value(inputs[0]).rows();
  if (mode == Mode::Train && b < 2)
    fail(ErrorCode::BatchTooSmall, "train-mode forward needs at least 2 patients, got " + std::to_string(b));
  Graph g;
  for (Modality m : kModalities) g.encoded[index_of(m)] = encode(m, inputs[index_of(m)], mode, rng);
  g.fusion = fuse(g.encoded, mode, rng);
  g.heads = predict_from_fused(g.fusion.fused, mode, rng);
  return g;
}

Var Network::risk_from_encoded(const PerModality<Var>& encoded, Mode mode, Rng& rng) {
  return predict_from_fused(fuse(encoded, mode, rng).fused, mode, rng).risk;
}

std::vector<Tensor> Network::param_grads() const {
  std::vector<Tensor> out;
  out.reserve(param_vars_.size());
  for (Var v : param_vars_) out.push_back(tape_.grad(v));
  return out;
}

PerModality<Tensor> stack_inputs(const std::vector<ProcessedRecord>& records, const std::vector<std::size_t>& rows,
                                 const ModelConfig& cfg) {
  if (rows.empty()) fail(ErrorCode::EmptyInput, "empty batch");
  PerModality<Tensor> out;
  for (Modality m : kModalities) {
    const auto i = index_of(m);
    const std::size_t w = cfg.input_dims[i];
    Tensor t({rows.size(), w});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& f = records[rows[r]].feature(m);
      if (f.size() != w)
        fail(ErrorCode::ShapeMismatch, "patient '" + records[rows[r]].id + "': " + std::string(modality_name(m)) +
                                           " width " + std::to_string(f.size()) + ", model expects " +
                                           std::to_string(w));
      std::copy(f.begin(), f.end(), t.data().begin() + static_cast<std::ptrdiff_t>(r * w));
    }
    out[i] = std::move(t);
  }
  return out;
}

PerModality<Tensor> stack_inputs(const std::vector<ProcessedRecord>& records, const ModelConfig& cfg) {
  std::vector<std::size_t> rows(records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return stack_inputs(records, rows, cfg);
}

ForwardOutput predict(const ModelParams& params, const std::vector<ProcessedRecord>& records) {
  Tape tape;
  Network net(tape, params, false);
  const auto inputs = stack_inputs(records, params.config);
  PerModality<Var> vars;
  for (std::size_t i = 0; i < kNumModalities; ++i) vars[i] = tape.constant(inputs[i]);
  Rng unused(0);
  const auto g = net.forward(vars, Mode::Eval, unused);
  ForwardOutput out;
  out.risk = tape.value(g.heads.risk).values();
  out.event_logit = tape.value(g.heads.event_logit).values();
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    out.encoded[i] = tape.value(g.encoded[i]);
    out.attended[i] = tape.value(g.fusion.attended[i]);
  }
  out.attention_weights = g.fusion.attention_weights;
  return out;
}

}  // namespace eagle
