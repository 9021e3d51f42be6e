#include <cmath>

#include "doctest.h"
#include "eagle/app.hpp"
#include "eagle/error.hpp"
#include "eagle/model.hpp"
#include "eagle/training.hpp"
#include "gradient_suite.hpp"
#include "model_fixtures.hpp"
#include "test_helpers.hpp"

using namespace eagle;

namespace {

ModelConfig with_dims(ModelConfig c, std::size_t img, std::size_t txt, std::size_t clin) {
  c.input_dims = {img, txt, clin};
  return c;
}

}  // namespace

TEST_CASE("parameter shapes follow the config") {
  const ModelConfig cfg = with_dims(ModelConfig{}, 1000, 2304, 20);
  const ModelParams p = init_params(cfg, Rng(1));
  const auto& img = p.encoders[index_of(Modality::Imaging)];
  REQUIRE(img.size() == 3);
  CHECK(img[0].linear.weight.shape() == Shape{1000, 512});
  CHECK(img[1].linear.weight.shape() == Shape{512, 256});
  CHECK(img[2].linear.weight.shape() == Shape{256, 128});
  CHECK(p.encoders[index_of(Modality::Clinical)].back().linear.weight.shape() == Shape{64, 32});
  CHECK(p.projections[index_of(Modality::Clinical)].weight.shape() == Shape{32, 128});
  CHECK(p.fusion.front().linear.weight.shape() == Shape{384, 256});
  CHECK(p.cox_head.weight.shape() == Shape{64, 1});
  std::size_t biases = 0;
  bool zero = true;
  p.for_each_param([&](const std::string& name, const Tensor& t) {
    if (name.size() >= 5 && name.rfind(".bias") == name.size() - 5) {
      ++biases;
      for (double v : t.data()) zero = zero && v == 0.0;
    }
  });
  CHECK(biases > 0);
  CHECK(zero);
  CHECK(p.param_count() == count_params(cfg).param_count);
}

TEST_CASE("initialisation is deterministic per seed") {
  const ModelConfig cfg = fixtures::tiny_config();
  const ModelParams a = init_params(cfg, Rng(3)), b = init_params(cfg, Rng(3)), c = init_params(cfg, Rng(4));
  std::vector<Tensor> ta, tb, tc;
  a.for_each_param([&](const std::string&, const Tensor& t) { ta.push_back(t); });
  b.for_each_param([&](const std::string&, const Tensor& t) { tb.push_back(t); });
  c.for_each_param([&](const std::string&, const Tensor& t) { tc.push_back(t); });
  CHECK(ta == tb);
  CHECK(ta != tc);
}

TEST_CASE("encoder output widths") {
  SUBCASE("gbm text 2304 -> 128") {
    ModelConfig cfg = with_dims(app::find_preset("gbm").model, 1000, 2304, 12);
    ModelParams p = init_params(cfg, Rng(2));
    Tape t;
    Network net(t, p, false);
    Rng r(0);
    Var x = t.constant(Tensor({2, 2304}, 0.1));
    CHECK(t.value(net.encode(Modality::Text, x, Mode::Eval, r)).shape() == Shape{2, 128});
  }
  SUBCASE("ipmn clinical [64, 32] -> 32") {
    ModelConfig cfg = with_dims(app::find_preset("ipmn").model, 1000, 1536, 10);
    ModelParams p = init_params(cfg, Rng(2));
    Tape t;
    Network net(t, p, false);
    Rng r(0);
    CHECK(t.value(net.encode(Modality::Clinical, t.constant(Tensor({3, 10}, 1.0)), Mode::Eval, r)).shape() ==
          Shape{3, 32});
  }
  SUBCASE("zero weights and input leave only the batch-norm shift") {
    ModelConfig cfg = fixtures::tiny_config();
    cfg.encoder_layers[0] = {3};
    ModelParams p = init_params(cfg, Rng(2));
    auto& blk = p.encoders[0][0];
    blk.linear.weight = Tensor::zeros_like(blk.linear.weight);
    blk.beta = Tensor::matrix({{0.5, -1.0, 2.0}});
    Tape t;
    Network net(t, p, true, true);
    Rng r(0);
    const Tensor& h = t.value(net.encode(Modality::Imaging, t.constant(Tensor({4, 5}, 0.0)), Mode::Eval, r));
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(h(i, 0) == 0.5);
      CHECK(h(i, 1) == 0.0);
      CHECK(h(i, 2) == 2.0);
    }
  }
}

TEST_CASE("forward pass shapes for every dataset preset") {
  for (const auto& preset : app::presets()) {
    ModelConfig cfg = preset.model;
    for (auto& d : cfg.input_dims)
      if (d == 0) d = 24;
    const ModelParams p = init_params(cfg, Rng(5));
    const auto recs = fixtures::random_records(cfg, 4, 6);
    const auto out = predict(p, recs);
    INFO(preset.name);
    CHECK(out.risk.size() == 4);
    CHECK(out.event_logit.size() == 4);
    CHECK(out.attention_weights.shape() == Shape{4, cfg.attention_heads, 3, 3});
    for (Modality m : kModalities) CHECK(out.encoded[index_of(m)].shape() == Shape{4, cfg.encoded_dim(m)});
    // Train mode runs too, with dropout active.
    ModelParams mutable_params = p;
    Tape t;
    Network net(t, mutable_params, true, true);
    const auto inputs = stack_inputs(recs, cfg);
    PerModality<Var> vars;
    for (std::size_t i = 0; i < 3; ++i) vars[i] = t.constant(inputs[i]);
    Rng r(7);
    const auto g = net.forward(vars, Mode::Train, r);
    CHECK(t.value(g.heads.representation).shape() == Shape{4, cfg.final_dim()});
  }
}

TEST_CASE("fusion: widths, attention rows, symmetric tokens") {
  const ModelConfig gbm = with_dims(ModelConfig{}, 1000, 2304, 16);
  CHECK(gbm.fused_dim() == 384);
  CHECK(gbm.final_dim() == 64);

  const ModelConfig cfg = fixtures::tiny_config();
  ModelParams p = fixtures::perturbed_params(cfg, 11);
  const auto out = predict(p, fixtures::random_records(cfg, 5, 12));
  const Tensor& w = out.attention_weights;
  for (std::size_t row = 0; row < w.size() / 3; ++row) {
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) s += w[row * 3 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }

  // Equal projected tokens: attention is uniform over equal values, so the
  // attended token is the token plus its value/output projection.
  ModelConfig sym = cfg;
  sym.encoder_layers = {std::vector<std::size_t>{3}, std::vector<std::size_t>{3}, std::vector<std::size_t>{3}};
  ModelParams sp = init_params(sym, Rng(13));
  sp.projections[1] = sp.projections[0];
  sp.projections[2] = sp.projections[0];
  Tape t;
  Network net(t, sp, false);
  Rng r(0);
  const Tensor h = oracle::random_tensor(r, {2, 3});
  PerModality<Var> enc{t.constant(h), t.constant(h), t.constant(h)};
  const auto f = net.fuse(enc, Mode::Eval, r);
  const Tensor tok = t.value(f.projected[0]);
  Tensor v = matmul(tok, sp.attn_value.weight);
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += sp.attn_value.bias[j];
  Tensor o = matmul(v, sp.attn_output.weight);
  for (std::size_t m = 0; m < 3; ++m) {
    const Tensor& att = t.value(f.attended[m]);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < sym.common_dim; ++j)
        CHECK(att(i, j) == doctest::Approx(tok(i, j) + o(i, j) + sp.attn_output.bias[j]).epsilon(1e-12));
  }
  for (double x : f.attention_weights.data()) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("eval forward is deterministic and batch-independent") {
  const ModelConfig cfg = fixtures::tiny_config();
  const ModelParams p = fixtures::perturbed_params(cfg, 21);
  const auto recs = fixtures::random_records(cfg, 6, 22);
  const auto a = predict(p, recs), b = predict(p, recs);
  CHECK(a.risk == b.risk);
  const auto single = predict(p, {recs[3]});
  CHECK(single.risk[0] == doctest::Approx(a.risk[3]).epsilon(1e-14));
}

TEST_CASE("train-mode forward errors") {
  const ModelConfig cfg = fixtures::tiny_config();
  ModelParams p = init_params(cfg, Rng(1));
  const auto recs = fixtures::random_records(cfg, 1, 2);
  const auto inputs = stack_inputs(recs, cfg);
  Tape t;
  PerModality<Var> vars;
  for (std::size_t i = 0; i < 3; ++i) vars[i] = t.constant(inputs[i]);
  Rng r(0);
  Network net(t, p, true, true);
  CHECK_THROWS_WITH_AS(net.forward(vars, Mode::Train, r), doctest::Contains("BatchTooSmall"), Error);
  ProcessedRecord bad = recs[0];
  bad.features[1].pop_back();
  CHECK_THROWS_WITH_AS(predict(p, {bad}), doctest::Contains("ShapeMismatch"), Error);
}

TEST_CASE("full model gradients match central differences") {
  const auto rep = gradsuite::model_suite(20);
  for (const auto& f : rep.failures) FAIL_CHECK(f);
  MESSAGE("worst relative error over 20 instances: " << rep.worst);
  CHECK(rep.checks > 20 * 100);
  CHECK(rep.worst < 1e-4);
}

TEST_CASE("dimensionality accounting") {
  const ModelConfig gbm = with_dims(app::find_preset("gbm").model, 1000, 2304, 0);
  CHECK_THROWS_AS(count_params(gbm), Error);
  SUBCASE("3304 total") {
    const ModelConfig c = with_dims(ModelConfig{}, 1000, 2300, 4);
    const auto r = count_params(c);
    CHECK(r.input_total == 3304);
    CHECK(r.final_dim == 64);
    CHECK(r.retained_ratio == doctest::Approx(64.0 / 3304).epsilon(1e-15));
    CHECK(100 * r.retained_ratio == doctest::Approx(1.94).epsilon(0.005));
  }
  SUBCASE("gbm with n clinical") {
    for (std::size_t n : {10u, 20u, 36u}) {
      const auto r = count_params(with_dims(app::find_preset("gbm").model, 1000, 2304, n));
      CHECK(r.reduction_ratio == 1.0 - 64.0 / static_cast<double>(3304 + n));
    }
  }
  SUBCASE("independent of parameter values") {
    const ModelConfig c = fixtures::tiny_config();
    CHECK(count_params(c).param_count == init_params(c, Rng(1)).param_count());
    CHECK(count_params(c).param_count == fixtures::perturbed_params(c, 9).param_count());
  }
}

TEST_CASE("checkpoint round trip") {
  const ModelConfig cfg = fixtures::tiny_config();
  Checkpoint ck{fixtures::perturbed_params(cfg, 31), PreprocessStats::identity({"a", "b", "c"}), 2, {"x", "y"}};
  testing::TempDir d("ckpt");
  save_checkpoint(ck, d / "ck.json");
  const Checkpoint back = load_checkpoint(d / "ck.json");
  CHECK(back.fold == 2);
  CHECK(back.validation_ids == ck.validation_ids);
  const auto recs = fixtures::random_records(cfg, 4, 32);
  CHECK(predict(back.params, recs).risk == predict(ck.params, recs).risk);
  CHECK(checkpoint_to_json(back) == checkpoint_to_json(ck));

  std::string text = csv::read_text(d / "ck.json");
  const auto pos = text.find("\"shape\":[5,4]");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 13, "\"shape\":[4,5]");
  CHECK_THROWS_WITH_AS(checkpoint_from_json(text), doctest::Contains("SchemaMismatch"), Error);
}
