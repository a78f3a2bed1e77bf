#include <cmath>
#include <vector>

#include "doctest.h"
#include "fedtrace/detector.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/nn.hpp"
#include "fedtrace/rng.hpp"

using namespace fedtrace;

namespace {

TokenSeq random_seq(Rng& rng, Scheme scheme, int min_len = 1) {
  const int vocab = scheme == Scheme::Conversational ? kConversationalTokens : kStructuralTokens;
  std::vector<int32_t> toks;
  const int len = rng.range(min_len, 12);
  for (int i = 0; i < len; ++i) toks.push_back(static_cast<int32_t>(rng.range(1, vocab)));
  return pad_tokens(scheme, toks);
}

Example random_example(Rng& rng) {
  Example ex;
  ex.conv = random_seq(rng, Scheme::Conversational);
  ex.strct = random_seq(rng, Scheme::Structural);
  ex.label = rng.chance(0.5) ? 1 : 0;
  return ex;
}

// Small random parameters keep gates unsaturated so finite differences stay
// well-conditioned.
void randomize(Model& m, Rng& rng, double scale) {
  for (Tensor& t : m.params.tensors)
    for (double& v : t.data) v = (rng.uniform() * 2.0 - 1.0) * scale;
}

} // namespace

TEST_CASE("parameter counts match the documented architecture") {
  CHECK(param_count(View::Struct) == 72993);
  CHECK(param_count(View::Conv) == 74081);
  CHECK(param_count(View::Gated) == 146977);
  CHECK(param_count(View::Struct) >= 70000);
  CHECK(param_count(View::Struct) <= 80000);
  CHECK(param_count(View::Gated) >= 130000);
  CHECK(param_count(View::Gated) <= 150000);
}

TEST_CASE("all-zero parameters score 0.5 on any input") {
  for (View view : {View::Conv, View::Struct, View::Gated}) {
    Model m = Model::init(view, 3);
    for (Tensor& t : m.params.tensors) t.fill(0.0);
    Rng rng(7);
    for (int i = 0; i < 5; ++i) {
      Example ex = random_example(rng);
      CHECK(model_forward(m, ex) == 0.5);
    }
  }
}

TEST_CASE("outputs are probabilities and deterministic") {
  Rng rng(17);
  for (View view : {View::Conv, View::Struct, View::Gated}) {
    Model m = Model::init(view, 99);
    for (int i = 0; i < 10; ++i) {
      Example ex = random_example(rng);
      const double p1 = model_forward(m, ex);
      const double p2 = model_forward(m, ex);
      CHECK(p1 > 0.0);
      CHECK(p1 < 1.0);
      CHECK(p1 == p2);
    }
  }
}

TEST_CASE("model init is deterministic per seed and differs across seeds") {
  Model a = Model::init(View::Gated, 42);
  Model b = Model::init(View::Gated, 42);
  Model c = Model::init(View::Gated, 43);
  CHECK(a.params == b.params);
  CHECK(a.params.tensors[0].data != c.params.tensors[0].data);
}

TEST_CASE("scheme and view mismatches are rejected") {
  Model conv = Model::init(View::Conv, 1);
  Model gated = Model::init(View::Gated, 1);
  Rng rng(23);
  TokenSeq s = random_seq(rng, Scheme::Structural);
  TokenSeq c = random_seq(rng, Scheme::Conversational);
  CHECK_THROWS_AS(forward_single(conv, s), ConfigError);
  CHECK_THROWS_AS(forward_single(gated, c), ConfigError);
  CHECK_THROWS_AS(forward_gated(conv, c, s), ConfigError);
  CHECK_THROWS_AS(forward_gated(gated, s, c), ConfigError); // swapped schemes
}

TEST_CASE("all-PAD sequences run over the PAD row without special casing") {
  Model m = Model::init(View::Struct, 5);
  TokenSeq empty = pad_tokens(Scheme::Structural, {});
  CHECK(empty.true_length == 0);
  const double p = forward_single(m, empty);
  CHECK(p > 0.0);
  CHECK(p < 1.0);
}

TEST_CASE("zero gate parameters average the two latents") {
  Model m = Model::init(View::Gated, 11);
  Rng rng(29);
  randomize(m, rng, 0.2);
  // gate_w is tensor 18, gate_b is 19 in the gated layout.
  m.params[18].fill(0.0);
  m.params[19].fill(0.0);
  Example ex = random_example(rng);
  ForwardCache cache;
  forward_gated(m, ex.conv, ex.strct, &cache);
  for (int k = 0; k < kLatentDim; ++k) {
    CHECK(cache.gate[k] == 0.5);
    CHECK(cache.fused[k] ==
          doctest::Approx(0.5 * (cache.conv.latent[k] + cache.strct.latent[k])).epsilon(1e-12));
  }
}

TEST_CASE("saturated gate ignores the losing view") {
  Rng rng(37);
  Model m = Model::init(View::Gated, 13);
  randomize(m, rng, 0.2);
  Example ex = random_example(rng);
  Example other = random_example(rng);

  m.params[19].fill(50.0); // gate ≈ 1 ⇒ conversational path only
  const double base = forward_gated(m, ex.conv, ex.strct);
  const double swapped_struct = forward_gated(m, ex.conv, other.strct);
  CHECK(std::abs(base - swapped_struct) < 1e-9);

  m.params[19].fill(-50.0); // gate ≈ 0 ⇒ structural path only
  const double base2 = forward_gated(m, ex.conv, ex.strct);
  const double swapped_conv = forward_gated(m, other.conv, ex.strct);
  CHECK(std::abs(base2 - swapped_conv) < 1e-9);
  // And the two saturation directions genuinely differ.
  CHECK(std::abs(base - base2) > 1e-12);
}

TEST_CASE("single-view loss gradients match finite differences in every group") {
  Rng rng(43);
  for (View view : {View::Conv, View::Struct}) {
    for (int instance = 0; instance < 10; ++instance) {
      Model m = Model::init(view, 1000 + instance);
      randomize(m, rng, 0.3);
      Example ex = random_example(rng);
      ParamSet grads = m.params.zeros_like();
      model_loss_grad(m, ex, grads);
      auto loss = [&]() {
        return bce_loss(model_forward(m, ex), ex.label);
      };
      FdResult r = fd_check(loss, m.params, grads, 1e-3, 3, rng);
      CHECK(r.max_rel_err < 1e-4);
      CHECK(r.coords_checked >= 37); // 13 tensors, 3 coords each (1 for cls_b2)
    }
  }
}

TEST_CASE("gated loss gradients match finite differences in every group") {
  Rng rng(47);
  for (int instance = 0; instance < 10; ++instance) {
    Model m = Model::init(View::Gated, 2000 + instance);
    randomize(m, rng, 0.3);
    Example ex = random_example(rng);
    ParamSet grads = m.params.zeros_like();
    model_loss_grad(m, ex, grads);
    auto loss = [&]() {
      return bce_loss(model_forward(m, ex), ex.label);
    };
    FdResult r = fd_check(loss, m.params, grads, 1e-3, 3, rng);
    CHECK(r.max_rel_err < 1e-4);
    CHECK(r.coords_checked >= 70); // 24 tensors, 3 coords each (1 for cls_b2)
  }
}

TEST_CASE("loss gradient accumulates rather than overwrites") {
  Rng rng(53);
  Model m = Model::init(View::Struct, 3);
  randomize(m, rng, 0.3);
  Example a = random_example(rng);
  Example b = random_example(rng);
  ParamSet sum = m.params.zeros_like();
  model_loss_grad(m, a, sum);
  model_loss_grad(m, b, sum);
  ParamSet ga = m.params.zeros_like();
  ParamSet gb = m.params.zeros_like();
  model_loss_grad(m, a, ga);
  model_loss_grad(m, b, gb);
  axpy(1.0, gb, ga);
  for (size_t i = 0; i < sum.count(); ++i)
    for (size_t k = 0; k < sum[i].data.size(); ++k)
      CHECK(sum[i].data[k] == doctest::Approx(ga[i].data[k]).epsilon(1e-12));
}

TEST_CASE("predict_batch preserves order and is partition-invariant") {
  Rng rng(59);
  Model m = Model::init(View::Gated, 7);
  randomize(m, rng, 0.25);
  std::vector<Example> batch;
  for (int i = 0; i < 8; ++i) batch.push_back(random_example(rng));
  CHECK(predict_batch(m, {}).empty());
  auto all = predict_batch(m, batch);
  REQUIRE(all.size() == batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    CHECK(all[i] == predict_batch(m, {batch[i]})[0]);
    CHECK(all[i] == model_forward(m, batch[i]));
  }
}

TEST_CASE("paraphrasing never changes structural-model scores") {
  Rng rng(67);
  Model m = Model::init(View::Struct, 15);
  randomize(m, rng, 0.3);
  const RuleTable& rules = RuleTable::builtin();
  for (int i = 0; i < 20; ++i) {
    AgentTrace t;
    t.org_id = 1;
    int n = rng.range(1, 10);
    for (int k = 0; k < n; ++k) {
      Turn turn;
      turn.role = static_cast<Role>(rng.range(0, 3));
      turn.text = "original text " + std::to_string(k);
      if (turn.role == Role::Assistant && rng.chance(0.5)) {
        ToolCall call;
        call.tool_name = "query_db";
        call.is_error = rng.chance(0.3);
        turn.tool_call = call;
      }
      t.turns.push_back(turn);
    }
    t.final_response = "answer";
    AgentTrace mutated = t;
    for (Turn& turn : mutated.turns) turn.text = "completely reworded " + turn.text;
    const double p1 = forward_single(m, make_example(t, rules).strct);
    const double p2 = forward_single(m, make_example(mutated, rules).strct);
    CHECK(p1 == p2);
  }
}
