#include <catch2/catch.hpp>

#include <cmath>

#include "mrasp/checkpoint.hpp"
#include "mrasp/optim.hpp"
#include "test_util.hpp"

using namespace mrasp;

static ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_positions = 8;
  cfg.vocab_size = 11;
  cfg.dropout = 0.0;
  return cfg;
}

TEST_CASE("lr_schedule ramps and decays linearly") {
  TrainConfig cfg;
  cfg.peak_lr = 0.01;
  cfg.warmup_steps = 100;
  cfg.total_steps = 500;
  CHECK(lr_schedule(0, cfg) == 0.0);
  CHECK(lr_schedule(50, cfg) == Approx(0.005));
  CHECK(lr_schedule(100, cfg) == Approx(0.01));
  CHECK(lr_schedule(300, cfg) == Approx(0.005));  // midpoint of decay
  CHECK(lr_schedule(500, cfg) == 0.0);

  // continuity and peak
  double max_seen = 0.0, prev = 0.0;
  for (size_t s = 0; s <= 500; ++s) {
    const double lr = lr_schedule(s, cfg);
    CHECK(std::abs(lr - prev) <= 0.01 / 100.0 + 1e-15);
    prev = lr;
    max_seen = std::max(max_seen, lr);
  }
  CHECK(max_seen == Approx(0.01));
  CHECK_THROWS_WITH(lr_schedule(501, cfg), Catch::Contains("InvalidStep"));
}

TEST_CASE("adam ignores zero gradients but advances the step") {
  auto params = init_parameters(tiny_config(), 3);
  auto before = params;
  auto grads = zeros_like(params);
  AdamState state = AdamState::fresh(params);
  TrainConfig cfg;
  adam_step(params, grads, state, 0.001, cfg);
  CHECK(state.step == 1);
  auto pl = tensor_list(params);
  auto bl = tensor_list(before);
  for (size_t i = 0; i < pl.size(); ++i) CHECK(pl[i].mat->a == bl[i].mat->a);
}

TEST_CASE("adam first step matches the closed form") {
  auto params = init_parameters(tiny_config(), 3);
  const double initial = params.tok_embed.a[0];
  const double neighbor = params.tok_embed.a[1];
  auto grads = zeros_like(params);
  grads.tok_embed.a[0] = 1.0;
  AdamState state = AdamState::fresh(params);
  TrainConfig cfg;  // beta1 0.9, beta2 0.98, eps 1e-8
  adam_step(params, grads, state, 0.001, cfg);
  // m-hat = 1, v-hat = 1 -> update = lr / (1 + eps)
  const double expected = initial - 0.001 / (1.0 + 1e-8);
  CHECK(params.tok_embed.a[0] == Approx(expected).epsilon(1e-12));
  CHECK(params.tok_embed.a[1] == neighbor);  // untouched
}

TEST_CASE("repeated identical gradients reproduce the hand-unrolled recursion") {
  auto params = init_parameters(tiny_config(), 3);
  const double initial = params.tok_embed.a[0];
  auto grads = zeros_like(params);
  const double g = 0.37;
  grads.tok_embed.a[0] = g;
  AdamState state = AdamState::fresh(params);
  TrainConfig cfg;
  const double lr = 0.002;

  // independent scalar recursion
  double m = 0, v = 0, x = initial;
  for (int t = 1; t <= 5; ++t) {
    m = cfg.adam_beta1 * m + (1 - cfg.adam_beta1) * g;
    v = cfg.adam_beta2 * v + (1 - cfg.adam_beta2) * g * g;
    const double mhat = m / (1 - std::pow(cfg.adam_beta1, t));
    const double vhat = v / (1 - std::pow(cfg.adam_beta2, t));
    x -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
  }

  for (int t = 0; t < 5; ++t) adam_step(params, grads, state, lr, cfg);
  CHECK(state.step == 5);
  CHECK(params.tok_embed.a[0] == Approx(x).epsilon(1e-14));
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  auto params = init_parameters(tiny_config(), 3);
  auto before = params;
  auto grads = zeros_like(params);
  grads.pos_embed.a[2] = std::numeric_limits<double>::quiet_NaN();
  AdamState state = AdamState::fresh(params);
  TrainConfig cfg;
  CHECK_THROWS_WITH(adam_step(params, grads, state, 0.001, cfg),
                    Catch::Contains("NaNUpdate"));
  CHECK(state.step == 0);
  CHECK(params.pos_embed.a == before.pos_embed.a);
}

TEST_CASE("checkpoints round-trip byte-identically") {
  testutil::TempDir tmp;
  auto params = init_parameters(tiny_config(), 17);
  Checkpoint ckpt{params, AdamState::fresh(params), 0xDEADBEEFull, 42, 1.5};
  ckpt.optimizer->m.tok_embed.a[3] = 0.25;
  ckpt.optimizer->step = 42;

  save_checkpoint(ckpt, tmp.file("a.mrasp"));
  Checkpoint loaded = load_checkpoint(tmp.file("a.mrasp"));
  CHECK(loaded.step == 42);
  CHECK(loaded.vocab_hash == 0xDEADBEEFull);
  CHECK(loaded.final_loss == 1.5);
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->step == 42);
  CHECK(loaded.optimizer->m.tok_embed.a[3] == 0.25);

  save_checkpoint(loaded, tmp.file("b.mrasp"));
  CHECK(testutil::read_file(tmp.file("a.mrasp")) == testutil::read_file(tmp.file("b.mrasp")));
}

TEST_CASE("checkpoint loader rejects corruption") {
  testutil::TempDir tmp;
  auto params = init_parameters(tiny_config(), 17);
  Checkpoint ckpt{params, std::nullopt, 1, 10, 0.5};
  save_checkpoint(ckpt, tmp.file("c.mrasp"));

  auto bytes = testutil::read_file(tmp.file("c.mrasp"));
  bytes[bytes.size() / 2] ^= 0x40;  // flip a payload bit
  testutil::write_file(tmp.file("bad.mrasp"), bytes);
  CHECK_THROWS_WITH(load_checkpoint(tmp.file("bad.mrasp")),
                    Catch::Contains("MalformedCheckpoint"));

  testutil::write_file(tmp.file("magic.mrasp"), "NOTMRASP\n" + bytes);
  CHECK_THROWS_WITH(load_checkpoint(tmp.file("magic.mrasp")), Catch::Contains("bad magic"));
}
