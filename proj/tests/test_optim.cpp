#include <doctest.h>

#include <cmath>

#include "nwlab/optim.hpp"

using namespace nwlab;

namespace {

ModelConfig tiny_config() {
  ModelConfig config;
  config.depth = 1;
  config.n_heads = 1;
  config.d_emb = 2;
  config.d_ff = 4;
  config.vocab_size = 2;
  config.max_seq_len = 2;
  config.init_seed = 1;
  return config;
}

void fill_all(Parameters<double>& p, double value) {
  for (auto& ref : tensor_refs(p)) ref.tensor->setConstant(value);
}

}  // namespace

TEST_CASE("one AdamW step from unit weight and unit gradient lands near 0.9") {
  auto params = shaped_like<double>(tiny_config());
  auto grads = shaped_like<double>(tiny_config());
  fill_all(params, 1.0);
  fill_all(grads, 1.0);

  AdamWConfig config;
  config.weight_decay = 0.0;
  AdamW<double> opt(config, params);
  opt.step(params, grads, 0.1);

  // m_hat = v_hat = 1 after bias correction, so the move is lr/(1 + eps).
  CHECK(params.token_embedding(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(params.layers[0].w1(1, 2) == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("decay applies before the adaptive update and is exact on zero grads") {
  auto params = shaped_like<double>(tiny_config());
  auto grads = shaped_like<double>(tiny_config());
  fill_all(params, 1.0);
  fill_all(grads, 0.0);

  AdamWConfig config;
  config.weight_decay = 0.1;
  AdamW<double> opt(config, params);
  opt.step(params, grads, 0.1);

  for (auto& ref : tensor_refs(params)) {
    CHECK(ref.tensor->minCoeff() == 0.99);
    CHECK(ref.tensor->maxCoeff() == 0.99);
  }
}

TEST_CASE("zero gradient and zero decay leave weights untouched") {
  auto params = shaped_like<double>(tiny_config());
  auto grads = shaped_like<double>(tiny_config());
  fill_all(params, 0.731);
  fill_all(grads, 0.0);

  AdamWConfig config;
  config.weight_decay = 0.0;
  AdamW<double> opt(config, params);
  for (int step = 0; step < 3; ++step) opt.step(params, grads, 1e-3);

  for (auto& ref : tensor_refs(params)) {
    CHECK(ref.tensor->minCoeff() == 0.731);
    CHECK(ref.tensor->maxCoeff() == 0.731);
  }
}

TEST_CASE("five steps track a scalar reference implementation") {
  auto params = shaped_like<double>(tiny_config());
  auto grads = shaped_like<double>(tiny_config());
  fill_all(params, 1.0);

  AdamWConfig config;
  AdamW<double> opt(config, params);

  double theta = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.07;
  for (int t = 1; t <= 5; ++t) {
    const double g = 0.5 + 0.1 * t;
    fill_all(grads, g);
    opt.step(params, grads, lr);

    theta *= 1.0 - lr * config.weight_decay;
    m = config.beta1 * m + (1.0 - config.beta1) * g;
    v = config.beta2 * v + (1.0 - config.beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(config.beta1, t));
    const double v_hat = v / (1.0 - std::pow(config.beta2, t));
    theta -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);

    CHECK(params.output_projection(1, 0) ==
          doctest::Approx(theta).epsilon(1e-12));
  }
}

TEST_CASE("cosine schedule hits both endpoints exactly and never rises") {
  LRSchedule schedule;
  schedule.lr_max = 1e-3;
  schedule.lr_min = 1e-4;
  schedule.horizon = 200;

  CHECK(cosine_lr(0, schedule) == 1e-3);
  CHECK(cosine_lr(200, schedule) == 1e-4);
  CHECK(cosine_lr(350, schedule) == 1e-4);
  CHECK(cosine_lr(100, schedule) == doctest::Approx(5.5e-4).epsilon(1e-12));

  double last = cosine_lr(0, schedule);
  for (std::int64_t t = 1; t <= 200; ++t) {
    const double lr = cosine_lr(t, schedule);
    CHECK(lr <= last);
    last = lr;
  }

  LRSchedule bad = schedule;
  bad.horizon = 0;
  CHECK_THROWS_AS(cosine_lr(1, bad), Error);
}
