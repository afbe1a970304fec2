#include <doctest.h>

#include <cmath>

#include "nwlab/model.hpp"
#include "nwlab/task.hpp"
#include "nwlab/tokenizer.hpp"

using namespace nwlab;

namespace {

ModelConfig toy_config(int vocab, int max_seq, std::uint64_t seed) {
  ModelConfig config;
  config.depth = 1;
  config.n_heads = 1;
  config.d_emb = 16;
  config.d_ff = 64;
  config.vocab_size = vocab;
  config.max_seq_len = max_seq;
  config.init_seed = seed;
  config.validate();
  return config;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
  std::vector<int> tokens(static_cast<std::size_t>(n));
  for (auto& t : tokens)
    t = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(vocab)));
  return tokens;
}

template <typename Scalar>
DenseMatrix<Scalar> tape_logits(Parameters<Scalar>& params,
                                const std::vector<int>& tokens) {
  Parameters<Scalar> grads = shaped_like<Scalar>(params.config);
  Graph<Scalar> g;
  auto nodes = bind_params(g, params, grads);
  const int logits = forward_logits_node(g, nodes, params.config, tokens);
  return g.value(logits);
}

// Fresh graph per evaluation so finite differences see the perturbed params.
template <typename Scalar>
struct ModelLossFixture {
  Parameters<Scalar> params;
  Parameters<Scalar> grads;
  std::vector<int> tokens;
  Span target{0, 0};
  Span suffix{0, 0};

  explicit ModelLossFixture(const ModelConfig& config)
      : params(init_params<Scalar>(config)),
        grads(shaped_like<Scalar>(config)) {}

  double loss() {
    Graph<Scalar> g;
    auto nodes = bind_params(g, params, grads);
    const int logits = forward_logits_node(g, nodes, params.config, tokens);
    const int loss_node =
        loss_on_regions_node(g, logits, tokens, target, suffix);
    return static_cast<double>(g.value(loss_node)(0, 0));
  }

  void compute_grads() {
    for (auto& ref : tensor_refs(grads)) ref.tensor->setZero();
    Graph<Scalar> g;
    auto nodes = bind_params(g, params, grads);
    const int logits = forward_logits_node(g, nodes, params.config, tokens);
    const int loss_node =
        loss_on_regions_node(g, logits, tokens, target, suffix);
    g.backward(loss_node);
  }

  std::vector<ParamRef<Scalar>> refs() {
    std::vector<ParamRef<Scalar>> out;
    auto values = tensor_refs(params);
    auto gradients = tensor_refs(grads);
    for (std::size_t i = 0; i < values.size(); ++i)
      out.push_back({values[i].tensor, gradients[i].tensor});
    return out;
  }

  void scale_weights(Scalar factor) {
    for (auto& ref : tensor_refs(params)) {
      const bool is_norm = ref.name.find("gain") != std::string::npos ||
                           ref.name.find("bias") != std::string::npos ||
                           ref.name.find(".b") != std::string::npos;
      if (!is_norm) *ref.tensor *= factor;
    }
  }
};

TokenizedExample mult_example(int width, u128 index, Vocabulary* vocab_out) {
  TaskSpec spec(TaskFamily::multiplication, width);
  const Vocabulary vocab = Vocabulary::for_task(spec);
  if (vocab_out) *vocab_out = vocab;
  return encode(make_example(spec, index), vocab);
}

}  // namespace

TEST_CASE("depth formulas set heads, width, and feed-forward size") {
  const ModelConfig three = ModelConfig::for_depth(3, 83, 64, 7);
  CHECK(three.n_heads == 3);
  CHECK(three.d_emb == 192);
  CHECK(three.d_ff == 768);
  CHECK(three.head_dim() == 64);

  const ModelConfig six = ModelConfig::for_depth(6, 85, 64, 7);
  CHECK(six.n_heads == 6);
  CHECK(six.d_emb == 384);
  CHECK(six.d_ff == 1536);
  CHECK(six.head_dim() == 64);

  ModelConfig bad = three;
  bad.n_heads = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("parameter count matches the layout arithmetic") {
  ModelConfig config = toy_config(5, 6, 1);
  auto params = shaped_like<double>(config);
  // 5*16 + 6*16 tables, 3216 per layer, 32 final norm, 16*5 projection.
  CHECK(parameter_count(params) == 3504);
}

TEST_CASE("initialization is seed-deterministic with the stated moments") {
  const ModelConfig config = ModelConfig::for_depth(1, 30, 32, 11);
  auto a = init_params<double>(config);
  auto b = init_params<double>(config);
  auto a_refs = tensor_refs(a);
  auto b_refs = tensor_refs(b);
  for (std::size_t i = 0; i < a_refs.size(); ++i)
    CHECK((*a_refs[i].tensor - *b_refs[i].tensor).cwiseAbs().maxCoeff() == 0.0);

  ModelConfig other = config;
  other.init_seed = 12;
  auto c = init_params<double>(other);
  CHECK((a.token_embedding - c.token_embedding).cwiseAbs().maxCoeff() > 0.0);

  for (auto& layer : a.layers) {
    CHECK(layer.ln1_gain.minCoeff() == 1.0);
    CHECK(layer.ln1_gain.maxCoeff() == 1.0);
    CHECK(layer.ln1_bias.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.b1.cwiseAbs().maxCoeff() == 0.0);
    CHECK(layer.b2.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(a.final_gain.minCoeff() == 1.0);

  const double n = static_cast<double>(a.token_embedding.size());
  const double mean = a.token_embedding.mean();
  const double sd =
      std::sqrt((a.token_embedding.array() - mean).square().sum() / n);
  CHECK(std::abs(mean) < 0.003);
  CHECK(sd > 0.017);
  CHECK(sd < 0.023);
}

TEST_CASE("logits have the right shape and stay finite at initialization") {
  const ModelConfig config = toy_config(13, 24, 3);
  auto params = init_params<float>(config);
  Rng rng(404);
  const auto tokens = random_tokens(rng, 17, config.vocab_size);
  const auto logits = tape_logits(params, tokens);
  REQUIRE(logits.rows() == 17);
  REQUIRE(logits.cols() == 13);
  CHECK(logits.allFinite());
}

TEST_CASE("a future-token perturbation cannot reach earlier logits") {
  ModelConfig config;
  config.depth = 2;
  config.n_heads = 2;
  config.d_emb = 32;
  config.d_ff = 64;
  config.vocab_size = 20;
  config.max_seq_len = 24;
  config.init_seed = 9;
  auto params = init_params<double>(config);

  Rng rng(77);
  auto tokens = random_tokens(rng, 10, config.vocab_size);
  const auto base = tape_logits(params, tokens);

  const int flipped = 6;
  tokens[flipped] = (tokens[flipped] + 1) % config.vocab_size;
  const auto perturbed = tape_logits(params, tokens);

  for (int row = 0; row < flipped; ++row)
    CHECK((base.row(row) - perturbed.row(row)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((base.row(flipped) - perturbed.row(flipped)).cwiseAbs().maxCoeff() >
        0.0);
}

TEST_CASE("sequence and vocabulary limits are enforced") {
  const ModelConfig config = toy_config(13, 8, 3);
  auto params = init_params<double>(config);
  Rng rng(5);
  const auto ok = random_tokens(rng, 8, config.vocab_size);
  CHECK_NOTHROW(tape_logits(params, ok));

  const auto too_long = random_tokens(rng, 9, config.vocab_size);
  CHECK_THROWS_WITH_AS(tape_logits(params, too_long),
                       doctest::Contains("SEQUENCE_TOO_LONG"), Error);

  std::vector<int> bad = ok;
  bad[2] = 13;
  try {
    tape_logits(params, bad);
    FAIL("expected out-of-vocabulary error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::out_of_vocabulary);
  }
}

TEST_CASE("zeroed parameters give exactly uniform next-token loss") {
  Vocabulary vocab;
  const auto encoded = mult_example(2, 57, &vocab);

  ModelConfig config = toy_config(static_cast<int>(vocab.size()),
                                  static_cast<int>(encoded.ids.size()), 1);
  auto params = shaped_like<double>(config);
  auto grads = shaped_like<double>(config);

  Graph<double> g;
  auto nodes = bind_params(g, params, grads);
  const int logits = forward_logits_node(g, nodes, config, encoded.ids);
  const int loss =
      loss_on_regions_node(g, logits, encoded.ids, encoded.target,
                           encoded.suffix);
  CHECK(g.value(loss)(0, 0) ==
        doctest::Approx(std::log(double(vocab.size()))).epsilon(1e-12));
}

TEST_CASE("region loss rejects spans with nothing to score") {
  Vocabulary vocab;
  const auto encoded = mult_example(2, 57, &vocab);
  ModelConfig config = toy_config(static_cast<int>(vocab.size()),
                                  static_cast<int>(encoded.ids.size()), 1);
  auto params = init_params<double>(config);
  auto grads = shaped_like<double>(config);

  Graph<double> g;
  auto nodes = bind_params(g, params, grads);
  const int logits = forward_logits_node(g, nodes, config, encoded.ids);
  try {
    loss_on_regions_node(g, logits, encoded.ids, Span{3, 3}, Span{3, 3});
    FAIL("expected empty-region error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::empty_region);
  }
}

TEST_CASE("cache decode reproduces the tape forward pass") {
  const ModelConfig config = ModelConfig::for_depth(2, 13, 32, 5);
  auto params = init_params<double>(config);
  Rng rng(31);
  const auto tokens = random_tokens(rng, 14, config.vocab_size);

  const auto full = tape_logits(params, tokens);
  const auto cached = decode_logits(params, tokens);
  REQUIRE(cached.rows() == full.rows());
  const double scale = full.cwiseAbs().maxCoeff();
  CHECK((full - cached).cwiseAbs().maxCoeff() <= 1e-11 * std::max(scale, 1.0));

  DecodeState<double> state(params);
  const std::vector<int> prefix(tokens.begin(), tokens.begin() + 6);
  DenseMatrix<double> block = state.append(prefix);
  CHECK((block.row(5) - full.row(5)).cwiseAbs().maxCoeff() <=
        1e-11 * std::max(scale, 1.0));
  for (int p = 6; p < 14; ++p) {
    block = state.append({tokens[static_cast<std::size_t>(p)]});
    CHECK((block.row(0) - full.row(p)).cwiseAbs().maxCoeff() <=
          1e-11 * std::max(scale, 1.0));
  }
}

TEST_CASE("greedy decode matches stepwise full recomputation") {
  const ModelConfig config = toy_config(13, 24, 19);
  auto params = init_params<double>(config);
  Rng rng(62);
  const auto prefix = random_tokens(rng, 7, config.vocab_size);

  const int n = 6;
  const auto fast = greedy_decode(params, prefix, n);
  REQUIRE(static_cast<int>(fast.size()) == n);

  std::vector<int> tokens = prefix;
  for (int i = 0; i < n; ++i) {
    const auto logits = decode_logits(params, tokens);
    const Eigen::Matrix<double, 1, Eigen::Dynamic> last =
        logits.row(logits.rows() - 1);
    const int next = argmax_id<double>(last, {});
    CHECK(next == fast[static_cast<std::size_t>(i)]);
    tokens.push_back(next);
  }
}

TEST_CASE("argmax tie-breaking picks the lowest id, restricted or not") {
  Eigen::Matrix<double, 1, Eigen::Dynamic> row(5);
  row << 1.0, 5.0, 5.0, 2.0, 5.0;
  CHECK(argmax_id<double>(row, {}) == 1);
  CHECK(argmax_id<double>(row, {2, 3}) == 2);
  CHECK(argmax_id<double>(row, {4, 2}) == 2);
  CHECK(argmax_id<double>(row, {3}) == 3);
  CHECK_THROWS_AS(argmax_id<double>(row, {9}), Error);
}

TEST_CASE("restricted positions only emit candidate ids") {
  TaskSpec spec(TaskFamily::nw, 1);
  spec.suffix_bits = 3;
  const Vocabulary vocab = Vocabulary::for_task(spec);
  const auto encoded = encode(make_example(spec, 9), vocab);

  const ModelConfig config =
      toy_config(static_cast<int>(vocab.size()),
                 static_cast<int>(encoded.ids.size()) + 2, 23);
  auto params = init_params<float>(config);

  const std::vector<int> prefix(encoded.ids.begin(),
                                encoded.ids.begin() + encoded.target.begin);
  const int n = encoded.suffix.end - encoded.target.begin;
  std::vector<std::vector<int>> allowed(static_cast<std::size_t>(n));
  const std::vector<int> bits = {vocab.bit_id(0), vocab.bit_id(1)};
  for (int p = encoded.suffix.begin; p < encoded.suffix.end; ++p)
    allowed[static_cast<std::size_t>(p - encoded.target.begin)] = bits;

  const auto generated = greedy_decode(params, prefix, n, allowed);
  REQUIRE(static_cast<int>(generated.size()) == n);
  for (int i = 0; i < n; ++i) {
    const int id = generated[static_cast<std::size_t>(i)];
    if (!allowed[static_cast<std::size_t>(i)].empty())
      CHECK((id == bits[0] || id == bits[1]));
    else
      CHECK((id >= 0 && id < static_cast<int>(vocab.size())));
  }
}

TEST_CASE("decode respects the context window") {
  const ModelConfig config = toy_config(13, 8, 3);
  auto params = init_params<double>(config);
  Rng rng(8);
  const auto prefix = random_tokens(rng, 6, config.vocab_size);
  CHECK_NOTHROW(greedy_decode(params, prefix, 3));
  CHECK_THROWS_WITH_AS(greedy_decode(params, prefix, 4),
                       doctest::Contains("SEQUENCE_TOO_LONG"), Error);
}

TEST_CASE("whole-model gradients agree with finite differences, 64-bit") {
  Vocabulary vocab;
  const auto encoded = mult_example(2, 88, &vocab);
  ModelConfig config = toy_config(static_cast<int>(vocab.size()),
                                  static_cast<int>(encoded.ids.size()), 21);

  ModelLossFixture<double> fixture(config);
  fixture.tokens = encoded.ids;
  fixture.target = encoded.target;
  fixture.suffix = encoded.suffix;
  fixture.scale_weights(10.0);

  const auto report = grad_check<double>(
      [&] { return fixture.loss(); }, [&] { fixture.compute_grads(); },
      fixture.refs(), 3e-5, 1e-5, 60, 99, 1e-3);
  INFO("max rel error ", report.max_rel_error);
  CHECK(report.coords_checked >= 50);
  CHECK(report.passed);
}

TEST_CASE("whole-model gradients at the production init, 64-bit") {
  Vocabulary vocab;
  const auto encoded = mult_example(2, 88, &vocab);
  ModelConfig config = toy_config(static_cast<int>(vocab.size()),
                                  static_cast<int>(encoded.ids.size()), 21);

  ModelLossFixture<double> fixture(config);
  fixture.tokens = encoded.ids;
  fixture.target = encoded.target;
  fixture.suffix = encoded.suffix;

  const auto report = grad_check<double>(
      [&] { return fixture.loss(); }, [&] { fixture.compute_grads(); },
      fixture.refs(), 3e-5, 1e-5, 40, 17, 1e-3);
  INFO("max rel error ", report.max_rel_error);
  CHECK(report.passed);
}

TEST_CASE("whole-model gradients agree with finite differences, 32-bit") {
  Vocabulary vocab;
  const auto encoded = mult_example(2, 88, &vocab);
  ModelConfig config = toy_config(static_cast<int>(vocab.size()),
                                  static_cast<int>(encoded.ids.size()), 21);

  ModelLossFixture<float> fixture(config);
  fixture.tokens = encoded.ids;
  fixture.target = encoded.target;
  fixture.suffix = encoded.suffix;
  fixture.scale_weights(10.0f);

  const auto report = grad_check<float>(
      [&] { return fixture.loss(); }, [&] { fixture.compute_grads(); },
      fixture.refs(), 2e-2, 1e-2, 60, 100, 1e-2);
  INFO("max rel error ", report.max_rel_error);
  CHECK(report.coords_checked >= 50);
  CHECK(report.passed);
}
