#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nwlab/tape.hpp"
#include "nwlab/tokenizer.hpp"

namespace nwlab {

// ---------------------------------------------------------------------------
// Decoder-only transformer family: D layers, D heads, d_emb = 64 D,
// d_ff = 4 d_emb, learned absolute positions, pre-layernorm blocks, GELU,
// no dropout, untied output projection. for_depth() applies the family
// formulas; the explicit fields stay overridable for toy test configs.
// ---------------------------------------------------------------------------

struct ModelConfig {
  int depth = 3;
  int n_heads = 3;
  int d_emb = 192;
  int d_ff = 768;
  int vocab_size = 0;
  int max_seq_len = 0;
  std::uint64_t init_seed = 1;

  static ModelConfig for_depth(int depth, int vocab_size, int max_seq_len,
                               std::uint64_t init_seed) {
    ModelConfig config;
    config.depth = depth;
    config.n_heads = depth;
    config.d_emb = 64 * depth;
    config.d_ff = 4 * config.d_emb;
    config.vocab_size = vocab_size;
    config.max_seq_len = max_seq_len;
    config.init_seed = init_seed;
    config.validate();
    return config;
  }

  void validate() const {
    if (depth < 1 || n_heads < 1 || d_emb < 1 || d_ff < 1)
      throw Error(ErrorCode::config, "model dimensions must be positive");
    if (d_emb % n_heads != 0)
      throw Error(ErrorCode::config,
                  "embedding width " + std::to_string(d_emb) +
                      " not divisible by " + std::to_string(n_heads) +
                      " heads");
    if (vocab_size < 2) throw Error(ErrorCode::config, "vocab too small");
    if (max_seq_len < 2)
      throw Error(ErrorCode::config, "max sequence length too small");
  }

  int head_dim() const noexcept { return d_emb / n_heads; }
};

inline constexpr double kInitStdDev = 0.02;
inline constexpr double kLayerNormEpsilon = 1e-5;

template <typename Scalar>
struct LayerParams {
  DenseMatrix<Scalar> ln1_gain, ln1_bias;
  DenseMatrix<Scalar> wq, wk, wv, wo;
  DenseMatrix<Scalar> ln2_gain, ln2_bias;
  DenseMatrix<Scalar> w1, b1, w2, b2;
};

template <typename Scalar>
struct Parameters {
  ModelConfig config;
  DenseMatrix<Scalar> token_embedding;
  DenseMatrix<Scalar> position_embedding;
  std::vector<LayerParams<Scalar>> layers;
  DenseMatrix<Scalar> final_gain, final_bias;
  DenseMatrix<Scalar> output_projection;
};

template <typename Scalar>
struct NamedTensor {
  std::string name;
  DenseMatrix<Scalar>* tensor;
};

// Fixed traversal order; initialization draws, the optimizer state, and the
// checkpoint blob all follow it.
template <typename Scalar>
std::vector<NamedTensor<Scalar>> tensor_refs(Parameters<Scalar>& p) {
  std::vector<NamedTensor<Scalar>> refs;
  refs.push_back({"token_embedding", &p.token_embedding});
  refs.push_back({"position_embedding", &p.position_embedding});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& layer = p.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    refs.push_back({prefix + "ln1_gain", &layer.ln1_gain});
    refs.push_back({prefix + "ln1_bias", &layer.ln1_bias});
    refs.push_back({prefix + "wq", &layer.wq});
    refs.push_back({prefix + "wk", &layer.wk});
    refs.push_back({prefix + "wv", &layer.wv});
    refs.push_back({prefix + "wo", &layer.wo});
    refs.push_back({prefix + "ln2_gain", &layer.ln2_gain});
    refs.push_back({prefix + "ln2_bias", &layer.ln2_bias});
    refs.push_back({prefix + "w1", &layer.w1});
    refs.push_back({prefix + "b1", &layer.b1});
    refs.push_back({prefix + "w2", &layer.w2});
    refs.push_back({prefix + "b2", &layer.b2});
  }
  refs.push_back({"final_gain", &p.final_gain});
  refs.push_back({"final_bias", &p.final_bias});
  refs.push_back({"output_projection", &p.output_projection});
  return refs;
}

template <typename Scalar>
std::size_t parameter_count(Parameters<Scalar>& p) {
  std::size_t total = 0;
  for (const auto& ref : tensor_refs(p))
    total += static_cast<std::size_t>(ref.tensor->size());
  return total;
}

template <typename Scalar>
Parameters<Scalar> shaped_like(const ModelConfig& config) {
  config.validate();
  Parameters<Scalar> p;
  p.config = config;
  const int d = config.d_emb;
  p.token_embedding.setZero(config.vocab_size, d);
  p.position_embedding.setZero(config.max_seq_len, d);
  p.layers.resize(static_cast<std::size_t>(config.depth));
  for (auto& layer : p.layers) {
    layer.ln1_gain.setZero(1, d);
    layer.ln1_bias.setZero(1, d);
    layer.wq.setZero(d, d);
    layer.wk.setZero(d, d);
    layer.wv.setZero(d, d);
    layer.wo.setZero(d, d);
    layer.ln2_gain.setZero(1, d);
    layer.ln2_bias.setZero(1, d);
    layer.w1.setZero(d, config.d_ff);
    layer.b1.setZero(1, config.d_ff);
    layer.w2.setZero(config.d_ff, d);
    layer.b2.setZero(1, d);
  }
  p.final_gain.setZero(1, d);
  p.final_bias.setZero(1, d);
  p.output_projection.setZero(d, config.vocab_size);
  return p;
}

// Weights N(0, 0.02^2), biases zero, layernorm gains one; draw order is the
// tensor_refs order, filled through each tensor's flat storage.
template <typename Scalar>
Parameters<Scalar> init_params(const ModelConfig& config) {
  Parameters<Scalar> p = shaped_like<Scalar>(config);
  Rng rng(config.init_seed);
  for (auto& ref : tensor_refs(p)) {
    const bool is_gain = ref.name.find("gain") != std::string::npos;
    const bool is_bias = ref.name.find("bias") != std::string::npos ||
                         ref.name.find(".b") != std::string::npos;
    if (is_gain) {
      ref.tensor->setOnes();
    } else if (is_bias) {
      ref.tensor->setZero();
    } else {
      Scalar* data = ref.tensor->data();
      for (Eigen::Index i = 0; i < ref.tensor->size(); ++i)
        data[i] = static_cast<Scalar>(rng.next_normal() * kInitStdDev);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Tape forward pass for training.
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LayerNodes {
  int ln1_gain, ln1_bias, wq, wk, wv, wo;
  int ln2_gain, ln2_bias, w1, b1, w2, b2;
};

template <typename Scalar>
struct ParamNodes {
  int token_embedding = -1;
  int position_embedding = -1;
  std::vector<LayerNodes<Scalar>> layers;
  int final_gain = -1, final_bias = -1;
  int output_projection = -1;
};

template <typename Scalar>
ParamNodes<Scalar> bind_params(Graph<Scalar>& g, Parameters<Scalar>& values,
                               Parameters<Scalar>& grads) {
  ParamNodes<Scalar> nodes;
  nodes.token_embedding = g.param(&values.token_embedding,
                                  &grads.token_embedding);
  nodes.position_embedding =
      g.param(&values.position_embedding, &grads.position_embedding);
  nodes.layers.resize(values.layers.size());
  for (std::size_t l = 0; l < values.layers.size(); ++l) {
    auto& vl = values.layers[l];
    auto& gl = grads.layers[l];
    auto& nl = nodes.layers[l];
    nl.ln1_gain = g.param(&vl.ln1_gain, &gl.ln1_gain);
    nl.ln1_bias = g.param(&vl.ln1_bias, &gl.ln1_bias);
    nl.wq = g.param(&vl.wq, &gl.wq);
    nl.wk = g.param(&vl.wk, &gl.wk);
    nl.wv = g.param(&vl.wv, &gl.wv);
    nl.wo = g.param(&vl.wo, &gl.wo);
    nl.ln2_gain = g.param(&vl.ln2_gain, &gl.ln2_gain);
    nl.ln2_bias = g.param(&vl.ln2_bias, &gl.ln2_bias);
    nl.w1 = g.param(&vl.w1, &gl.w1);
    nl.b1 = g.param(&vl.b1, &gl.b1);
    nl.w2 = g.param(&vl.w2, &gl.w2);
    nl.b2 = g.param(&vl.b2, &gl.b2);
  }
  nodes.final_gain = g.param(&values.final_gain, &grads.final_gain);
  nodes.final_bias = g.param(&values.final_bias, &grads.final_bias);
  nodes.output_projection =
      g.param(&values.output_projection, &grads.output_projection);
  return nodes;
}

inline BoolMatrix causal_allowed(int n) {
  BoolMatrix mask(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mask(i, j) = j <= i;
  return mask;
}

// Logits node of shape (seq_len, vocab); position t depends only on tokens
// at positions <= t.
template <typename Scalar>
int forward_logits_node(Graph<Scalar>& g, const ParamNodes<Scalar>& nodes,
                        const ModelConfig& config,
                        const std::vector<int>& tokens) {
  const int n = static_cast<int>(tokens.size());
  if (n < 1) throw Error(ErrorCode::config, "empty token sequence");
  if (n > config.max_seq_len)
    throw Error(ErrorCode::sequence_too_long,
                "SEQUENCE_TOO_LONG: " + std::to_string(n) + " > " +
                    std::to_string(config.max_seq_len));
  for (int t : tokens)
    if (t < 0 || t >= config.vocab_size)
      throw Error(ErrorCode::out_of_vocabulary,
                  "token id " + std::to_string(t) + " outside vocab");

  std::vector<int> positions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) positions[static_cast<std::size_t>(i)] = i;

  int x = g.add(g.embedding_rows(nodes.token_embedding, tokens),
                g.embedding_rows(nodes.position_embedding, positions));

  const BoolMatrix mask = causal_allowed(n);
  const int hd = config.head_dim();
  const Scalar inv_sqrt_hd =
      Scalar(1) / static_cast<Scalar>(std::sqrt(static_cast<double>(hd)));

  for (const auto& layer : nodes.layers) {
    const int h = g.layernorm_rows(x, layer.ln1_gain, layer.ln1_bias,
                                   static_cast<Scalar>(kLayerNormEpsilon));
    const int q = g.matmul(h, layer.wq);
    const int k = g.matmul(h, layer.wk);
    const int v = g.matmul(h, layer.wv);
    std::vector<int> heads;
    heads.reserve(static_cast<std::size_t>(config.n_heads));
    for (int head = 0; head < config.n_heads; ++head) {
      const int qh = g.slice_cols(q, head * hd, hd);
      const int kh = g.slice_cols(k, head * hd, hd);
      const int vh = g.slice_cols(v, head * hd, hd);
      const int scores =
          g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt_hd);
      const int probs = g.softmax_masked(scores, mask);
      heads.push_back(g.matmul(probs, vh));
    }
    const int context =
        config.n_heads == 1 ? heads[0] : g.concat_cols(heads);
    x = g.add(x, g.matmul(context, layer.wo));

    const int h2 = g.layernorm_rows(x, layer.ln2_gain, layer.ln2_bias,
                                    static_cast<Scalar>(kLayerNormEpsilon));
    const int inner =
        g.gelu(g.add_rowvec(g.matmul(h2, layer.w1), layer.b1));
    x = g.add(x, g.add_rowvec(g.matmul(inner, layer.w2), layer.b2));
  }

  const int final_norm = g.layernorm_rows(
      x, nodes.final_gain, nodes.final_bias,
      static_cast<Scalar>(kLayerNormEpsilon));
  return g.matmul(final_norm, nodes.output_projection);
}

// Mean next-token cross-entropy over the target and suffix regions; logits
// at position p score the token at p+1, so the begin-of-target sentinel
// carries the first scored prediction.
template <typename Scalar>
int loss_on_regions_node(Graph<Scalar>& g, int logits,
                         const std::vector<int>& tokens, Span target,
                         Span suffix) {
  const int n = static_cast<int>(tokens.size());
  const int scored_begin = target.begin;
  const int scored_end = suffix.empty() ? target.end : suffix.end;
  if (scored_begin < 1 || scored_end > n || scored_begin >= scored_end)
    throw Error(ErrorCode::empty_region, "no scored positions in regions");

  std::vector<int> next(static_cast<std::size_t>(n), 0);
  std::vector<unsigned char> active(static_cast<std::size_t>(n), 0);
  for (int p = 0; p + 1 < n; ++p) {
    const int predicted = p + 1;
    if (predicted >= scored_begin && predicted < scored_end) {
      next[static_cast<std::size_t>(p)] = tokens[static_cast<std::size_t>(predicted)];
      active[static_cast<std::size_t>(p)] = 1;
    }
  }
  return g.cross_entropy_masked(logits, std::move(next), std::move(active));
}

// ---------------------------------------------------------------------------
// Inference path with per-layer KV caches; no tape, plain Eigen. Kept in
// lockstep with the tape forward by an equivalence test.
// ---------------------------------------------------------------------------

template <typename Scalar>
class DecodeState {
 public:
  explicit DecodeState(const Parameters<Scalar>& params)
      : params_(&params),
        k_cache_(params.layers.size()),
        v_cache_(params.layers.size()) {}

  int length() const noexcept { return length_; }

  // Runs the model over `tokens` given the cached context and returns the
  // logits rows for exactly those positions.
  DenseMatrix<Scalar> append(const std::vector<int>& tokens) {
    const ModelConfig& config = params_->config;
    const int m = static_cast<int>(tokens.size());
    if (m < 1) throw Error(ErrorCode::config, "empty token block");
    if (length_ + m > config.max_seq_len)
      throw Error(ErrorCode::sequence_too_long,
                  "SEQUENCE_TOO_LONG: " + std::to_string(length_ + m) +
                      " > " + std::to_string(config.max_seq_len));

    const int d = config.d_emb;
    const int hd = config.head_dim();
    const Scalar inv_sqrt_hd =
        Scalar(1) / static_cast<Scalar>(std::sqrt(static_cast<double>(hd)));

    DenseMatrix<Scalar> x(m, d);
    for (int i = 0; i < m; ++i) {
      const int t = tokens[static_cast<std::size_t>(i)];
      if (t < 0 || t >= config.vocab_size)
        throw Error(ErrorCode::out_of_vocabulary,
                    "token id " + std::to_string(t) + " outside vocab");
      x.row(i) = params_->token_embedding.row(t) +
                 params_->position_embedding.row(length_ + i);
    }

    for (std::size_t l = 0; l < params_->layers.size(); ++l) {
      const auto& layer = params_->layers[l];
      const DenseMatrix<Scalar> h =
          layernorm_rows_plain(x, layer.ln1_gain, layer.ln1_bias);
      const DenseMatrix<Scalar> q = h * layer.wq;
      append_rows(k_cache_[l], h * layer.wk);
      append_rows(v_cache_[l], h * layer.wv);
      const int total = length_ + m;

      DenseMatrix<Scalar> context(m, d);
      for (int head = 0; head < config.n_heads; ++head) {
        const auto qh = q.middleCols(head * hd, hd);
        const auto kh = k_cache_[l].topRows(total).middleCols(head * hd, hd);
        const auto vh = v_cache_[l].topRows(total).middleCols(head * hd, hd);
        DenseMatrix<Scalar> scores = (qh * kh.transpose()) * inv_sqrt_hd;
        for (int i = 0; i < m; ++i) {
          const int visible = length_ + i + 1;
          auto row = scores.row(i);
          const Scalar top = row.head(visible).maxCoeff();
          Scalar total_weight = 0;
          for (int j = 0; j < total; ++j) {
            if (j < visible) {
              row(j) = std::exp(row(j) - top);
              total_weight += row(j);
            } else {
              row(j) = 0;
            }
          }
          row /= total_weight;
        }
        context.middleCols(head * hd, hd) = scores * vh;
      }
      x += context * layer.wo;

      const DenseMatrix<Scalar> h2 =
          layernorm_rows_plain(x, layer.ln2_gain, layer.ln2_bias);
      DenseMatrix<Scalar> inner = h2 * layer.w1;
      inner.rowwise() += layer.b1.row(0);
      inner = inner.unaryExpr([](Scalar v) {
        return Scalar(0.5) * v *
               (Scalar(1) + Scalar(std::erf(static_cast<double>(v) *
                                            0.7071067811865476)));
      });
      DenseMatrix<Scalar> ff = inner * layer.w2;
      ff.rowwise() += layer.b2.row(0);
      x += ff;
    }

    length_ += m;
    const DenseMatrix<Scalar> final_norm =
        layernorm_rows_plain(x, params_->final_gain, params_->final_bias);
    return final_norm * params_->output_projection;
  }

 private:
  static DenseMatrix<Scalar> layernorm_rows_plain(
      const DenseMatrix<Scalar>& x, const DenseMatrix<Scalar>& gain,
      const DenseMatrix<Scalar>& bias) {
    DenseMatrix<Scalar> out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const Scalar mean = x.row(i).mean();
      const Scalar variance = (x.row(i).array() - mean).square().mean();
      const Scalar inv =
          Scalar(1) /
          std::sqrt(variance + static_cast<Scalar>(kLayerNormEpsilon));
      out.row(i) =
          (((x.row(i).array() - mean) * inv) * gain.row(0).array()).matrix() +
          bias.row(0);
    }
    return out;
  }

  static void append_rows(DenseMatrix<Scalar>& cache,
                          const DenseMatrix<Scalar>& rows) {
    if (cache.rows() == 0) {
      cache = rows;
      return;
    }
    const Eigen::Index old_rows = cache.rows();
    cache.conservativeResize(old_rows + rows.rows(), rows.cols());
    cache.bottomRows(rows.rows()) = rows;
  }

  const Parameters<Scalar>* params_;
  std::vector<DenseMatrix<Scalar>> k_cache_, v_cache_;
  int length_ = 0;
};

// Full-sequence logits through the inference path (used by tests and
// evaluation plumbing).
template <typename Scalar>
DenseMatrix<Scalar> decode_logits(const Parameters<Scalar>& params,
                                  const std::vector<int>& tokens) {
  DecodeState<Scalar> state(params);
  return state.append(tokens);
}

// Ties break toward the lowest token id.
template <typename Scalar>
int argmax_id(const Eigen::Ref<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>&
                  row,
              const std::vector<int>& allowed) {
  int best = -1;
  Scalar best_value = std::numeric_limits<Scalar>::lowest();
  if (allowed.empty()) {
    for (int j = 0; j < row.cols(); ++j) {
      if (row(j) > best_value) {
        best_value = row(j);
        best = j;
      }
    }
  } else {
    for (int candidate : allowed) {
      if (candidate < 0 || candidate >= row.cols())
        throw Error(ErrorCode::out_of_vocabulary,
                    "allowed id " + std::to_string(candidate) +
                        " outside vocab");
      if (best < 0 || row(candidate) > best_value ||
          (row(candidate) == best_value && candidate < best)) {
        best_value = row(candidate);
        best = candidate;
      }
    }
  }
  if (best < 0)
    throw Error(ErrorCode::config, "argmax over an empty candidate set");
  return best;
}

// Free-running greedy generation of n tokens after the prefix. allowed, when
// non-empty, gives one candidate-id set per generated position (an empty
// inner set means unrestricted); evaluation uses it to keep suffix-bit
// positions on the bit alphabet.
template <typename Scalar>
std::vector<int> greedy_decode(
    const Parameters<Scalar>& params, const std::vector<int>& prefix,
    int n_generate, const std::vector<std::vector<int>>& allowed = {}) {
  if (n_generate < 0)
    throw Error(ErrorCode::config, "negative generation length");
  if (!allowed.empty() &&
      static_cast<int>(allowed.size()) != n_generate)
    throw Error(ErrorCode::config,
                "allowed-set list does not match generation length");
  std::vector<int> generated;
  if (n_generate == 0) return generated;
  if (prefix.empty()) throw Error(ErrorCode::config, "empty decode prefix");

  DecodeState<Scalar> state(params);
  DenseMatrix<Scalar> logits = state.append(prefix);
  generated.reserve(static_cast<std::size_t>(n_generate));
  static const std::vector<int> kUnrestricted;
  for (int i = 0; i < n_generate; ++i) {
    const auto& candidates = allowed.empty() ? kUnrestricted : allowed[static_cast<std::size_t>(i)];
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> row =
        logits.row(logits.rows() - 1);
    const int next = argmax_id<Scalar>(row, candidates);
    generated.push_back(next);
    if (i + 1 < n_generate) logits = state.append({next});
  }
  return generated;
}

}  // namespace nwlab
