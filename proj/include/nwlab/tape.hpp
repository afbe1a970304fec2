#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nwlab/common.hpp"

namespace nwlab {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace detail {

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Scalar>
std::string shape_str(const DenseMatrix<Scalar>& m) {
  return shape_str(m.rows(), m.cols());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse-mode tape over dense Eigen matrices, templated on the scalar so the
// same network runs in float for training and in double for finite-difference
// oracles. Nodes are identified by creation index; creation order is a
// topological order, so one reverse sweep visits every node exactly once and
// gradients accumulate additively across fan-out.
// ---------------------------------------------------------------------------

template <typename Scalar>
class Graph {
 public:
  using Matrix = DenseMatrix<Scalar>;
  using NodeId = int;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  NodeId constant(Matrix value) { return push(std::move(value), nullptr); }

  // Parameter values and gradient accumulators live outside the graph, so a
  // graph can be built and dropped per example while the optimizer state
  // persists. backward() adds into *external_grad.
  NodeId param(Matrix* value, Matrix* grad) {
    if (value == nullptr || grad == nullptr)
      throw Error(ErrorCode::config, "param: null storage");
    Node node;
    node.external_value = value;
    node.external_grad = grad;
    nodes_.push_back(std::move(node));
    const NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
    param_ids_.push_back(id);
    return id;
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Matrix& va = val(a);
    const Matrix& vb = val(b);
    if (va.cols() != vb.rows())
      throw Error(ErrorCode::shape_mismatch,
                  "matmul: " + detail::shape_str(va) + " * " +
                      detail::shape_str(vb));
    return push(va * vb, [a, b](Graph& g, NodeId out) {
      const Matrix& go = g.gref(out);
      g.gref(a).noalias() += go * g.val(b).transpose();
      g.gref(b).noalias() += g.val(a).transpose() * go;
    });
  }

  NodeId transpose(NodeId a) {
    return push(val(a).transpose(), [a](Graph& g, NodeId out) {
      g.gref(a) += g.gref(out).transpose();
    });
  }

  NodeId add(NodeId a, NodeId b) {
    const Matrix& va = val(a);
    const Matrix& vb = val(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "add: " + detail::shape_str(va) + " + " +
                      detail::shape_str(vb));
    return push(va + vb, [a, b](Graph& g, NodeId out) {
      g.gref(a) += g.gref(out);
      g.gref(b) += g.gref(out);
    });
  }

  // Broadcast a 1xC row vector across every row of a.
  NodeId add_rowvec(NodeId a, NodeId row) {
    const Matrix& va = val(a);
    const Matrix& vr = val(row);
    if (vr.rows() != 1 || vr.cols() != va.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "add_rowvec: " + detail::shape_str(va) + " + " +
                      detail::shape_str(vr));
    Matrix out = va;
    out.rowwise() += vr.row(0);
    return push(std::move(out), [a, row](Graph& g, NodeId out_id) {
      const Matrix& go = g.gref(out_id);
      g.gref(a) += go;
      g.gref(row).row(0) += go.colwise().sum();
    });
  }

  NodeId mul_elem(NodeId a, NodeId b) {
    const Matrix& va = val(a);
    const Matrix& vb = val(b);
    if (va.rows() != vb.rows() || va.cols() != vb.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "mul_elem: " + detail::shape_str(va) + " . " +
                      detail::shape_str(vb));
    return push(va.cwiseProduct(vb), [a, b](Graph& g, NodeId out) {
      const Matrix& go = g.gref(out);
      g.gref(a).array() += go.array() * g.val(b).array();
      g.gref(b).array() += go.array() * g.val(a).array();
    });
  }

  NodeId scale(NodeId a, Scalar factor) {
    return push(val(a) * factor, [a, factor](Graph& g, NodeId out) {
      g.gref(a) += g.gref(out) * factor;
    });
  }

  // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
  NodeId gelu(NodeId a) {
    const Matrix& x = val(a);
    Matrix out = x.unaryExpr([](Scalar v) {
      return Scalar(0.5) * v *
             (Scalar(1) + Scalar(std::erf(static_cast<double>(v) *
                                          0.7071067811865476)));
    });
    return push(std::move(out), [a](Graph& g, NodeId out_id) {
      const Matrix& xv = g.val(a);
      const Matrix& go = g.gref(out_id);
      g.gref(a).array() +=
          go.array() *
          xv.unaryExpr([](Scalar v) {
              const double x = static_cast<double>(v);
              const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
              const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
              return Scalar(cdf + x * pdf);
            }).array();
    });
  }

  // Row-wise softmax restricted to allowed positions; disallowed entries get
  // probability exactly zero, which also zeroes their gradient.
  NodeId softmax_masked(NodeId a, BoolMatrix allowed) {
    const Matrix& x = val(a);
    if (allowed.rows() != x.rows() || allowed.cols() != x.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "softmax_masked: mask " +
                      detail::shape_str(allowed.rows(), allowed.cols()) +
                      " vs " + detail::shape_str(x));
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Scalar top = std::numeric_limits<Scalar>::lowest();
      bool any = false;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (!allowed(i, j)) continue;
        any = true;
        top = std::max(top, x(i, j));
      }
      if (!any)
        throw Error(ErrorCode::empty_region,
                    "softmax_masked: row " + std::to_string(i) +
                        " has no allowed positions");
      Scalar total = 0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const Scalar e = allowed(i, j) ? std::exp(x(i, j) - top) : Scalar(0);
        out(i, j) = e;
        total += e;
      }
      out.row(i) /= total;
    }
    return push(std::move(out), [a](Graph& g, NodeId out_id) {
      const Matrix& p = g.val(out_id);
      const Matrix& go = g.gref(out_id);
      const Matrix dots = (p.array() * go.array()).rowwise().sum();
      g.gref(a).array() +=
          p.array() * (go.array().colwise() - dots.col(0).array());
    });
  }

  // Row-wise layer normalization with affine parameters (1xC each).
  NodeId layernorm_rows(NodeId a, NodeId gain, NodeId bias, Scalar epsilon) {
    const Matrix& x = val(a);
    const Matrix& gamma = val(gain);
    const Matrix& beta = val(bias);
    if (gamma.rows() != 1 || beta.rows() != 1 || gamma.cols() != x.cols() ||
        beta.cols() != x.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "layernorm_rows: " + detail::shape_str(x) + " with gain " +
                      detail::shape_str(gamma) + ", bias " +
                      detail::shape_str(beta));
    const Eigen::Index rows = x.rows();
    Matrix normalized(rows, x.cols());
    Matrix inv_sd(rows, 1);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Scalar mean = x.row(i).mean();
      const Scalar variance =
          (x.row(i).array() - mean).square().mean();
      const Scalar inv = Scalar(1) / std::sqrt(variance + epsilon);
      inv_sd(i, 0) = inv;
      normalized.row(i) = (x.row(i).array() - mean) * inv;
    }
    Matrix out = normalized;
    out.array().rowwise() *= gamma.row(0).array();
    out.rowwise() += beta.row(0);
    return push(std::move(out),
                [a, gain, bias, normalized, inv_sd](Graph& g, NodeId out_id) {
                  const Matrix& go = g.gref(out_id);
                  const Matrix& gamma = g.val(gain);
                  g.gref(bias).row(0) += go.colwise().sum();
                  g.gref(gain).row(0) +=
                      (go.array() * normalized.array()).colwise().sum().matrix();
                  Matrix dnorm = go;
                  dnorm.array().rowwise() *= gamma.row(0).array();
                  Matrix& ga = g.gref(a);
                  for (Eigen::Index i = 0; i < go.rows(); ++i) {
                    const Scalar m1 = dnorm.row(i).mean();
                    const Scalar m2 =
                        (dnorm.row(i).array() * normalized.row(i).array())
                            .mean();
                    ga.row(i).array() +=
                        (dnorm.row(i).array() - m1 -
                         normalized.row(i).array() * m2) *
                        inv_sd(i, 0);
                  }
                });
  }

  // Gather rows of a table by index; backward scatter-adds.
  NodeId embedding_rows(NodeId table, std::vector<int> indices) {
    const Matrix& tbl = val(table);
    Matrix out(static_cast<Eigen::Index>(indices.size()), tbl.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
      const int idx = indices[r];
      if (idx < 0 || idx >= tbl.rows())
        throw Error(ErrorCode::shape_mismatch,
                    "embedding_rows: index " + std::to_string(idx) +
                        " outside table " + detail::shape_str(tbl));
      out.row(static_cast<Eigen::Index>(r)) = tbl.row(idx);
    }
    return push(std::move(out),
                [table, indices = std::move(indices)](Graph& g, NodeId out_id) {
                  const Matrix& go = g.gref(out_id);
                  Matrix& gt = g.gref(table);
                  for (std::size_t r = 0; r < indices.size(); ++r)
                    gt.row(indices[r]) +=
                        go.row(static_cast<Eigen::Index>(r));
                });
  }

  NodeId slice_cols(NodeId a, int begin, int count) {
    const Matrix& va = val(a);
    if (begin < 0 || count < 1 || begin + count > va.cols())
      throw Error(ErrorCode::shape_mismatch,
                  "slice_cols: [" + std::to_string(begin) + ", " +
                      std::to_string(begin + count) + ") of " +
                      detail::shape_str(va));
    return push(va.middleCols(begin, count),
                [a, begin, count](Graph& g, NodeId out_id) {
                  g.gref(a).middleCols(begin, count) += g.gref(out_id);
                });
  }

  NodeId concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty())
      throw Error(ErrorCode::shape_mismatch, "concat_cols: no parts");
    Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    for (NodeId p : parts) {
      if (val(p).rows() != rows)
        throw Error(ErrorCode::shape_mismatch,
                    "concat_cols: row mismatch " + detail::shape_str(val(p)));
      cols += val(p).cols();
    }
    Matrix out(rows, cols);
    Eigen::Index offset = 0;
    for (NodeId p : parts) {
      out.middleCols(offset, val(p).cols()) = val(p);
      offset += val(p).cols();
    }
    return push(std::move(out),
                [parts](Graph& g, NodeId out_id) {
                  const Matrix& go = g.gref(out_id);
                  Eigen::Index offset = 0;
                  for (NodeId p : parts) {
                    const Eigen::Index w = g.val(p).cols();
                    g.gref(p) += go.middleCols(offset, w);
                    offset += w;
                  }
                });
  }

  NodeId sum(NodeId a) {
    Matrix out(1, 1);
    out(0, 0) = val(a).sum();
    return push(std::move(out), [a](Graph& g, NodeId out_id) {
      g.gref(a).array() += g.gref(out_id)(0, 0);
    });
  }

  // Mean next-token cross-entropy over rows with active[i] != 0, fused with
  // softmax through the log-sum-exp form.
  NodeId cross_entropy_masked(NodeId logits, std::vector<int> targets,
                              std::vector<unsigned char> active) {
    const Matrix& x = val(logits);
    if (static_cast<Eigen::Index>(targets.size()) != x.rows() ||
        targets.size() != active.size())
      throw Error(ErrorCode::shape_mismatch,
                  "cross_entropy_masked: " + std::to_string(targets.size()) +
                      " targets for logits " + detail::shape_str(x));
    Eigen::Index count = 0;
    for (unsigned char a : active) count += a ? 1 : 0;
    if (count == 0)
      throw Error(ErrorCode::empty_region,
                  "cross_entropy_masked: no active positions");

    Matrix probs(x.rows(), x.cols());
    double total = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (!active[static_cast<std::size_t>(i)]) {
        probs.row(i).setZero();
        continue;
      }
      const int t = targets[static_cast<std::size_t>(i)];
      if (t < 0 || t >= x.cols())
        throw Error(ErrorCode::shape_mismatch,
                    "cross_entropy_masked: target " + std::to_string(t) +
                        " outside vocab " + std::to_string(x.cols()));
      const Scalar top = x.row(i).maxCoeff();
      probs.row(i) = (x.row(i).array() - top).exp().matrix();
      const Scalar z = probs.row(i).sum();
      probs.row(i) /= z;
      total += static_cast<double>(top) + std::log(static_cast<double>(z)) -
               static_cast<double>(x(i, t));
    }
    Matrix out(1, 1);
    out(0, 0) = static_cast<Scalar>(total / static_cast<double>(count));
    return push(std::move(out),
                [logits, targets = std::move(targets),
                 active = std::move(active), probs = std::move(probs),
                 count](Graph& g, NodeId out_id) {
                  const Scalar upstream = g.gref(out_id)(0, 0);
                  const Scalar unit = upstream / static_cast<Scalar>(count);
                  Matrix& gx = g.gref(logits);
                  for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    if (!active[static_cast<std::size_t>(i)]) continue;
                    gx.row(i) += unit * probs.row(i);
                    gx(i, targets[static_cast<std::size_t>(i)]) -= unit;
                  }
                });
  }

  const Matrix& value(NodeId id) const { return val(id); }

  // Gradient of the last backward() with respect to node id.
  const Matrix& grad(NodeId id) const {
    check(id);
    return nodes_[static_cast<std::size_t>(id)].grad;
  }

  void backward(NodeId loss) {
    check(loss);
    const Matrix& top = val(loss);
    if (top.rows() != 1 || top.cols() != 1)
      throw Error(ErrorCode::shape_mismatch,
                  "backward: loss must be 1x1, got " + detail::shape_str(top));
    for (auto& node : nodes_) {
      const Matrix& v = node.external_value ? *node.external_value : node.value;
      node.grad.setZero(v.rows(), v.cols());
    }
    nodes_[static_cast<std::size_t>(loss)].grad(0, 0) = Scalar(1);
    for (NodeId id = loss; id >= 0; --id) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      if (node.backprop) node.backprop(*this, id);
    }
    for (NodeId id : param_ids_) {
      auto& node = nodes_[static_cast<std::size_t>(id)];
      *node.external_grad += node.grad;
    }
  }

  int size() const noexcept { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Matrix* external_value = nullptr;
    Matrix* external_grad = nullptr;
    std::function<void(Graph&, NodeId)> backprop;
  };

  void check(NodeId id) const {
    if (id < 0 || id >= size())
      throw Error(ErrorCode::config, "unknown node id " + std::to_string(id));
  }

  const Matrix& val(NodeId id) const {
    check(id);
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    return node.external_value ? *node.external_value : node.value;
  }

  Matrix& gref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

  NodeId push(Matrix value, std::function<void(Graph&, NodeId)> backprop) {
    Node node;
    node.value = std::move(value);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
  std::vector<NodeId> param_ids_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient check. loss() evaluates the scalar objective at
// the current parameter values; compute_grads() must zero the external grad
// buffers, run one forward/backward, and leave dLoss/dparam in them. Sampled
// coordinates are perturbed centrally.
// ---------------------------------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  int coords_checked = 0;
  bool passed = false;
};

template <typename Scalar>
struct ParamRef {
  DenseMatrix<Scalar>* value = nullptr;
  DenseMatrix<Scalar>* grad = nullptr;
};

template <typename Scalar>
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::function<void()>& compute_grads,
                           const std::vector<ParamRef<Scalar>>& params,
                           double epsilon, double tolerance, int coords,
                           std::uint64_t seed,
                           double denominator_floor = 1e-6) {
  compute_grads();
  std::vector<DenseMatrix<Scalar>> analytic;
  analytic.reserve(params.size());
  std::size_t total_coords = 0;
  for (const auto& p : params) {
    analytic.push_back(*p.grad);
    total_coords += static_cast<std::size_t>(p.value->size());
  }
  if (total_coords == 0)
    throw Error(ErrorCode::config, "grad_check: no parameters");

  GradCheckReport report;
  Rng rng(seed);
  double rel_sum = 0.0;
  for (int trial = 0; trial < coords; ++trial) {
    std::uint64_t flat = rng.next_below(total_coords);
    std::size_t which = 0;
    while (flat >= static_cast<std::uint64_t>(params[which].value->size())) {
      flat -= static_cast<std::uint64_t>(params[which].value->size());
      ++which;
    }
    Scalar* cell = params[which].value->data() + flat;
    const Scalar saved = *cell;
    *cell = saved + static_cast<Scalar>(epsilon);
    const double up = loss();
    *cell = saved - static_cast<Scalar>(epsilon);
    const double down = loss();
    *cell = saved;

    const double fd = (up - down) / (2.0 * epsilon);
    const double an = static_cast<double>(
        analytic[which](static_cast<Eigen::Index>(flat)));
    const double rel = std::abs(fd - an) /
                       std::max(std::abs(fd) + std::abs(an),
                                denominator_floor);
    rel_sum += rel;
    report.max_rel_error = std::max(report.max_rel_error, rel);
    ++report.coords_checked;
  }
  report.mean_rel_error = rel_sum / std::max(report.coords_checked, 1);
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace nwlab
