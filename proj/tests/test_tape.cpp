#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "nwlab/tape.hpp"

using namespace nwlab;

namespace {

template <typename Scalar>
DenseMatrix<Scalar> random_matrix(Rng& rng, int rows, int cols,
                                  double spread = 1.0) {
  DenseMatrix<Scalar> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = static_cast<Scalar>(rng.next_normal() * spread);
  return m;
}

// Rebuilds the graph through `build` for every loss evaluation, so central
// differences see exactly the traced computation.
template <typename Scalar, typename Build>
GradCheckReport check_gradients(std::vector<DenseMatrix<Scalar>>& values,
                                Build build, double eps, double tol,
                                int coords, std::uint64_t seed,
                                double floor = 1e-6) {
  std::vector<DenseMatrix<Scalar>> grads(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    grads[i].setZero(values[i].rows(), values[i].cols());

  auto trace = [&](Graph<Scalar>& g) {
    std::vector<int> ids;
    for (std::size_t i = 0; i < values.size(); ++i)
      ids.push_back(g.param(&values[i], &grads[i]));
    return build(g, ids);
  };
  auto loss = [&]() {
    Graph<Scalar> g;
    return static_cast<double>(g.value(trace(g))(0, 0));
  };
  auto compute = [&]() {
    for (auto& gr : grads) gr.setZero();
    Graph<Scalar> g;
    g.backward(trace(g));
  };
  std::vector<ParamRef<Scalar>> refs;
  for (std::size_t i = 0; i < values.size(); ++i)
    refs.push_back({&values[i], &grads[i]});
  return grad_check<Scalar>(loss, compute, refs, eps, tol, coords, seed,
                            floor);
}

BoolMatrix causal_mask(int n) {
  BoolMatrix mask(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) mask(i, j) = j <= i;
  return mask;
}

}  // namespace

TEST_CASE("softmax values: symmetry and exact zeros under the mask") {
  Graph<double> g;
  DenseMatrix<double> logits(2, 4);
  logits << 0, 0, 0, 0, 1, 2, 3, 4;
  BoolMatrix allowed(2, 4);
  allowed.setConstant(true);
  allowed(1, 2) = false;
  allowed(1, 3) = false;

  const int p = g.softmax_masked(g.constant(logits), allowed);
  const auto& probs = g.value(p);
  for (int j = 0; j < 4; ++j) CHECK(probs(0, j) == doctest::Approx(0.25));
  CHECK(probs(1, 2) == 0.0);
  CHECK(probs(1, 3) == 0.0);
  CHECK(probs.row(1).sum() == doctest::Approx(1.0));
  CHECK(probs(1, 1) == doctest::Approx(std::exp(2.0) /
                                       (std::exp(1.0) + std::exp(2.0))));

  BoolMatrix empty_row = allowed;
  empty_row(0, 0) = empty_row(0, 1) = empty_row(0, 2) = empty_row(0, 3) = false;
  CHECK_THROWS_AS(g.softmax_masked(g.constant(logits), empty_row), Error);
}

TEST_CASE("masked positions receive exactly zero gradient") {
  DenseMatrix<float> logits(3, 3);
  logits << 0.3f, -1.0f, 0.7f, 1.0f, 0.2f, -0.5f, 0.0f, 0.0f, 0.0f;
  DenseMatrix<float> grad;
  grad.setZero(3, 3);
  Graph<float> g;
  const int in = g.param(&logits, &grad);
  const int p = g.softmax_masked(in, causal_mask(3));
  Rng rng(5u);
  const int w = g.constant(random_matrix<float>(rng, 3, 3));
  g.backward(g.sum(g.mul_elem(p, w)));
  CHECK(grad(0, 1) == 0.0f);
  CHECK(grad(0, 2) == 0.0f);
  CHECK(grad(1, 2) == 0.0f);
  CHECK(grad(2, 0) != 0.0f);
}

TEST_CASE("layernorm of a constant row is zero before affine parameters") {
  Graph<double> g;
  DenseMatrix<double> x(2, 5);
  x.row(0).setConstant(3.7);
  x.row(1).setConstant(-1.2);
  DenseMatrix<double> gain(1, 5), bias(1, 5);
  gain.setOnes();
  bias.setZero();
  const int y = g.layernorm_rows(g.constant(x), g.constant(gain),
                                 g.constant(bias), 1e-5);
  CHECK(g.value(y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cross-entropy of uniform logits is ln V") {
  Graph<double> g;
  DenseMatrix<double> logits = DenseMatrix<double>::Zero(3, 7);
  const int loss = g.cross_entropy_masked(g.constant(logits), {0, 3, 6},
                                          {1, 1, 1});
  CHECK(g.value(loss)(0, 0) == doctest::Approx(std::log(7.0)));

  // One-hot logits with a large margin drive the loss to zero.
  DenseMatrix<double> confident = DenseMatrix<double>::Zero(2, 7);
  confident(0, 2) = 50.0;
  confident(1, 5) = 50.0;
  Graph<double> g2;
  const int tiny = g2.cross_entropy_masked(g2.constant(confident), {2, 5},
                                           {1, 1});
  CHECK(g2.value(tiny)(0, 0) == doctest::Approx(0.0).epsilon(1e-12));

  Graph<double> g3;
  CHECK_THROWS_AS(
      g3.cross_entropy_masked(g3.constant(logits), {0, 3, 6}, {0, 0, 0}),
      Error);
}

TEST_CASE("sum of squares has the textbook gradient") {
  DenseMatrix<double> x(1, 3);
  x << 1, 2, 3;
  DenseMatrix<double> grad;
  grad.setZero(1, 3);
  Graph<double> g;
  const int in = g.param(&x, &grad);
  g.backward(g.sum(g.mul_elem(in, in)));
  CHECK(grad(0, 0) == doctest::Approx(2.0));
  CHECK(grad(0, 1) == doctest::Approx(4.0));
  CHECK(grad(0, 2) == doctest::Approx(6.0));
}

TEST_CASE("fan-out sums gradients through a diamond") {
  DenseMatrix<double> x(2, 2);
  x << 1, -2, 0.5, 3;
  DenseMatrix<double> grad;
  grad.setZero(2, 2);
  Graph<double> g;
  const int in = g.param(&x, &grad);
  const int left = g.scale(in, 2.0);
  const int right = g.scale(in, 3.0);
  g.backward(g.sum(g.add(left, right)));
  CHECK((grad.array() == 5.0).all());

  // Same node used twice by one op doubles its gradient.
  grad.setZero();
  Graph<double> g2;
  const int in2 = g2.param(&x, &grad);
  g2.backward(g2.sum(g2.add(in2, in2)));
  CHECK((grad.array() == 2.0).all());
}

TEST_CASE("unused parameters get exactly zero gradient") {
  DenseMatrix<double> x(2, 2), y(2, 2);
  x.setRandom();
  y.setRandom();
  DenseMatrix<double> gx, gy;
  gx.setZero(2, 2);
  gy.setZero(2, 2);
  Graph<double> g;
  const int used = g.param(&x, &gx);
  g.param(&y, &gy);
  g.backward(g.sum(used));
  CHECK((gx.array() == 1.0).all());
  CHECK((gy.array() == 0.0).all());
}

TEST_CASE("shape mismatches name the operation") {
  Graph<float> g;
  const int a = g.constant(DenseMatrix<float>::Zero(2, 3));
  const int b = g.constant(DenseMatrix<float>::Zero(2, 3));
  try {
    g.matmul(a, b);
    FAIL("expected shape mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::shape_mismatch);
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, g.constant(DenseMatrix<float>::Zero(3, 2))), Error);
  CHECK_THROWS_AS(g.slice_cols(a, 2, 2), Error);
  CHECK_THROWS_AS(g.embedding_rows(a, {0, 5}), Error);
}

TEST_CASE("every primitive passes central-difference checks in both widths") {
  Rng shapes(2024u);
  int float_coords = 0;

  // Each builder wires its op into a scalar objective through a fixed random
  // weighting so the output gradient is non-degenerate.

  auto weighted_sum = [](auto& g, int node, std::uint64_t seed) {
    Rng r(seed);
    using S = std::decay_t<decltype(g.value(0)(0, 0))>;
    auto w = random_matrix<S>(r, static_cast<int>(g.value(node).rows()),
                              static_cast<int>(g.value(node).cols()));
    return g.sum(g.mul_elem(node, g.constant(w)));
  };

  auto run_both = [&](const char* name, auto make_values, auto build) {
    // 64-bit: tight tolerance against the analytic rules.
    {
      auto values = make_values.template operator()<double>();
      const auto report = check_gradients<double>(
          values,
          [&](Graph<double>& g, const std::vector<int>& ids) {
            return build(g, ids);
          },
          1e-5, 1e-6, 12, 99);
      INFO(name << " (double): max rel " << report.max_rel_error);
      CHECK(report.passed);
    }
    // 32-bit: the shipped 1e-3 tolerance.
    {
      auto values = make_values.template operator()<float>();
      const auto report = check_gradients<float>(
          values,
          [&](Graph<float>& g, const std::vector<int>& ids) {
            return build(g, ids);
          },
          1e-2, 1e-3, 12, 99, 1e-4);
      INFO(name << " (float): max rel " << report.max_rel_error);
      CHECK(report.passed);
      float_coords += report.coords_checked;
    }
  };

  auto vals = [&]<typename S>(std::initializer_list<std::pair<int, int>> dims,
                              double spread = 0.8) {
    std::vector<DenseMatrix<S>> out;
    for (auto [r, c] : dims)
      out.push_back(random_matrix<S>(shapes, r, c, spread));
    return out;
  };
  (void)vals;

  run_both(
      "matmul",
      [&]<typename S>() {
        Rng r(41u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 3, 4),
                                           random_matrix<S>(r, 4, 2)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.matmul(ids[0], ids[1]), 7);
      });

  run_both(
      "transpose",
      [&]<typename S>() {
        Rng r(42u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 3, 5)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.transpose(ids[0]), 8);
      });

  run_both(
      "add_rowvec",
      [&]<typename S>() {
        Rng r(43u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 4, 3),
                                           random_matrix<S>(r, 1, 3)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.add_rowvec(ids[0], ids[1]), 9);
      });

  run_both(
      "gelu",
      [&]<typename S>() {
        Rng r(44u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 4, 4, 1.5)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.gelu(ids[0]), 10);
      });

  run_both(
      "softmax_masked",
      [&]<typename S>() {
        Rng r(45u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 4, 4)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.softmax_masked(ids[0], causal_mask(4)), 11);
      });

  run_both(
      "layernorm_rows",
      [&]<typename S>() {
        Rng r(46u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 3, 6, 1.2),
                                           random_matrix<S>(r, 1, 6, 0.3),
                                           random_matrix<S>(r, 1, 6, 0.3)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(
            g, g.layernorm_rows(ids[0], ids[1], ids[2],
                                static_cast<std::decay_t<decltype(g.value(0)(
                                    0, 0))>>(1e-5)),
            12);
      });

  run_both(
      "embedding_rows",
      [&]<typename S>() {
        Rng r(47u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 6, 4)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return weighted_sum(g, g.embedding_rows(ids[0], {0, 2, 2, 5, 1}), 13);
      });

  run_both(
      "slice_concat",
      [&]<typename S>() {
        Rng r(48u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 3, 6)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        const int left = g.slice_cols(ids[0], 0, 2);
        const int right = g.slice_cols(ids[0], 2, 4);
        return weighted_sum(g, g.concat_cols({right, left}), 14);
      });

  run_both(
      "scale_add_mul",
      [&]<typename S>() {
        Rng r(49u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 3, 3),
                                           random_matrix<S>(r, 3, 3)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        using S = std::decay_t<decltype(g.value(0)(0, 0))>;
        return weighted_sum(
            g, g.mul_elem(g.scale(g.add(ids[0], ids[1]), S(0.7)), ids[0]), 15);
      });

  run_both(
      "cross_entropy_masked",
      [&]<typename S>() {
        Rng r(50u);
        return std::vector<DenseMatrix<S>>{random_matrix<S>(r, 5, 6)};
      },
      [&](auto& g, const std::vector<int>& ids) {
        return g.cross_entropy_masked(ids[0], {1, 0, 5, 3, 2},
                                      {1, 0, 1, 1, 0});
      });

  CHECK(float_coords >= 100);
}

TEST_CASE("cross-entropy of softmax on random projections, 32-bit") {
  Rng r(1234u);
  std::vector<DenseMatrix<float>> values{random_matrix<float>(r, 3, 4, 1.0),
                                         random_matrix<float>(r, 4, 5, 1.0)};
  const auto report = check_gradients<float>(
      values,
      [](Graph<float>& g, const std::vector<int>& ids) {
        return g.cross_entropy_masked(g.matmul(ids[0], ids[1]), {1, 4, 2},
                                      {1, 1, 1});
      },
      1e-3, 1e-3, 20, 77);
  INFO("max rel " << report.max_rel_error);
  CHECK(report.passed);
}
