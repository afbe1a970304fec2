#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nwlab/model.hpp"

namespace nwlab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.1;
  double epsilon = 1e-8;
};

// AdamW with decoupled weight decay: the decay shrink happens before the
// adaptive update, so a zero-gradient step still moves weights by exactly
// lr * weight_decay of their magnitude.
template <typename Scalar>
class AdamW {
 public:
  AdamW(const AdamWConfig& config, Parameters<Scalar>& params)
      : config_(config) {
    for (auto& ref : tensor_refs(params)) {
      m_.emplace_back(DenseMatrix<Scalar>::Zero(ref.tensor->rows(),
                                                ref.tensor->cols()));
      v_.emplace_back(DenseMatrix<Scalar>::Zero(ref.tensor->rows(),
                                                ref.tensor->cols()));
    }
  }

  void step(Parameters<Scalar>& params, Parameters<Scalar>& grads,
            double lr) {
    ++step_count_;
    const double bias1 = 1.0 - std::pow(config_.beta1, double(step_count_));
    const double bias2 = 1.0 - std::pow(config_.beta2, double(step_count_));
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar lr_s = static_cast<Scalar>(lr);
    const Scalar decay_shrink =
        static_cast<Scalar>(1.0 - lr * config_.weight_decay);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);
    const Scalar inv_bias1 = static_cast<Scalar>(1.0 / bias1);
    const Scalar inv_bias2 = static_cast<Scalar>(1.0 / bias2);

    auto value_refs = tensor_refs(params);
    auto grad_refs = tensor_refs(grads);
    if (value_refs.size() != grad_refs.size() || value_refs.size() != m_.size())
      throw Error(ErrorCode::shape_mismatch,
                  "optimizer state does not match parameter layout");

    for (std::size_t i = 0; i < value_refs.size(); ++i) {
      auto& theta = *value_refs[i].tensor;
      const auto& g = *grad_refs[i].tensor;
      if (theta.rows() != g.rows() || theta.cols() != g.cols())
        throw Error(ErrorCode::shape_mismatch,
                    "gradient shape mismatch at " + value_refs[i].name);
      theta *= decay_shrink;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i].array() = b2 * v_[i].array() + (Scalar(1) - b2) * g.array().square();
      theta.array() -= lr_s * (m_[i].array() * inv_bias1) /
                       ((v_[i].array() * inv_bias2).sqrt() + eps);
    }
  }

  std::int64_t step_count() const noexcept { return step_count_; }
  void set_step_count(std::int64_t t) noexcept { step_count_ = t; }
  std::vector<DenseMatrix<Scalar>>& first_moments() noexcept { return m_; }
  std::vector<DenseMatrix<Scalar>>& second_moments() noexcept { return v_; }

 private:
  AdamWConfig config_;
  std::vector<DenseMatrix<Scalar>> m_, v_;
  std::int64_t step_count_ = 0;
};

struct LRSchedule {
  double lr_max = 1e-3;
  double lr_min = 1e-4;
  std::int64_t horizon = 1;
};

// Cosine decay from lr_max at t = 0 to lr_min at t = horizon; endpoints are
// returned verbatim so they hold to machine precision.
inline double cosine_lr(std::int64_t t, const LRSchedule& schedule) {
  if (schedule.horizon < 1)
    throw Error(ErrorCode::config, "schedule horizon must be positive");
  if (t <= 0) return schedule.lr_max;
  if (t >= schedule.horizon) return schedule.lr_min;
  const double phase =
      M_PI * double(t) / double(schedule.horizon);
  return schedule.lr_min +
         0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + std::cos(phase));
}

}  // namespace nwlab
