#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "segzsl/matrix.hpp"
#include "segzsl/mlp.hpp"

namespace segzsl {

/// A trainable tensor paired with its gradient for the current step.
struct Param {
  std::string name;
  Matrix* value = nullptr;
  const Matrix* grad = nullptr;
};

/// Appends one Param per weight and bias of `model`, named "<prefix>.<layer>.weight|bias".
void append_params(std::vector<Param>& out, const std::string& prefix, Mlp& model, const MlpGrads& grads);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are allocated on the first step and
/// bound positionally to the parameter list, which must keep the same
/// order and shapes afterwards.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  void step(std::span<const Param> params);

  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t step_ = 0;
};

/// Central-difference gradient check. For every entry of every parameter the
/// analytic gradient g is compared with (L(p+h) − L(p−h)) / 2h via
/// |g − ĝ| / max(|g|, |ĝ|, floor); the maximum is returned.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

GradCheckReport finite_diff_report(const std::function<double()>& loss, std::span<const Param> params,
                                   double h = 1e-6, double floor = 1e-6);

inline double finite_diff_check(const std::function<double()>& loss, std::span<const Param> params,
                                double h = 1e-6, double floor = 1e-6) {
  return finite_diff_report(loss, params, h, floor).max_rel_error;
}

}  // namespace segzsl
