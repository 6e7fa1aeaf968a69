#include "segzsl/optim.hpp"

#include <algorithm>
#include <cmath>

#include "segzsl/error.hpp"

namespace segzsl {

void append_params(std::vector<Param>& out, const std::string& prefix, Mlp& model, const MlpGrads& grads) {
  if (grads.weight.size() != model.depth()) throw DimensionError("append_params: gradient depth mismatch for " + prefix);
  for (std::size_t l = 0; l < model.depth(); ++l) {
    auto& layer = model.layers()[l];
    out.push_back({prefix + "." + std::to_string(l) + ".weight", &layer.weight, &grads.weight[l]});
    out.push_back({prefix + "." + std::to_string(l) + ".bias", &layer.bias, &grads.bias[l]});
  }
}

void Adam::step(std::span<const Param> params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->rows(), p.value->cols());
      v_.emplace_back(p.value->rows(), p.value->cols());
    }
  }
  if (m_.size() != params.size()) throw DimensionError("Adam: parameter list changed length between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.grad->rows() != p.value->rows() || p.grad->cols() != p.value->cols() ||
        m_[i].rows() != p.value->rows() || m_[i].cols() != p.value->cols()) {
      throw DimensionError("Adam: shape mismatch for parameter '" + p.name + "'");
    }
    if (!p.grad->all_finite()) throw NonFiniteError("Adam: non-finite gradient for parameter '" + p.name + "'");
  }

  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].value->values();
    auto grad = params[i].grad->values();
    auto m = m_[i].values();
    auto v = v_[i].values();
    for (std::size_t k = 0; k < value.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
      v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      value[k] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

GradCheckReport finite_diff_report(const std::function<double()>& loss, std::span<const Param> params, double h,
                                   double floor) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_check: step must be > 0");
  GradCheckReport report;
  for (const auto& p : params) {
    auto values = p.value->values();
    auto grad = p.grad->values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + h;
      const double plus = loss();
      values[k] = saved - h;
      const double minus = loss();
      values[k] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double denom = std::max({std::abs(grad[k]), std::abs(numeric), floor});
      const double rel = std::abs(grad[k] - numeric) / denom;
      if (rel > report.max_rel_error || !std::isfinite(rel)) {
        report.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        report.worst_param = p.name;
        report.worst_index = k;
        report.analytic = grad[k];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace segzsl
