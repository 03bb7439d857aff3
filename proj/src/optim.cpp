#include "adprog/optim.hpp"

#include <cmath>

#include "adprog/error.hpp"

namespace adprog {
namespace {

void check_finite(std::span<const double> grad, const std::string& name) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam: non-finite gradient in " + name + " at entry " + std::to_string(i));
    }
  }
}

void update(std::span<double> param, std::span<const double> grad, AdamMoments& state, double lr,
            const AdamConfig& cfg) {
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

void check_shapes(std::span<const double> param, std::span<const double> grad, const AdamMoments& state,
                  const std::string& name) {
  if (!grad.empty() && grad.size() != param.size()) {
    throw DimensionError("adam: gradient of " + name + " has " + std::to_string(grad.size()) + " entries, expected " +
                         std::to_string(param.size()));
  }
  if (!state.m.empty() && (state.m.size() != param.size() || state.v.size() != param.size())) {
    throw DimensionError("adam: moment buffers of " + name + " do not match the parameter");
  }
}

}  // namespace

void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& state, double lr,
               const AdamConfig& cfg, const std::string& name) {
  check_shapes(param, grad, state, name);
  check_finite(grad, name);
  update(param, grad, state, lr, cfg);
}

Adam::Adam(const ParamList& params, AdamConfig cfg) : cfg_(cfg) {
  for (const NamedParam& p : params) {
    if (!p.tensor.requires_grad()) continue;
    if (!moments_.emplace(p.name, AdamMoments{}).second) throw ConfigError("adam: duplicate parameter " + p.name);
    params_.push_back(p);
  }
}

void Adam::step(double lr) {
  for (const NamedParam& p : params_) {
    const std::span<const double> grad = p.tensor.has_grad() ? p.tensor.grad() : std::span<const double>{};
    check_shapes(p.tensor.values(), grad, moments_.at(p.name), p.name);
    check_finite(grad, p.name);
  }
  for (NamedParam& p : params_) {
    const std::span<const double> grad = p.tensor.has_grad() ? p.tensor.grad() : std::span<const double>{};
    update(p.tensor.mutable_values(), grad, moments_.at(p.name), lr, cfg_);
  }
}

void Adam::set_moments(std::map<std::string, AdamMoments> moments) {
  for (const NamedParam& p : params_) {
    const auto it = moments.find(p.name);
    if (it == moments.end()) throw InputError("adam: no moments for " + p.name);
    if (!it->second.m.empty() && it->second.m.size() != p.tensor.numel()) {
      throw DimensionError("adam: moments for " + p.name + " have the wrong size");
    }
  }
  if (moments.size() != params_.size()) throw InputError("adam: moment set names unknown parameters");
  moments_ = std::move(moments);
}

}  // namespace adprog
