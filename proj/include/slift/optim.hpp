#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "model.hpp"

namespace slift {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay:
//   p <- p - lr * wd * p
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <class T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  void step(std::vector<NamedParam<T>>& params, double lr) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.var.value().numel(), 0.0);
        v_.emplace_back(p.var.value().numel(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ShapeError("AdamW: parameter list changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& var = params[k].var;
      auto w = var.mutable_value().data();
      if (m_[k].size() != w.size()) throw ShapeError("AdamW: parameter " + params[k].name + " changed size");
      const bool has = var.has_grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = has ? static_cast<double>(var.grad()[i]) : 0.0;
        double p = static_cast<double>(w[i]);
        p -= lr * cfg_.weight_decay * p;
        m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g;
        v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g * g;
        p -= lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.eps);
        w[i] = static_cast<T>(p);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

enum class ScheduleKind { constant, cosine_warm_restarts, step_decay };

struct ScheduleConfig {
  ScheduleKind kind = ScheduleKind::cosine_warm_restarts;
  std::size_t t0 = 10;
  std::size_t t_mult = 2;
  double eta_min = 0.0;
  std::size_t step = 10;
  double gamma = 0.1;
};

// eta_min + (eta_0 - eta_min) (1 + cos(pi t_cur / T_i)) / 2
inline double cosine_lr(double eta0, double eta_min, double t_cur, double period) {
  return eta_min + 0.5 * (eta0 - eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / period));
}

// Learning rate for a 0-based epoch.
inline double scheduled_lr(double base_lr, std::size_t epoch, const ScheduleConfig& s) {
  switch (s.kind) {
    case ScheduleKind::constant: return base_lr;
    case ScheduleKind::step_decay: {
      if (s.step == 0) throw ConfigError("step_decay: step must be >= 1");
      return base_lr * std::pow(s.gamma, static_cast<double>(epoch / s.step));
    }
    case ScheduleKind::cosine_warm_restarts: {
      if (s.t0 == 0 || s.t_mult == 0) throw ConfigError("cosine schedule: t0 and t_mult must be >= 1");
      std::size_t period = s.t0, t_cur = epoch;
      while (t_cur >= period) {
        t_cur -= period;
        period *= s.t_mult;
      }
      return cosine_lr(base_lr, s.eta_min, static_cast<double>(t_cur), static_cast<double>(period));
    }
  }
  throw ConfigError("unknown schedule kind");
}

template <class T>
double global_grad_norm(const std::vector<NamedParam<T>>& params) {
  double s = 0;
  for (const auto& p : params)
    if (p.var.has_grad())
      for (auto g : p.var.grad().data()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

// Rescale all gradients so their joint L2 norm is at most max_norm. Returns the
// pre-clip norm.
template <class T>
double clip_grad_norm(std::vector<NamedParam<T>>& params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("grad clip threshold must be > 0");
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double f = max_norm / (norm + 1e-12);
    for (auto& p : params) {
      if (!p.var.has_grad()) continue;
      auto* node = p.var.node();
      for (auto& g : node->grad.data()) g = static_cast<T>(static_cast<double>(g) * f);
    }
  }
  return norm;
}

template <class T>
void clip_grad_value(std::vector<NamedParam<T>>& params, double limit) {
  if (!(limit > 0)) throw ConfigError("grad clip threshold must be > 0");
  for (auto& p : params) {
    if (!p.var.has_grad()) continue;
    for (auto& g : p.var.node()->grad.data()) g = static_cast<T>(std::clamp<double>(g, -limit, limit));
  }
}

}  // namespace slift
