#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/tensor.hpp"

namespace hydroseg {

struct OptimConfig {
  double base_lr = 6e-6;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int warmup_iters = 1500;
  double warmup_factor = 1e-6;
  int total_iters = 20000;
  double min_lr = 1e-5;
  double poly_power = 1.0;
  int batch_size = 6;
};

inline void validate(const OptimConfig& cfg) {
  require(cfg.base_lr > 0 && cfg.weight_decay >= 0 && cfg.adam_eps > 0, errkind::config,
          "optimizer constants must be positive");
  require(cfg.warmup_iters >= 0 && cfg.total_iters > cfg.warmup_iters, errkind::config,
          "warmup_iters must be < total_iters");
  require(cfg.batch_size >= 1, errkind::config, "batch_size must be >= 1");
}

/// A min_lr floor above the base rate would pin the whole decay phase to the
/// floor, so the floor only engages when min_lr < base_lr.
inline std::vector<std::string> optim_config_warnings(const OptimConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.min_lr >= cfg.base_lr)
    out.push_back("min_lr >= base_lr; decay floor disabled");
  return out;
}

/// Linear warmup from warmup_factor*base_lr to base_lr, then polynomial decay
/// to zero (floored at min_lr when min_lr < base_lr). Continuous at the
/// warmup boundary.
inline double lr_at(int64_t iter, const OptimConfig& cfg) {
  require(iter >= 0 && iter <= cfg.total_iters, errkind::bad_argument,
          "lr_at: iteration out of range");
  if (iter < cfg.warmup_iters) {
    const double t = double(iter) / double(cfg.warmup_iters);
    return cfg.base_lr * (cfg.warmup_factor + (1.0 - cfg.warmup_factor) * t);
  }
  const double frac =
      double(iter - cfg.warmup_iters) / double(cfg.total_iters - cfg.warmup_iters);
  double lr = cfg.base_lr * std::pow(1.0 - frac, cfg.poly_power);
  if (cfg.min_lr < cfg.base_lr) lr = std::max(lr, cfg.min_lr);
  return lr;
}

template <typename T>
struct AdamWState {
  std::map<std::string, std::vector<T>> m;
  std::map<std::string, std::vector<T>> v;
  int64_t step = 0;
};

/// Decoupled weight decay (param -= lr*wd*param) followed by the Adam moment
/// update with bias correction.
template <typename T>
void adamw_step(std::map<std::string, Tensor<T>>& params,
                const std::map<std::string, std::vector<T>>& grads, AdamWState<T>& state,
                double lr, const OptimConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  for (auto& [name, param] : params) {
    auto git = grads.find(name);
    require(git != grads.end(), errkind::bad_argument, "adamw_step: missing gradient " + name);
    const auto& g = git->second;
    require(g.size() == param.numel(), errkind::shape_mismatch,
            "adamw_step: gradient size mismatch for " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(param.numel(), T(0));
    if (v.empty()) v.assign(param.numel(), T(0));
    for (size_t i = 0; i < param.numel(); ++i) {
      param.data[i] -= T(lr * cfg.weight_decay) * param.data[i];
      m[i] = T(cfg.beta1) * m[i] + T(1.0 - cfg.beta1) * g[i];
      v[i] = T(cfg.beta2) * v[i] + T(1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = double(m[i]) / bc1;
      const double vhat = double(v[i]) / bc2;
      param.data[i] -= T(lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

}  // namespace hydroseg
