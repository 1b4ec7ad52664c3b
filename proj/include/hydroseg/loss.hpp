#pragma once

#include "hydroseg/common.hpp"
#include "hydroseg/tensor.hpp"

namespace hydroseg {

struct LossConfig {
  double epsilon = 1.0;        // dice smoothing term
  double w_background = 0.2289;
  double w_water = 0.7711;
  double lambda_bce = 1.0;
  double lambda_dice = 1.0;
};

inline void validate(const LossConfig& cfg) {
  require(cfg.epsilon > 0.0, errkind::config, "loss epsilon must be > 0");
  require(cfg.w_background > 0.0 && cfg.w_water > 0.0, errkind::config,
          "class weights must be > 0");
}

/// Soft Dice loss: 1 - (2*sum(p*y) + eps) / (sum(p) + sum(y) + eps).
/// p in [0,1], y in {0,1}, same shape. Differentiable in p.
template <typename T>
Tensor<T> dice_loss(Tape<T>& tape, const Tensor<T>& p, const Tensor<T>& y, T epsilon) {
  require(p.shape == y.shape, errkind::shape_mismatch, "dice_loss: p/y shapes differ");
  require(p.numel() >= 1, errkind::bad_argument, "dice_loss: empty tensors");
  Tensor<T> inter = tape.sum_all(tape.mul(p, y));
  Tensor<T> psum = tape.sum_all(p);
  Tensor<T> ysum = tape.sum_all(y);
  Tensor<T> num = tape.affine(inter, T(2), epsilon);
  Tensor<T> den = tape.affine(tape.add(psum, ysum), T(1), epsilon);
  return tape.affine(tape.div(num, den), T(-1), T(1));
}

/// Class-weighted binary cross-entropy with the probability clamp applied
/// first: -(1/N) sum [ w_water*y*log(p) + w_background*(1-y)*log(1-p) ].
/// Unit weights reduce it to the plain binary cross-entropy.
template <typename T>
Tensor<T> weighted_bce_loss(Tape<T>& tape, const Tensor<T>& p, const Tensor<T>& y,
                            T w_background, T w_water) {
  require(p.shape == y.shape, errkind::shape_mismatch, "weighted_bce_loss: p/y shapes differ");
  require(p.numel() >= 1, errkind::bad_argument, "weighted_bce_loss: empty tensors");
  Tensor<T> wy(y.shape), wb(y.shape);
  for (size_t i = 0; i < y.numel(); ++i) {
    wy.data[i] = w_water * y.data[i];
    wb.data[i] = w_background * (T(1) - y.data[i]);
  }
  const T lo = T(1e-7), hi = T(1) - T(1e-7);
  Tensor<T> pc = tape.clamp(p, lo, hi);
  Tensor<T> term = tape.add(tape.mul(tape.log(pc), wy),
                            tape.mul(tape.log(tape.affine(pc, T(-1), T(1))), wb));
  return tape.scalar_mul(tape.mean_all(term), T(-1));
}

/// lambda_bce * weighted_bce + lambda_dice * dice
template <typename T>
Tensor<T> compound_loss(Tape<T>& tape, const Tensor<T>& p, const Tensor<T>& y,
                        const LossConfig& cfg) {
  Tensor<T> bce = weighted_bce_loss(tape, p, y, T(cfg.w_background), T(cfg.w_water));
  Tensor<T> dice = dice_loss(tape, p, y, T(cfg.epsilon));
  return tape.add(tape.scalar_mul(bce, T(cfg.lambda_bce)),
                  tape.scalar_mul(dice, T(cfg.lambda_dice)));
}

}  // namespace hydroseg
