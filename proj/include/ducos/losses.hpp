#ifndef DUCOS_LOSSES_HPP
#define DUCOS_LOSSES_HPP

#include "ducos/fusion.hpp"
#include "ducos/image_ops.hpp"

#include <span>

namespace ducos {

/// Scalar values of one evaluation of the Lagrangian.
struct LossBundle {
  double l_rec = 0;
  double l_cf = 0;
  double l_gr = 0;
  double lagrangian = 0;
  Index n_valid = 0;
};

/// Valid-pixel mask (z > 0) as 0/1 values.
template <typename T>
Tensor<T> valid_mask(const Tensor<T>& z);

/// (1/n) sum over valid pixels of |y - z|; n = mask count. An undefined
/// mask means z > 0.
template <typename T>
Tensor<T> loss_rec(const Tensor<T>& y, const Tensor<T>& z, const Tensor<T>& mask = {});

/// (1/n) ||h_d - h_f||^2 for one stage.
template <typename T>
Tensor<T> loss_cf(const Tensor<T>& h_d, const Tensor<T>& h_f);

/// Mean of the per-stage alignment terms over the final iteration of every
/// stage.
template <typename T>
Tensor<T> loss_cf(std::span<const FusionTrace<T>> traces);

/// (1/n) || G(N(y)) - G(N(y')) ||_1 over all pixels.
template <typename T>
Tensor<T> loss_gr(const Tensor<T>& y, const Tensor<T>& y_prime, GradientOperator op = GradientOperator::central);

/// l_rec + lambda l_cf + mu l_gr. Undefined terms count as zero; negative
/// multipliers are rejected.
template <typename T>
Tensor<T> lagrangian_total(const Tensor<T>& l_rec, const Tensor<T>& l_cf, const Tensor<T>& l_gr, double lambda,
                           double mu);

}  // namespace ducos

#endif  // DUCOS_LOSSES_HPP
