#include "ducos/losses.hpp"

#include <stdexcept>

namespace ducos {

template <typename T>
Tensor<T> valid_mask(const Tensor<T>& z) {
  return Tensor<T>(z.shape(), Vec<T>((z.values() > T(0)).template cast<T>()));
}

template <typename T>
Tensor<T> loss_rec(const Tensor<T>& y, const Tensor<T>& z, const Tensor<T>& mask) {
  if (y.shape() != z.shape()) {
    throw ShapeError("loss_rec shape mismatch: " + shape_string(y.shape()) + " vs " + shape_string(z.shape()));
  }
  const Tensor<T> m = mask.defined() ? mask : valid_mask(z);
  if (m.shape() != z.shape()) throw ShapeError("loss_rec mask shape mismatch");
  const T n = m.values().sum();
  if (!(n > T(0))) throw std::invalid_argument("loss_rec: no valid pixels");
  return sum(ducos::abs(y - z) * m) / n;
}

template <typename T>
Tensor<T> loss_cf(const Tensor<T>& h_d, const Tensor<T>& h_f) {
  if (!h_d.defined() || !h_f.defined()) throw std::invalid_argument("loss_cf: missing projection");
  if (h_d.shape() != h_f.shape()) throw ShapeError("loss_cf shape mismatch");
  return mean(square(h_d - h_f));
}

template <typename T>
Tensor<T> loss_cf(std::span<const FusionTrace<T>> traces) {
  if (traces.empty()) throw std::invalid_argument("loss_cf: no fusion traces");
  Tensor<T> total;
  for (const auto& t : traces) {
    const Tensor<T> term = loss_cf(t.h_d, t.h_f);
    total = total.defined() ? total + term : term;
  }
  return total / static_cast<T>(traces.size());
}

template <typename T>
Tensor<T> loss_gr(const Tensor<T>& y, const Tensor<T>& y_prime, GradientOperator op) {
  if (y.shape() != y_prime.shape()) {
    throw ShapeError("loss_gr shape mismatch: " + shape_string(y.shape()) + " vs " + shape_string(y_prime.shape()));
  }
  const Tensor<T> gy = gradient_magnitude(minmax_normalize(y), op);
  const Tensor<T> gp = gradient_magnitude(minmax_normalize(y_prime), op);
  return mean(ducos::abs(gy - gp));
}

template <typename T>
Tensor<T> lagrangian_total(const Tensor<T>& l_rec, const Tensor<T>& l_cf, const Tensor<T>& l_gr, double lambda,
                           double mu) {
  if (lambda < 0 || mu < 0) throw std::invalid_argument("Lagrange multipliers must be nonnegative");
  Tensor<T> total = l_rec;
  if (l_cf.defined()) total = total + l_cf * static_cast<T>(lambda);
  if (l_gr.defined()) total = total + l_gr * static_cast<T>(mu);
  return total;
}

#define DUCOS_INSTANTIATE_LOSSES(T)                                                               \
  template Tensor<T> valid_mask(const Tensor<T>&);                                                \
  template Tensor<T> loss_rec(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> loss_cf(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> loss_cf(std::span<const FusionTrace<T>>);                                    \
  template Tensor<T> loss_gr(const Tensor<T>&, const Tensor<T>&, GradientOperator);               \
  template Tensor<T> lagrangian_total(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double, double);

DUCOS_INSTANTIATE_LOSSES(float)
DUCOS_INSTANTIATE_LOSSES(double)

}  // namespace ducos
