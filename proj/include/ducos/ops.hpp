#ifndef DUCOS_OPS_HPP
#define DUCOS_OPS_HPP

#include "ducos/tensor.hpp"

#include <vector>

namespace ducos {

enum class BinaryKind { add, sub, mul, div };
enum class UnaryKind { neg, abs, sqrt, square, sigmoid, relu };
enum class ReduceKind { mean, sum, min, max, std };

// Elementwise arithmetic. `b` either matches `a` exactly, holds a single
// value, or is a channel vector [C] broadcast over the spatial axes of a
// [C,H,W] / [N,C,H,W] tensor.
//
// Conventions: d|x|/dx = 0 at 0; d sqrt(x)/dx = 0 at 0; division clamps
// denominators with magnitude below 1e-30 for both value and gradient.
template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, T b);
template <typename T>
Tensor<T> unary(UnaryKind kind, const Tensor<T>& a);

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);

/// Reduces over `axes` (all axes when empty); reduced axes are dropped.
/// min/max results never carry gradient. std is the population deviation.
template <typename T>
Tensor<T> reduce(ReduceKind kind, const Tensor<T>& x, std::vector<int> axes = {});

/// Same-size replicate-padded convolution for odd k; `w` is [Co,C,k,k],
/// `bias` is [Co] or undefined. Accepts [C,H,W] or [N,C,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride = 1);

/// Transposed convolution; `w` is [C,Co,k,k] with k in {2,4} and stride 2,
/// producing exactly twice the input extent.
template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride = 2);

/// Bilinear resampling, half-pixel centres (align_corners = false).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, Index out_h, Index out_w);

template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, Index bottom, Index right);
/// Keeps the top-left out_h x out_w window.
template <typename T>
Tensor<T> crop(const Tensor<T>& x, Index out_h, Index out_w);
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Shorthands.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::add, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::sub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::mul, a, b); }
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(BinaryKind::div, a, b); }
template <typename T>
Tensor<T> abs(const Tensor<T>& a) { return unary(UnaryKind::abs, a); }
template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) { return unary(UnaryKind::sqrt, a); }
template <typename T>
Tensor<T> square(const Tensor<T>& a) { return unary(UnaryKind::square, a); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) { return unary(UnaryKind::sigmoid, a); }
template <typename T>
Tensor<T> relu(const Tensor<T>& a) { return unary(UnaryKind::relu, a); }
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::vector<int> axes = {}) { return reduce(ReduceKind::sum, x, std::move(axes)); }
template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::vector<int> axes = {}) { return reduce(ReduceKind::mean, x, std::move(axes)); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& a, T s) { return elementwise(BinaryKind::add, a, s); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, T s) { return elementwise(BinaryKind::sub, a, s); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, T s) { return elementwise(BinaryKind::mul, a, s); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, T s) { return elementwise(BinaryKind::div, a, s); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return elementwise(BinaryKind::mul, a, s); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) { return unary(UnaryKind::neg, a); }
/// s - a
template <typename T>
Tensor<T> operator-(T s, const Tensor<T>& a) { return elementwise(BinaryKind::add, unary(UnaryKind::neg, a), s); }

}  // namespace ducos

#endif  // DUCOS_OPS_HPP
