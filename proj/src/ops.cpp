#include "ducos/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ducos {

namespace {

struct Broadcast {
  enum Mode { same, scalar, channel } mode = same;
  Index outer = 1;
  Index channels = 1;
  Index inner = 1;
};

Broadcast classify(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) return bc;
  if (numel(b) == 1) {
    bc.mode = Broadcast::scalar;
    return bc;
  }
  if (b.size() == 1 && a.size() >= 2) {
    const std::size_t ch = a.size() == 4 ? 1 : 0;
    if (a[ch] == b[0]) {
      bc.mode = Broadcast::channel;
      bc.channels = b[0];
      for (std::size_t i = 0; i < ch; ++i) bc.outer *= a[i];
      for (std::size_t i = ch + 1; i < a.size(); ++i) bc.inner *= a[i];
      return bc;
    }
  }
  throw ShapeError("cannot broadcast " + shape_string(b) + " against " + shape_string(a));
}

template <typename T>
Vec<T> expand(const Broadcast& bc, const Vec<T>& b, Index n) {
  switch (bc.mode) {
    case Broadcast::same:
      return b;
    case Broadcast::scalar:
      return Vec<T>::Constant(n, b[0]);
    case Broadcast::channel: {
      Vec<T> out(n);
      Index k = 0;
      for (Index o = 0; o < bc.outer; ++o)
        for (Index c = 0; c < bc.channels; ++c) {
          out.segment(k, bc.inner).setConstant(b[c]);
          k += bc.inner;
        }
      return out;
    }
  }
  return b;
}

template <typename T>
Vec<T> collapse(const Broadcast& bc, const Vec<T>& g, Index b_size) {
  switch (bc.mode) {
    case Broadcast::same:
      return g;
    case Broadcast::scalar:
      return Vec<T>::Constant(b_size, g.sum());
    case Broadcast::channel: {
      Vec<T> out = Vec<T>::Zero(bc.channels);
      Index k = 0;
      for (Index o = 0; o < bc.outer; ++o)
        for (Index c = 0; c < bc.channels; ++c) {
          out[c] += g.segment(k, bc.inner).sum();
          k += bc.inner;
        }
      return out;
    }
  }
  return g;
}

template <typename T>
Vec<T> safe_denominator(const Vec<T>& b) {
  constexpr T tiny = T(1e-30);
  return b.unaryExpr([](T v) { return std::abs(v) < tiny ? (v < 0 ? -tiny : tiny) : v; });
}

struct SpatialDims {
  Index n = 1, c = 1, h = 1, w = 1;
};

SpatialDims spatial_dims(const Shape& s, const char* op) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(op) + " expects [C,H,W] or [N,C,H,W], got " + shape_string(s));
}

Shape spatial_shape(std::size_t rank, Index n, Index c, Index h, Index w) {
  if (rank == 3) return {c, h, w};
  return {n, c, h, w};
}

template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

}  // namespace

template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  const Broadcast bc = classify(a.shape(), b.shape());
  const Index n = a.numel();
  const Index nb = b.numel();
  Vec<T> bf = expand(bc, b.values(), n);
  Vec<T> out;
  switch (kind) {
    case BinaryKind::add: out = a.values() + bf; break;
    case BinaryKind::sub: out = a.values() - bf; break;
    case BinaryKind::mul: out = a.values() * bf; break;
    case BinaryKind::div: bf = safe_denominator(bf); out = a.values() / bf; break;
  }
  auto an = a.node();
  auto bn = b.node();
  return record<T>(a.shape(), std::move(out), {a, b}, [kind, an, bn, bc, nb, bf](const Vec<T>& g) {
    switch (kind) {
      case BinaryKind::add:
        an->accumulate(g);
        if (bn->requires_grad) bn->accumulate(collapse<T>(bc, g, nb));
        break;
      case BinaryKind::sub:
        an->accumulate(g);
        if (bn->requires_grad) bn->accumulate(collapse<T>(bc, -g, nb));
        break;
      case BinaryKind::mul:
        if (an->requires_grad) an->accumulate(g * bf);
        if (bn->requires_grad) bn->accumulate(collapse<T>(bc, g * an->value, nb));
        break;
      case BinaryKind::div:
        if (an->requires_grad) an->accumulate(g / bf);
        if (bn->requires_grad) bn->accumulate(collapse<T>(bc, -g * an->value / (bf * bf), nb));
        break;
    }
  });
}

template <typename T>
Tensor<T> elementwise(BinaryKind kind, const Tensor<T>& a, T b) {
  if (kind == BinaryKind::div) {
    if (std::abs(b) < T(1e-30)) b = b < 0 ? T(-1e-30) : T(1e-30);
    kind = BinaryKind::mul;
    b = T(1) / b;
  }
  Vec<T> out;
  switch (kind) {
    case BinaryKind::add: out = a.values() + b; break;
    case BinaryKind::sub: out = a.values() - b; break;
    default: out = a.values() * b; break;
  }
  auto an = a.node();
  return record<T>(a.shape(), std::move(out), {a}, [kind, an, b](const Vec<T>& g) {
    if (kind == BinaryKind::mul) {
      an->accumulate(g * b);
    } else {
      an->accumulate(g);
    }
  });
}

template <typename T>
Tensor<T> unary(UnaryKind kind, const Tensor<T>& a) {
  const Vec<T>& x = a.values();
  Vec<T> out;
  switch (kind) {
    case UnaryKind::neg: out = -x; break;
    case UnaryKind::abs: out = x.abs(); break;
    case UnaryKind::sqrt: out = x.max(T(0)).sqrt(); break;
    case UnaryKind::square: out = x.square(); break;
    case UnaryKind::sigmoid: out = (T(1) + (-x).exp()).inverse(); break;
    case UnaryKind::relu: out = x.max(T(0)); break;
  }
  auto an = a.node();
  // The closure keeps a copy of the output for sqrt/sigmoid; it must not
  // hold the result node itself.
  Vec<T> kept = (kind == UnaryKind::sqrt || kind == UnaryKind::sigmoid) ? out : Vec<T>();
  return record<T>(a.shape(), std::move(out), {a}, [kind, an, kept](const Vec<T>& g) {
    const Vec<T>& x = an->value;
    switch (kind) {
      case UnaryKind::neg:
        an->accumulate(-g);
        break;
      case UnaryKind::abs:
        an->accumulate(g * x.unaryExpr([](T v) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); }));
        break;
      case UnaryKind::sqrt:
        an->accumulate(g * kept.unaryExpr([](T s) { return s > 0 ? T(0.5) / s : T(0); }));
        break;
      case UnaryKind::square:
        an->accumulate(g * T(2) * x);
        break;
      case UnaryKind::sigmoid:
        an->accumulate(g * kept * (T(1) - kept));
        break;
      case UnaryKind::relu:
        an->accumulate(g * (x > T(0)).template cast<T>());
        break;
    }
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  auto an = a.node();
  return record<T>(a.shape(), a.values().max(lo).min(hi), {a}, [an, lo, hi](const Vec<T>& g) {
    const Vec<T>& x = an->value;
    an->accumulate(g * ((x >= lo) && (x <= hi)).template cast<T>());
  });
}

template <typename T>
Tensor<T> reduce(ReduceKind kind, const Tensor<T>& x, std::vector<int> axes) {
  const Shape& shape = x.shape();
  const int rank = x.rank();
  if (axes.empty())
    for (int i = 0; i < rank; ++i) axes.push_back(i);
  for (int& ax : axes) {
    if (ax < 0) ax += rank;
    if (ax < 0 || ax >= rank) throw ShapeError("reduction axis out of range for " + shape_string(shape));
  }
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  if (rank == 0) axes.clear();

  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (int ax : axes) reduced[static_cast<std::size_t>(ax)] = true;
  Shape out_shape;
  Index count = 1;
  for (int i = 0; i < rank; ++i) {
    if (reduced[static_cast<std::size_t>(i)]) {
      count *= shape[static_cast<std::size_t>(i)];
    } else {
      out_shape.push_back(shape[static_cast<std::size_t>(i)]);
    }
  }
  if (x.numel() == 0 || count == 0) throw ShapeError("empty reduction set over " + shape_string(shape));
  const Index out_n = numel(out_shape);

  // Output slot of every input element.
  std::vector<Index> slot(static_cast<std::size_t>(x.numel()));
  {
    std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
    for (Index i = 0; i < x.numel(); ++i) {
      Index o = 0;
      for (int d = 0; d < rank; ++d)
        if (!reduced[static_cast<std::size_t>(d)]) o = o * shape[static_cast<std::size_t>(d)] + idx[static_cast<std::size_t>(d)];
      slot[static_cast<std::size_t>(i)] = o;
      for (int d = rank - 1; d >= 0; --d) {
        if (++idx[static_cast<std::size_t>(d)] < shape[static_cast<std::size_t>(d)]) break;
        idx[static_cast<std::size_t>(d)] = 0;
      }
    }
  }

  const Vec<T>& v = x.values();
  auto slots = std::make_shared<const std::vector<Index>>(slot);
  auto gather = [slots](const Vec<T>& per_slot, Index n) {
    Vec<T> out(n);
    for (Index i = 0; i < n; ++i) out[i] = per_slot[(*slots)[static_cast<std::size_t>(i)]];
    return out;
  };

  if (kind == ReduceKind::min || kind == ReduceKind::max) {
    const bool is_min = kind == ReduceKind::min;
    Vec<T> out = Vec<T>::Constant(out_n, is_min ? std::numeric_limits<T>::infinity()
                                                : -std::numeric_limits<T>::infinity());
    for (Index i = 0; i < v.size(); ++i) {
      T& o = out[slot[static_cast<std::size_t>(i)]];
      o = is_min ? std::min(o, v[i]) : std::max(o, v[i]);
    }
    return Tensor<T>(out_shape, std::move(out));
  }

  Vec<T> sums = Vec<T>::Zero(out_n);
  for (Index i = 0; i < v.size(); ++i) sums[slot[static_cast<std::size_t>(i)]] += v[i];
  auto xn = x.node();
  const Index n = x.numel();

  if (kind == ReduceKind::sum || kind == ReduceKind::mean) {
    const T scale = kind == ReduceKind::mean ? T(1) / static_cast<T>(count) : T(1);
    Vec<T> out = sums * scale;
    return record<T>(out_shape, std::move(out), {x}, [xn, gather, scale, n](const Vec<T>& g) {
      xn->accumulate(gather(g, n) * scale);
    });
  }

  // Population standard deviation.
  const T inv = T(1) / static_cast<T>(count);
  Vec<T> means = sums * inv;
  Vec<T> centered = v - gather(means, n);
  Vec<T> sq = Vec<T>::Zero(out_n);
  for (Index i = 0; i < n; ++i) sq[slot[static_cast<std::size_t>(i)]] += centered[i] * centered[i];
  Vec<T> out = (sq * inv).sqrt();
  Vec<T> stdev = out;
  return record<T>(out_shape, std::move(out), {x}, [xn, gather, centered, stdev, inv, n](const Vec<T>& g) {
    Vec<T> coef = (stdev > T(0)).select(g * inv / stdev, T(0));
    xn->accumulate(gather(coef, n) * centered);
  });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride) {
  const SpatialDims d = spatial_dims(x.shape(), "conv2d");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("conv2d weight must be [Co,C,k,k]");
  if (w.dim(1) != d.c) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(x.shape()) + ", weight " +
                     shape_string(w.shape()));
  }
  const Index co = w.dim(0);
  const Index k = w.dim(2);
  if (k % 2 == 0) throw ShapeError("conv2d kernel must be odd");
  if (stride < 1) throw ShapeError("conv2d stride must be positive");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) throw ShapeError("conv2d bias must be [Co]");
  const Index pad = k / 2;
  const Index ho = (d.h + 2 * pad - k) / stride + 1;
  const Index wo = (d.w + 2 * pad - k) / stride + 1;
  const Index rows = d.c * k * k;
  const Index cols_n = ho * wo;
  const bool direct = k == 1 && stride == 1;

  auto im2col = [=](const T* src, RowMatrix<T>& cols) {
    cols.resize(rows, cols_n);
    for (Index c = 0; c < d.c; ++c)
      for (Index ki = 0; ki < k; ++ki)
        for (Index kj = 0; kj < k; ++kj) {
          T* dst = cols.data() + ((c * k + ki) * k + kj) * cols_n;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index sy = std::clamp<Index>(oy * stride + ki - pad, 0, d.h - 1);
            const T* row = src + (c * d.h + sy) * d.w;
            T* out_row = dst + oy * wo;
            if (stride == 1) {
              // interior columns are a contiguous shifted copy
              const Index lo = std::min<Index>(std::max<Index>(pad - kj, 0), wo);
              const Index hi = std::max<Index>(std::min<Index>(d.w + pad - kj, wo), lo);
              for (Index ox = 0; ox < lo; ++ox) out_row[ox] = row[0];
              std::copy(row + lo + kj - pad, row + hi + kj - pad, out_row + lo);
              for (Index ox = hi; ox < wo; ++ox) out_row[ox] = row[d.w - 1];
              continue;
            }
            for (Index ox = 0; ox < wo; ++ox) {
              out_row[ox] = row[std::clamp<Index>(ox * stride + kj - pad, 0, d.w - 1)];
            }
          }
        }
  };

  const ConstMatMap<T> wm(w.values().data(), co, rows);
  Vec<T> out(d.n * co * cols_n);
  RowMatrix<T> cols;
  for (Index n = 0; n < d.n; ++n) {
    const T* src = x.values().data() + n * d.c * d.h * d.w;
    MatMap<T> dst(out.data() + n * co * cols_n, co, cols_n);
    if (direct) {
      dst.noalias() = wm * ConstMatMap<T>(src, rows, cols_n);
    } else {
      im2col(src, cols);
      dst.noalias() = wm * cols;
    }
    if (bias.defined()) dst.colwise() += bias.values().matrix();
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  Shape shape = spatial_shape(x.shape().size(), d.n, co, ho, wo);
  return record<T>(std::move(shape), std::move(out), std::move(inputs),
                   [=](const Vec<T>& g) {
                     const ConstMatMap<T> wmat(wn->value.data(), co, rows);
                     Vec<T> gw = Vec<T>::Zero(wn->value.size());
                     Vec<T> gx = xn->requires_grad ? Vec<T>::Zero(xn->value.size()) : Vec<T>();
                     Vec<T> gb = Vec<T>::Zero(co);
                     MatMap<T> gwm(gw.data(), co, rows);
                     RowMatrix<T> cols;
                     RowMatrix<T> gcols;
                     for (Index n = 0; n < d.n; ++n) {
                       const T* src = xn->value.data() + n * d.c * d.h * d.w;
                       const ConstMatMap<T> gout(g.data() + n * co * cols_n, co, cols_n);
                       gb += gout.rowwise().sum().array();
                       if (direct) {
                         gwm.noalias() += gout * ConstMatMap<T>(src, rows, cols_n).transpose();
                       } else {
                         im2col(src, cols);
                         gwm.noalias() += gout * cols.transpose();
                       }
                       if (!xn->requires_grad) continue;
                       T* gdst = gx.data() + n * d.c * d.h * d.w;
                       if (direct) {
                         MatMap<T>(gdst, rows, cols_n).noalias() += wmat.transpose() * gout;
                         continue;
                       }
                       gcols.noalias() = wmat.transpose() * gout;
                       for (Index c = 0; c < d.c; ++c)
                         for (Index ki = 0; ki < k; ++ki)
                           for (Index kj = 0; kj < k; ++kj) {
                             const T* srow = gcols.data() + ((c * k + ki) * k + kj) * cols_n;
                             for (Index oy = 0; oy < ho; ++oy) {
                               const Index sy = std::clamp<Index>(oy * stride + ki - pad, 0, d.h - 1);
                               T* row = gdst + (c * d.h + sy) * d.w;
                               const T* grow = srow + oy * wo;
                               if (stride == 1) {
                                 const Index lo = std::min<Index>(std::max<Index>(pad - kj, 0), wo);
                                 const Index hi = std::max<Index>(std::min<Index>(d.w + pad - kj, wo), lo);
                                 for (Index ox = 0; ox < lo; ++ox) row[0] += grow[ox];
                                 Eigen::Map<Vec<T>>(row + lo + kj - pad, hi - lo) +=
                                     Eigen::Map<const Vec<T>>(grow + lo, hi - lo);
                                 for (Index ox = hi; ox < wo; ++ox) row[d.w - 1] += grow[ox];
                                 continue;
                               }
                               for (Index ox = 0; ox < wo; ++ox) {
                                 row[std::clamp<Index>(ox * stride + kj - pad, 0, d.w - 1)] += grow[ox];
                               }
                             }
                           }
                     }
                     if (xn->requires_grad) xn->accumulate(gx);
                     wn->accumulate(gw);
                     if (bn) bn->accumulate(gb);
                   });
}

template <typename T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride) {
  const SpatialDims d = spatial_dims(x.shape(), "deconv2d");
  if (d.h <= 0 || d.w <= 0) throw ShapeError("deconv2d needs positive spatial dims");
  if (w.rank() != 4 || w.dim(2) != w.dim(3)) throw ShapeError("deconv2d weight must be [C,Co,k,k]");
  if (w.dim(0) != d.c) throw ShapeError("deconv2d channel mismatch");
  const Index co = w.dim(1);
  const Index k = w.dim(2);
  if (stride < 1 || k < stride || (k - stride) % 2 != 0) {
    throw ShapeError("deconv2d kernel/stride combination must satisfy k >= s and even k - s");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co)) throw ShapeError("deconv2d bias must be [Co]");
  const Index pad = (k - stride) / 2;
  const Index ho = d.h * stride;
  const Index wo = d.w * stride;
  const Index hw = d.h * d.w;
  const Index rows = co * k * k;

  // Visits every (kernel tap, input pixel) pair that lands inside the output.
  auto for_taps = [=](auto&& fn) {
    for (Index c = 0; c < co; ++c)
      for (Index ki = 0; ki < k; ++ki)
        for (Index kj = 0; kj < k; ++kj) {
          const Index r = (c * k + ki) * k + kj;
          for (Index iy = 0; iy < d.h; ++iy) {
            const Index oy = iy * stride + ki - pad;
            if (oy < 0 || oy >= ho) continue;
            for (Index ix = 0; ix < d.w; ++ix) {
              const Index ox = ix * stride + kj - pad;
              if (ox < 0 || ox >= wo) continue;
              fn(r, iy * d.w + ix, (c * ho + oy) * wo + ox);
            }
          }
        }
  };

  const ConstMatMap<T> wm(w.values().data(), d.c, rows);
  Vec<T> out = Vec<T>::Zero(d.n * co * ho * wo);
  RowMatrix<T> cols;
  for (Index n = 0; n < d.n; ++n) {
    const ConstMatMap<T> xm(x.values().data() + n * d.c * hw, d.c, hw);
    cols.noalias() = wm.transpose() * xm;
    T* dst = out.data() + n * co * ho * wo;
    for_taps([&](Index r, Index in, Index o) { dst[o] += cols(r, in); });
    if (bias.defined())
      for (Index c = 0; c < co; ++c) {
        Eigen::Map<Vec<T>>(dst + c * ho * wo, ho * wo) += bias.values()[c];
      }
  }

  auto xn = x.node();
  auto wn = w.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  Shape shape = spatial_shape(x.shape().size(), d.n, co, ho, wo);
  return record<T>(std::move(shape), std::move(out), std::move(inputs), [=](const Vec<T>& g) {
    const ConstMatMap<T> wmat(wn->value.data(), d.c, rows);
    Vec<T> gw = Vec<T>::Zero(wn->value.size());
    Vec<T> gx = Vec<T>::Zero(xn->value.size());
    Vec<T> gb = Vec<T>::Zero(co);
    MatMap<T> gwm(gw.data(), d.c, rows);
    RowMatrix<T> gcols(rows, hw);
    for (Index n = 0; n < d.n; ++n) {
      const T* gsrc = g.data() + n * co * ho * wo;
      gcols.setZero();
      for_taps([&](Index r, Index in, Index o) { gcols(r, in) = gsrc[o]; });
      for (Index c = 0; c < co; ++c) gb[c] += Eigen::Map<const Vec<T>>(gsrc + c * ho * wo, ho * wo).sum();
      const ConstMatMap<T> xm(xn->value.data() + n * d.c * hw, d.c, hw);
      gwm.noalias() += xm * gcols.transpose();
      MatMap<T>(gx.data() + n * d.c * hw, d.c, hw).noalias() += wmat * gcols;
    }
    xn->accumulate(gx);
    wn->accumulate(gw);
    if (bn) bn->accumulate(gb);
  });
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, Index out_h, Index out_w) {
  const SpatialDims d = spatial_dims(x.shape(), "resize_bilinear");
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear output dims must be >= 1");
  if (d.h < 1 || d.w < 1) throw ShapeError("resize_bilinear input dims must be >= 1");

  struct Tap {
    Index i0, i1;
    T frac;
  };
  auto taps = [](Index in, Index out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (Index o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0) src = 0;
      Index i0 = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
      Index i1 = std::min<Index>(i0 + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {i0, i1, static_cast<T>(src - static_cast<double>(i0))};
    }
    return t;
  };
  const auto ty = taps(d.h, out_h);
  const auto tx = taps(d.w, out_w);
  const Index planes = d.n * d.c;

  Vec<T> out(planes * out_h * out_w);
  for (Index p = 0; p < planes; ++p) {
    const T* src = x.values().data() + p * d.h * d.w;
    T* dst = out.data() + p * out_h * out_w;
    for (Index oy = 0; oy < out_h; ++oy) {
      const Tap& a = ty[static_cast<std::size_t>(oy)];
      for (Index ox = 0; ox < out_w; ++ox) {
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        const T top = (T(1) - b.frac) * src[a.i0 * d.w + b.i0] + b.frac * src[a.i0 * d.w + b.i1];
        const T bot = (T(1) - b.frac) * src[a.i1 * d.w + b.i0] + b.frac * src[a.i1 * d.w + b.i1];
        dst[oy * out_w + ox] = (T(1) - a.frac) * top + a.frac * bot;
      }
    }
  }
  auto xn = x.node();
  Shape shape = spatial_shape(x.shape().size(), d.n, d.c, out_h, out_w);
  return record<T>(std::move(shape), std::move(out), {x}, [=](const Vec<T>& g) {
    Vec<T> gx = Vec<T>::Zero(xn->value.size());
    for (Index p = 0; p < planes; ++p) {
      const T* gs = g.data() + p * out_h * out_w;
      T* gd = gx.data() + p * d.h * d.w;
      for (Index oy = 0; oy < out_h; ++oy) {
        const Tap& a = ty[static_cast<std::size_t>(oy)];
        for (Index ox = 0; ox < out_w; ++ox) {
          const Tap& b = tx[static_cast<std::size_t>(ox)];
          const T v = gs[oy * out_w + ox];
          gd[a.i0 * d.w + b.i0] += v * (T(1) - a.frac) * (T(1) - b.frac);
          gd[a.i0 * d.w + b.i1] += v * (T(1) - a.frac) * b.frac;
          gd[a.i1 * d.w + b.i0] += v * a.frac * (T(1) - b.frac);
          gd[a.i1 * d.w + b.i1] += v * a.frac * b.frac;
        }
      }
    }
    xn->accumulate(gx);
  });
}

template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, Index bottom, Index right) {
  const SpatialDims d = spatial_dims(x.shape(), "pad_replicate");
  if (bottom < 0 || right < 0) throw ShapeError("pad_replicate amounts must be >= 0");
  if (bottom == 0 && right == 0) return x;
  const Index oh = d.h + bottom;
  const Index ow = d.w + right;
  const Index planes = d.n * d.c;
  Vec<T> out(planes * oh * ow);
  for (Index p = 0; p < planes; ++p)
    for (Index y = 0; y < oh; ++y)
      for (Index xx = 0; xx < ow; ++xx) {
        out[(p * oh + y) * ow + xx] =
            x.values()[(p * d.h + std::min(y, d.h - 1)) * d.w + std::min(xx, d.w - 1)];
      }
  auto xn = x.node();
  Shape shape = spatial_shape(x.shape().size(), d.n, d.c, oh, ow);
  return record<T>(std::move(shape), std::move(out), {x}, [=](const Vec<T>& g) {
    Vec<T> gx = Vec<T>::Zero(xn->value.size());
    for (Index p = 0; p < planes; ++p)
      for (Index y = 0; y < oh; ++y)
        for (Index xx = 0; xx < ow; ++xx) {
          gx[(p * d.h + std::min(y, d.h - 1)) * d.w + std::min(xx, d.w - 1)] += g[(p * oh + y) * ow + xx];
        }
    xn->accumulate(gx);
  });
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, Index out_h, Index out_w) {
  const SpatialDims d = spatial_dims(x.shape(), "crop");
  if (out_h < 1 || out_w < 1 || out_h > d.h || out_w > d.w) throw ShapeError("crop window out of range");
  if (out_h == d.h && out_w == d.w) return x;
  const Index planes = d.n * d.c;
  Vec<T> out(planes * out_h * out_w);
  for (Index p = 0; p < planes; ++p)
    for (Index y = 0; y < out_h; ++y)
      out.segment((p * out_h + y) * out_w, out_w) = x.values().segment((p * d.h + y) * d.w, out_w);
  auto xn = x.node();
  Shape shape = spatial_shape(x.shape().size(), d.n, d.c, out_h, out_w);
  return record<T>(std::move(shape), std::move(out), {x}, [=](const Vec<T>& g) {
    Vec<T> gx = Vec<T>::Zero(xn->value.size());
    for (Index p = 0; p < planes; ++p)
      for (Index y = 0; y < out_h; ++y)
        gx.segment((p * d.h + y) * d.w, out_w) = g.segment((p * out_h + y) * out_w, out_w);
    xn->accumulate(gx);
  });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const SpatialDims da = spatial_dims(a.shape(), "concat_channels");
  const SpatialDims db = spatial_dims(b.shape(), "concat_channels");
  if (a.rank() != b.rank() || da.n != db.n || da.h != db.h || da.w != db.w) {
    throw ShapeError("concat_channels shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const Index plane = da.h * da.w;
  const Index sa = da.c * plane;
  const Index sb = db.c * plane;
  Vec<T> out(da.n * (sa + sb));
  for (Index n = 0; n < da.n; ++n) {
    out.segment(n * (sa + sb), sa) = a.values().segment(n * sa, sa);
    out.segment(n * (sa + sb) + sa, sb) = b.values().segment(n * sb, sb);
  }
  auto an = a.node();
  auto bn = b.node();
  Shape shape = spatial_shape(a.shape().size(), da.n, da.c + db.c, da.h, da.w);
  return record<T>(std::move(shape), std::move(out), {a, b}, [=](const Vec<T>& g) {
    Vec<T> ga(an->value.size());
    Vec<T> gb(bn->value.size());
    for (Index n = 0; n < da.n; ++n) {
      ga.segment(n * sa, sa) = g.segment(n * (sa + sb), sa);
      gb.segment(n * sb, sb) = g.segment(n * (sa + sb) + sa, sb);
    }
    an->accumulate(ga);
    bn->accumulate(gb);
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_string(x.shape()) + " -> " + shape_string(shape) + " changes size");
  }
  auto xn = x.node();
  return record<T>(std::move(shape), x.values(), {x}, [xn](const Vec<T>& g) { xn->accumulate(g); });
}

#define DUCOS_INSTANTIATE_OPS(T)                                                               \
  template Tensor<T> elementwise(BinaryKind, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> elementwise(BinaryKind, const Tensor<T>&, T);                           \
  template Tensor<T> unary(UnaryKind, const Tensor<T>&);                                     \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                                          \
  template Tensor<T> reduce(ReduceKind, const Tensor<T>&, std::vector<int>);                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);      \
  template Tensor<T> deconv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);    \
  template Tensor<T> resize_bilinear(const Tensor<T>&, Index, Index);                        \
  template Tensor<T> pad_replicate(const Tensor<T>&, Index, Index);                          \
  template Tensor<T> crop(const Tensor<T>&, Index, Index);                                   \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> reshape(const Tensor<T>&, Shape);

DUCOS_INSTANTIATE_OPS(float)
DUCOS_INSTANTIATE_OPS(double)

}  // namespace ducos
