#pragma once

// Reference implementations used only by the tests.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include "hta/layers.hpp"
#include "hta/random.hpp"
#include "hta/tensor.hpp"

namespace hta::oracle {

/// Direct six-loop cross-correlation with zero padding.
inline Tensor<double> conv2d_naive(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                   const Conv2dGeometry& g) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  const std::size_t HO = (H + 2 * g.pad_h - KH) / g.stride_h + 1;
  const std::size_t WO = (W + 2 * g.pad_w - KW) / g.stride_w + 1;
  Tensor<double> y({B, O, HO, WO});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < HO; ++i)
        for (std::size_t j = 0; j < WO; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < KH; ++u)
              for (std::size_t v = 0; v < KW; ++v) {
                const auto r = static_cast<std::ptrdiff_t>(i * g.stride_h + u) - static_cast<std::ptrdiff_t>(g.pad_h);
                const auto s = static_cast<std::ptrdiff_t>(j * g.stride_w + v) - static_cast<std::ptrdiff_t>(g.pad_w);
                if (r < 0 || s < 0 || r >= static_cast<std::ptrdiff_t>(H) || s >= static_cast<std::ptrdiff_t>(W)) continue;
                acc += x.at(n, c, static_cast<std::size_t>(r), static_cast<std::size_t>(s)) * w.at(o, c, u, v);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

inline Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.vec()) v = uniform(rng, lo, hi);
  return t;
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Central differences of a scalar function with respect to every entry of x.
inline Tensor<double> numeric_grad(Tensor<double>& x, const std::function<double()>& f, double eps = 1e-6) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// ||a - n|| / max(||a||, ||n||), with a floor for all-zero gradients.
inline double rel_error(const Tensor<double>& a, const Tensor<double>& n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

/// X[k] = sum_n x[n] exp(-2 pi i k n / N), summed term by term.
inline std::vector<std::complex<double>> dft_literal(const std::vector<double>& x) {
  const std::size_t n = x.size();
  const double pi = std::acos(-1.0);
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = -2.0 * pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      out[k] += x[j] * std::complex<double>(std::cos(a), std::sin(a));
    }
  return out;
}

}  // namespace hta::oracle
