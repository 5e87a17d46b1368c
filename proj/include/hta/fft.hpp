#pragma once

// Discrete Fourier transforms: the literal double-sum reference and a fast
// plan (iterative radix-2, with Bluestein's chirp-z for other lengths).

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <vector>

#include "hta/error.hpp"

namespace hta {

using cplx = std::complex<double>;

/// X[k] = sum_n x[n] exp(-2 pi i k n / N), evaluated term by term.
inline std::vector<cplx> dft_oracle(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // reduce k*t mod n first so the angle stays small and exact
      const double angle = -2.0 * std::numbers::pi *
                           static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * cplx(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

constexpr bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

class FftPlan {
 public:
  explicit FftPlan(std::size_t n) : n_(n) {
    if (n == 0) fail(ErrorCode::ConfigError, "FFT length must be >= 1");
    if (is_pow2(n)) {
      init_radix2();
    } else {
      init_bluestein();
    }
  }

  std::size_t size() const { return n_; }

  /// In-place forward transform of exactly size() values.
  void forward(std::span<cplx> data) const {
    if (data.size() != n_) fail(ErrorCode::ShapeMismatch, "FFT input length mismatch");
    if (inner_) {
      bluestein(data);
    } else {
      radix2(data);
    }
  }

  std::vector<cplx> forward_real(std::span<const double> x) const {
    std::vector<cplx> buf(x.begin(), x.end());
    forward(buf);
    return buf;
  }

 private:
  void init_radix2() {
    rev_.resize(n_);
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n_) ++bits;
    for (std::size_t i = 0; i < n_; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      rev_[i] = r;
    }
    twiddle_.resize(n_ / 2);
    for (std::size_t k = 0; k < n_ / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
  }

  void radix2(std::span<cplx> a) const {
    for (std::size_t i = 0; i < n_; ++i)
      if (i < rev_[i]) std::swap(a[i], a[rev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const cplx w = twiddle_[j * stride];
          const cplx u = a[start + j];
          const cplx v = a[start + j + half] * w;
          a[start + j] = u + v;
          a[start + j + half] = u - v;
        }
      }
    }
  }

  // x[n] * conj-chirp convolved with chirp, via a power-of-two plan of
  // length >= 2N - 1.
  void init_bluestein() {
    std::size_t m = 1;
    while (m < 2 * n_ - 1) m <<= 1;
    inner_ = std::make_unique<FftPlan>(m);
    chirp_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t k2 = (k * k) % (2 * n_);
      const double a = std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n_);
      chirp_[k] = {std::cos(a), -std::sin(a)};  // exp(-i pi k^2 / N)
    }
    kernel_fft_.assign(m, 0.0);
    kernel_fft_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n_; ++k) {
      kernel_fft_[k] = std::conj(chirp_[k]);
      kernel_fft_[m - k] = std::conj(chirp_[k]);
    }
    inner_->forward(kernel_fft_);
  }

  void bluestein(std::span<cplx> data) const {
    const std::size_t m = inner_->size();
    std::vector<cplx> a(m, 0.0);
    for (std::size_t k = 0; k < n_; ++k) a[k] = data[k] * chirp_[k];
    inner_->forward(a);
    for (std::size_t k = 0; k < m; ++k) a[k] *= kernel_fft_[k];
    // inverse via conjugation trick
    for (auto& v : a) v = std::conj(v);
    inner_->forward(a);
    const double scale = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n_; ++k) data[k] = std::conj(a[k]) * scale * chirp_[k];
  }

  std::size_t n_;
  std::vector<std::size_t> rev_;
  std::vector<cplx> twiddle_;
  std::unique_ptr<FftPlan> inner_;
  std::vector<cplx> chirp_;
  std::vector<cplx> kernel_fft_;
};

inline std::vector<cplx> fft(std::span<const double> x) { return FftPlan(x.size()).forward_real(x); }

}  // namespace hta
