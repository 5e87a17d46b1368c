#pragma once

// Layer kernels with explicit forward and backward passes. Every kernel is a
// template over the scalar type: float for training, double for gradient
// checking.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "hta/error.hpp"
#include "hta/tensor.hpp"

namespace hta {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

struct Conv2dGeometry {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;

  /// floor((H + 2p - k) / s) + 1; throws when the kernel does not fit.
  std::size_t out_h(std::size_t h) const { return out_extent(h, kernel_h, stride_h, pad_h); }
  std::size_t out_w(std::size_t w) const { return out_extent(w, kernel_w, stride_w, pad_w); }

  static std::size_t out_extent(std::size_t n, std::size_t k, std::size_t s, std::size_t p) {
    if (s == 0 || k == 0) fail(ErrorCode::ShapeMismatch, "kernel and stride must be >= 1");
    if (n + 2 * p < k) fail(ErrorCode::ShapeMismatch, "kernel larger than padded input");
    return (n + 2 * p - k) / s + 1;
  }
};

namespace detail {

// cols[(c*kh + i)*kw + j][oh*Wo + ow] = x[c][oh*sh - ph + i][ow*sw - pw + j]
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w,
            const Conv2dGeometry& g, std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t spatial = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = x + c * h * w;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        T* row = cols + ((c * g.kernel_h + i) * g.kernel_w + j) * spatial;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + i) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          T* dst = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(ih) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + j) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) ? T{0}
                                                                       : src[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into the (zeroed) image.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w,
            const Conv2dGeometry& g, std::size_t ho, std::size_t wo, T* x) {
  const std::size_t spatial = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = x + c * h * w;
    for (std::size_t i = 0; i < g.kernel_h; ++i) {
      for (std::size_t j = 0; j < g.kernel_w; ++j) {
        const T* row = cols + ((c * g.kernel_h + i) * g.kernel_w + j) * spatial;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride_h + i) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(ih) * w;
          const T* src = row + oh * wo;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride_w + j) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Conv2dGeometry& g) {
  require_rank(input.shape(), 4, "conv2d input");
  require_rank(weight.shape(), 4, "conv2d weight");
  if (weight.dim(1) != input.dim(1))
    fail(ErrorCode::ShapeMismatch, "conv2d: weight in-channels " + std::to_string(weight.dim(1)) +
                                       " != input channels " + std::to_string(input.dim(1)));
  if (weight.dim(2) != g.kernel_h || weight.dim(3) != g.kernel_w)
    fail(ErrorCode::ShapeMismatch, "conv2d: weight kernel does not match geometry");
  require_shape(bias.shape(), {weight.dim(0)}, "conv2d bias");
}

}  // namespace detail

/// Convolution lowered to a matrix product per sample: out = W * im2col(x) + b.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         const Conv2dGeometry& g) {
  detail::check_conv_shapes(input, weight, bias, g);
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  const std::size_t ho = g.out_h(h), wo = g.out_w(w);
  const std::size_t k = cin * g.kernel_h * g.kernel_w;
  const std::size_t spatial = ho * wo;

  Tensor<T> out({batch, cout, ho, wo});
  AlignedVector<T> cols(k * spatial);
  ConstMatMap<T> wm(weight.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(k));
  for (std::size_t b = 0; b < batch; ++b) {
    detail::im2col(input.data() + b * cin * h * w, cin, h, w, g, ho, wo, cols.data());
    ConstMatMap<T> cm(cols.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(spatial));
    MatMap<T> om(out.data() + b * cout * spatial, static_cast<Eigen::Index>(cout),
                 static_cast<Eigen::Index>(spatial));
    om.noalias() = wm * cm;
    for (std::size_t o = 0; o < cout; ++o) om.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;   // empty when not requested
  Tensor<T> weight;
  Tensor<T> bias;
};

/// Exact gradients of conv2d_forward given dL/dout.
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out, const Conv2dGeometry& g,
                               bool need_input_grad = true) {
  require_rank(input.shape(), 4, "conv2d input");
  const std::size_t batch = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = weight.dim(0);
  const std::size_t ho = g.out_h(h), wo = g.out_w(w);
  require_shape(grad_out.shape(), {batch, cout, ho, wo}, "conv2d grad_out");
  const std::size_t k = cin * g.kernel_h * g.kernel_w;
  const std::size_t spatial = ho * wo;
  const auto ek = static_cast<Eigen::Index>(k);
  const auto es = static_cast<Eigen::Index>(spatial);
  const auto eo = static_cast<Eigen::Index>(cout);

  Conv2dGrads<T> grads;
  grads.weight = Tensor<T>(weight.shape());
  grads.bias = Tensor<T>({cout});
  if (need_input_grad) grads.input = Tensor<T>(input.shape());

  AlignedVector<T> cols(k * spatial);
  ConstMatMap<T> wm(weight.data(), eo, ek);
  MatMap<T> dw(grads.weight.data(), eo, ek);
  for (std::size_t b = 0; b < batch; ++b) {
    ConstMatMap<T> dout(grad_out.data() + b * cout * spatial, eo, es);
    detail::im2col(input.data() + b * cin * h * w, cin, h, w, g, ho, wo, cols.data());
    ConstMatMap<T> cm(cols.data(), ek, es);
    dw.noalias() += dout * cm.transpose();
    for (std::size_t o = 0; o < cout; ++o) {
      const T* row = grad_out.data() + (b * cout + o) * spatial;
      T acc{};
      for (std::size_t i = 0; i < spatial; ++i) acc += row[i];
      grads.bias[o] += acc;
    }
    if (need_input_grad) {
      MatMap<T> dcols(cols.data(), ek, es);
      dcols.noalias() = wm.transpose() * dout;
      detail::col2im(cols.data(), cin, h, w, g, ho, wo, grads.input.data() + b * cin * h * w);
    }
  }
  return grads;
}

enum class Mode { Train, Eval };

/// Per-channel batch normalization state over (B, H, W).
template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  explicit BatchNormState(std::size_t channels = 0)
      : gamma({channels}, T{1}),
        beta({channels}, T{0}),
        running_mean({channels}, T{0}),
        running_var({channels}, T{1}) {}

  std::size_t channels() const { return gamma.size(); }
};

/// Values retained by a train-mode forward pass for the backward pass.
template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<double> inv_std;
};

namespace detail {

template <typename T>
void batchnorm_apply(const Tensor<T>& input, std::size_t c, double mean, double inv_std,
                     double gamma, double beta, Tensor<T>& out, Tensor<T>* xhat) {
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t off = (b * ch + c) * plane;
    const T* p = input.data() + off;
    T* o = out.data() + off;
    for (std::size_t i = 0; i < plane; ++i) {
      const double xh = (p[i] - mean) * inv_std;
      if (xhat) (*xhat)[off + i] = static_cast<T>(xh);
      o[i] = static_cast<T>(gamma * xh + beta);
    }
  }
}

template <typename T>
void check_bn_input(const Tensor<T>& input, const BatchNormState<T>& state) {
  require_rank(input.shape(), 4, "batchnorm2d input");
  if (input.dim(1) != state.channels())
    fail(ErrorCode::ShapeMismatch, "batchnorm2d channel count mismatch");
}

}  // namespace detail

/// Eval mode: normalize by the running statistics.
template <typename T>
Tensor<T> batchnorm2d_infer(const Tensor<T>& input, const BatchNormState<T>& state) {
  detail::check_bn_input(input, state);
  Tensor<T> out(input.shape());
  for (std::size_t c = 0; c < state.channels(); ++c) {
    const double inv_std = 1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.eps);
    detail::batchnorm_apply<T>(input, c, state.running_mean[c], inv_std, state.gamma[c],
                               state.beta[c], out, nullptr);
  }
  return out;
}

/// Train mode: normalize by batch statistics (biased variance) and fold them
/// into the running statistics (unbiased variance) with the state momentum.
template <typename T>
Tensor<T> batchnorm2d_train(const Tensor<T>& input, BatchNormState<T>& state,
                            BatchNormCache<T>* cache = nullptr) {
  detail::check_bn_input(input, state);
  const std::size_t batch = input.dim(0), ch = input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  const std::size_t count = batch * plane;
  if (count < 2)
    fail(ErrorCode::DegenerateBatch, "batch statistics need at least 2 values per channel");

  Tensor<T> out(input.shape());
  if (cache) {
    cache->xhat = Tensor<T>(input.shape());
    cache->inv_std.assign(ch, 0.0);
  }
  for (std::size_t c = 0; c < ch; ++c) {
    double mean = 0.0, var = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = input.data() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) mean += p[i];
    }
    mean /= static_cast<double>(count);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* p = input.data() + (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        var += d * d;
      }
    }
    var /= static_cast<double>(count);
    const double unbiased = var * static_cast<double>(count) / static_cast<double>(count - 1);
    state.running_mean[c] =
        static_cast<T>((1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean);
    state.running_var[c] =
        static_cast<T>((1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased);
    const double inv_std = 1.0 / std::sqrt(var + state.eps);
    if (cache) cache->inv_std[c] = inv_std;
    detail::batchnorm_apply<T>(input, c, mean, inv_std, state.gamma[c], state.beta[c], out,
                               cache ? &cache->xhat : nullptr);
  }
  return out;
}

template <typename T>
Tensor<T> batchnorm2d_forward(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                              BatchNormCache<T>* cache = nullptr) {
  return mode == Mode::Train ? batchnorm2d_train(input, state, cache)
                             : batchnorm2d_infer(input, state);
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> input, gamma, beta;
};

/// Backward of a train-mode batch normalization.
template <typename T>
BatchNormGrads<T> batchnorm2d_backward(const Tensor<T>& grad_out, const BatchNormState<T>& state,
                                       const BatchNormCache<T>& cache) {
  require_shape(grad_out.shape(), cache.xhat.shape(), "batchnorm2d grad_out");
  const std::size_t batch = grad_out.dim(0), ch = grad_out.dim(1);
  const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(batch * plane);

  BatchNormGrads<T> g{Tensor<T>(grad_out.shape()), Tensor<T>({ch}), Tensor<T>({ch})};
  for (std::size_t c = 0; c < ch; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += static_cast<double>(grad_out[off + i]) * cache.xhat[off + i];
      }
    }
    g.beta[c] = static_cast<T>(sum_dy);
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    const double scale = state.gamma[c] * cache.inv_std[c];
    const double mean_dy = sum_dy / count, mean_dy_xhat = sum_dy_xhat / count;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * ch + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        g.input[off + i] = static_cast<T>(
            scale * (grad_out[off + i] - mean_dy - cache.xhat[off + i] * mean_dy_xhat));
    }
  }
  return g;
}

template <typename T>
Tensor<T> tanh_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const auto n = static_cast<Eigen::Index>(input.size());
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(out.data(), n) =
      Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>(input.data(), n).tanh();
  return out;
}

/// Takes the forward output y = tanh(x); returns upstream * (1 - y^2).
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
  require_shape(grad_out.shape(), output.shape(), "tanh grad_out");
  Tensor<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) g[i] = grad_out[i] * (T{1} - output[i] * output[i]);
  return g;
}

/// B x C x H x W -> B x C spatial mean.
template <typename T>
Tensor<T> avgpool_forward(const Tensor<T>& input) {
  require_rank(input.shape(), 4, "avgpool input");
  const std::size_t bc = input.dim(0) * input.dim(1);
  const std::size_t plane = input.dim(2) * input.dim(3);
  if (plane == 0) fail(ErrorCode::ShapeMismatch, "avgpool needs H, W >= 1");
  Tensor<T> out({input.dim(0), input.dim(1)});
  for (std::size_t i = 0; i < bc; ++i) {
    double acc = 0.0;
    const T* p = input.data() + i * plane;
    for (std::size_t j = 0; j < plane; ++j) acc += p[j];
    out[i] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return out;
}

template <typename T>
Tensor<T> avgpool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  require_shape(grad_out.shape(), {input_shape.at(0), input_shape.at(1)}, "avgpool grad_out");
  const std::size_t plane = input_shape[2] * input_shape[3];
  Tensor<T> g(input_shape);
  const T inv = T{1} / static_cast<T>(plane);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    std::fill(g.data() + i * plane, g.data() + (i + 1) * plane, grad_out[i] * inv);
  return g;
}

/// B x In -> B x Out with weight Out x In.
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  if (weight.dim(1) != input.dim(1))
    fail(ErrorCode::ShapeMismatch, "linear: weight width " + std::to_string(weight.dim(1)) +
                                       " != input width " + std::to_string(input.dim(1)));
  require_shape(bias.shape(), {weight.dim(0)}, "linear bias");
  const auto b = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(input.dim(1));
  const auto outw = static_cast<Eigen::Index>(weight.dim(0));
  Tensor<T> out({input.dim(0), weight.dim(0)});
  MatMap<T> om(out.data(), b, outw);
  om.noalias() = ConstMatMap<T>(input.data(), b, in) * ConstMatMap<T>(weight.data(), outw, in).transpose();
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index o = 0; o < outw; ++o) om(r, o) += bias[static_cast<std::size_t>(o)];
  return out;
}

template <typename T>
struct LinearGrads {
  Tensor<T> input, weight, bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight,
                               const Tensor<T>& grad_out) {
  require_shape(grad_out.shape(), {input.dim(0), weight.dim(0)}, "linear grad_out");
  const auto b = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(input.dim(1));
  const auto outw = static_cast<Eigen::Index>(weight.dim(0));
  LinearGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape()), Tensor<T>({weight.dim(0)})};
  ConstMatMap<T> dy(grad_out.data(), b, outw);
  MatMap<T>(g.input.data(), b, in).noalias() = dy * ConstMatMap<T>(weight.data(), outw, in);
  MatMap<T>(g.weight.data(), outw, in).noalias() = dy.transpose() * ConstMatMap<T>(input.data(), b, in);
  for (Eigen::Index o = 0; o < outw; ++o) g.bias[static_cast<std::size_t>(o)] = dy.col(o).sum();
  return g;
}

/// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax input");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max<double>(mx, logits.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits.at(r, c) - mx);
    for (std::size_t c = 0; c < cols; ++c) p.at(r, c) = static_cast<T>(std::exp(logits.at(r, c) - mx) / z);
  }
  return p;
}

template <typename T>
struct LossResult {
  double loss = 0.0;  // batch mean
  Tensor<T> grad;     // dL/dlogits
  Tensor<T> probs;
};

/// Mean cross-entropy of softmax(logits) against integer labels.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  require_rank(logits.shape(), 2, "cross_entropy logits");
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  if (labels.size() != rows) fail(ErrorCode::ShapeMismatch, "one label per logits row required");
  LossResult<T> r;
  r.probs = softmax(logits);
  r.grad = Tensor<T>(logits.shape());
  const double inv_b = 1.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= cols)
      fail(ErrorCode::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " +
                                           std::to_string(cols - 1) + "]");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max<double>(mx, logits.at(i, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits.at(i, c) - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - logits.at(i, static_cast<std::size_t>(y))) * inv_b;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = std::exp(logits.at(i, c) - log_z);
      r.grad.at(i, c) = static_cast<T>((p - (static_cast<std::size_t>(y) == c ? 1.0 : 0.0)) * inv_b);
    }
  }
  return r;
}

/// p <- p - lr * g.
template <typename T>
void sgd_step(Tensor<T>& param, const Tensor<T>& grad, double lr) {
  require_shape(grad.shape(), param.shape(), "sgd grad");
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= step * grad[i];
}

}  // namespace hta
