#pragma once

// The event classifier: four conv -> batch-norm -> tanh blocks, global
// average pooling and a single linear head.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hta/error.hpp"
#include "hta/layers.hpp"
#include "hta/random.hpp"
#include "hta/tensor.hpp"

namespace hta {

struct ConvBlockSpec {
  std::size_t filters = 0;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  std::size_t stride_h = 1, stride_w = 1;

  Conv2dGeometry geometry() const {
    return {kernel_h, kernel_w, stride_h, stride_w, pad_h, pad_w};
  }
  bool operator==(const ConvBlockSpec&) const = default;
};

struct ModelConfig {
  std::size_t in_channels = 2;
  std::vector<ConvBlockSpec> blocks = {
      {32, 3, 5, 2, 2, 2, 2},
      {64, 3, 5, 2, 2, 1, 1},
      {128, 5, 5, 2, 2, 1, 1},
      {256, 5, 5, 2, 2, 1, 1},
  };
  std::size_t classes = 5;

  std::size_t head_width() const { return blocks.empty() ? in_channels : blocks.back().filters; }

  void validate() const {
    if (in_channels == 0 || classes < 2) fail(ErrorCode::ConfigError, "bad model channel/class count");
    if (blocks.empty()) fail(ErrorCode::ConfigError, "model needs at least one conv block");
    for (const auto& b : blocks) {
      if (b.filters == 0 || b.kernel_h == 0 || b.kernel_w == 0 || b.stride_h == 0 || b.stride_w == 0)
        fail(ErrorCode::ConfigError, "conv block extents must be positive");
    }
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Trainable tensor with its gradient accumulator.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
class Model {
 public:
  struct Block {
    Conv2dGeometry geometry;
    Tensor<T> weight, bias;
    BatchNormState<T> bn;
    Tensor<T> grad_weight, grad_bias, grad_gamma, grad_beta;
    BatchNormCache<T> bn_cache;
  };

  explicit Model(ModelConfig cfg = {}) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::size_t cin = cfg_.in_channels;
    for (const auto& spec : cfg_.blocks) {
      Block b;
      b.geometry = spec.geometry();
      b.weight = Tensor<T>({spec.filters, cin, spec.kernel_h, spec.kernel_w});
      b.bias = Tensor<T>({spec.filters});
      b.bn = BatchNormState<T>(spec.filters);
      b.grad_weight = Tensor<T>(b.weight.shape());
      b.grad_bias = Tensor<T>(b.bias.shape());
      b.grad_gamma = Tensor<T>({spec.filters});
      b.grad_beta = Tensor<T>({spec.filters});
      blocks_.push_back(std::move(b));
      cin = spec.filters;
    }
    fc_weight_ = Tensor<T>({cfg_.classes, cin});
    fc_bias_ = Tensor<T>({cfg_.classes});
    grad_fc_weight_ = Tensor<T>(fc_weight_.shape());
    grad_fc_bias_ = Tensor<T>(fc_bias_.shape());
  }

  const ModelConfig& config() const { return cfg_; }
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  Tensor<T>& fc_weight() { return fc_weight_; }
  Tensor<T>& fc_bias() { return fc_bias_; }

  /// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) weights and biases;
  /// batch-norm gamma = 1, beta = 0, running stats reset.
  void init(Rng& rng) {
    auto fill = [&](Tensor<T>& t, std::size_t fan_in) {
      const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (auto& v : t.vec()) v = static_cast<T>(uniform(rng, -bound, bound));
    };
    for (auto& b : blocks_) {
      const std::size_t fan_in = b.weight.dim(1) * b.weight.dim(2) * b.weight.dim(3);
      fill(b.weight, fan_in);
      fill(b.bias, fan_in);
      b.bn = BatchNormState<T>(b.bn.channels());
    }
    fill(fc_weight_, fc_weight_.dim(1));
    fill(fc_bias_, fc_weight_.dim(1));
  }

  /// Shapes after each block, the pool and the head, for a B x C x H x W input.
  std::vector<Shape> shape_trace(const Shape& input) const {
    require_rank(input, 4, "model input");
    std::vector<Shape> trace{input};
    Shape s = input;
    for (const auto& b : blocks_) {
      s = {s[0], b.weight.dim(0), b.geometry.out_h(s[2]), b.geometry.out_w(s[3])};
      trace.push_back(s);
    }
    trace.push_back({s[0], s[1]});
    trace.push_back({s[0], cfg_.classes});
    return trace;
  }

  /// Logits B x classes. Train mode uses batch statistics, updates running
  /// statistics and keeps the activations needed by backward().
  Tensor<T> forward(const Tensor<T>& input, Mode mode) {
    if (mode == Mode::Eval) return infer(input);
    require_rank(input.shape(), 4, "model input");
    if (input.dim(1) != cfg_.in_channels)
      fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(cfg_.in_channels) +
                                         " input channels, got " + std::to_string(input.dim(1)));
    const bool train = mode == Mode::Train;
    acts_.clear();
    if (train) {
      acts_.reserve(blocks_.size() + 1);
      acts_.push_back(input);
    }
    Tensor<T> x;
    const Tensor<T>* cur = &input;
    for (auto& b : blocks_) {
      Tensor<T> z = conv2d_forward(*cur, b.weight, b.bias, b.geometry);
      z = batchnorm2d_forward(z, b.bn, mode, train ? &b.bn_cache : nullptr);
      x = tanh_forward(z);
      if (train) {
        acts_.push_back(std::move(x));
        cur = &acts_.back();
      } else {
        cur = &x;
      }
    }
    pool_shape_ = cur->shape();
    pooled_ = avgpool_forward(*cur);
    return linear_forward(pooled_, fc_weight_, fc_bias_);
  }

  /// Eval-mode logits; leaves the model untouched, so a shared model may be
  /// used from several threads.
  Tensor<T> infer(const Tensor<T>& input) const {
    require_rank(input.shape(), 4, "model input");
    if (input.dim(1) != cfg_.in_channels)
      fail(ErrorCode::ShapeMismatch, "model expects " + std::to_string(cfg_.in_channels) +
                                         " input channels, got " + std::to_string(input.dim(1)));
    Tensor<T> x = input;
    for (const auto& b : blocks_)
      x = tanh_forward(batchnorm2d_infer(conv2d_forward(x, b.weight, b.bias, b.geometry), b.bn));
    return linear_forward(avgpool_forward(x), fc_weight_, fc_bias_);
  }

  /// Backpropagates dL/dlogits from the last train-mode forward; overwrites
  /// the gradient accumulators.
  void backward(const Tensor<T>& grad_logits) {
    if (acts_.size() != blocks_.size() + 1)
      fail(ErrorCode::ShapeMismatch, "backward requires a preceding train-mode forward");
    auto lg = linear_backward(pooled_, fc_weight_, grad_logits);
    grad_fc_weight_ = std::move(lg.weight);
    grad_fc_bias_ = std::move(lg.bias);
    Tensor<T> grad = avgpool_backward(pool_shape_, lg.input);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      Block& b = blocks_[i];
      grad = tanh_backward(acts_[i + 1], grad);
      auto bg = batchnorm2d_backward(grad, b.bn, b.bn_cache);
      b.grad_gamma = std::move(bg.gamma);
      b.grad_beta = std::move(bg.beta);
      auto cg = conv2d_backward(acts_[i], b.weight, bg.input, b.geometry, i > 0);
      b.grad_weight = std::move(cg.weight);
      b.grad_bias = std::move(cg.bias);
      grad = std::move(cg.input);
    }
  }

  void release_activations() {
    acts_.clear();
    acts_.shrink_to_fit();
    for (auto& b : blocks_) b.bn_cache = {};
  }

  std::vector<ParamRef<T>> parameters() {
    std::vector<ParamRef<T>> ps;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      Block& b = blocks_[i];
      const std::string n = std::to_string(i + 1);
      ps.push_back({"conv" + n + ".weight", &b.weight, &b.grad_weight});
      ps.push_back({"conv" + n + ".bias", &b.bias, &b.grad_bias});
      ps.push_back({"bn" + n + ".gamma", &b.bn.gamma, &b.grad_gamma});
      ps.push_back({"bn" + n + ".beta", &b.bn.beta, &b.grad_beta});
    }
    ps.push_back({"fc.weight", &fc_weight_, &grad_fc_weight_});
    ps.push_back({"fc.bias", &fc_bias_, &grad_fc_bias_});
    return ps;
  }

  /// Every persisted tensor, trainable parameters plus running statistics.
  std::vector<std::pair<std::string, Tensor<T>*>> state() {
    std::vector<std::pair<std::string, Tensor<T>*>> st;
    for (auto& p : parameters()) st.emplace_back(p.name, p.value);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string n = std::to_string(i + 1);
      st.emplace_back("bn" + n + ".running_mean", &blocks_[i].bn.running_mean);
      st.emplace_back("bn" + n + ".running_var", &blocks_[i].bn.running_var);
    }
    return st;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value->size();
    return n;
  }

  void sgd_step(double lr) {
    for (auto& p : parameters()) hta::sgd_step(*p.value, *p.grad, lr);
  }

  /// Same weights and statistics in another scalar type.
  template <typename U>
  Model<U> cast() const {
    Model<U> out(cfg_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Block& s = blocks_[i];
      auto& d = out.blocks()[i];
      d.weight = s.weight.template cast<U>();
      d.bias = s.bias.template cast<U>();
      d.bn.gamma = s.bn.gamma.template cast<U>();
      d.bn.beta = s.bn.beta.template cast<U>();
      d.bn.running_mean = s.bn.running_mean.template cast<U>();
      d.bn.running_var = s.bn.running_var.template cast<U>();
    }
    out.fc_weight() = fc_weight_.template cast<U>();
    out.fc_bias() = fc_bias_.template cast<U>();
    return out;
  }

 private:
  ModelConfig cfg_;
  std::vector<Block> blocks_;
  Tensor<T> fc_weight_, fc_bias_, grad_fc_weight_, grad_fc_bias_;
  std::vector<Tensor<T>> acts_;  // acts_[0] = input, acts_[i] = block i output
  Shape pool_shape_;
  Tensor<T> pooled_;
};

/// Stacks per-sample C x H x W arrays into a B x C x H x W batch.
template <typename T, typename Maps>
Tensor<T> make_batch(const Maps& maps) {
  if (maps.empty()) fail(ErrorCode::ShapeMismatch, "empty batch");
  const auto& first = maps.front();
  const Shape s{maps.size(), first.channels, first.bands, first.frames};
  Tensor<T> batch(s);
  const std::size_t per = first.channels * first.bands * first.frames;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& m = maps[i];
    if (m.channels != first.channels || m.bands != first.bands || m.frames != first.frames)
      fail(ErrorCode::ShapeMismatch, "feature maps in a batch differ in shape");
    std::copy(m.data.begin(), m.data.end(), batch.data() + i * per);
  }
  return batch;
}

}  // namespace hta
