#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gait/tensor.hpp"

namespace gait {

/// A named trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool frozen = false;

  Param() = default;
  Param(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(shape), grad(std::move(shape)) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Fan-in scaled uniform init: U(-sqrt(6/fan_in), sqrt(6/fan_in)).
template <typename T>
void init_fan_in_uniform(Param<T>& p, int fan_in, std::mt19937_64& rng);

template <typename T>
constexpr T kLeakySlope = T(0.01);

template <typename T>
void leaky_relu_inplace(Tensor<T>& x);
/// `y` is the forward output; sign(y) == sign(x) for a positive slope.
template <typename T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy);

/// 2-D convolution over a stack of frames [N, C, H, W].
/// groups == 1 (dense, im2col + GEMM) or groups == in_channels == out_channels (depthwise).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad,
         int groups = 1);

  std::vector<int> output_shape(const std::vector<int>& in_shape) const;
  void forward(const Tensor<T>& x, Tensor<T>& y) const;
  /// Accumulates weight/bias gradients; writes dx when non-null.
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);

  void init(std::mt19937_64& rng);

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }

  Param<T> weight;
  Param<T> bias;

 private:
  void im2col(const T* frame, int H, int W, int Ho, int Wo, T* col, std::size_t ld,
              std::size_t col_offset) const;
  void col2im(const T* col, std::size_t ld, std::size_t col_offset, int H, int W, int Ho, int Wo,
              T* frame) const;

  int in_c_ = 0, out_c_ = 0, k_ = 1, stride_ = 1, pad_ = 0, groups_ = 1;
};

/// Dense affine map applied to rows of x [B, in] -> [B, out].
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, int in_features, int out_features, bool with_bias = true);

  void forward(const Tensor<T>& x, Tensor<T>& y) const;
  void backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx);
  void init(std::mt19937_64& rng);

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;  // [out, in]
  Param<T> bias;    // [out]

 private:
  int in_ = 0, out_ = 0;
  bool with_bias_ = true;
};

/// 2x2 / stride-2 max pooling over [N, C, H, W]; H and W must be even.
template <typename T>
struct MaxPool2 {
  void forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::int32_t>& argmax) const;
  void backward(const std::vector<int>& in_shape, const std::vector<std::int32_t>& argmax,
                const Tensor<T>& dy, Tensor<T>& dx) const;
};

}  // namespace gait
