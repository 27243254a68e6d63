#include "gait/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gait {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void init_fan_in_uniform(Param<T>& p, int fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.value.data) v = static_cast<T>(dist(rng));
}

template <typename T>
void leaky_relu_inplace(Tensor<T>& x) {
  const T slope = kLeakySlope<T>;
  auto a = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(x.ptr(), static_cast<Eigen::Index>(x.size()));
  a = a.max(a * slope);
}

template <typename T>
void leaky_relu_backward_inplace(const Tensor<T>& y, Tensor<T>& dy) {
  const T slope = kLeakySlope<T>;
  const T* __restrict py = y.ptr();
  T* __restrict pd = dy.ptr();
  const std::size_t n = dy.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T a = pd[i], b = a * slope;
    pd[i] = py[i] > T(0) ? a : b;
  }
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
                  int pad, int groups)
    : weight(name + ".weight", {out_channels, in_channels / groups, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_c_(in_channels),
      out_c_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad),
      groups_(groups) {
  if (groups != 1 && !(groups == in_channels && groups == out_channels))
    throw std::invalid_argument("Conv2d: only dense or depthwise grouping is supported");
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  init_fan_in_uniform(weight, (in_c_ / groups_) * k_ * k_, rng);
  bias.value.fill(T(0));
}

template <typename T>
std::vector<int> Conv2d<T>::output_shape(const std::vector<int>& s) const {
  if (s.size() != 4 || s[1] != in_c_)
    throw std::invalid_argument("Conv2d " + weight.name + ": bad input shape " + shape_str(s));
  const int Ho = (s[2] + 2 * pad_ - k_) / stride_ + 1;
  const int Wo = (s[3] + 2 * pad_ - k_) / stride_ + 1;
  return {s[0], out_c_, Ho, Wo};
}

namespace {

/// Output columns [lo, hi) whose input column ox * stride - pad + kx falls inside [0, W).
inline void valid_range(int W, int Wo, int stride, int pad, int kx, int& lo, int& hi) {
  const int first = pad - kx;  // smallest ox*stride with ix >= 0
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const int last = W - 1 + pad - kx;  // largest ox*stride with ix < W
  hi = last < 0 ? 0 : std::min(Wo, last / stride + 1);
  if (lo > hi) lo = hi;
}

}  // namespace

template <typename T>
void Conv2d<T>::im2col(const T* frame, int H, int W, int Ho, int Wo, T* col, std::size_t ld,
                       std::size_t off) const {
  for (int c = 0; c < in_c_; ++c) {
    const T* plane = frame + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        T* row = col + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ld + off;
        int lo, hi;
        valid_range(W, Wo, stride_, pad_, kx, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          T* dst = row + static_cast<std::size_t>(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * W;
          const int shift = kx - pad_;
          std::fill(dst, dst + lo, T(0));
          if (stride_ == 1) {
            std::copy(src + lo + shift, src + hi + shift, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * stride_ + shift];
          }
          std::fill(dst + hi, dst + Wo, T(0));
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, std::size_t ld, std::size_t off, int H, int W, int Ho, int Wo,
                       T* frame) const {
  for (int c = 0; c < in_c_; ++c) {
    T* plane = frame + static_cast<std::size_t>(c) * H * W;
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * ld + off;
        int lo, hi;
        valid_range(W, Wo, stride_, pad_, kx, lo, hi);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= H) continue;
          const T* src = row + static_cast<std::size_t>(oy) * Wo;
          T* dst = plane + static_cast<std::size_t>(iy) * W;
          const int shift = kx - pad_;
          if (stride_ == 1) {
            for (int ox = lo; ox < hi; ++ox) dst[ox + shift] += src[ox];
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox * stride_ + shift] += src[ox];
          }
        }
      }
    }
  }
}

namespace {

/// Copies a plane into a zero-padded buffer of (H + 2p) x (W + 2p).
template <typename T>
void pad_plane(const T* src, int H, int W, int p, std::vector<T>& dst) {
  const int Wp = W + 2 * p;
  const std::size_t n = static_cast<std::size_t>(H + 2 * p) * Wp;
  if (dst.size() != n) dst.assign(n, T(0));  // the border is never written, so it stays zero
  for (int y = 0; y < H; ++y)
    std::copy(src + static_cast<std::size_t>(y) * W, src + static_cast<std::size_t>(y + 1) * W,
              dst.data() + static_cast<std::size_t>(y + p) * Wp + p);
}

}  // namespace

template <typename T>
void Conv2d<T>::forward(const Tensor<T>& x, Tensor<T>& y) const {
  const auto os = output_shape(x.shape);
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3), Ho = os[2], Wo = os[3];
  const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
  const std::size_t in_frame = static_cast<std::size_t>(in_c_) * H * W;
  y = Tensor<T>(os);

  if (groups_ == 1) {
    const int ckk = in_c_ * k_ * k_;
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * HWo);
    CMapMat<T> w(weight.value.ptr(), out_c_, ckk);
    for (int n = 0; n < N; ++n) {
      const T* frame = x.ptr() + n * in_frame;
      if (!pointwise) im2col(frame, H, W, Ho, Wo, col.data(), HWo, 0);
      MapMat<T> out(y.ptr() + static_cast<std::size_t>(n) * out_c_ * HWo, out_c_, HWo);
      out.noalias() = w * CMapMat<T>(pointwise ? frame : col.data(), ckk, HWo);
      for (int o = 0; o < out_c_; ++o) out.row(o).array() += bias.value[o];
    }
    return;
  }

  // depthwise
  const int Wp = W + 2 * pad_;
  std::vector<T> padded;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < in_c_; ++c) {
      pad_plane(x.ptr() + n * in_frame + static_cast<std::size_t>(c) * H * W, H, W, pad_, padded);
      T* dst = y.ptr() + (static_cast<std::size_t>(n) * out_c_ + c) * HWo;
      const T* w = weight.value.ptr() + static_cast<std::size_t>(c) * k_ * k_;
      std::fill(dst, dst + HWo, bias.value[c]);
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T wk = w[ky * k_ + kx];
          for (int oy = 0; oy < Ho; ++oy) {
            const T* src = padded.data() + static_cast<std::size_t>(oy * stride_ + ky) * Wp + kx;
            T* out = dst + oy * Wo;
            for (int ox = 0; ox < Wo; ++ox) out[ox] += wk * src[ox * stride_];
          }
        }
    }
}

template <typename T>
void Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  const auto os = output_shape(x.shape);
  if (dy.shape != os) throw std::invalid_argument("Conv2d::backward: dy shape mismatch");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3), Ho = os[2], Wo = os[3];
  const std::size_t HWo = static_cast<std::size_t>(Ho) * Wo;
  const std::size_t in_frame = static_cast<std::size_t>(in_c_) * H * W;
  if (dx) *dx = Tensor<T>(x.shape);

  if (groups_ == 1) {
    const int ckk = in_c_ * k_ * k_;
    const bool pointwise = k_ == 1 && stride_ == 1 && pad_ == 0;
    std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk) * HWo);
    MapMat<T> dW(weight.grad.ptr(), out_c_, ckk);
    CMapMat<T> w(weight.value.ptr(), out_c_, ckk);
    for (int n = 0; n < N; ++n) {
      const T* frame = x.ptr() + n * in_frame;
      CMapMat<T> g(dy.ptr() + static_cast<std::size_t>(n) * out_c_ * HWo, out_c_, HWo);
      for (int o = 0; o < out_c_; ++o) {
        const T* row = dy.ptr() + (static_cast<std::size_t>(n) * out_c_ + o) * HWo;
        T acc = T(0);
        for (int p = 0; p < HWo; ++p) acc += row[p];
        bias.grad[o] += acc;
      }
      if (!pointwise) im2col(frame, H, W, Ho, Wo, col.data(), HWo, 0);
      dW.noalias() += g * CMapMat<T>(pointwise ? frame : col.data(), ckk, HWo).transpose();
      if (!dx) continue;
      if (pointwise) {
        MapMat<T>(dx->ptr() + n * in_frame, ckk, HWo).noalias() = w.transpose() * g;
      } else {
        MapMat<T>(col.data(), ckk, HWo).noalias() = w.transpose() * g;
        col2im(col.data(), HWo, 0, H, W, Ho, Wo, dx->ptr() + n * in_frame);
      }
    }
    return;
  }

  const int Wp = W + 2 * pad_, Hp = H + 2 * pad_;
  std::vector<T> padded, gpad;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < in_c_; ++c) {
      pad_plane(x.ptr() + n * in_frame + static_cast<std::size_t>(c) * H * W, H, W, pad_, padded);
      if (dx) gpad.assign(static_cast<std::size_t>(Hp) * Wp, T(0));
      const T* g = dy.ptr() + (static_cast<std::size_t>(n) * out_c_ + c) * HWo;
      const T* w = weight.value.ptr() + static_cast<std::size_t>(c) * k_ * k_;
      T* gw = weight.grad.ptr() + static_cast<std::size_t>(c) * k_ * k_;
      T gb = T(0);
      for (std::size_t o = 0; o < HWo; ++o) gb += g[o];
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T wk = w[ky * k_ + kx];
          T acc = T(0);
          for (int oy = 0; oy < Ho; ++oy) {
            const std::size_t off = static_cast<std::size_t>(oy * stride_ + ky) * Wp + kx;
            const T* src = padded.data() + off;
            const T* go = g + oy * Wo;
            for (int ox = 0; ox < Wo; ++ox) acc += go[ox] * src[ox * stride_];
            if (dx) {
              T* gsrc = gpad.data() + off;
              for (int ox = 0; ox < Wo; ++ox) gsrc[ox * stride_] += go[ox] * wk;
            }
          }
          gw[ky * k_ + kx] += acc;
        }
      bias.grad[c] += gb;
      if (dx) {
        T* gx = dx->ptr() + n * in_frame + static_cast<std::size_t>(c) * H * W;
        for (int yy = 0; yy < H; ++yy)
          for (int xx = 0; xx < W; ++xx) gx[yy * W + xx] = gpad[static_cast<std::size_t>(yy + pad_) * Wp + xx + pad_];
      }
    }
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features, bool with_bias)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {with_bias ? out_features : 0}),
      in_(in_features),
      out_(out_features),
      with_bias_(with_bias) {}

template <typename T>
void Linear<T>::init(std::mt19937_64& rng) {
  init_fan_in_uniform(weight, in_, rng);
  bias.value.fill(T(0));
}

template <typename T>
void Linear<T>::forward(const Tensor<T>& x, Tensor<T>& y) const {
  if (x.rank() != 2 || x.dim(1) != in_)
    throw std::invalid_argument("Linear " + weight.name + ": bad input shape " +
                                shape_str(x.shape));
  const int B = x.dim(0);
  y = Tensor<T>({B, out_});
  MapMat<T> ym(y.ptr(), B, out_);
  ym.noalias() = CMapMat<T>(x.ptr(), B, in_) * CMapMat<T>(weight.value.ptr(), out_, in_).transpose();
  if (with_bias_)
    for (int b = 0; b < B; ++b)
      for (int o = 0; o < out_; ++o) ym(b, o) += bias.value[o];
}

template <typename T>
void Linear<T>::backward(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dx) {
  const int B = x.dim(0);
  CMapMat<T> g(dy.ptr(), B, out_);
  MapMat<T>(weight.grad.ptr(), out_, in_).noalias() += g.transpose() * CMapMat<T>(x.ptr(), B, in_);
  if (with_bias_)
    for (int o = 0; o < out_; ++o) {
      T acc = T(0);
      for (int b = 0; b < B; ++b) acc += dy.data[static_cast<std::size_t>(b) * out_ + o];
      bias.grad[o] += acc;
    }
  if (dx) {
    *dx = Tensor<T>({B, in_});
    MapMat<T>(dx->ptr(), B, in_).noalias() = g * CMapMat<T>(weight.value.ptr(), out_, in_);
  }
}

// ---------------------------------------------------------------------------
// MaxPool2

template <typename T>
void MaxPool2<T>::forward(const Tensor<T>& x, Tensor<T>& y, std::vector<std::int32_t>& argmax) const {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw std::invalid_argument("MaxPool2: spatial dims must be even");
  const int Ho = H / 2, Wo = W / 2;
  y = Tensor<T>({N, C, Ho, Wo});
  argmax.resize(y.size());
  std::size_t o = 0;
  for (int nc = 0; nc < N * C; ++nc) {
    const T* plane = x.ptr() + static_cast<std::size_t>(nc) * H * W;
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox, ++o) {
        int best = (2 * oy) * W + 2 * ox;
        for (int idx : {(2 * oy) * W + 2 * ox + 1, (2 * oy + 1) * W + 2 * ox,
                        (2 * oy + 1) * W + 2 * ox + 1})
          if (plane[idx] > plane[best]) best = idx;
        y.data[o] = plane[best];
        argmax[o] = best;
      }
  }
}

template <typename T>
void MaxPool2<T>::backward(const std::vector<int>& in_shape, const std::vector<std::int32_t>& argmax,
                           const Tensor<T>& dy, Tensor<T>& dx) const {
  dx = Tensor<T>(in_shape);
  const std::size_t plane_in = static_cast<std::size_t>(in_shape[2]) * in_shape[3];
  const std::size_t plane_out = plane_in / 4;
  for (std::size_t o = 0; o < dy.size(); ++o) {
    const std::size_t nc = o / plane_out;
    dx.data[nc * plane_in + argmax[o]] += dy.data[o];
  }
}

#define GAIT_INSTANTIATE(T)                                                     \
  template void init_fan_in_uniform<T>(Param<T>&, int, std::mt19937_64&);       \
  template void leaky_relu_inplace<T>(Tensor<T>&);                              \
  template void leaky_relu_backward_inplace<T>(const Tensor<T>&, Tensor<T>&);   \
  template class Conv2d<T>;                                                     \
  template class Linear<T>;                                                     \
  template struct MaxPool2<T>;

GAIT_INSTANTIATE(float)
GAIT_INSTANTIATE(double)

}  // namespace gait
