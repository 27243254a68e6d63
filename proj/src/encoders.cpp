#include "gait/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "gait/error.hpp"

namespace gait {

std::string fusion_name(TemporalFusion f) {
  switch (f) {
    case TemporalFusion::TemporalShift: return "ts";
    case TemporalFusion::AvgPool: return "avg";
    case TemporalFusion::MaxPool: return "max";
  }
  return "?";
}

TemporalFusion parse_fusion(const std::string& s) {
  if (s == "ts" || s == "temporal_shift") return TemporalFusion::TemporalShift;
  if (s == "avg" || s == "avg_pool") return TemporalFusion::AvgPool;
  if (s == "max" || s == "max_pool") return TemporalFusion::MaxPool;
  throw ConfigError("unknown temporal fusion '" + s + "' (expected ts, avg or max)");
}

void validate(const ShiftConfig& cfg) {
  if (!(cfg.ratio >= 0.0 && cfg.ratio <= 0.5)) throw ConfigError("shift ratio must be in [0, 0.5]");
  if (cfg.n_blocks < 1) throw ConfigError("n_blocks must be >= 1");
}

void validate(const ModelConfig& cfg) {
  validate(cfg.shift);
  for (int w : cfg.silhouette_widths)
    if (w < 1) throw ConfigError("silhouette widths must be positive");
  if (cfg.horizontal_bins < 1 || 16 % cfg.horizontal_bins != 0)
    throw ConfigError("horizontal_bins must divide 16");
  if (cfg.embedding_dim < 1) throw ConfigError("embedding_dim must be positive");
  if (cfg.body_widths.empty()) throw ConfigError("body_widths must not be empty");
  if (cfg.num_classes < 0) throw ConfigError("num_classes must be >= 0");
}

// ---------------------------------------------------------------------------
// temporal shift

namespace {

int shift_k(int C, double ratio) { return static_cast<int>(std::floor(C * ratio)); }

}  // namespace

template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& feat, double ratio) {
  if (feat.rank() < 2) throw std::invalid_argument("temporal_shift: expected [m, C, ...]");
  const int m = feat.dim(0), C = feat.dim(1);
  const int k = std::min(shift_k(C, ratio), C / 2);
  const std::size_t plane = feat.size() / (static_cast<std::size_t>(m) * C);
  Tensor<T> out = feat;
  if (k == 0 || m == 1) return out;
  const std::size_t frame = static_cast<std::size_t>(C) * plane;
  const std::size_t span = static_cast<std::size_t>(k) * plane;
  for (int t = 1; t < m; ++t) {
    const T* src = feat.ptr() + (t - 1) * frame;
    std::copy(src, src + span, out.ptr() + t * frame);
  }
  for (int t = 0; t + 1 < m; ++t) {
    const T* src = feat.ptr() + (t + 1) * frame + span;
    std::copy(src, src + span, out.ptr() + t * frame + span);
  }
  return out;
}

template <typename T>
Tensor<T> temporal_shift_backward(const Tensor<T>& g, double ratio) {
  const int m = g.dim(0), C = g.dim(1);
  const int k = std::min(shift_k(C, ratio), C / 2);
  const std::size_t plane = g.size() / (static_cast<std::size_t>(m) * C);
  if (k == 0 || m == 1) return g;
  Tensor<T> dx = g;
  const std::size_t frame = static_cast<std::size_t>(C) * plane;
  const std::size_t span = static_cast<std::size_t>(k) * plane;
  // backward-source block: out[t] <- in[t-1] for t >= 1, out[0] <- in[0]
  for (int t = 0; t < m; ++t) std::fill(dx.ptr() + t * frame, dx.ptr() + t * frame + 2 * span, T(0));
  for (int t = 0; t < m; ++t) {
    const int src_back = t == 0 ? 0 : t - 1;
    const int src_fwd = t == m - 1 ? m - 1 : t + 1;
    for (std::size_t i = 0; i < span; ++i) {
      dx.ptr()[src_back * frame + i] += g.ptr()[t * frame + i];
      dx.ptr()[src_fwd * frame + span + i] += g.ptr()[t * frame + span + i];
    }
  }
  return dx;
}

template <typename T>
Tensor<T> sequence_tensor(const SilhouetteSequence& seq) {
  if (seq.frames.empty()) throw DataError("sequence " + seq.key.str() + " has no frames");
  const int m = seq.length();
  Tensor<T> x({m, 1, kFrameHeight, kFrameWidth});
  const std::size_t plane = static_cast<std::size_t>(kFrameHeight) * kFrameWidth;
  for (int t = 0; t < m; ++t) {
    const auto& f = seq.frames[t];
    if (f.height != kFrameHeight || f.width != kFrameWidth)
      throw DataError("frame of " + seq.key.str() + " is not 64x44");
    for (std::size_t i = 0; i < plane; ++i) x.data[t * plane + i] = f.pixels[i] ? T(1) : T(0);
  }
  return x;
}

// ---------------------------------------------------------------------------
// silhouette encoder

template <typename T>
SilhouetteEncoder<T>::SilhouetteEncoder(const std::array<int, 3>& w)
    : c1_("sil.conv1", 1, w[0], 3, 1, 1),
      c2_("sil.conv2", w[0], w[1], 3, 1, 1),
      c3_("sil.conv3", w[1], w[2], 3, 1, 1) {}

template <typename T>
void SilhouetteEncoder<T>::init(std::mt19937_64& rng) {
  c1_.init(rng);
  c2_.init(rng);
  c3_.init(rng);
}

template <typename T>
std::vector<Param<T>*> SilhouetteEncoder<T>::params() {
  return {&c1_.weight, &c1_.bias, &c2_.weight, &c2_.bias, &c3_.weight, &c3_.bias};
}

template <typename T>
Tensor<T> SilhouetteEncoder<T>::forward(const Tensor<T>& x, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c1_.forward(x, c.y1);
  leaky_relu_inplace(c.y1);
  pool_.forward(c.y1, c.p1, c.am1);
  c2_.forward(c.p1, c.y2);
  leaky_relu_inplace(c.y2);
  pool_.forward(c.y2, c.p2, c.am2);
  c3_.forward(c.p2, c.y3);
  leaky_relu_inplace(c.y3);
  if (cache) {
    c.x = x;
    return c.y3;
  }
  return std::move(c.y3);
}

template <typename T>
void SilhouetteEncoder<T>::backward(const Cache& c, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out, gp, gy;
  leaky_relu_backward_inplace(c.y3, g);
  c3_.backward(c.p2, g, &gp);
  pool_.backward(c.y2.shape, c.am2, gp, gy);
  leaky_relu_backward_inplace(c.y2, gy);
  c2_.backward(c.p1, gy, &gp);
  pool_.backward(c.y1.shape, c.am1, gp, gy);
  leaky_relu_backward_inplace(c.y1, gy);
  c1_.backward(c.x, gy, nullptr);
}

// ---------------------------------------------------------------------------
// body shape encoder

template <typename T>
BodyShapeEncoder<T>::BodyShapeEncoder(const std::vector<int>& widths, const ShiftConfig& cfg)
    : cfg_(cfg) {
  validate(cfg);
  int in = 1;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    const int out = widths[std::min<std::size_t>(i, widths.size() - 1)];
    const int stride = i < 4 ? 2 : 1;
    dw_.emplace_back("body.dw" + std::to_string(i), in, in, 3, stride, 1, in);
    pw_.emplace_back("body.pw" + std::to_string(i), in, out, 1, 1, 0);
    in = out;
  }
  head_ = Linear<T>("body.head", in, kShapeDim);
}

template <typename T>
void BodyShapeEncoder<T>::set_config(const ShiftConfig& cfg) {
  validate(cfg);
  if (cfg.n_blocks != cfg_.n_blocks)
    throw ConfigError("n_blocks cannot change after the body shape encoder is built");
  cfg_ = cfg;
}

template <typename T>
void BodyShapeEncoder<T>::init(std::mt19937_64& rng) {
  for (std::size_t i = 0; i < dw_.size(); ++i) {
    dw_[i].init(rng);
    pw_[i].init(rng);
  }
  head_.init(rng);
}

template <typename T>
std::vector<Param<T>*> BodyShapeEncoder<T>::params() {
  std::vector<Param<T>*> out;
  for (std::size_t i = 0; i < dw_.size(); ++i) {
    out.push_back(&dw_[i].weight);
    out.push_back(&dw_[i].bias);
    out.push_back(&pw_[i].weight);
    out.push_back(&pw_[i].bias);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  return out;
}

template <typename T>
Tensor<T> BodyShapeEncoder<T>::forward(const Tensor<T>& x, Cache* cache) const {
  const bool shift = cfg_.temporal_fusion == TemporalFusion::TemporalShift;
  Tensor<T> cur = x, a, b;
  if (cache) {
    cache->in.clear();
    cache->dw.clear();
    cache->pw.clear();
  }
  for (std::size_t i = 0; i < dw_.size(); ++i) {
    dw_[i].forward(cur, a);
    leaky_relu_inplace(a);
    pw_[i].forward(a, b);
    leaky_relu_inplace(b);
    Tensor<T> next = shift ? temporal_shift(b, cfg_.ratio) : b;
    if (cache) {
      cache->in.push_back(std::move(cur));
      cache->dw.push_back(std::move(a));
      cache->pw.push_back(std::move(b));
    }
    cur = std::move(next);
  }

  const int m = cur.dim(0), C = cur.dim(1);
  const std::size_t plane = static_cast<std::size_t>(cur.dim(2)) * cur.dim(3);
  Tensor<T> pooled({1, C});
  std::vector<std::int32_t> tmax;
  if (cfg_.temporal_fusion == TemporalFusion::MaxPool) {
    tmax.resize(static_cast<std::size_t>(C) * plane);
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::size_t p = 0; p < plane; ++p) {
        int best = 0;
        T v = cur.data[static_cast<std::size_t>(c) * plane + p];
        for (int t = 1; t < m; ++t) {
          const T u = cur.data[(static_cast<std::size_t>(t) * C + c) * plane + p];
          if (u > v) {
            v = u;
            best = t;
          }
        }
        tmax[c * plane + p] = best;
        acc += v;
      }
      pooled.data[c] = acc / static_cast<T>(plane);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (int t = 0; t < m; ++t) {
        const T* src = cur.ptr() + (static_cast<std::size_t>(t) * C + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      }
      pooled.data[c] = acc / static_cast<T>(plane * m);
    }
  }

  Tensor<T> y;
  head_.forward(pooled, y);
  y.reshape({kShapeDim});
  if (cache) {
    cache->last = std::move(cur);
    cache->tmax = std::move(tmax);
    cache->pooled = std::move(pooled);
  }
  return y;
}

template <typename T>
void BodyShapeEncoder<T>::backward(const Cache& c, const Tensor<T>& grad_out) {
  Tensor<T> gy = grad_out;
  gy.reshape({1, kShapeDim});
  Tensor<T> gpool;
  head_.backward(c.pooled, gy, &gpool);

  const int m = c.last.dim(0), C = c.last.dim(1);
  const std::size_t plane = static_cast<std::size_t>(c.last.dim(2)) * c.last.dim(3);
  Tensor<T> g(c.last.shape);
  if (cfg_.temporal_fusion == TemporalFusion::MaxPool) {
    for (int c_ = 0; c_ < C; ++c_) {
      const T share = gpool.data[c_] / static_cast<T>(plane);
      for (std::size_t p = 0; p < plane; ++p) {
        const int t = c.tmax[c_ * plane + p];
        g.data[(static_cast<std::size_t>(t) * C + c_) * plane + p] += share;
      }
    }
  } else {
    for (int t = 0; t < m; ++t)
      for (int c_ = 0; c_ < C; ++c_) {
        const T share = gpool.data[c_] / static_cast<T>(plane * m);
        T* dst = g.ptr() + (static_cast<std::size_t>(t) * C + c_) * plane;
        std::fill(dst, dst + plane, share);
      }
  }

  const bool shift = cfg_.temporal_fusion == TemporalFusion::TemporalShift;
  for (int i = static_cast<int>(dw_.size()) - 1; i >= 0; --i) {
    if (shift) g = temporal_shift_backward(g, cfg_.ratio);
    leaky_relu_backward_inplace(c.pw[i], g);
    Tensor<T> gd;
    pw_[i].backward(c.dw[i], g, &gd);
    leaky_relu_backward_inplace(c.dw[i], gd);
    Tensor<T> gin;
    dw_[i].backward(c.in[i], gd, i > 0 ? &gin : nullptr);
    g = std::move(gin);
  }
}

// ---------------------------------------------------------------------------
// fusion

template <typename T>
FusionHead<T>::FusionHead(int channels, int bins, int embedding_dim)
    : channels_(channels), bins_(bins), emb_(embedding_dim) {
  for (int b = 0; b < bins; ++b) {
    fc1.emplace_back("fuse.fc1." + std::to_string(b), channels + kShapeDim, embedding_dim);
    fc2.emplace_back("fuse.fc2." + std::to_string(b), embedding_dim, embedding_dim);
  }
}

template <typename T>
void FusionHead<T>::init(std::mt19937_64& rng) {
  for (int b = 0; b < bins_; ++b) {
    fc1[b].init(rng);
    fc2[b].init(rng);
  }
}

template <typename T>
std::vector<Param<T>*> FusionHead<T>::params() {
  std::vector<Param<T>*> out;
  for (int b = 0; b < bins_; ++b) {
    out.push_back(&fc1[b].weight);
    out.push_back(&fc1[b].bias);
    out.push_back(&fc2[b].weight);
    out.push_back(&fc2[b].bias);
  }
  return out;
}

template <typename T>
Tensor<T> FusionHead<T>::forward(const Tensor<T>& f, const Tensor<T>& v_bs, Cache* cache) const {
  if (f.rank() != 4 || f.dim(1) != channels_ || f.dim(2) % bins_ != 0)
    throw std::invalid_argument("fuse: frame features " + shape_str(f.shape) +
                                " do not match the fusion head");
  if (v_bs.size() != static_cast<std::size_t>(kShapeDim))
    throw std::invalid_argument("fuse: v_bs must have 10 values");
  const int m = f.dim(0), C = f.dim(1), H = f.dim(2), W = f.dim(3), rows = H / bins_;
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  Tensor<T> out({bins_ * emb_});
  if (cache) {
    cache->feat_shape = f.shape;
    cache->argmax.assign(static_cast<std::size_t>(bins_) * C, 0);
    cache->z.clear();
    cache->h.clear();
  }
  for (int b = 0; b < bins_; ++b) {
    Tensor<T> z({1, C + kShapeDim});
    for (int c = 0; c < C; ++c) {
      std::int32_t best = -1;
      T v = T(0);
      for (int t = 0; t < m; ++t) {
        const std::size_t base = (static_cast<std::size_t>(t) * C + c) * plane;
        for (int y = b * rows; y < (b + 1) * rows; ++y)
          for (int x = 0; x < W; ++x) {
            const std::size_t idx = base + static_cast<std::size_t>(y) * W + x;
            if (best < 0 || f.data[idx] > v) {
              v = f.data[idx];
              best = static_cast<std::int32_t>(idx);
            }
          }
      }
      z.data[c] = v;
      if (cache) cache->argmax[static_cast<std::size_t>(b) * C + c] = best;
    }
    for (int d = 0; d < kShapeDim; ++d) z.data[C + d] = v_bs.data[d];

    Tensor<T> h, e;
    fc1[b].forward(z, h);
    leaky_relu_inplace(h);
    fc2[b].forward(h, e);
    std::copy(e.data.begin(), e.data.end(), out.data.begin() + static_cast<std::size_t>(b) * emb_);
    if (cache) {
      cache->z.push_back(std::move(z));
      cache->h.push_back(std::move(h));
    }
  }
  return out;
}

template <typename T>
void FusionHead<T>::backward(const Cache& c, const Tensor<T>& grad_out, Tensor<T>* d_feats,
                             Tensor<T>* d_vbs) {
  const int C = channels_;
  if (d_feats) *d_feats = Tensor<T>(c.feat_shape);
  if (d_vbs) *d_vbs = Tensor<T>({kShapeDim});
  for (int b = 0; b < bins_; ++b) {
    Tensor<T> ge({1, emb_});
    std::copy(grad_out.data.begin() + static_cast<std::size_t>(b) * emb_,
              grad_out.data.begin() + static_cast<std::size_t>(b + 1) * emb_, ge.data.begin());
    Tensor<T> gh, gz;
    fc2[b].backward(c.h[b], ge, &gh);
    leaky_relu_backward_inplace(c.h[b], gh);
    fc1[b].backward(c.z[b], gh, &gz);
    if (d_feats)
      for (int ch = 0; ch < C; ++ch) d_feats->data[c.argmax[static_cast<std::size_t>(b) * C + ch]] += gz.data[ch];
    if (d_vbs)
      for (int d = 0; d < kShapeDim; ++d) d_vbs->data[d] += gz.data[C + d];
  }
}

// ---------------------------------------------------------------------------
// model

const std::vector<std::string>& model_components() {
  static const std::vector<std::string> names = {"silhouette_encoder", "body_shape_encoder",
                                                 "fusion", "ce_head", "crd_heads"};
  return names;
}

template <typename T>
GaitModel<T>::GaitModel(const ModelConfig& cfg) : cfg_(cfg) {
  validate(cfg);
  silhouette = SilhouetteEncoder<T>(cfg.silhouette_widths);
  body = BodyShapeEncoder<T>(cfg.body_widths, cfg.shift);
  fusion = FusionHead<T>(cfg.silhouette_widths[2], cfg.horizontal_bins, cfg.embedding_dim);
  if (cfg.num_classes > 0) ce_head = Linear<T>("ce.fc", cfg.embedding_size(), cfg.num_classes);
}

template <typename T>
void GaitModel<T>::init() {
  std::mt19937_64 rng(cfg_.init_seed);
  silhouette.init(rng);
  body.init(rng);
  fusion.init(rng);
  if (cfg_.num_classes > 0) ce_head.init(rng);
  crd.init(rng);
}

template <typename T>
void GaitModel<T>::set_shift_config(const ShiftConfig& cfg) {
  body.set_config(cfg);
  cfg_.shift = cfg;
}

template <typename T>
std::vector<Param<T>*> GaitModel<T>::component_params(const std::string& name) {
  if (name == "silhouette_encoder") return silhouette.params();
  if (name == "body_shape_encoder") return body.params();
  if (name == "fusion") return fusion.params();
  if (name == "ce_head") {
    if (cfg_.num_classes > 0) return {&ce_head.weight, &ce_head.bias};
    return {};
  }
  if (name == "crd_heads") return crd.params();
  throw ConfigError("unknown model component '" + name + "'");
}

template <typename T>
std::vector<Param<T>*> GaitModel<T>::params() {
  std::vector<Param<T>*> out;
  for (const auto& name : model_components()) {
    auto p = component_params(name);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::vector<const Param<T>*> GaitModel<T>::params() const {
  auto ps = const_cast<GaitModel<T>*>(this)->params();
  return {ps.begin(), ps.end()};
}

template <typename T>
void GaitModel<T>::freeze(const std::string& component, bool frozen) {
  for (auto* p : component_params(component)) p->frozen = frozen;
}

template <typename T>
void GaitModel<T>::zero_grad() {
  for (auto* p : params()) p->zero_grad();
}

template <typename T>
typename GaitModel<T>::Forward GaitModel<T>::forward(const Tensor<T>& x, bool keep_cache) const {
  Forward f;
  f.frame_feats = silhouette.forward(x, keep_cache ? &f.sil : nullptr);
  f.v_bs = body.forward(x, keep_cache ? &f.body : nullptr);
  f.embedding = fusion.forward(f.frame_feats, f.v_bs, keep_cache ? &f.fuse : nullptr);
  if (!keep_cache) f.frame_feats = Tensor<T>();
  return f;
}

template <typename T>
void GaitModel<T>::backward(const Forward& f, const Tensor<T>& d_embedding, const Tensor<T>* d_vbs) {
  Tensor<T> d_feats, g_vbs;
  fusion.backward(f.fuse, d_embedding, &d_feats, &g_vbs);
  if (d_vbs)
    for (int d = 0; d < kShapeDim; ++d) g_vbs.data[d] += d_vbs->data[d];
  const auto body_params = body.params();
  const bool body_frozen =
      std::all_of(body_params.begin(), body_params.end(), [](const Param<T>* p) { return p->frozen; });
  if (!body_frozen) body.backward(f.body, g_vbs);
  const auto sil_params = silhouette.params();
  const bool sil_frozen =
      std::all_of(sil_params.begin(), sil_params.end(), [](const Param<T>* p) { return p->frozen; });
  if (!sil_frozen) silhouette.backward(f.sil, d_feats);
}

#define GAIT_INSTANTIATE(T)                                                 \
  template Tensor<T> temporal_shift<T>(const Tensor<T>&, double);           \
  template Tensor<T> temporal_shift_backward<T>(const Tensor<T>&, double);  \
  template Tensor<T> sequence_tensor<T>(const SilhouetteSequence&);         \
  template class SilhouetteEncoder<T>;                                      \
  template class BodyShapeEncoder<T>;                                       \
  template class FusionHead<T>;                                             \
  template class GaitModel<T>;

GAIT_INSTANTIATE(float)
GAIT_INSTANTIATE(double)

}  // namespace gait
