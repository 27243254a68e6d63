#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gait/data.hpp"
#include "gait/layers.hpp"
#include "gait/tensor.hpp"

namespace gait {

enum class TemporalFusion { TemporalShift, AvgPool, MaxPool };

std::string fusion_name(TemporalFusion f);  // "ts", "avg", "max"
TemporalFusion parse_fusion(const std::string& s);

struct ShiftConfig {
  double ratio = 0.125;  // fraction of channels shifted in each direction
  int n_blocks = 6;
  TemporalFusion temporal_fusion = TemporalFusion::TemporalShift;
};

void validate(const ShiftConfig& cfg);

/// Channels [0,k) of frame t come from frame t-1, channels [k,2k) from frame t+1,
/// k = floor(C * ratio). Boundary frames keep their own content. Layout [m, C, ...].
template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& feat, double ratio);
/// Adjoint of temporal_shift.
template <typename T>
Tensor<T> temporal_shift_backward(const Tensor<T>& grad_out, double ratio);

struct ModelConfig {
  std::array<int, 3> silhouette_widths = {32, 64, 128};
  int horizontal_bins = 16;
  int embedding_dim = 128;
  ShiftConfig shift;
  std::vector<int> body_widths = {16, 24, 32, 64, 96, 160};
  int num_classes = 0;  // > 0 adds the cross-entropy identity head
  std::uint64_t init_seed = 0;

  int embedding_size() const { return horizontal_bins * embedding_dim; }
};

void validate(const ModelConfig& cfg);

/// [m, 1, 64, 44] tensor with {0,1} values.
template <typename T>
Tensor<T> sequence_tensor(const SilhouetteSequence& seq);

/// Three conv stages with leaky activations; 2x max pooling after the first two.
/// Output [m, widths[2], 16, 11] for 64x44 input.
template <typename T>
class SilhouetteEncoder {
 public:
  struct Cache {
    Tensor<T> x, y1, p1, y2, p2, y3;
    std::vector<std::int32_t> am1, am2;
  };

  SilhouetteEncoder() = default;
  explicit SilhouetteEncoder(const std::array<int, 3>& widths);

  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Tensor<T>& grad_out);
  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params();

  int out_channels() const { return c3_.out_channels(); }

 private:
  Conv2d<T> c1_, c2_, c3_;
  MaxPool2<T> pool_;
};

/// Depthwise-separable blocks, each followed by a temporal shift, then temporal and spatial
/// pooling and a linear head to the 10-dim body shape feature.
template <typename T>
class BodyShapeEncoder {
 public:
  struct Cache {
    std::vector<Tensor<T>> in;   // block inputs (after the previous shift)
    std::vector<Tensor<T>> dw;   // depthwise outputs after activation
    std::vector<Tensor<T>> pw;   // pointwise outputs after activation, before shift
    Tensor<T> last;              // output of the final block
    std::vector<std::int32_t> tmax;  // argmax frame per (c, y, x) for max fusion
    Tensor<T> pooled;            // [1, C]
  };

  BodyShapeEncoder() = default;
  BodyShapeEncoder(const std::vector<int>& widths, const ShiftConfig& cfg);

  /// Returns [10].
  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const;
  void backward(const Cache& cache, const Tensor<T>& grad_out);
  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params();

  const ShiftConfig& config() const { return cfg_; }
  void set_config(const ShiftConfig& cfg);

 private:
  std::vector<Conv2d<T>> dw_, pw_;
  Linear<T> head_;
  ShiftConfig cfg_;
};

/// Appends v_bs to the frame features, max-pools over time and horizontal strips and applies
/// two fully-connected layers per strip. Output [bins * embedding_dim].
template <typename T>
class FusionHead {
 public:
  struct Cache {
    std::vector<int> feat_shape;
    std::vector<std::int32_t> argmax;  // flat index into the frame features per (bin, c)
    std::vector<Tensor<T>> z;           // per bin [1, C + 10]
    std::vector<Tensor<T>> h;           // per bin [1, embedding_dim] after activation
  };

  FusionHead() = default;
  FusionHead(int channels, int bins, int embedding_dim);

  Tensor<T> forward(const Tensor<T>& frame_feats, const Tensor<T>& v_bs, Cache* cache = nullptr) const;
  /// Writes gradients w.r.t. the frame features and v_bs when the pointers are non-null.
  void backward(const Cache& cache, const Tensor<T>& grad_out, Tensor<T>* d_feats, Tensor<T>* d_vbs);
  void init(std::mt19937_64& rng);
  std::vector<Param<T>*> params();

  int bins() const { return bins_; }
  int embedding_dim() const { return emb_; }

  std::vector<Linear<T>> fc1, fc2;

 private:
  int channels_ = 0, bins_ = 0, emb_ = 0;
};

/// CRD projection heads f1 (for v_bs) and f2 (for v_br), 10 -> 10 each.
template <typename T>
struct ProjectionHeads {
  Linear<T> f1{"crd.f1", kShapeDim, kShapeDim};
  Linear<T> f2{"crd.f2", kShapeDim, kShapeDim};

  void init(std::mt19937_64& rng) {
    f1.init(rng);
    f2.init(rng);
  }
  std::vector<Param<T>*> params() { return {&f1.weight, &f1.bias, &f2.weight, &f2.bias}; }
};

/// Full gait branch plus training heads.
template <typename T>
class GaitModel {
 public:
  struct Forward {
    typename SilhouetteEncoder<T>::Cache sil;
    typename BodyShapeEncoder<T>::Cache body;
    typename FusionHead<T>::Cache fuse;
    Tensor<T> frame_feats;
    Tensor<T> v_bs;       // [10]
    Tensor<T> embedding;  // [bins * embedding_dim]
  };

  GaitModel() = default;
  explicit GaitModel(const ModelConfig& cfg);

  void init();
  Forward forward(const Tensor<T>& x, bool keep_cache) const;
  void backward(const Forward& fwd, const Tensor<T>& d_embedding, const Tensor<T>* d_vbs);

  /// Every parameter in a fixed order.
  std::vector<Param<T>*> params();
  std::vector<const Param<T>*> params() const;
  std::vector<Param<T>*> component_params(const std::string& component);
  /// Components: "silhouette_encoder", "body_shape_encoder", "fusion", "ce_head", "crd_heads".
  void freeze(const std::string& component, bool frozen = true);
  void zero_grad();

  const ModelConfig& config() const { return cfg_; }
  void set_shift_config(const ShiftConfig& cfg);

  SilhouetteEncoder<T> silhouette;
  BodyShapeEncoder<T> body;
  FusionHead<T> fusion;
  Linear<T> ce_head;
  ProjectionHeads<T> crd;

 private:
  ModelConfig cfg_;
};

const std::vector<std::string>& model_components();

}  // namespace gait
