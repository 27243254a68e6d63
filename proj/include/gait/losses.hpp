#pragma once

#include <vector>

#include "gait/layers.hpp"
#include "gait/tensor.hpp"

namespace gait {

inline constexpr double kTripletMargin = 0.2;

template <typename T>
struct LossGrad {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d embeddings, same shape as the input
  long active = 0;  // triplet: active triplets summed over bins
};

/// Batch-all triplet loss on [B, bins * dim] embeddings, computed per horizontal bin with
/// Euclidean distances, averaged over active triplets, then over bins.
/// Throws std::invalid_argument("degenerate batch") when no (anchor, positive, negative) exists.
template <typename T>
LossGrad<T> triplet_loss(const Tensor<T>& embeddings, const std::vector<int>& labels, int bins,
                         double margin = kTripletMargin);

/// Softmax cross-entropy of `head` applied to the flattened embeddings, mean over the batch.
/// Accumulates head gradients unless the head is frozen.
template <typename T>
LossGrad<T> ce_identity_loss(const Tensor<T>& embeddings, const std::vector<int>& labels,
                             Linear<T>& head);

}  // namespace gait
