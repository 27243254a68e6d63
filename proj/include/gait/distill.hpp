#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gait/encoders.hpp"
#include "gait/tensor.hpp"

namespace gait {

enum class DistillMode { CRD, L2, None };

std::string distill_name(DistillMode m);  // "crd", "l2", "none"
DistillMode parse_distill(const std::string& s);

inline constexpr double kCrdEps = 1e-12;

template <typename T>
struct DistillResult {
  double loss = 0.0;
  Tensor<T> d_vbs;  // [N, 10]
  Tensor<T> d_vbr;  // [N, 10]
  int positives = 0;
  int negatives = 0;
  bool negatives_omitted = false;
};

/// h(s, t) = exp(<f1(s), f2(t)>) / (exp(<f1(s), f2(t)>) + N/M) with L2-normalized projections.
template <typename T>
double crd_pair_score(const T* s, const T* t, const ProjectionHeads<T>& heads, std::size_t N,
                      std::size_t M);

/// -[mean_pos log h + mean_neg log(1 - h)] over every (i, j) pair of the batch, i == j included;
/// a pair is positive when labels[i] == labels[j]. v_bs and v_br are [N, 10].
/// Accumulates projection-head gradients when `accumulate_head_grads` is set.
template <typename T>
DistillResult<T> crd_loss(const Tensor<T>& v_bs, const Tensor<T>& v_br, const std::vector<int>& labels,
                          std::size_t M, ProjectionHeads<T>& heads, bool accumulate_head_grads = true);

/// Mean squared error over items and dimensions.
template <typename T>
DistillResult<T> l2_hint_loss(const Tensor<T>& v_bs, const Tensor<T>& v_br);

/// lambda1 * L_ID + (has_prior ? lambda2 : 0) * L_KD.
double combined_loss(double l_id, double l_kd, bool has_prior, double lambda1 = 1.0,
                     double lambda2 = 1.0);

}  // namespace gait
