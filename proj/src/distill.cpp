#include "gait/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "gait/error.hpp"

namespace gait {

std::string distill_name(DistillMode m) {
  switch (m) {
    case DistillMode::CRD: return "crd";
    case DistillMode::L2: return "l2";
    case DistillMode::None: return "none";
  }
  return "?";
}

DistillMode parse_distill(const std::string& s) {
  if (s == "crd") return DistillMode::CRD;
  if (s == "l2" || s == "hint") return DistillMode::L2;
  if (s == "none") return DistillMode::None;
  throw ConfigError("unknown distillation mode '" + s + "' (expected crd, l2 or none)");
}

namespace {

/// Rows of x divided by max(|row|, eps); keeps the norms for the backward pass.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x, std::vector<T>& norms) {
  const int N = x.dim(0), D = x.dim(1);
  Tensor<T> out(x.shape);
  norms.assign(N, T(0));
  for (int i = 0; i < N; ++i) {
    T sq = T(0);
    for (int d = 0; d < D; ++d) sq += x.data[i * D + d] * x.data[i * D + d];
    const T n = std::max(std::sqrt(sq), static_cast<T>(kCrdEps));
    norms[i] = n;
    for (int d = 0; d < D; ++d) out.data[i * D + d] = x.data[i * D + d] / n;
  }
  return out;
}

template <typename T>
Tensor<T> normalize_rows_backward(const Tensor<T>& u, const std::vector<T>& norms, const Tensor<T>& gu) {
  const int N = u.dim(0), D = u.dim(1);
  Tensor<T> gx(u.shape);
  for (int i = 0; i < N; ++i) {
    const T* ui = u.ptr() + i * D;
    const T* gi = gu.ptr() + i * D;
    if (norms[i] <= static_cast<T>(kCrdEps)) {
      for (int d = 0; d < D; ++d) gx.data[i * D + d] = gi[d] / norms[i];
      continue;
    }
    T dot = T(0);
    for (int d = 0; d < D; ++d) dot += ui[d] * gi[d];
    for (int d = 0; d < D; ++d) gx.data[i * D + d] = (gi[d] - ui[d] * dot) / norms[i];
  }
  return gx;
}

/// Sum in sorted order, so the result does not depend on the batch order.
double ordered_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += t;
  return s;
}

void check_batch(int n_bs, int n_br, std::size_t n_labels) {
  if (n_bs == 0) throw std::invalid_argument("no positives");
  if (n_bs != n_br || static_cast<std::size_t>(n_bs) != n_labels)
    throw std::invalid_argument("distillation batch: v_bs, v_br and labels differ in length");
}

}  // namespace

template <typename T>
double crd_pair_score(const T* s, const T* t, const ProjectionHeads<T>& heads, std::size_t N,
                      std::size_t M) {
  if (N < 1 || M < N) throw std::invalid_argument("crd: need 1 <= N <= M");
  Tensor<T> xs({1, kShapeDim}), xt({1, kShapeDim}), a, b;
  std::copy(s, s + kShapeDim, xs.data.begin());
  std::copy(t, t + kShapeDim, xt.data.begin());
  heads.f1.forward(xs, a);
  heads.f2.forward(xt, b);
  std::vector<T> na, nb;
  const Tensor<T> u = normalize_rows(a, na), w = normalize_rows(b, nb);
  double dot = 0.0;
  for (int d = 0; d < kShapeDim; ++d) dot += static_cast<double>(u.data[d]) * w.data[d];
  dot = std::clamp(dot, -1.0, 1.0);
  const double e = std::exp(dot);
  return std::clamp(e / (e + static_cast<double>(N) / static_cast<double>(M)), kCrdEps, 1.0 - kCrdEps);
}

template <typename T>
DistillResult<T> crd_loss(const Tensor<T>& v_bs, const Tensor<T>& v_br, const std::vector<int>& labels,
                          std::size_t M, ProjectionHeads<T>& heads, bool accumulate_head_grads) {
  const int N = v_bs.rank() == 2 ? v_bs.dim(0) : 0;
  check_batch(N, v_br.rank() == 2 ? v_br.dim(0) : -1, labels.size());
  if (M < static_cast<std::size_t>(N)) throw std::invalid_argument("crd: dataset cardinality M < N");
  const int D = kShapeDim;

  Tensor<T> a, b;
  heads.f1.forward(v_bs, a);
  heads.f2.forward(v_br, b);
  std::vector<T> na, nb;
  const Tensor<T> u = normalize_rows(a, na);
  const Tensor<T> w = normalize_rows(b, nb);

  DistillResult<T> r;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) (labels[i] == labels[j] ? r.positives : r.negatives)++;
  r.negatives_omitted = r.negatives == 0;

  const double ratio = static_cast<double>(N) / static_cast<double>(M);
  std::vector<double> pos_terms, neg_terms;
  std::vector<double> ds(static_cast<std::size_t>(N) * N, 0.0);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      double dot = 0.0;
      for (int d = 0; d < D; ++d) dot += static_cast<double>(u.data[i * D + d]) * w.data[j * D + d];
      const bool in_range = dot >= -1.0 && dot <= 1.0;
      dot = std::clamp(dot, -1.0, 1.0);
      const double e = std::exp(dot);
      const double h_raw = e / (e + ratio);
      const double h = std::clamp(h_raw, kCrdEps, 1.0 - kCrdEps);
      const bool live = in_range && h == h_raw;
      if (labels[i] == labels[j]) {
        pos_terms.push_back(std::log(h));
        // d(-log h / P)/d dot = -(1 - h) / P
        if (live) ds[i * N + j] = -(1.0 - h) / r.positives;
      } else {
        neg_terms.push_back(std::log(1.0 - h));
        // d(-log(1 - h) / Q)/d dot = h / Q
        if (live) ds[i * N + j] = h / r.negatives;
      }
    }
  r.loss = -ordered_sum(pos_terms) / r.positives;
  if (!r.negatives_omitted) r.loss -= ordered_sum(neg_terms) / r.negatives;

  Tensor<T> gu(u.shape), gw(w.shape);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const double g = ds[i * N + j];
      if (g == 0.0) continue;
      for (int d = 0; d < D; ++d) {
        gu.data[i * D + d] += static_cast<T>(g * w.data[j * D + d]);
        gw.data[j * D + d] += static_cast<T>(g * u.data[i * D + d]);
      }
    }
  const Tensor<T> ga = normalize_rows_backward(u, na, gu);
  const Tensor<T> gb = normalize_rows_backward(w, nb, gw);
  if (accumulate_head_grads) {
    heads.f1.backward(v_bs, ga, &r.d_vbs);
    heads.f2.backward(v_br, gb, &r.d_vbr);
  } else {
    ProjectionHeads<T> scratch = heads;
    scratch.f1.backward(v_bs, ga, &r.d_vbs);
    scratch.f2.backward(v_br, gb, &r.d_vbr);
  }
  return r;
}

template <typename T>
DistillResult<T> l2_hint_loss(const Tensor<T>& v_bs, const Tensor<T>& v_br) {
  if (v_bs.size() == 0) throw std::invalid_argument("empty batch");
  if (v_bs.shape != v_br.shape) throw std::invalid_argument("l2 hint: v_bs and v_br differ in shape");
  DistillResult<T> r;
  r.d_vbs = Tensor<T>(v_bs.shape);
  r.d_vbr = Tensor<T>(v_br.shape);
  const double n = static_cast<double>(v_bs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < v_bs.size(); ++i) {
    const double diff = static_cast<double>(v_bs.data[i]) - v_br.data[i];
    sum += diff * diff;
    r.d_vbs.data[i] = static_cast<T>(2.0 * diff / n);
    r.d_vbr.data[i] = static_cast<T>(-2.0 * diff / n);
  }
  r.loss = sum / n;
  r.positives = v_bs.rank() == 2 ? v_bs.dim(0) : 1;
  return r;
}

double combined_loss(double l_id, double l_kd, bool has_prior, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
  return lambda1 * l_id + (has_prior ? lambda2 * l_kd : 0.0);
}

#define GAIT_INSTANTIATE(T)                                                                        \
  template double crd_pair_score<T>(const T*, const T*, const ProjectionHeads<T>&, std::size_t,    \
                                    std::size_t);                                                   \
  template DistillResult<T> crd_loss<T>(const Tensor<T>&, const Tensor<T>&, const std::vector<int>&, \
                                        std::size_t, ProjectionHeads<T>&, bool);                     \
  template DistillResult<T> l2_hint_loss<T>(const Tensor<T>&, const Tensor<T>&);

GAIT_INSTANTIATE(float)
GAIT_INSTANTIATE(double)

}  // namespace gait
