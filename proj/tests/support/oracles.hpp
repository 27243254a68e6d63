#pragma once

// Direct re-derivations used as reference implementations in tests. Nothing here calls into the
// code under test except for reading parameter values.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "gait/data.hpp"
#include "gait/distill.hpp"
#include "gait/eval.hpp"
#include "gait/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;

/// y = W x + b for W stored [out, in].
inline Vec affine(const gait::Linear<double>& l, const double* x) {
  const int out = l.out_features(), in = l.in_features();
  Vec y(out);
  for (int o = 0; o < out; ++o) {
    double s = l.bias.value.size() ? l.bias.value.data[o] : 0.0;
    for (int i = 0; i < in; ++i) s += l.weight.value.data[o * in + i] * x[i];
    y[o] = s;
  }
  return y;
}

inline Vec unit(Vec v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::max(std::sqrt(n), 1e-12);
  for (double& x : v) x /= n;
  return v;
}

inline double pair_h(const Vec& a, const Vec& b, double N, double M) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  dot = std::clamp(dot, -1.0, 1.0);
  const double h = std::exp(dot) / (std::exp(dot) + N / M);
  return std::clamp(h, 1e-12, 1.0 - 1e-12);
}

/// Enumerates every (i, j) pair, classifies it by label and averages log h / log(1 - h).
inline double crd(const gait::Tensor<double>& vbs, const gait::Tensor<double>& vbr, const std::vector<int>& labels,
                  double M, const gait::ProjectionHeads<double>& heads) {
  const int N = vbs.dim(0), D = vbs.dim(1);
  double pos = 0.0, neg = 0.0;
  int np = 0, nn = 0;
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      const Vec s = unit(affine(heads.f1, vbs.ptr() + i * D));
      const Vec t = unit(affine(heads.f2, vbr.ptr() + j * D));
      const double h = pair_h(s, t, N, M);
      if (labels[i] == labels[j]) {
        pos += std::log(h);
        ++np;
      } else {
        neg += std::log(1.0 - h);
        ++nn;
      }
    }
  double L = -pos / np;
  if (nn) L -= neg / nn;
  return L;
}

/// Slice permutation: out[t][c] = in[src][c] with src = t-1 (c < k), t+1 (k <= c < 2k), t otherwise;
/// a source outside [0, m) falls back to t.
template <typename T>
gait::Tensor<T> shift(const gait::Tensor<T>& in, double ratio) {
  const int m = in.dim(0), C = in.dim(1);
  const std::size_t plane = in.size() / (static_cast<std::size_t>(m) * C);
  const int k = std::min(static_cast<int>(std::floor(C * ratio)), C / 2);
  gait::Tensor<T> out(in.shape);
  for (int t = 0; t < m; ++t)
    for (int c = 0; c < C; ++c) {
      int src = t;
      if (c < k) src = t - 1;
      else if (c < 2 * k) src = t + 1;
      if (src < 0 || src >= m) src = t;
      for (std::size_t p = 0; p < plane; ++p)
        out.data[(static_cast<std::size_t>(t) * C + c) * plane + p] =
            in.data[(static_cast<std::size_t>(src) * C + c) * plane + p];
    }
  return out;
}

/// Nested-loop retrieval: per probe and per gallery view != probe view, scan the gallery in order
/// and keep the first strictly smaller distance.
inline gait::EvalReport rank1(const std::vector<gait::EmbeddingRecord>& gallery,
                              const std::vector<gait::EmbeddingRecord>& probe) {
  gait::EvalReport rep;
  std::vector<int> gviews;
  for (const auto& g : gallery)
    if (std::find(gviews.begin(), gviews.end(), g.key.view) == gviews.end()) gviews.push_back(g.key.view);
  for (const auto& p : probe)
    for (int gv : gviews) {
      if (gv == p.key.view) continue;
      int best = -1;
      double best_d = 0.0;
      for (std::size_t gi = 0; gi < gallery.size(); ++gi) {
        if (gallery[gi].key.view != gv) continue;
        double d = 0.0;
        for (std::size_t k = 0; k < p.embedding.size(); ++k) {
          const double diff = static_cast<double>(p.embedding[k]) - gallery[gi].embedding[k];
          d += diff * diff;
        }
        if (best < 0 || d < best_d) {
          best = static_cast<int>(gi);
          best_d = d;
        }
      }
      auto& cell = rep.cells[p.key.variant][p.key.view][gv];
      ++cell.attempts;
      if (gallery[best].key.subject == p.key.subject) ++cell.hits;
    }
  return rep;
}

/// Lists every maximal run of ones, keeps the longest (earliest on ties) and returns its middle
/// (lower middle for even lengths); -1 when the mask has no ones.
inline int reference_frame(const std::vector<std::uint8_t>& mask) {
  struct Run {
    int start, len;
  };
  std::vector<Run> runs;
  const int n = static_cast<int>(mask.size());
  for (int s = 0; s < n; ++s) {
    if (!mask[s] || (s > 0 && mask[s - 1])) continue;
    int e = s;
    while (e + 1 < n && mask[e + 1]) ++e;
    runs.push_back({s, e - s + 1});
  }
  if (runs.empty()) return -1;
  Run best = runs[0];
  for (const auto& r : runs)
    if (r.len > best.len) best = r;
  return best.start + (best.len - 1) / 2;
}

/// Batch-all triplet loss by triple enumeration, per bin, mean over active triplets, mean over bins.
inline double triplet(const gait::Tensor<double>& e, const std::vector<int>& labels, int bins, double margin) {
  const int B = e.dim(0), D = e.dim(1), dim = D / bins;
  auto dist = [&](int i, int j, int bin) {
    double s = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double d = e.data[i * D + bin * dim + k] - e.data[j * D + bin * dim + k];
      s += d * d;
    }
    return std::sqrt(s);
  };
  double total = 0.0;
  for (int bin = 0; bin < bins; ++bin) {
    double sum = 0.0;
    long active = 0;
    for (int a = 0; a < B; ++a)
      for (int p = 0; p < B; ++p)
        for (int n = 0; n < B; ++n) {
          if (p == a || labels[p] != labels[a] || labels[n] == labels[a]) continue;
          const double v = dist(a, p, bin) - dist(a, n, bin) + margin;
          if (v > 0) {
            sum += v;
            ++active;
          }
        }
    if (active) total += sum / active;
  }
  return total / bins;
}

/// Mean softmax cross-entropy of an affine head.
inline double cross_entropy(const gait::Tensor<double>& e, const std::vector<int>& labels,
                            const gait::Linear<double>& head) {
  const int B = e.dim(0), D = e.dim(1);
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    const Vec z = affine(head, e.ptr() + b * D);
    double se = 0.0;
    for (double v : z) se += std::exp(v);
    total += std::log(se) - z[labels[b]];
  }
  return total / B;
}

/// Central finite difference of f with respect to x[i].
inline double central_diff(std::vector<double>& x, std::size_t i, const std::function<double()>& f,
                           double h = 1e-6) {
  const double orig = x[i];
  x[i] = orig + h;
  const double up = f();
  x[i] = orig - h;
  const double down = f();
  x[i] = orig;
  return (up - down) / (2 * h);
}

/// |a - n| / max(|a|, |n|, floor): relative error with an absolute floor for near-zero gradients.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace oracle
