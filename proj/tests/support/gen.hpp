#pragma once

// Hand-rolled random instance generators for property tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "gait/eval.hpp"
#include "gait/tensor.hpp"

namespace gen {

using Rng = std::mt19937_64;

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

template <typename T>
gait::Tensor<T> tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  gait::Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(uniform(rng, lo, hi));
  return t;
}

/// n labels over `classes` identities, each identity present at least once when n >= classes.
inline std::vector<int> labels(Rng& rng, int n, int classes) {
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = i < classes ? i : uniform_int(rng, 0, classes - 1);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Labels with a guaranteed positive pair and at least two identities.
inline std::vector<int> labels_with_pair(Rng& rng, int n) {
  const int classes = uniform_int(rng, 2, std::max(2, n - 1));
  auto out = labels(rng, n, classes);
  out[0] = out[1];
  if (std::all_of(out.begin(), out.end(), [&](int l) { return l == out[0]; })) out[n - 1] = out[0] + 1;
  return out;
}

struct RetrievalCase {
  std::vector<gait::EmbeddingRecord> gallery, probe;
};

/// Random gallery/probe sets over `views` views and `subjects` identities. Embeddings are drawn
/// from a small integer lattice so exact distance ties occur and exercise the tie rule.
inline RetrievalCase retrieval(Rng& rng, int subjects, const std::vector<int>& views, int dim,
                               int max_records, bool lattice) {
  RetrievalCase c;
  auto record = [&](int s, int view, gait::Variant v, int seq, gait::Role role) {
    gait::EmbeddingRecord r;
    r.key = {std::to_string(100 + s), v, seq, view};
    r.role = role;
    r.embedding.resize(dim);
    for (auto& x : r.embedding)
      x = lattice ? static_cast<float>(uniform_int(rng, -2, 2)) : static_cast<float>(uniform(rng, -1, 1));
    return r;
  };
  for (int s = 0; s < subjects; ++s)
    for (int view : views) {
      if (static_cast<int>(c.gallery.size() + c.probe.size()) + 2 > max_records) break;
      c.gallery.push_back(record(s, view, gait::Variant::NM, 1, gait::Role::Gallery));
      const auto variant = static_cast<gait::Variant>(uniform_int(rng, 0, 2));
      c.probe.push_back(record(s, view, variant, 2, gait::Role::Probe));
    }
  std::shuffle(c.gallery.begin(), c.gallery.end(), rng);
  std::shuffle(c.probe.begin(), c.probe.end(), rng);
  return c;
}

inline std::vector<int> views(Rng& rng, int n) {
  std::vector<int> all;
  for (int v = 0; v <= 180; v += 18) all.push_back(v);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(n);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace gen
