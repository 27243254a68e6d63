#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gait/losses.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace gait;

namespace {

/// Embeddings on a dyadic lattice so translations by integers stay exact.
Tensor<double> lattice(gen::Rng& rng, int B, int D) {
  Tensor<double> t({B, D});
  for (auto& v : t.data) v = gen::uniform_int(rng, -64, 64) / 16.0;
  return t;
}

Tensor<double> permute_rows(const Tensor<double>& e, const std::vector<int>& perm) {
  Tensor<double> out(e.shape);
  const int D = e.dim(1);
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy_n(e.ptr() + perm[i] * D, D, out.ptr() + i * D);
  return out;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("identical embeddings give the margin") {
    Tensor<double> e({6, 8}, 0.25);
    CHECK(triplet_loss(e, {0, 0, 1, 1, 2, 2}, 2).loss == doctest::Approx(0.2).epsilon(1e-15));
  }

  TEST_CASE("separated clusters give zero") {
    Tensor<double> e({4, 2});
    e.data = {0.0, 0.0, 0.05, 0.0, 5.0, 0.0, 5.05, 0.0};
    const auto r = triplet_loss(e, {0, 0, 1, 1}, 1);
    CHECK(r.loss == 0.0);
    CHECK(r.active == 0);
  }

  TEST_CASE("hand-placed 1-D example matches enumeration") {
    Tensor<double> e({4, 1});
    e.data = {0.0, 0.1, 1.0, 1.1};
    const std::vector<int> labels = {0, 0, 1, 1};
    // every anchor has one positive at 0.1 and two negatives at >= 0.9: all hinges inactive
    CHECK(triplet_loss(e, labels, 1).loss == oracle::triplet(e, labels, 1, 0.2));
    CHECK(triplet_loss(e, labels, 1).loss == 0.0);
    // margin 1.05: all 8 triplets active, hinges {0.15, 0.05, 0.25, 0.15} twice
    CHECK(triplet_loss(e, labels, 1, 1.05).loss == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(triplet_loss(e, labels, 1, 1.05).active == 8);
    CHECK(oracle::triplet(e, labels, 1, 1.05) == doctest::Approx(0.15).epsilon(1e-12));
  }

  TEST_CASE("triplet loss matches the triple-loop oracle") {
    gen::Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
      const int B = gen::uniform_int(rng, 3, 12), bins = gen::uniform_int(rng, 1, 4);
      const auto e = gen::tensor<double>(rng, {B, bins * gen::uniform_int(rng, 1, 5)});
      const auto labels = gen::labels_with_pair(rng, B);
      const double margin = gen::uniform(rng, 0.05, 1.0);
      const auto r = triplet_loss(e, labels, bins, margin);
      CHECK(std::abs(r.loss - oracle::triplet(e, labels, bins, margin)) < 1e-10);
      CHECK(r.loss >= 0.0);
    }
  }

  TEST_CASE("triplet invariances") {
    gen::Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const int B = gen::uniform_int(rng, 3, 12), bins = gen::uniform_int(rng, 1, 3), dim = 2;
      const auto e = lattice(rng, B, bins * dim);
      const auto labels = gen::labels_with_pair(rng, B);
      const double base = triplet_loss(e, labels, bins).loss;

      auto moved = e;
      for (int k = 0; k < bins * dim; ++k) {
        const double c = gen::uniform_int(rng, -3, 3);
        for (int b = 0; b < B; ++b) moved.data[b * bins * dim + k] += c;
      }
      CHECK(triplet_loss(moved, labels, bins).loss == base);

      std::vector<int> perm(B);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<int> pl(B);
      for (int i = 0; i < B; ++i) pl[i] = labels[perm[i]];
      CHECK(triplet_loss(permute_rows(e, perm), pl, bins).loss == base);

      auto rotated = e;
      const double th = gen::uniform(rng, 0, 6.28), c = std::cos(th), s = std::sin(th);
      for (int b = 0; b < B; ++b)
        for (int bin = 0; bin < bins; ++bin) {
          double* p = rotated.ptr() + b * bins * dim + bin * dim;
          const double x = p[0], y = p[1];
          p[0] = c * x - s * y;
          p[1] = s * x + c * y;
        }
      CHECK(std::abs(triplet_loss(rotated, labels, bins).loss - base) < 1e-10);
    }
  }

  TEST_CASE("degenerate batches are rejected") {
    Tensor<double> e({3, 2});
    CHECK_THROWS_WITH(triplet_loss(e, {0, 1, 2}, 1), "degenerate batch");
    CHECK_THROWS_WITH(triplet_loss(e, {4, 4, 4}, 1), "degenerate batch");
  }

  TEST_CASE("cross-entropy examples") {
    Linear<double> head("ce", 4, 74);
    head.weight.value.fill(0.0);
    head.bias.value.fill(0.0);
    Tensor<double> e({2, 4}, 0.3);
    CHECK(ce_identity_loss(e, {5, 73}, head).loss == doctest::Approx(std::log(74.0)).epsilon(1e-12));
    CHECK(std::abs(std::log(74.0) - 4.3041) < 1e-4);

    head.bias.value.data[5] = 800.0;
    const auto r = ce_identity_loss(e, {5, 5}, head);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss < 1e-12);
    CHECK_THROWS(ce_identity_loss(e, {5, 74}, head));
  }

  TEST_CASE("cross-entropy matches the oracle") {
    gen::Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int B = gen::uniform_int(rng, 1, 8), D = gen::uniform_int(rng, 1, 12), K = gen::uniform_int(rng, 2, 9);
      Linear<double> head("ce", D, K);
      std::mt19937_64 init(rng());
      head.init(init);
      const auto e = gen::tensor<double>(rng, {B, D}, -3, 3);
      const auto labels = gen::labels(rng, B, K);
      CHECK(ce_identity_loss(e, labels, head).loss == doctest::Approx(oracle::cross_entropy(e, labels, head)).epsilon(1e-12));
    }
  }
}
