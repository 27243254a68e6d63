#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gait/distill.hpp"
#include "gen.hpp"
#include "oracles.hpp"

using namespace gait;

namespace {

ProjectionHeads<double> identity_heads() {
  ProjectionHeads<double> h;
  for (auto* l : {&h.f1, &h.f2}) {
    l->weight.value.fill(0.0);
    l->bias.value.fill(0.0);
    for (int d = 0; d < kShapeDim; ++d) l->weight.value.data[d * kShapeDim + d] = 1.0;
  }
  return h;
}

ProjectionHeads<double> random_heads(gen::Rng& rng) {
  ProjectionHeads<double> h;
  std::mt19937_64 init(rng());
  h.init(init);
  return h;
}

Tensor<double> rows(std::initializer_list<std::pair<int, double>> spikes) {
  Tensor<double> t({static_cast<int>(spikes.size()), kShapeDim});
  int r = 0;
  for (auto [dim, v] : spikes) t.data[r++ * kShapeDim + dim] = v;
  return t;
}

}  // namespace

TEST_SUITE("distill") {
  TEST_CASE("pair score examples") {
    const auto h = identity_heads();
    const auto e0 = rows({{0, 1.0}}), e1 = rows({{1, 1.0}});
    CHECK(crd_pair_score(e0.ptr(), e0.ptr(), h, 1, 1) == doctest::Approx(0.731059).epsilon(1e-6));
    CHECK(crd_pair_score(e0.ptr(), e1.ptr(), h, 1, 1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(crd_pair_score(e0.ptr(), e0.ptr(), h, 1, 1000000000) > 0.999999);

    gen::Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      auto s = gen::tensor<double>(rng, {1, kShapeDim}), t = gen::tensor<double>(rng, {1, kShapeDim});
      const double h1 = crd_pair_score(s.ptr(), t.ptr(), h, 3, 7);
      CHECK(h1 > 0.0);
      CHECK(h1 < 1.0);
      // already-unit input: the projection is the identity
      const auto su = oracle::unit({s.data.begin(), s.data.end()}), tu = oracle::unit({t.data.begin(), t.data.end()});
      CHECK(std::abs(h1 - oracle::pair_h(su, tu, 3, 7)) < 1e-12);
      CHECK(std::abs(crd_pair_score(su.data(), tu.data(), h, 3, 7) - h1) < 1e-12);
    }
    const auto zero = Tensor<double>({1, kShapeDim});
    CHECK(std::isfinite(crd_pair_score(zero.ptr(), zero.ptr(), h, 1, 1)));
  }

  TEST_CASE("single identical pair gives 0.313262") {
    auto h = identity_heads();
    const auto e0 = rows({{2, 1.0}});
    const auto r = crd_loss(e0, e0, {7}, 1, h);
    CHECK(std::abs(r.loss - 0.313262) < 1e-6);
    CHECK(r.positives == 1);
    CHECK(r.negatives == 0);
    CHECK(r.negatives_omitted);
  }

  TEST_CASE("orthogonal batch of two identities gives 2 log 2") {
    auto h = identity_heads();
    const auto s = rows({{0, 1.0}, {1, 1.0}}), t = rows({{2, 1.0}, {3, 1.0}});
    const auto r = crd_loss(s, t, {0, 1}, 2, h);
    CHECK(std::abs(r.loss - 2 * std::log(2.0)) < 1e-12);
    CHECK_FALSE(r.negatives_omitted);
  }

  TEST_CASE("crd_loss matches the pair-enumerating oracle and is permutation invariant") {
    gen::Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
      const int N = gen::uniform_int(rng, 1, 8);
      const auto vbs = gen::tensor<double>(rng, {N, kShapeDim}), vbr = gen::tensor<double>(rng, {N, kShapeDim});
      const auto labels = gen::labels(rng, N, gen::uniform_int(rng, 1, N));
      const std::size_t M = static_cast<std::size_t>(N + gen::uniform_int(rng, 0, 500));
      auto heads = random_heads(rng);
      const auto r = crd_loss(vbs, vbr, labels, M, heads, false);
      CHECK(std::abs(r.loss - oracle::crd(vbs, vbr, labels, static_cast<double>(M), heads)) < 1e-10);

      std::vector<int> perm(N);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Tensor<double> ps({N, kShapeDim}), pr({N, kShapeDim});
      std::vector<int> pl(N);
      for (int i = 0; i < N; ++i) {
        std::copy_n(vbs.ptr() + perm[i] * kShapeDim, kShapeDim, ps.ptr() + i * kShapeDim);
        std::copy_n(vbr.ptr() + perm[i] * kShapeDim, kShapeDim, pr.ptr() + i * kShapeDim);
        pl[i] = labels[perm[i]];
      }
      CHECK(std::abs(crd_loss(ps, pr, pl, M, heads, false).loss - r.loss) < 1e-12);
    }
  }

  TEST_CASE("crd head gradients are accumulated only when asked") {
    gen::Rng rng(3);
    auto heads = random_heads(rng);
    const auto vbs = gen::tensor<double>(rng, {4, kShapeDim}), vbr = gen::tensor<double>(rng, {4, kShapeDim});
    crd_loss(vbs, vbr, {0, 0, 1, 1}, 10, heads, false);
    for (auto* p : heads.params())
      CHECK(std::all_of(p->grad.data.begin(), p->grad.data.end(), [](double g) { return g == 0.0; }));
    crd_loss(vbs, vbr, {0, 0, 1, 1}, 10, heads, true);
    CHECK(std::any_of(heads.f1.weight.grad.data.begin(), heads.f1.weight.grad.data.end(),
                      [](double g) { return g != 0.0; }));
  }

  TEST_CASE("crd input gradients match finite differences") {
    gen::Rng rng(4);
    for (int trial = 0; trial < 5; ++trial) {
      auto heads = random_heads(rng);
      auto vbs = gen::tensor<double>(rng, {4, kShapeDim}), vbr = gen::tensor<double>(rng, {4, kShapeDim});
      const std::vector<int> labels = {0, 1, 0, 2};
      const auto r = crd_loss(vbs, vbr, labels, 20, heads, false);
      for (std::size_t i = 0; i < vbs.size(); ++i) {
        const double n1 = oracle::central_diff(vbs.data, i, [&] { return crd_loss(vbs, vbr, labels, 20, heads, false).loss; });
        const double n2 = oracle::central_diff(vbr.data, i, [&] { return crd_loss(vbs, vbr, labels, 20, heads, false).loss; });
        CHECK(oracle::rel_err(r.d_vbs.data[i], n1, 1e-3) < 1e-4);
        CHECK(oracle::rel_err(r.d_vbr.data[i], n2, 1e-3) < 1e-4);
      }
    }
  }

  TEST_CASE("l2 hint examples") {
    const auto z = Tensor<double>({1, kShapeDim});
    const auto e = rows({{0, 0.1}});
    CHECK(l2_hint_loss(z, e).loss == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(l2_hint_loss(e, e).loss == 0.0);

    gen::Rng rng(5);
    const auto a = gen::tensor<double>(rng, {3, kShapeDim}), b = gen::tensor<double>(rng, {3, kShapeDim});
    Tensor<double> b2 = b;
    for (std::size_t i = 0; i < b.size(); ++i) b2.data[i] = a.data[i] + 2.0 * (b.data[i] - a.data[i]);
    CHECK(l2_hint_loss(a, b2).loss == doctest::Approx(4.0 * l2_hint_loss(a, b).loss).epsilon(1e-12));
    CHECK_THROWS(l2_hint_loss(Tensor<double>({0, kShapeDim}), Tensor<double>({0, kShapeDim})));
  }

  TEST_CASE("combined loss") {
    CHECK(combined_loss(1.0, 0.5, true) == 1.5);
    CHECK(combined_loss(1.0, 0.5, false) == 1.0);
    CHECK(combined_loss(1.0, 0.5, true, 1.0, 5.0) == 3.5);
  }

  TEST_CASE("distill mode names") {
    CHECK(parse_distill("crd") == DistillMode::CRD);
    CHECK(parse_distill("l2") == DistillMode::L2);
    CHECK(distill_name(DistillMode::None) == "none");
    CHECK_THROWS(parse_distill("rkd"));
  }
}
