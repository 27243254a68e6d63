#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gait/error.hpp"
#include "gait/synth.hpp"
#include "scratch_dir.hpp"

using namespace gait;
namespace fs = std::filesystem;

namespace {

SyntheticWalkerParams mid_params(int view) {
  SyntheticWalkerParams p;
  for (int d = 0; d < kShapeDim; ++d) p.shape[d] = 0.5 * (kShapeLo[d] + kShapeHi[d]);
  p.view = view;
  return p;
}

double mean_area(const SyntheticSequence& s) {
  double a = 0.0;
  for (const auto& f : s.raw_frames) a += static_cast<double>(f.foreground());
  return a / static_cast<double>(s.raw_frames.size());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("views change the silhouettes but not the shape") {
    const auto a = generate_synthetic_walker(mid_params(0), 10, 3);
    const auto b = generate_synthetic_walker(mid_params(90), 10, 3);
    CHECK(a.shape == b.shape);
    CHECK(a.raw_frames != b.raw_frames);
  }

  TEST_CASE("wider torso covers more area") {
    auto p = mid_params(90);
    p.shape[kTorsoWidth] = kShapeLo[kTorsoWidth];
    const double narrow = mean_area(generate_synthetic_walker(p, 20, 5));
    p.shape[kTorsoWidth] *= 1.5;
    const double wide = mean_area(generate_synthetic_walker(p, 20, 5));
    CHECK(wide > narrow);
  }

  TEST_CASE("rendering is deterministic") {
    const auto a = generate_synthetic_walker(mid_params(36), 12, 9);
    const auto b = generate_synthetic_walker(mid_params(36), 12, 9);
    CHECK(a.raw_frames == b.raw_frames);
    CHECK(a.sequence.frames == b.sequence.frames);
    CHECK(a.detectable == b.detectable);
  }

  TEST_CASE("frontal area never decreases along any shape dimension") {
    for (int d = 0; d < kShapeDim; ++d) {
      const std::string dim_name = kShapeNames[d];
      CAPTURE(dim_name);
      double prev = -1.0;
      for (int step = 0; step <= 24; ++step) {
        auto p = mid_params(0);
        p.shape[d] = kShapeLo[d] + (kShapeHi[d] - kShapeLo[d]) * step / 24.0;
        const double area = mean_area(generate_synthetic_walker(p, 8, 2));
        CHECK(area >= prev);
        prev = area;
      }
    }
  }

  TEST_CASE("normalized frames are 64x44 binary") {
    const auto s = generate_synthetic_walker(mid_params(72), 6, 1);
    REQUIRE(s.sequence.length() == 6);
    for (const auto& f : s.sequence.frames) {
      CHECK(f.height == kFrameHeight);
      CHECK(f.width == kFrameWidth);
      CHECK(f.foreground() > 0);
    }
    CHECK(s.detectable.size() == 6);
  }

  TEST_CASE("bag and coat change the silhouette") {
    auto p = mid_params(90);
    const auto nm = generate_synthetic_walker(p, 5, 4);
    p.effects = effects_for(Variant::BG);
    const auto bg = generate_synthetic_walker(p, 5, 4);
    p.effects = effects_for(Variant::CL);
    const auto cl = generate_synthetic_walker(p, 5, 4);
    CHECK(mean_area(bg) > mean_area(nm));
    CHECK(mean_area(cl) > mean_area(nm));
  }

  TEST_CASE("out-of-range parameters are rejected") {
    auto p = mid_params(0);
    p.shape[kHeadRadius] = 0.0;
    CHECK_THROWS_AS(generate_synthetic_walker(p, 3, 1), ConfigError);
    CHECK_THROWS_AS(generate_synthetic_walker(mid_params(0), 0, 1), ConfigError);
    p = mid_params(0);
    p.effects.coat_dilation = 0.5;
    CHECK_THROWS_AS(validate(p), ConfigError);
  }

  TEST_CASE("subject parameters stay within the documented ranges") {
    for (int s = 1; s <= 50; ++s) {
      const auto p = sample_subject_params(7, s);
      for (int d = 0; d < kShapeDim; ++d) {
        CHECK(p.shape[d] >= kShapeLo[d]);
        CHECK(p.shape[d] <= kShapeHi[d]);
      }
    }
  }

  TEST_CASE("in-memory dataset layout") {
    SyntheticDatasetSpec spec;
    spec.n_subjects = 3;
    spec.variants = {{Variant::NM, 2}, {Variant::CL, 1}};
    spec.views = {0, 90};
    spec.frames = 4;
    auto ds = make_synthetic_dataset(spec);
    CHECK(ds.index.entries.size() == 3 * 3 * 2);
    CHECK(ds.ground_truth.size() == ds.index.entries.size());
    for (const auto& e : ds.index.entries) CHECK(ds.store.get(e).length() == 4);
    spec.n_subjects = 0;
    CHECK_THROWS_AS(make_synthetic_dataset(spec), ConfigError);
  }

  TEST_CASE("emitted dataset round-trips through the loader and is byte-reproducible") {
    SyntheticDatasetSpec spec;
    spec.n_subjects = 2;
    spec.variants = {{Variant::NM, 1}, {Variant::BG, 1}};
    spec.views = {0, 54};
    spec.frames = 3;
    const auto a = testutil::scratch_dir("emit_a"), b = testutil::scratch_dir("emit_b");
    CHECK(emit_synthetic_dataset(spec, a) == 8);
    emit_synthetic_dataset(spec, b);
    CHECK(slurp(a / "priors.tsv") == slurp(b / "priors.tsv"));
    CHECK(slurp(a / "001/bg-01/054/0002.png") == slurp(b / "001/bg-01/054/0002.png"));

    auto idx = load_dataset(a);
    CHECK(idx.entries.size() == 8);
    const auto recs = read_prior_sidecar(a / "priors.tsv");
    CHECK(recs.size() == 8);

    auto mem = make_synthetic_dataset(spec);
    SequenceStore store;
    for (const auto& e : idx.entries) {
      const auto pos = mem.index.find(e.key);
      REQUIRE(pos.has_value());
      CHECK(store.get(e).frames == mem.store.get(mem.index.entries[*pos]).frames);
    }
  }
}
