#include "gait/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "gait/error.hpp"
#include "gait/png_io.hpp"
#include "gait/seed.hpp"

namespace fs = std::filesystem;

namespace gait {
namespace {

constexpr double kGroundY = kCanvasHeight - 8;

struct Vec2 {
  double x, y;
};

/// Rasterizes a union of primitives; each primitive touches only its bounding box.
class Canvas {
 public:
  Canvas() : mask_(kCanvasHeight, kCanvasWidth) {}

  void ellipse(Vec2 c, double rx, double ry) {
    if (rx <= 0 || ry <= 0) return;
    for_box(c.x - rx, c.y - ry, c.x + rx, c.y + ry, [&](double px, double py) {
      const double dx = (px - c.x) / rx, dy = (py - c.y) / ry;
      return dx * dx + dy * dy <= 1.0;
    });
  }

  /// Quadrilateral around segment a-b with the given full thickness (no end caps).
  void limb(Vec2 a, Vec2 b, double thickness) {
    const double dx = b.x - a.x, dy = b.y - a.y, len2 = dx * dx + dy * dy;
    if (len2 <= 1e-12 || thickness <= 0) return;
    const double half = thickness / 2, len = std::sqrt(len2);
    for_box(std::min(a.x, b.x) - half, std::min(a.y, b.y) - half, std::max(a.x, b.x) + half,
            std::max(a.y, b.y) + half, [&](double px, double py) {
              const double rx = px - a.x, ry = py - a.y;
              const double t = (rx * dx + ry * dy) / len2;
              if (t < 0.0 || t > 1.0) return false;
              return std::abs(rx * dy - ry * dx) / len <= half;
            });
  }

  Mask take() { return std::move(mask_); }

 private:
  template <typename Inside>
  void for_box(double x0, double y0, double x1, double y1, Inside inside) {
    const int c0 = std::max(0, static_cast<int>(std::floor(x0)));
    const int c1 = std::min(kCanvasWidth - 1, static_cast<int>(std::ceil(x1)));
    const int r0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int r1 = std::min(kCanvasHeight - 1, static_cast<int>(std::ceil(y1)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (inside(c + 0.5, r + 0.5)) mask_.at(r, c) = 255;
  }

  Mask mask_;
};

struct Pose {
  double x_centre;
  double phase;
};

Mask render_frame(const SyntheticWalkerParams& p, const Pose& pose) {
  const auto& s = p.shape;
  const double th = std::numbers::pi * p.view / 180.0;
  const double sv = std::sin(th), cv = std::cos(th);
  // body (forward, lateral) offsets -> image x
  auto px = [&](double fwd, double lat) { return pose.x_centre + fwd * sv + lat * cv; };
  auto py = [&](double up) { return kGroundY - up; };

  const double dil = p.effects.coat_dilation;
  const double tw = s[kTorsoWidth], th_ = std::floor(s[kTorsoHeight]), L = std::floor(s[kLegLength]),
               A = std::floor(s[kArmLength]);
  const double hip_u = L;
  const double torso_bottom = hip_u - std::round(0.15 * th_);
  const double torso_top = torso_bottom + th_;
  const double shoulder_u = torso_top - 2.0;

  const double swing = s[kStrideAmplitude] * std::sin(pose.phase);
  const double arm_thick = s[kArmThickness] * (1.0 + 0.5 * (dil - 1.0));

  Canvas cv_;
  // torso capsule; a coat widens it and extends it downward
  {
    const double depth = 0.6 * tw;
    const double width = std::hypot(tw * cv, depth * sv) * dil;
    const double bottom = torso_bottom - (dil - 1.0) * th_;
    const double r = 0.5 * std::min(width, torso_top - bottom);
    cv_.limb({px(0, 0), py(bottom + r)}, {px(0, 0), py(torso_top - r)}, 2.0 * r);
    cv_.ellipse({px(0, 0), py(bottom + r)}, r, r);
    cv_.ellipse({px(0, 0), py(torso_top - r)}, r, r);
  }
  // head
  const double hr = s[kHeadRadius];
  cv_.ellipse({px(0, 0), py(torso_top + 0.85 * hr)}, hr, hr);
  // shoulder bar; limb anchors snap to whole pixels
  const double sw = 2.0 * std::floor(s[kShoulderWidth] / 2.0);
  cv_.limb({px(0, -sw / 2), py(shoulder_u)}, {px(0, sw / 2), py(shoulder_u)}, arm_thick);
  // legs and arms swing in counter-phase; the swing shears the limb forward
  const double hw = 2.0 * std::floor(s[kHipWidth] / 2.0);
  for (int side : {-1, 1}) {
    const double leg_phi = side * swing;
    const Vec2 hip{px(0, side * hw / 2), py(hip_u)};
    cv_.limb(hip, {hip.x + L * std::sin(leg_phi) * sv, py(hip_u - L)}, s[kLegThickness]);

    const double arm_phi = -0.7 * side * swing;
    const Vec2 shoulder{px(0, side * sw / 2), py(shoulder_u)};
    cv_.limb(shoulder, {shoulder.x + A * std::sin(arm_phi) * sv, py(shoulder_u - A)}, arm_thick);
  }
  if (p.effects.bag) {
    const double rx = std::hypot(4.0 * cv, 9.0 * sv);
    cv_.ellipse({px(2.0, sw / 2 + 5.0), py(hip_u + 0.05 * th_)}, rx, 10.0);
  }
  return cv_.take();
}

bool touches_border(const Mask& m) {
  if (m.foreground() == 0) return true;
  for (int y = 0; y < m.height; ++y)
    if (m.at(y, 0) || m.at(y, m.width - 1)) return true;
  for (int x = 0; x < m.width; ++x)
    if (m.at(0, x) || m.at(m.height - 1, x)) return true;
  return false;
}

}  // namespace

std::string subject_label(int subject) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", subject);
  return buf;
}

void validate(const SyntheticWalkerParams& p) {
  for (int d = 0; d < kShapeDim; ++d)
    if (!(p.shape[d] >= kShapeLo[d] && p.shape[d] <= kShapeHi[d] * 1.5))
      throw ConfigError(std::string("synthetic shape parameter ") + kShapeNames[d] +
                        " out of range");
  if (!(p.gait_phase_rate > 0.0 && p.gait_phase_rate <= 0.25))
    throw ConfigError("gait_phase_rate must be in (0, 0.25]");
  if (!(p.effects.coat_dilation >= 1.0 && p.effects.coat_dilation <= 2.0))
    throw ConfigError("coat_dilation must be in [1, 2]");
  if (p.view < 0 || p.view > 360) throw ConfigError("view must be in [0, 360]");
}

SyntheticSequence generate_synthetic_walker(const SyntheticWalkerParams& params, int m,
                                            std::uint64_t seed, const SequenceKey& key) {
  if (m < 1) throw ConfigError("synthetic sequence length must be >= 1");
  validate(params);

  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double phase0 = 2.0 * std::numbers::pi * u01(rng);
  const double jitter = -20.0 + 40.0 * u01(rng);
  const double rate = params.gait_phase_rate * (0.95 + 0.1 * u01(rng));

  const double sv = std::sin(std::numbers::pi * params.view / 180.0);
  const double speed = 2.0 * params.shape[kLegLength] * std::sin(params.shape[kStrideAmplitude]) * rate;
  const double travel = speed * (m - 1) * sv;
  const double x0 = kCanvasWidth / 2.0 - travel / 2.0 + jitter;

  SyntheticSequence out;
  out.shape = params.shape;
  out.sequence.key = key;
  for (int t = 0; t < m; ++t) {
    Pose pose{x0 + speed * t * sv, phase0 + 2.0 * std::numbers::pi * rate * t};
    Mask raw = render_frame(params, pose);
    out.detectable.push_back(touches_border(raw) ? 0 : 1);
    if (auto f = normalize_frame(binarize(raw))) out.sequence.frames.push_back(std::move(*f));
    out.raw_frames.push_back(std::move(raw));
  }
  return out;
}

SyntheticWalkerParams sample_subject_params(std::uint64_t seed, int subject) {
  std::mt19937_64 rng(seed_mix(seed, 0x5b1ec7ULL + static_cast<std::uint64_t>(subject)));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SyntheticWalkerParams p;
  for (int d = 0; d < kShapeDim; ++d) p.shape[d] = kShapeLo[d] + (kShapeHi[d] - kShapeLo[d]) * u01(rng);
  p.gait_phase_rate = 0.035 + 0.015 * u01(rng);
  return p;
}

VariantEffects effects_for(Variant v) {
  VariantEffects e;
  if (v == Variant::BG) e.bag = true;
  if (v == Variant::CL) e.coat_dilation = 1.3;
  return e;
}

namespace {

template <typename Visit>
void for_each_sequence(const SyntheticDatasetSpec& spec, Visit visit) {
  if (spec.n_subjects < 1) throw ConfigError("synthetic dataset needs at least one subject");
  if (spec.views.empty() || spec.variants.empty()) throw ConfigError("synthetic dataset needs views and variants");
  if (spec.frames < 1) throw ConfigError("synthetic dataset needs frames >= 1");
  for (int s = 1; s <= spec.n_subjects; ++s) {
    const auto base = sample_subject_params(spec.seed, s);
    for (const auto& [variant, count] : spec.variants)
      for (int q = 1; q <= count; ++q)
        for (int view : spec.views) {
          SequenceKey key{subject_label(s), variant, q, view};
          auto params = base;
          params.effects = effects_for(variant);
          params.view = view;
          const std::uint64_t seq_seed =
              seed_mix(seed_mix(seed_mix(spec.seed, static_cast<std::uint64_t>(s)),
                      static_cast<std::uint64_t>(variant) * 100 + static_cast<std::uint64_t>(q)),
                  static_cast<std::uint64_t>(view));
          visit(key, generate_synthetic_walker(params, spec.frames, seq_seed, key));
        }
  }
}

}  // namespace

SyntheticDataset make_synthetic_dataset(const SyntheticDatasetSpec& spec) {
  SyntheticDataset ds;
  for_each_sequence(spec, [&](const SequenceKey& key, SyntheticSequence seq) {
    IndexEntry e;
    e.locator = "mem:" + key.str();
    e.key = key;
    ds.ground_truth.push_back({key, seq.shape, seq.detectable});
    ds.store.put(e.locator, std::move(seq.sequence));
    ds.index.entries.push_back(std::move(e));
  });
  return ds;
}

std::size_t emit_synthetic_dataset(const SyntheticDatasetSpec& spec, const fs::path& out) {
  fs::create_directories(out);
  std::vector<PriorRecord> truth;
  std::size_t n = 0;
  for_each_sequence(spec, [&](const SequenceKey& key, const SyntheticSequence& seq) {
    const fs::path dir = out / key.str();
    fs::create_directories(dir);
    for (std::size_t t = 0; t < seq.raw_frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "%04zu.png", t + 1);
      write_png_gray(dir / name, seq.raw_frames[t]);
    }
    truth.push_back({key, seq.shape, seq.detectable});
    ++n;
  });
  write_prior_sidecar(out / "priors.tsv", truth);

  std::ofstream man(out / "manifest.txt", std::ios::binary);
  man << "generator\tsynthetic-walker\n";
  man << "seed\t" << spec.seed << "\n";
  man << "subjects\t" << spec.n_subjects << "\n";
  man << "frames\t" << spec.frames << "\n";
  man << "variants\t";
  for (std::size_t i = 0; i < spec.variants.size(); ++i)
    man << (i ? "," : "") << variant_name(spec.variants[i].first) << ":" << spec.variants[i].second;
  man << "\nviews\t";
  for (std::size_t i = 0; i < spec.views.size(); ++i) man << (i ? "," : "") << spec.views[i];
  man << "\nsequences\t" << n << "\n";
  return n;
}

}  // namespace gait
