#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace gait {

inline constexpr int kFrameHeight = 64;
inline constexpr int kFrameWidth = 44;
inline constexpr int kShapeDim = 10;

using ShapeVector = std::array<double, kShapeDim>;

/// Binary (or 8-bit) raster, row-major.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t foreground() const;
  bool operator==(const Mask&) const = default;
};

/// A normalized 64x44 {0,1} silhouette.
using SilhouetteFrame = Mask;

enum class Variant { NM, BG, CL };

std::string variant_name(Variant v);  // "nm", "bg", "cl"
Variant parse_variant(const std::string& s);

struct SequenceKey {
  std::string subject;
  Variant variant = Variant::NM;
  int seq_index = 1;
  int view = 0;

  /// Relative layout path, e.g. "001/nm-01/090".
  std::string str() const;
  auto operator<=>(const SequenceKey&) const = default;
};

struct SilhouetteSequence {
  std::vector<SilhouetteFrame> frames;
  SequenceKey key;

  int length() const { return static_cast<int>(frames.size()); }
};

/// Normalized body prior attached to a sequence.
struct BodyPrior {
  ShapeVector beta{};      // normalized with the training-set statistics
  ShapeVector raw_beta{};  // as read from the sidecar
  int source_frame = 0;    // reference frame picked from the detectability mask
};

/// Per-dimension affine normalization: (x - mean) * scale.
struct PriorNormStats {
  ShapeVector mean{};
  ShapeVector scale{};
};

enum class Split { Unassigned, Train, Test, Excluded };
enum class Role { None, Gallery, Probe };

struct IndexEntry {
  std::string locator;  // directory path for on-disk data, "mem:<key>" for in-memory data
  SequenceKey key;
  bool has_prior = false;
  std::optional<BodyPrior> prior;
  Split split = Split::Unassigned;
  Role role = Role::None;
};

struct IndexWarning {
  std::string where;
  std::string message;
};

struct DatasetIndex {
  std::vector<IndexEntry> entries;
  std::vector<IndexWarning> warnings;
  std::set<std::string> train_subjects;
  std::set<std::string> test_subjects;
  std::set<int> train_views;  // empty: no novel-view restriction
  std::set<int> test_views;
  std::optional<PriorNormStats> prior_stats;

  std::set<std::string> subjects() const;
  std::set<int> views() const;
  std::vector<std::size_t> select(Split s) const;
  std::vector<std::size_t> select(Role r) const;
  std::size_t train_count() const { return select(Split::Train).size(); }
  std::optional<std::size_t> find(const SequenceKey& key) const;
};

/// Directory convention: <root>/<subject>/<variant>-<seqidx>/<view>/<frame>.png.
struct LayoutDescriptor {
  std::string name = "casiab";
  std::set<int> declared_views;  // empty: accept any parsed view

  static LayoutDescriptor casiab();  // 0..180 step 18
  static LayoutDescriptor oumvlp();  // 0..90 and 180..270 step 15
  static LayoutDescriptor any();
};

DatasetIndex load_dataset(const std::filesystem::path& root,
                          const LayoutDescriptor& layout = LayoutDescriptor::any());

struct SubjectScheme {
  enum class Kind { FirstN, OddIndex, Explicit };
  Kind kind = Kind::FirstN;
  int first_n = 74;
  int odd_last_index = 10305;
  std::set<std::string> explicit_train;

  static SubjectScheme casiab_74() { return {Kind::FirstN, 74, 10305, {}}; }
  static SubjectScheme oumvlp_odd() { return {Kind::OddIndex, 74, 10305, {}}; }
  static SubjectScheme first(int n) { return {Kind::FirstN, n, 10305, {}}; }
  static SubjectScheme explicit_list(std::set<std::string> s) {
    return {Kind::Explicit, 0, 10305, std::move(s)};
  }
};

DatasetIndex split_subjects(DatasetIndex index, const SubjectScheme& scheme);

enum class RoleConvention {
  CasiaB,         // NM#1-4 gallery; NM#5-6, BG, CL probe
  FirstSequence,  // NM#1 gallery; every other sequence probe
};

DatasetIndex assign_roles(DatasetIndex index, RoleConvention convention = RoleConvention::CasiaB);

DatasetIndex make_view_split(DatasetIndex index, const std::set<int>& train_views,
                             const std::set<int>& test_views);

enum class SampleMode { OrderedWindow, Full };

/// Frame indices picked from a sequence of length m. Windows wrap cyclically when m < count.
std::vector<int> sample_frame_indices(int m, int count, SampleMode mode, std::mt19937_64& rng);
std::vector<int> window_indices(int m, int count, int start);

SilhouetteSequence sample_frames(const SilhouetteSequence& seq, int count, SampleMode mode,
                                 std::uint64_t seed);
SilhouetteSequence select_frames(const SilhouetteSequence& seq, const std::vector<int>& idx);

/// P distinct training subjects x K sequences each; returns entry positions in `index.entries`.
std::vector<std::size_t> make_pk_batch(const DatasetIndex& index, int P, int K, std::uint64_t seed);

// --- frame preprocessing ---------------------------------------------------

/// 8-bit -> {0,1} with the > 127 rule.
Mask binarize(const Mask& gray);

/// Crop rows to the foreground, resize to height 64 (aspect preserved) and cut a 44-wide
/// window centred on the foreground centroid. Returns nullopt for frames with no foreground.
std::optional<SilhouetteFrame> normalize_frame(const Mask& binary);

// --- sequence storage ------------------------------------------------------

/// Holds normalized sequences, loading on-disk ones lazily on first access.
class SequenceStore {
 public:
  const SilhouetteSequence& get(const IndexEntry& entry);
  void put(const std::string& locator, SilhouetteSequence seq);
  bool contains(const std::string& locator) const { return cache_.count(locator) > 0; }
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::string, SilhouetteSequence> cache_;
};

SilhouetteSequence load_sequence_dir(const std::filesystem::path& dir, const SequenceKey& key);

}  // namespace gait
