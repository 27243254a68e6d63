#include "gait/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <regex>

#include "gait/error.hpp"
#include "gait/png_io.hpp"

namespace fs = std::filesystem;

namespace gait {

std::size_t Mask::foreground() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(),
                                                [](std::uint8_t v) { return v != 0; }));
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::NM: return "nm";
    case Variant::BG: return "bg";
    case Variant::CL: return "cl";
  }
  return "??";
}

Variant parse_variant(const std::string& s) {
  if (s == "nm" || s == "NM") return Variant::NM;
  if (s == "bg" || s == "BG") return Variant::BG;
  if (s == "cl" || s == "CL") return Variant::CL;
  throw DataError("unknown walking variant '" + s + "'");
}

std::string SequenceKey::str() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "/%s-%02d/%03d", variant_name(variant).c_str(), seq_index, view);
  return subject + buf;
}

// ---------------------------------------------------------------------------
// DatasetIndex helpers

std::set<std::string> DatasetIndex::subjects() const {
  std::set<std::string> out;
  for (const auto& e : entries) out.insert(e.key.subject);
  return out;
}

std::set<int> DatasetIndex::views() const {
  std::set<int> out;
  for (const auto& e : entries) out.insert(e.key.view);
  return out;
}

std::vector<std::size_t> DatasetIndex::select(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> DatasetIndex::select(Role r) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].split == Split::Test && entries[i].role == r) out.push_back(i);
  return out;
}

std::optional<std::size_t> DatasetIndex::find(const SequenceKey& key) const {
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].key == key) return i;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Layout + loading

LayoutDescriptor LayoutDescriptor::casiab() {
  LayoutDescriptor d;
  d.name = "casiab";
  for (int v = 0; v <= 180; v += 18) d.declared_views.insert(v);
  return d;
}

LayoutDescriptor LayoutDescriptor::oumvlp() {
  LayoutDescriptor d;
  d.name = "oumvlp";
  for (int v = 0; v <= 90; v += 15) d.declared_views.insert(v);
  for (int v = 180; v <= 270; v += 15) d.declared_views.insert(v);
  return d;
}

LayoutDescriptor LayoutDescriptor::any() {
  LayoutDescriptor d;
  d.name = "any";
  return d;
}

namespace {

bool all_digits(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool want_dirs) {
  std::vector<fs::path> out;
  for (const auto& de : fs::directory_iterator(dir)) {
    const auto name = de.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    if (want_dirs ? de.is_directory() : de.is_regular_file()) out.push_back(de.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (auto& p : sorted_children(dir, false))
    if (p.extension() == ".png") out.push_back(p);
  return out;
}

}  // namespace

DatasetIndex load_dataset(const fs::path& root, const LayoutDescriptor& layout) {
  if (!fs::exists(root) || !fs::is_directory(root))
    throw DataError("dataset root does not exist: " + root.string());

  static const std::regex variant_re(R"(^(nm|bg|cl)-(\d+)$)");
  DatasetIndex index;
  for (const auto& subj_dir : sorted_children(root, true)) {
    const auto subject = subj_dir.filename().string();
    if (!all_digits(subject)) {
      index.warnings.push_back({subj_dir.string(), "unparsable subject folder name"});
      continue;
    }
    for (const auto& var_dir : sorted_children(subj_dir, true)) {
      std::smatch m;
      const auto vname = var_dir.filename().string();
      if (!std::regex_match(vname, m, variant_re)) {
        index.warnings.push_back({var_dir.string(), "unparsable variant folder name"});
        continue;
      }
      const Variant variant = parse_variant(m[1].str());
      const int seq_index = std::stoi(m[2].str());
      for (const auto& view_dir : sorted_children(var_dir, true)) {
        const auto vstr = view_dir.filename().string();
        if (!all_digits(vstr)) {
          index.warnings.push_back({view_dir.string(), "unparsable view folder name"});
          continue;
        }
        const int view = std::stoi(vstr);
        if (!layout.declared_views.empty() && !layout.declared_views.count(view)) {
          index.warnings.push_back({view_dir.string(), "view not declared by layout " + layout.name});
          continue;
        }
        if (png_files(view_dir).empty()) {
          index.warnings.push_back({view_dir.string(), "no frames"});
          continue;
        }
        IndexEntry e;
        e.locator = view_dir.string();
        e.key = {subject, variant, seq_index, view};
        index.entries.push_back(std::move(e));
      }
    }
  }
  if (index.entries.empty()) throw DataError("empty dataset");
  return index;
}

// ---------------------------------------------------------------------------
// Splits and roles

namespace {

/// Subject ordering: numeric when every label is numeric, lexicographic otherwise.
std::vector<std::string> ordered_subjects(const DatasetIndex& index) {
  auto s = index.subjects();
  std::vector<std::string> out(s.begin(), s.end());
  const bool numeric = std::all_of(out.begin(), out.end(), all_digits);
  if (numeric)
    std::stable_sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });
  return out;
}

}  // namespace

DatasetIndex split_subjects(DatasetIndex index, const SubjectScheme& scheme) {
  const auto subjects = ordered_subjects(index);
  index.train_subjects.clear();
  index.test_subjects.clear();

  switch (scheme.kind) {
    case SubjectScheme::Kind::FirstN:
      if (scheme.first_n < 1 || static_cast<int>(subjects.size()) <= scheme.first_n)
        throw DataError("split needs more than " + std::to_string(scheme.first_n) +
                        " subjects, dataset has " + std::to_string(subjects.size()));
      for (std::size_t i = 0; i < subjects.size(); ++i)
        (static_cast<int>(i) < scheme.first_n ? index.train_subjects : index.test_subjects)
            .insert(subjects[i]);
      break;
    case SubjectScheme::Kind::OddIndex: {
      if (subjects.size() < 2) throw DataError("odd-index split needs at least 2 subjects");
      const bool numeric = std::all_of(subjects.begin(), subjects.end(), all_digits);
      for (std::size_t i = 0; i < subjects.size(); ++i) {
        const long long idx = numeric ? std::stoll(subjects[i]) : static_cast<long long>(i + 1);
        const bool train = (idx % 2 == 1) && idx <= scheme.odd_last_index;
        (train ? index.train_subjects : index.test_subjects).insert(subjects[i]);
      }
      break;
    }
    case SubjectScheme::Kind::Explicit:
      for (const auto& s : scheme.explicit_train)
        if (!std::count(subjects.begin(), subjects.end(), s))
          throw DataError("explicit split names unknown subject " + s);
      for (const auto& s : subjects)
        (scheme.explicit_train.count(s) ? index.train_subjects : index.test_subjects).insert(s);
      break;
  }
  if (index.train_subjects.empty()) throw DataError("split leaves no training subjects");
  if (index.test_subjects.empty())
    index.warnings.push_back({"split", "test subject set is empty"});

  for (auto& e : index.entries) {
    e.split = index.train_subjects.count(e.key.subject) ? Split::Train : Split::Test;
    e.role = Role::None;
  }
  return index;
}

DatasetIndex assign_roles(DatasetIndex index, RoleConvention convention) {
  auto is_gallery = [&](const SequenceKey& k) {
    if (k.variant != Variant::NM) return false;
    return convention == RoleConvention::CasiaB ? (k.seq_index >= 1 && k.seq_index <= 4)
                                                : k.seq_index == 1;
  };
  const std::set<int> required =
      convention == RoleConvention::CasiaB ? std::set<int>{1, 2, 3, 4} : std::set<int>{1};

  std::map<std::string, std::set<int>> gallery_seqs;
  for (const auto& e : index.entries)
    if (e.split == Split::Test && is_gallery(e.key)) gallery_seqs[e.key.subject].insert(e.key.seq_index);

  std::set<std::string> dropped;
  for (const auto& s : index.test_subjects) {
    const auto& have = gallery_seqs[s];
    if (!std::includes(have.begin(), have.end(), required.begin(), required.end())) {
      dropped.insert(s);
      index.warnings.push_back({s, "test subject missing gallery sequences; excluded"});
    }
  }
  for (auto& e : index.entries) {
    if (e.split != Split::Test) continue;
    if (dropped.count(e.key.subject)) {
      e.split = Split::Excluded;
      e.role = Role::None;
    } else {
      e.role = is_gallery(e.key) ? Role::Gallery : Role::Probe;
    }
  }
  for (const auto& s : dropped) index.test_subjects.erase(s);
  return index;
}

DatasetIndex make_view_split(DatasetIndex index, const std::set<int>& train_views,
                             const std::set<int>& test_views) {
  if (train_views.empty() || test_views.empty())
    throw ConfigError("view split needs non-empty train and test view sets");
  for (int v : train_views)
    if (test_views.count(v)) throw ConfigError("overlapping view sets");
  const auto present = index.views();
  for (const auto* set : {&train_views, &test_views})
    for (int v : *set)
      if (!present.count(v)) throw DataError("view " + std::to_string(v) + " absent from dataset");

  for (auto& e : index.entries) {
    if (e.split == Split::Train && !train_views.count(e.key.view)) e.split = Split::Excluded;
    if (e.split == Split::Test && !test_views.count(e.key.view)) {
      e.split = Split::Excluded;
      e.role = Role::None;
    }
  }
  index.train_views = train_views;
  index.test_views = test_views;
  return index;
}

// ---------------------------------------------------------------------------
// Frame sampling

std::vector<int> window_indices(int m, int count, int start) {
  if (m < 1 || count < 1) throw std::invalid_argument("window_indices: m and count must be >= 1");
  std::vector<int> idx(count);
  for (int i = 0; i < count; ++i) idx[i] = (start + i) % m;
  return idx;
}

std::vector<int> sample_frame_indices(int m, int count, SampleMode mode, std::mt19937_64& rng) {
  if (mode == SampleMode::Full) {
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  if (count < 1) throw std::invalid_argument("sample_frames: count must be >= 1");
  const int max_start = m >= count ? m - count : m - 1;
  std::uniform_int_distribution<int> dist(0, max_start);
  return window_indices(m, count, dist(rng));
}

SilhouetteSequence select_frames(const SilhouetteSequence& seq, const std::vector<int>& idx) {
  SilhouetteSequence out;
  out.key = seq.key;
  out.frames.reserve(idx.size());
  for (int i : idx) out.frames.push_back(seq.frames.at(i));
  return out;
}

SilhouetteSequence sample_frames(const SilhouetteSequence& seq, int count, SampleMode mode,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return select_frames(seq, sample_frame_indices(seq.length(), count, mode, rng));
}

std::vector<std::size_t> make_pk_batch(const DatasetIndex& index, int P, int K, std::uint64_t seed) {
  if (P < 1 || K < 1) throw ConfigError("P and K must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < index.entries.size(); ++i)
    if (index.entries[i].split == Split::Train) by_subject[index.entries[i].key.subject].push_back(i);
  if (static_cast<int>(by_subject.size()) < P)
    throw DataError("need " + std::to_string(P) + " training subjects, have " +
                    std::to_string(by_subject.size()));

  std::mt19937_64 rng(seed);
  std::vector<std::string> subjects;
  for (const auto& [s, _] : by_subject) subjects.push_back(s);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::vector<std::size_t> batch;
  batch.reserve(static_cast<std::size_t>(P) * K);
  for (int p = 0; p < P; ++p) {
    auto pool = by_subject[subjects[p]];
    if (static_cast<int>(pool.size()) >= K) {
      std::shuffle(pool.begin(), pool.end(), rng);
      batch.insert(batch.end(), pool.begin(), pool.begin() + K);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      for (int k = 0; k < K; ++k) batch.push_back(pool[pick(rng)]);
    }
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Preprocessing

Mask binarize(const Mask& gray) {
  Mask out(gray.height, gray.width);
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) out.pixels[i] = gray.pixels[i] > 127 ? 1 : 0;
  return out;
}

namespace {

struct Tap {
  int src;
  double w;
};

/// Box-filter taps mapping a source axis of length S onto D target cells.
std::vector<std::vector<Tap>> box_taps(int S, int D) {
  std::vector<std::vector<Tap>> taps(D);
  const double ratio = static_cast<double>(S) / D;
  for (int d = 0; d < D; ++d) {
    const double a = d * ratio, b = (d + 1) * ratio;
    for (int s = static_cast<int>(std::floor(a)); s < std::min(S, static_cast<int>(std::ceil(b))); ++s) {
      const double overlap = std::min(b, s + 1.0) - std::max(a, static_cast<double>(s));
      if (overlap > 0) taps[d].push_back({s, overlap / ratio});
    }
  }
  return taps;
}

}  // namespace

std::optional<SilhouetteFrame> normalize_frame(const Mask& bin) {
  int top = -1, bottom = -1;
  for (int y = 0; y < bin.height; ++y) {
    bool any = false;
    for (int x = 0; x < bin.width && !any; ++x) any = bin.at(y, x) != 0;
    if (any) {
      if (top < 0) top = y;
      bottom = y;
    }
  }
  if (top < 0) return std::nullopt;

  const int h = bottom - top + 1;
  const int new_w = std::max(1, static_cast<int>(std::lround(bin.width * double(kFrameHeight) / h)));
  const auto row_taps = box_taps(h, kFrameHeight);
  const auto col_taps = box_taps(bin.width, new_w);

  // rows first, then columns
  std::vector<double> tmp(static_cast<std::size_t>(kFrameHeight) * bin.width, 0.0);
  for (int y = 0; y < kFrameHeight; ++y)
    for (const auto& t : row_taps[y])
      for (int x = 0; x < bin.width; ++x)
        tmp[static_cast<std::size_t>(y) * bin.width + x] += t.w * (bin.at(top + t.src, x) ? 1.0 : 0.0);

  std::vector<std::uint8_t> resized(static_cast<std::size_t>(kFrameHeight) * new_w, 0);
  double sum_x = 0.0, count = 0.0;
  for (int y = 0; y < kFrameHeight; ++y)
    for (int x = 0; x < new_w; ++x) {
      double v = 0.0;
      for (const auto& t : col_taps[x]) v += t.w * tmp[static_cast<std::size_t>(y) * bin.width + t.src];
      if (v >= 0.5) {
        resized[static_cast<std::size_t>(y) * new_w + x] = 1;
        sum_x += x;
        count += 1.0;
      }
    }
  if (count == 0.0) return std::nullopt;

  const int centre = static_cast<int>(std::lround(sum_x / count));
  const int left = centre - kFrameWidth / 2;
  SilhouetteFrame out(kFrameHeight, kFrameWidth);
  for (int y = 0; y < kFrameHeight; ++y)
    for (int x = 0; x < kFrameWidth; ++x) {
      const int sx = left + x;
      if (sx >= 0 && sx < new_w) out.at(y, x) = resized[static_cast<std::size_t>(y) * new_w + sx];
    }
  if (out.foreground() == 0) return std::nullopt;
  return out;
}

// ---------------------------------------------------------------------------
// Storage

SilhouetteSequence load_sequence_dir(const fs::path& dir, const SequenceKey& key) {
  SilhouetteSequence seq;
  seq.key = key;
  for (const auto& f : png_files(dir)) {
    auto frame = normalize_frame(binarize(read_png_gray(f)));
    if (frame) seq.frames.push_back(std::move(*frame));
  }
  if (seq.frames.empty()) throw DataError("sequence has no usable frames: " + dir.string());
  return seq;
}

const SilhouetteSequence& SequenceStore::get(const IndexEntry& entry) {
  auto it = cache_.find(entry.locator);
  if (it != cache_.end()) return it->second;
  if (entry.locator.rfind("mem:", 0) == 0)
    throw DataError("in-memory sequence not present in store: " + entry.locator);
  return cache_.emplace(entry.locator, load_sequence_dir(entry.locator, entry.key)).first->second;
}

void SequenceStore::put(const std::string& locator, SilhouetteSequence seq) {
  cache_[locator] = std::move(seq);
}

}  // namespace gait
