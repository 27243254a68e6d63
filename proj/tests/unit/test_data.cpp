#include <algorithm>
#include <map>
#include <set>

#include "doctest.h"
#include "gait/data.hpp"
#include "gait/error.hpp"
#include "gait/png_io.hpp"
#include "gen.hpp"
#include "scratch_dir.hpp"

using namespace gait;
namespace fs = std::filesystem;

namespace {

void write_frame(const fs::path& dir, int frame) {
  fs::create_directories(dir);
  Mask m(40, 30);
  for (int y = 5; y < 35; ++y)
    for (int x = 10; x < 20; ++x) m.at(y, x) = 255;
  char name[16];
  std::snprintf(name, sizeof name, "%04d.png", frame);
  write_png_gray(dir / name, m);
}

/// In-memory index over subjects 1..n, CASIA-B variants and the given views.
DatasetIndex casiab_index(int subjects, const std::vector<int>& views) {
  DatasetIndex idx;
  const std::vector<std::pair<Variant, int>> variants = {{Variant::NM, 1}, {Variant::NM, 2}, {Variant::NM, 3},
                                                         {Variant::NM, 4}, {Variant::NM, 5}, {Variant::NM, 6},
                                                         {Variant::BG, 1}, {Variant::BG, 2}, {Variant::CL, 1},
                                                         {Variant::CL, 2}};
  for (int s = 1; s <= subjects; ++s)
    for (auto [v, q] : variants)
      for (int view : views) {
        IndexEntry e;
        char buf[16];
        std::snprintf(buf, sizeof buf, "%03d", s);
        e.key = {buf, v, q, view};
        e.locator = "mem:" + e.key.str();
        idx.entries.push_back(e);
      }
  return idx;
}

std::vector<int> casia_views() {
  std::vector<int> v;
  for (int a = 0; a <= 180; a += 18) v.push_back(a);
  return v;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("load_dataset indexes a well-formed tree") {
    const auto root = testutil::scratch_dir("load_ok");
    for (const char* s : {"001", "002"})
      for (const char* v : {"nm-01", "bg-01"})
        for (const char* view : {"000", "090"}) write_frame(root / s / v / view, 1);
    const auto idx = load_dataset(root, LayoutDescriptor::casiab());
    CHECK(idx.entries.size() == 8);
    CHECK(idx.warnings.empty());
    CHECK(idx.subjects() == std::set<std::string>{"001", "002"});
    CHECK(idx.views() == std::set<int>{0, 90});
    const auto again = load_dataset(root, LayoutDescriptor::casiab());
    REQUIRE(again.entries.size() == idx.entries.size());
    for (std::size_t i = 0; i < idx.entries.size(); ++i) {
      CHECK(again.entries[i].key == idx.entries[i].key);
      CHECK(again.entries[i].locator == idx.entries[i].locator);
    }
  }

  TEST_CASE("empty directory is an empty dataset") {
    const auto root = testutil::scratch_dir("load_empty");
    CHECK_THROWS_WITH_AS(load_dataset(root), "empty dataset", DataError);
    CHECK_THROWS_AS(load_dataset(root / "missing"), DataError);
  }

  TEST_CASE("one malformed folder among ten yields nine entries and one warning") {
    const auto root = testutil::scratch_dir("load_malformed");
    for (int q = 1; q <= 9; ++q) {
      char v[8];
      std::snprintf(v, sizeof v, "nm-%02d", q);
      write_frame(root / "001" / v / "018", 1);
    }
    write_frame(root / "001" / "walk-xx" / "018", 1);
    const auto idx = load_dataset(root);
    CHECK(idx.entries.size() == 9);
    CHECK(idx.warnings.size() == 1);
  }

  TEST_CASE("undeclared views are reported") {
    const auto root = testutil::scratch_dir("load_views");
    write_frame(root / "001" / "nm-01" / "000", 1);
    write_frame(root / "001" / "nm-01" / "045", 1);
    const auto idx = load_dataset(root, LayoutDescriptor::casiab());
    CHECK(idx.entries.size() == 1);
    CHECK(idx.warnings.size() == 1);
  }

  TEST_CASE("load_sequence_dir normalizes frames to 64x44") {
    const auto root = testutil::scratch_dir("load_seq");
    for (int f = 1; f <= 3; ++f) write_frame(root / "001" / "nm-01" / "000", f);
    const auto seq = load_sequence_dir(root / "001" / "nm-01" / "000", {"001", Variant::NM, 1, 0});
    REQUIRE(seq.length() == 3);
    for (const auto& fr : seq.frames) {
      CHECK(fr.height == kFrameHeight);
      CHECK(fr.width == kFrameWidth);
      CHECK(std::all_of(fr.pixels.begin(), fr.pixels.end(), [](auto p) { return p <= 1; }));
      CHECK(fr.foreground() > 0);
    }
  }

  TEST_CASE("binarize uses the > 127 rule") {
    Mask g(1, 4);
    g.pixels = {0, 127, 128, 255};
    CHECK(binarize(g).pixels == std::vector<std::uint8_t>{0, 0, 1, 1});
  }

  TEST_CASE("normalize_frame rejects empty frames") {
    CHECK_FALSE(normalize_frame(Mask(30, 20)).has_value());
  }

  TEST_CASE("casiab split: 124 subjects give 74 train / 50 test") {
    auto idx = split_subjects(casiab_index(124, {90}), SubjectScheme::casiab_74());
    CHECK(idx.train_subjects.size() == 74);
    CHECK(idx.test_subjects.size() == 50);
    CHECK(idx.train_subjects.count("001"));
    CHECK(idx.train_subjects.count("074"));
    CHECK(idx.test_subjects.count("075"));
  }

  TEST_CASE("full CASIA-B-sized index has 13640 entries") {
    CHECK(casiab_index(124, casia_views()).entries.size() == 13640);
  }

  TEST_CASE("oumvlp odd split: 10307 subjects give 5153 / 5154") {
    DatasetIndex idx;
    for (int s = 1; s <= 10307; ++s) {
      IndexEntry e;
      e.key = {std::to_string(s), Variant::NM, 1, 0};
      idx.entries.push_back(e);
    }
    idx = split_subjects(std::move(idx), SubjectScheme::oumvlp_odd());
    CHECK(idx.train_subjects.size() == 5153);
    CHECK(idx.test_subjects.size() == 5154);
  }

  TEST_CASE("explicit list of every subject leaves an empty test set with a warning") {
    auto idx = casiab_index(3, {0});
    idx = split_subjects(std::move(idx), SubjectScheme::explicit_list({"001", "002", "003"}));
    CHECK(idx.test_subjects.empty());
    CHECK(idx.warnings.size() == 1);
  }

  TEST_CASE("split needs enough subjects") {
    CHECK_THROWS_AS(split_subjects(casiab_index(74, {0}), SubjectScheme::casiab_74()), DataError);
  }

  TEST_CASE("subject split is a partition for every scheme") {
    gen::Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const int n = gen::uniform_int(rng, 2, 40);
      auto idx = casiab_index(n, {0});
      const auto all = idx.subjects();
      std::set<std::string> pick;
      for (const auto& s : all)
        if (gen::uniform_int(rng, 0, 1)) pick.insert(s);
      if (pick.empty()) pick.insert(*all.begin());
      for (const auto& scheme : {SubjectScheme::first(gen::uniform_int(rng, 1, n - 1)), SubjectScheme::oumvlp_odd(),
                                 SubjectScheme::explicit_list(pick)}) {
        const auto out = split_subjects(idx, scheme);
        std::set<std::string> uni = out.train_subjects;
        uni.insert(out.test_subjects.begin(), out.test_subjects.end());
        CHECK(uni == all);
        for (const auto& s : out.train_subjects) CHECK_FALSE(out.test_subjects.count(s));
      }
    }
  }

  TEST_CASE("casiab roles: 4 gallery and 6 probe per view") {
    auto idx = assign_roles(split_subjects(casiab_index(76, {0, 90}), SubjectScheme::casiab_74()));
    std::map<std::pair<std::string, int>, std::pair<int, int>> counts;
    for (const auto& e : idx.entries) {
      if (e.split != Split::Test) continue;
      auto& c = counts[{e.key.subject, e.key.view}];
      (e.role == Role::Gallery ? c.first : c.second) += 1;
      CHECK(e.role != Role::None);
    }
    CHECK(counts.size() == 4);
    for (const auto& [k, c] : counts) {
      CHECK(c.first == 4);
      CHECK(c.second == 6);
    }
  }

  TEST_CASE("first-sequence roles: 2 NM sequences give 1 gallery and 1 probe") {
    DatasetIndex idx;
    for (int s = 1; s <= 4; ++s)
      for (int q = 1; q <= 2; ++q) {
        IndexEntry e;
        e.key = {std::to_string(s), Variant::NM, q, 0};
        idx.entries.push_back(e);
      }
    idx = assign_roles(split_subjects(std::move(idx), SubjectScheme::first(2)), RoleConvention::FirstSequence);
    CHECK(idx.select(Role::Gallery).size() == 2);
    CHECK(idx.select(Role::Probe).size() == 2);
    for (auto i : idx.select(Role::Gallery)) CHECK(idx.entries[i].key.seq_index == 1);
  }

  TEST_CASE("test subject missing gallery sequences is excluded with a warning") {
    auto idx = casiab_index(76, {0});
    idx.entries.erase(std::remove_if(idx.entries.begin(), idx.entries.end(),
                                     [](const IndexEntry& e) {
                                       return e.key.subject == "076" && e.key.variant == Variant::NM &&
                                              e.key.seq_index == 3;
                                     }),
                      idx.entries.end());
    idx = assign_roles(split_subjects(std::move(idx), SubjectScheme::casiab_74()));
    CHECK_FALSE(idx.test_subjects.count("076"));
    CHECK(idx.test_subjects.count("075"));
    CHECK(idx.warnings.size() == 1);
    for (const auto& e : idx.entries)
      if (e.key.subject == "076") CHECK(e.split == Split::Excluded);
  }

  TEST_CASE("view splits") {
    const auto base = assign_roles(split_subjects(casiab_index(76, casia_views()), SubjectScheme::casiab_74()));
    SUBCASE("six train views, five test views") {
      const auto idx = make_view_split(base, {0, 18, 36, 54, 72, 90}, {108, 126, 144, 162, 180});
      std::set<int> tr, te;
      for (auto i : idx.select(Split::Train)) tr.insert(idx.entries[i].key.view);
      for (auto i : idx.select(Split::Test)) te.insert(idx.entries[i].key.view);
      CHECK(tr.size() == 6);
      CHECK(te.size() == 5);
      for (int v : tr) CHECK_FALSE(te.count(v));
    }
    SUBCASE("two train views") {
      const auto idx = make_view_split(base, {0, 54}, {108, 126, 144, 162, 180});
      std::set<int> tr;
      for (auto i : idx.select(Split::Train)) tr.insert(idx.entries[i].key.view);
      CHECK(tr == std::set<int>{0, 54});
    }
    SUBCASE("overlap") {
      CHECK_THROWS_WITH(make_view_split(base, {0}, {0}), "overlapping view sets");
    }
    SUBCASE("absent view") { CHECK_THROWS_AS(make_view_split(base, {0}, {45}), DataError); }
  }

  TEST_CASE("novel-view exclusivity over random splits") {
    gen::Rng rng(11);
    const auto base = assign_roles(split_subjects(casiab_index(76, casia_views()), SubjectScheme::casiab_74()));
    for (int trial = 0; trial < 20; ++trial) {
      auto views = casia_views();
      std::shuffle(views.begin(), views.end(), rng);
      const int cut = gen::uniform_int(rng, 1, 10);
      const std::set<int> tr(views.begin(), views.begin() + cut), te(views.begin() + cut, views.end());
      const auto idx = make_view_split(base, tr, te);
      std::set<int> eval_views;
      for (auto i : idx.select(Split::Test)) eval_views.insert(idx.entries[i].key.view);
      for (auto i : idx.select(Split::Train)) CHECK_FALSE(eval_views.count(idx.entries[i].key.view));
    }
  }

  TEST_CASE("window indices") {
    CHECK(window_indices(4, 6, 0) == std::vector<int>{0, 1, 2, 3, 0, 1});
    std::vector<int> id(30);
    for (int i = 0; i < 30; ++i) id[i] = i;
    gen::Rng rng(1);
    CHECK(sample_frame_indices(30, 30, SampleMode::OrderedWindow, rng) == id);
    CHECK(sample_frame_indices(30, 7, SampleMode::Full, rng) == id);
  }

  TEST_CASE("frame sampling is seed-deterministic and order-preserving") {
    SilhouetteSequence seq;
    for (int i = 0; i < 100; ++i) {
      Mask m(kFrameHeight, kFrameWidth);
      m.pixels[i] = 1;
      seq.frames.push_back(m);
    }
    CHECK(sample_frames(seq, 30, SampleMode::OrderedWindow, 9).frames ==
          sample_frames(seq, 30, SampleMode::OrderedWindow, 9).frames);
    gen::Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const int m = gen::uniform_int(rng, 1, 50), count = gen::uniform_int(rng, 1, 60);
      const auto idx = sample_frame_indices(m, count, SampleMode::OrderedWindow, rng);
      REQUIRE(static_cast<int>(idx.size()) == count);
      for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] == (idx[i - 1] + 1) % m);
    }
  }

  TEST_CASE("pk batches") {
    auto idx = split_subjects(casiab_index(20, {0}), SubjectScheme::first(10));
    SUBCASE("P8 K16") {
      const auto b = make_pk_batch(idx, 8, 16, 1);
      CHECK(b.size() == 128);
      std::map<std::string, int> per;
      for (auto i : b) {
        CHECK(idx.entries[i].split == Split::Train);
        ++per[idx.entries[i].key.subject];
      }
      CHECK(per.size() == 8);
      for (const auto& [s, c] : per) CHECK(c == 16);
    }
    SUBCASE("P1 K1") { CHECK(make_pk_batch(idx, 1, 1, 1).size() == 1); }
    SUBCASE("deterministic") { CHECK(make_pk_batch(idx, 4, 4, 7) == make_pk_batch(idx, 4, 4, 7)); }
    SUBCASE("too few subjects") { CHECK_THROWS_AS(make_pk_batch(idx, 11, 1, 1), DataError); }
  }

  TEST_CASE("subject with three sequences and K=16 contributes 16 draws from them") {
    DatasetIndex idx;
    for (int q = 1; q <= 3; ++q) {
      IndexEntry e;
      e.key = {"1", Variant::NM, q, 0};
      idx.entries.push_back(e);
    }
    for (const char* s : {"2", "3"}) {
      IndexEntry e;
      e.key = {s, Variant::NM, 1, 0};
      idx.entries.push_back(e);
    }
    idx = split_subjects(std::move(idx), SubjectScheme::first(2));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto b = make_pk_batch(idx, 2, 16, seed);
      int from1 = 0;
      for (auto i : b)
        if (idx.entries[i].key.subject == "1") {
          ++from1;
          CHECK(i < 3);
        }
      CHECK(from1 == 16);
    }
  }
}
