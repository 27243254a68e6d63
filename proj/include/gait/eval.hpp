#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gait/data.hpp"
#include "gait/encoders.hpp"

namespace gait {

struct EmbeddingRecord {
  std::vector<float> embedding;
  SequenceKey key;
  Role role = Role::None;
  std::vector<float> body_shape;  // v_bs, kept for distillation diagnostics
};

/// Full-sequence forward of the gait branch for each listed entry. Priors are never read.
std::vector<EmbeddingRecord> extract_embeddings(const GaitModel<float>& model, const DatasetIndex& index,
                                                const std::vector<std::size_t>& entries,
                                                SequenceStore& store);

struct EvalCell {
  long hits = 0;
  long attempts = 0;
  double accuracy() const { return attempts ? 100.0 * hits / attempts : 0.0; }
};

/// Probe variant type -> probe view -> gallery view -> cell. Identical views never appear.
struct EvalReport {
  std::map<Variant, std::map<int, std::map<int, EvalCell>>> cells;

  /// Mean accuracy over the non-identical gallery views of one probe view.
  std::optional<double> view_accuracy(Variant v, int probe_view) const;
  std::map<int, double> per_view(Variant v) const;
  std::vector<Variant> variants() const;
};

/// Per probe and per gallery view other than the probe's: nearest gallery record at that view
/// (Euclidean, ties to the lowest gallery index) is a hit when subjects match.
EvalReport rank1(const std::vector<EmbeddingRecord>& gallery, const std::vector<EmbeddingRecord>& probe);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population convention
};

MeanStd mean_std(const std::vector<double>& values);

struct SummaryRow {
  Variant variant = Variant::NM;
  std::map<int, double> per_view;
  double mean = 0.0;
  double stddev = 0.0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  const SummaryRow* find(Variant v) const;
};

Summary summarize(const EvalReport& report);
/// Row-wise `a - b` over variants and views present in both.
Summary summary_delta(const Summary& a, const Summary& b);

/// One model evaluated under one training-view set; accuracies per test view.
struct NovelViewEntry {
  std::string model;
  std::string train_views;
  std::map<int, double> per_view;
};

NovelViewEntry novel_view_entry(const std::string& model, const std::string& train_views,
                                const EvalReport& report, Variant variant = Variant::NM);

struct NovelViewTable {
  std::vector<int> test_views;
  struct Row {
    std::string model;
    std::string train_views;
    std::vector<double> accuracy;
    double mean = 0.0;
  };
  std::vector<Row> rows;
  std::optional<double> avg_diff;  // second model minus first, averaged over paired rows
  std::string baseline_model, compared_model;
};

/// Throws std::invalid_argument("mismatched test-view sets") when entries disagree.
NovelViewTable novel_view_report(const std::vector<NovelViewEntry>& entries);

// --- output formats --------------------------------------------------------

std::string report_csv(const EvalReport& report);
std::string report_text(const EvalReport& report, const std::string& title = "");
std::string summary_csv(const Summary& summary, const std::string& label = "");
std::string novel_view_text(const NovelViewTable& table);
std::string novel_view_csv(const NovelViewTable& table);
std::string format_embedding_record(const EmbeddingRecord& r);
void write_embedding_dump(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embedding_dump(const std::filesystem::path& path);

/// Convenience: gallery/probe embeddings from the index roles, then rank1.
EvalReport evaluate(const GaitModel<float>& model, const DatasetIndex& index, SequenceStore& store,
                    std::vector<EmbeddingRecord>* records = nullptr);

std::string role_name(Role r);

}  // namespace gait
