#include "gait/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "gait/error.hpp"

namespace gait {

std::string role_name(Role r) {
  switch (r) {
    case Role::Gallery: return "gallery";
    case Role::Probe: return "probe";
    case Role::None: return "none";
  }
  return "none";
}

namespace {

Role parse_role(const std::string& s) {
  if (s == "gallery") return Role::Gallery;
  if (s == "probe") return Role::Probe;
  if (s == "none") return Role::None;
  throw DataError("unknown role '" + s + "'");
}

std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::vector<EmbeddingRecord> extract_embeddings(const GaitModel<float>& model, const DatasetIndex& index,
                                                const std::vector<std::size_t>& entries,
                                                SequenceStore& store) {
  if (entries.empty()) throw std::invalid_argument("extract_embeddings: empty entry list");
  std::vector<EmbeddingRecord> out;
  out.reserve(entries.size());
  for (std::size_t pos : entries) {
    const auto& e = index.entries.at(pos);
    const auto fwd = model.forward(sequence_tensor<float>(store.get(e)), false);
    EmbeddingRecord r;
    r.embedding = fwd.embedding.data;
    r.body_shape = fwd.v_bs.data;
    r.key = e.key;
    r.role = e.role;
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// rank-1

std::optional<double> EvalReport::view_accuracy(Variant v, int probe_view) const {
  auto vit = cells.find(v);
  if (vit == cells.end()) return std::nullopt;
  auto pit = vit->second.find(probe_view);
  if (pit == vit->second.end() || pit->second.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& [gv, cell] : pit->second) sum += cell.accuracy();
  return sum / static_cast<double>(pit->second.size());
}

std::map<int, double> EvalReport::per_view(Variant v) const {
  std::map<int, double> out;
  auto vit = cells.find(v);
  if (vit == cells.end()) return out;
  for (const auto& [pv, row] : vit->second)
    if (auto a = view_accuracy(v, pv)) out[pv] = *a;
  return out;
}

std::vector<Variant> EvalReport::variants() const {
  std::vector<Variant> out;
  for (const auto& [v, rows] : cells) out.push_back(v);
  return out;
}

EvalReport rank1(const std::vector<EmbeddingRecord>& gallery, const std::vector<EmbeddingRecord>& probe) {
  if (gallery.empty() || probe.empty()) throw std::invalid_argument("rank1: empty gallery or probe");
  const std::size_t D = gallery.front().embedding.size();
  for (const auto* set : {&gallery, &probe})
    for (const auto& r : *set)
      if (r.embedding.size() != D) throw std::invalid_argument("rank1: embedding widths differ");

  std::map<int, std::vector<std::size_t>> by_view;
  for (std::size_t g = 0; g < gallery.size(); ++g) by_view[gallery[g].key.view].push_back(g);

  EvalReport report;
  std::vector<double> dist(gallery.size());
  for (const auto& p : probe) {
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      double s = 0.0;
      for (std::size_t k = 0; k < D; ++k) {
        const double d = static_cast<double>(p.embedding[k]) - gallery[g].embedding[k];
        s += d * d;
      }
      dist[g] = s;
    }
    auto& row = report.cells[p.key.variant][p.key.view];
    for (const auto& [view, members] : by_view) {
      if (view == p.key.view) continue;
      std::size_t best = members.front();
      for (std::size_t g : members)
        if (dist[g] < dist[best]) best = g;
      auto& cell = row[view];
      ++cell.attempts;
      if (gallery[best].key.subject == p.key.subject) ++cell.hits;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// summaries

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / values.size();
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / values.size());
  return r;
}

const SummaryRow* Summary::find(Variant v) const {
  for (const auto& r : rows)
    if (r.variant == v) return &r;
  return nullptr;
}

Summary summarize(const EvalReport& report) {
  Summary s;
  for (Variant v : report.variants()) {
    SummaryRow row;
    row.variant = v;
    row.per_view = report.per_view(v);
    std::vector<double> vals;
    for (const auto& [view, acc] : row.per_view) vals.push_back(acc);
    const auto ms = mean_std(vals);
    row.mean = ms.mean;
    row.stddev = ms.stddev;
    s.rows.push_back(std::move(row));
  }
  return s;
}

Summary summary_delta(const Summary& a, const Summary& b) {
  Summary out;
  for (const auto& ra : a.rows) {
    const SummaryRow* rb = b.find(ra.variant);
    if (!rb) continue;
    SummaryRow d;
    d.variant = ra.variant;
    for (const auto& [view, acc] : ra.per_view) {
      auto it = rb->per_view.find(view);
      if (it != rb->per_view.end()) d.per_view[view] = acc - it->second;
    }
    d.mean = ra.mean - rb->mean;
    d.stddev = ra.stddev - rb->stddev;
    out.rows.push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// novel-view table

NovelViewEntry novel_view_entry(const std::string& model, const std::string& train_views,
                                const EvalReport& report, Variant variant) {
  return {model, train_views, report.per_view(variant)};
}

NovelViewTable novel_view_report(const std::vector<NovelViewEntry>& entries) {
  if (entries.empty()) throw std::invalid_argument("novel_view_report: no reports");
  NovelViewTable t;
  for (const auto& [view, acc] : entries.front().per_view) t.test_views.push_back(view);
  for (const auto& e : entries) {
    std::vector<int> views;
    for (const auto& [view, acc] : e.per_view) views.push_back(view);
    if (views != t.test_views) throw std::invalid_argument("mismatched test-view sets");
    NovelViewTable::Row row{e.model, e.train_views, {}, 0.0};
    for (const auto& [view, acc] : e.per_view) row.accuracy.push_back(acc);
    row.mean = mean_std(row.accuracy).mean;
    t.rows.push_back(std::move(row));
  }

  std::vector<std::string> models;
  for (const auto& r : t.rows)
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  if (models.size() < 2) return t;
  t.baseline_model = models[0];
  t.compared_model = models[1];
  double sum = 0.0;
  int pairs = 0;
  for (const auto& base : t.rows) {
    if (base.model != t.baseline_model) continue;
    for (const auto& other : t.rows)
      if (other.model == t.compared_model && other.train_views == base.train_views) {
        sum += other.mean - base.mean;
        ++pairs;
        break;
      }
  }
  if (pairs > 0) t.avg_diff = sum / pairs;
  return t;
}

// ---------------------------------------------------------------------------
// formats

std::string report_csv(const EvalReport& report) {
  const auto variants = report.variants();
  std::set<int> views;
  for (Variant v : variants)
    for (const auto& [pv, acc] : report.per_view(v)) views.insert(pv);
  const Summary s = summarize(report);

  std::ostringstream os;
  os << "probe_view";
  for (Variant v : variants) os << ',' << variant_name(v);
  os << '\n';
  for (int view : views) {
    os << view;
    for (Variant v : variants) {
      os << ',';
      if (auto a = report.view_accuracy(v, view)) os << fmt(*a, 4);
    }
    os << '\n';
  }
  os << "mean";
  for (const auto& r : s.rows) os << ',' << fmt(r.mean, 4);
  os << "\nstd";
  for (const auto& r : s.rows) os << ',' << fmt(r.stddev, 4);
  os << '\n';
  return os.str();
}

std::string report_text(const EvalReport& report, const std::string& title) {
  const Summary s = summarize(report);
  std::set<int> views;
  for (const auto& r : s.rows)
    for (const auto& [pv, acc] : r.per_view) views.insert(pv);

  std::ostringstream os;
  if (!title.empty()) os << title << '\n';
  char buf[32];
  os << "variant ";
  for (int v : views) {
    std::snprintf(buf, sizeof buf, "%7d", v);
    os << buf;
  }
  os << "    Mean     STD\n";
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof buf, "%-8s", variant_name(r.variant).c_str());
    os << buf;
    for (int v : views) {
      auto it = r.per_view.find(v);
      if (it == r.per_view.end())
        os << "      -";
      else {
        std::snprintf(buf, sizeof buf, "%7.1f", it->second);
        os << buf;
      }
    }
    std::snprintf(buf, sizeof buf, "%8.2f%8.2f\n", r.mean, r.stddev);
    os << buf;
  }
  return os.str();
}

std::string summary_csv(const Summary& summary, const std::string& label) {
  std::ostringstream os;
  os << "label,variant,mean,std\n";
  for (const auto& r : summary.rows)
    os << label << ',' << variant_name(r.variant) << ',' << fmt(r.mean, 4) << ',' << fmt(r.stddev, 4) << '\n';
  return os.str();
}

std::string novel_view_text(const NovelViewTable& t) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s %-24s", "model", "train views");
  os << buf;
  for (int v : t.test_views) {
    std::snprintf(buf, sizeof buf, "%7d", v);
    os << buf;
  }
  os << "    Mean\n";
  for (const auto& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%-12s %-24s", r.model.c_str(), r.train_views.c_str());
    os << buf;
    for (double a : r.accuracy) {
      std::snprintf(buf, sizeof buf, "%7.1f", a);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%8.2f\n", r.mean);
    os << buf;
  }
  if (t.avg_diff) {
    std::snprintf(buf, sizeof buf, "%+.2f", *t.avg_diff);
    os << "Avg. Diff. (" << t.compared_model << " - " << t.baseline_model << "): " << buf << '\n';
  }
  return os.str();
}

std::string novel_view_csv(const NovelViewTable& t) {
  std::ostringstream os;
  os << "model,train_views";
  for (int v : t.test_views) os << ',' << v;
  os << ",mean\n";
  for (const auto& r : t.rows) {
    os << r.model << ",\"" << r.train_views << '"';
    for (double a : r.accuracy) os << ',' << fmt(a, 4);
    os << ',' << fmt(r.mean, 4) << '\n';
  }
  if (t.avg_diff) os << "avg_diff,,," << fmt(*t.avg_diff, 4) << '\n';
  return os.str();
}

std::string format_embedding_record(const EmbeddingRecord& r) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%02d\t%03d", variant_name(r.key.variant).c_str(), r.key.seq_index,
                r.key.view);
  os << r.key.subject << '\t' << buf << '\t' << role_name(r.role);
  for (float v : r.embedding) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    os << '\t' << buf;
  }
  return os.str();
}

void write_embedding_dump(const std::filesystem::path& path, const std::vector<EmbeddingRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& r : records) out << format_embedding_record(r) << '\n';
}

std::vector<EmbeddingRecord> read_embedding_dump(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<EmbeddingRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string subject, variant, view, role, value;
    if (!std::getline(ls, subject, '\t') || !std::getline(ls, variant, '\t') ||
        !std::getline(ls, view, '\t') || !std::getline(ls, role, '\t') || variant.size() < 4)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed embedding record");
    EmbeddingRecord r;
    r.key.subject = subject;
    r.key.variant = parse_variant(variant.substr(0, 2));
    r.key.seq_index = std::stoi(variant.substr(3));
    r.key.view = std::stoi(view);
    r.role = parse_role(role);
    while (std::getline(ls, value, '\t')) r.embedding.push_back(std::stof(value));
    out.push_back(std::move(r));
  }
  return out;
}

EvalReport evaluate(const GaitModel<float>& model, const DatasetIndex& index, SequenceStore& store,
                    std::vector<EmbeddingRecord>* records) {
  const auto gallery_idx = index.select(Role::Gallery);
  const auto probe_idx = index.select(Role::Probe);
  if (gallery_idx.empty() || probe_idx.empty())
    throw DataError("evaluation needs gallery and probe entries (did role assignment run?)");
  auto gallery = extract_embeddings(model, index, gallery_idx, store);
  auto probe = extract_embeddings(model, index, probe_idx, store);
  EvalReport report = rank1(gallery, probe);
  if (records) {
    records->clear();
    records->insert(records->end(), gallery.begin(), gallery.end());
    records->insert(records->end(), probe.begin(), probe.end());
  }
  return report;
}

}  // namespace gait
