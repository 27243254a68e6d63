#include "gait/prior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "gait/error.hpp"

namespace gait {

int select_reference_frame(const DetectabilityMask& mask) {
  int best_start = -1, best_len = 0;
  int run_start = 0, run_len = 0;
  for (int i = 0; i <= static_cast<int>(mask.size()); ++i) {
    if (i < static_cast<int>(mask.size()) && mask[i]) {
      if (run_len == 0) run_start = i;
      ++run_len;
      continue;
    }
    if (run_len > best_len) {
      best_len = run_len;
      best_start = run_start;
    }
    run_len = 0;
  }
  if (best_len == 0) throw DataError("no usable frame");
  return best_start + (best_len - 1) / 2;
}

PriorNormStats fit_prior_norm(const std::vector<ShapeVector>& raw) {
  if (raw.empty()) throw DataError("cannot fit prior normalization on an empty list");
  PriorNormStats st;
  const double n = static_cast<double>(raw.size());
  for (int d = 0; d < kShapeDim; ++d) {
    double mean = 0.0;
    for (const auto& b : raw) mean += b[d];
    mean /= n;
    double var = 0.0;
    for (const auto& b : raw) var += (b[d] - mean) * (b[d] - mean);
    const double sigma = std::sqrt(var / n);
    st.mean[d] = mean;
    st.scale[d] = sigma < 1e-8 ? 0.0 : 0.1 / sigma;
  }
  return st;
}

ShapeVector apply_prior_norm(const ShapeVector& raw, const PriorNormStats& st) {
  ShapeVector out;
  for (int d = 0; d < kShapeDim; ++d) out[d] = (raw[d] - st.mean[d]) * st.scale[d];
  return out;
}

ShapeVector invert_prior_norm(const ShapeVector& y, const PriorNormStats& st) {
  ShapeVector out;
  for (int d = 0; d < kShapeDim; ++d)
    out[d] = st.scale[d] == 0.0 ? st.mean[d] : y[d] / st.scale[d] + st.mean[d];
  return out;
}

// ---------------------------------------------------------------------------
// Sidecar

std::string format_prior_record(const PriorRecord& r) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d\t%03d", r.key.seq_index, r.key.view);
  os << r.key.subject << '\t' << variant_name(r.key.variant) << '\t' << buf;
  for (double b : r.beta) {
    std::snprintf(buf, sizeof buf, "%.17g", b);
    os << '\t' << buf;
  }
  os << '\t';
  for (auto f : r.detectable) os << (f ? '1' : '0');
  return os.str();
}

PriorRecord parse_prior_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, '\t')) fields.push_back(cur);
  if (fields.size() != 4 + kShapeDim + 1)
    throw DataError("prior record needs 15 tab-separated fields, got " +
                    std::to_string(fields.size()));
  PriorRecord r;
  try {
    r.key.subject = fields[0];
    r.key.variant = parse_variant(fields[1]);
    r.key.seq_index = std::stoi(fields[2]);
    r.key.view = std::stoi(fields[3]);
    for (int d = 0; d < kShapeDim; ++d) {
      std::size_t used = 0;
      r.beta[d] = std::stod(fields[4 + d], &used);
      if (used != fields[4 + d].size()) throw DataError("trailing characters in beta field");
    }
  } catch (const std::logic_error& e) {
    throw DataError(std::string("malformed prior record: ") + e.what());
  }
  for (char c : fields.back()) {
    if (c != '0' && c != '1') throw DataError("detectability mask must be a 0/1 string");
    r.detectable.push_back(c == '1');
  }
  return r;
}

std::vector<PriorRecord> read_prior_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open prior sidecar " + path.string());
  std::vector<PriorRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    try {
      out.push_back(parse_prior_record(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_prior_sidecar(const std::filesystem::path& path, const std::vector<PriorRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write prior sidecar " + path.string());
  for (const auto& r : records) out << format_prior_record(r) << '\n';
}

// ---------------------------------------------------------------------------

DatasetIndex attach_priors(DatasetIndex index, const std::vector<PriorRecord>& records,
                           double coverage, std::uint64_t seed) {
  if (!(coverage >= 0.0 && coverage <= 1.0)) throw ConfigError("prior coverage must be in [0, 1]");

  for (auto& e : index.entries) {
    e.has_prior = false;
    e.prior.reset();
  }
  index.prior_stats.reset();

  std::map<SequenceKey, const PriorRecord*> by_key;
  for (const auto& r : records) by_key[r.key] = &r;

  std::map<SequenceKey, std::size_t> entry_of;
  for (std::size_t i = 0; i < index.entries.size(); ++i) entry_of[index.entries[i].key] = i;
  for (const auto& r : records)
    if (!entry_of.count(r.key))
      index.warnings.push_back({r.key.str(), "prior record references unknown sequence"});

  const auto train = index.select(Split::Train);
  const auto target = static_cast<std::size_t>(std::llround(coverage * static_cast<double>(train.size())));

  std::vector<std::size_t> eligible;
  for (std::size_t i : train) {
    auto it = by_key.find(index.entries[i].key);
    if (it == by_key.end()) continue;
    if (std::none_of(it->second->detectable.begin(), it->second->detectable.end(),
                     [](std::uint8_t f) { return f != 0; })) {
      index.warnings.push_back({index.entries[i].key.str(), "prior has no detectable frame"});
      continue;
    }
    eligible.push_back(i);
  }
  if (eligible.size() < target)
    index.warnings.push_back({"priors", "only " + std::to_string(eligible.size()) +
                                            " training sequences have usable priors; wanted " +
                                            std::to_string(target)});

  std::mt19937_64 rng(seed);
  std::shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(eligible.size(), target));
  std::sort(eligible.begin(), eligible.end());
  if (eligible.empty()) return index;

  std::vector<ShapeVector> raw;
  for (std::size_t i : eligible) raw.push_back(by_key.at(index.entries[i].key)->beta);
  const auto stats = fit_prior_norm(raw);
  for (std::size_t i : eligible) {
    const auto* rec = by_key.at(index.entries[i].key);
    BodyPrior p;
    p.raw_beta = rec->beta;
    p.beta = apply_prior_norm(rec->beta, stats);
    p.source_frame = select_reference_frame(rec->detectable);
    index.entries[i].has_prior = true;
    index.entries[i].prior = p;
  }
  index.prior_stats = stats;
  return index;
}

DatasetIndex attach_priors(DatasetIndex index, const std::filesystem::path& sidecar, double coverage,
                           std::uint64_t seed) {
  return attach_priors(std::move(index), read_prior_sidecar(sidecar), coverage, seed);
}

}  // namespace gait
