#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gait/config.hpp"
#include "gait/error.hpp"
#include "gait/eval.hpp"
#include "gait/synth.hpp"
#include "gait/trainer.hpp"

namespace fs = std::filesystem;
using namespace gait;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct CommonOpts {
  std::string config_file;
  std::vector<std::string> sets;
  std::string data, out;
  std::optional<double> prior_coverage, shift_ratio, lambda2;
  std::optional<int> iters;
  std::optional<std::uint64_t> seed;
  bool freeze = false;
  std::string fusion, distill, view_split, init_body_from;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool training_flags) {
  cmd->add_option("-c,--config", o.config_file, "INI configuration file");
  cmd->add_option("--set", o.sets, "override one key, e.g. --set train.lambda2=0.5");
  cmd->add_option("--data", o.data, "dataset root (default: synthesize in memory)");
  cmd->add_option("-o,--out", o.out, "output directory");
  cmd->add_option("--view-split", o.view_split, "novel-view split, e.g. \"train=0,18,36;test=54,72,90\"");
  cmd->add_option("--seed", o.seed, "training seed");
  if (!training_flags) return;
  cmd->add_option("--prior-coverage", o.prior_coverage, "fraction of training sequences with a body prior");
  cmd->add_option("--shift-ratio", o.shift_ratio, "temporal shift ratio per direction");
  cmd->add_option("--lambda2", o.lambda2, "distillation weight");
  cmd->add_option("--iters", o.iters, "training iterations");
  cmd->add_flag("--freeze-body-encoder", o.freeze, "keep the body-shape encoder fixed");
  cmd->add_option("--fusion", o.fusion, "temporal fusion: ts, avg or max");
  cmd->add_option("--distill", o.distill, "distillation loss: crd, l2 or none");
  cmd->add_option("--init-body-from", o.init_body_from, "checkpoint with pretrained body-encoder weights");
  cmd->add_flag("--force", o.force, "write into a non-empty output directory");
}

fs::path default_out(const std::string& verb) {
  const char* root = std::getenv("GAITHBS_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / verb;
}

RunConfig build_config(const CommonOpts& o, const std::string& verb) {
  RunConfig cfg = default_run_config();
  if (!o.config_file.empty()) apply_config_file(cfg, o.config_file);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.data.empty()) cfg.data.root = o.data;
  if (!o.view_split.empty()) cfg.data.view_split = o.view_split;
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.prior_coverage) cfg.data.prior_coverage = *o.prior_coverage;
  if (o.shift_ratio) cfg.train.model.shift.ratio = *o.shift_ratio;
  if (o.lambda2) cfg.train.lambda2 = *o.lambda2;
  if (o.iters) cfg.train.max_iters = *o.iters;
  if (o.freeze) cfg.train.freeze_body_encoder = true;
  if (!o.fusion.empty()) cfg.train.model.shift.temporal_fusion = parse_fusion(o.fusion);
  if (!o.distill.empty()) cfg.train.distill = parse_distill(o.distill);
  if (!o.init_body_from.empty()) cfg.train.init_body_from = o.init_body_from;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (cfg.out_dir.empty()) cfg.out_dir = default_out(verb).string();
  validate(cfg.train);
  return cfg;
}

void ensure_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force)
    throw ConfigError("output directory " + dir.string() + " is not empty (use --force)");
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void surface_warnings(const DatasetIndex& index) {
  for (const auto& w : index.warnings) spdlog::warn("{}: {}", w.where, w.message);
}

void write_eval_outputs(const fs::path& dir, const EvalReport& report, const std::vector<EmbeddingRecord>& records,
                        const std::string& title) {
  write_text(dir / "report.csv", report_csv(report));
  write_text(dir / "report.txt", report_text(report, title));
  write_text(dir / "summary.csv", summary_csv(summarize(report), title));
  write_embedding_dump(dir / "embeddings.tsv", records);
}

void log_summary(const Summary& s, const std::string& label) {
  for (const auto& r : s.rows)
    spdlog::info("{} {}: mean {:.2f} std {:.2f}", label, variant_name(r.variant), r.mean, r.stddev);
}

TrainResult run_training(const RunConfig& cfg, PreparedData& data, std::optional<TrainState> resume) {
  TrainConfig tc = cfg.train;
  tc.out_dir = cfg.out_dir;
  const long total = tc.max_iters;
  return train(tc, data.index, data.store, std::move(resume), [total](const TrainState&, const MetricsRecord& r) {
    if (r.iter == 1 || r.iter % 50 == 0 || r.iter == total)
      spdlog::info("iter {}/{} L_ID {:.4f} L_KD {:.4f} total {:.4f} ({:.0f} ms)", r.iter, total, r.l_id, r.l_kd,
                   r.total, r.wall_ms);
  });
}

// --- verbs -------------------------------------------------------------------

int cmd_synth(const CommonOpts& o) {
  RunConfig cfg = build_config(o, "synth");
  if (o.seed) cfg.synth.seed = *o.seed;
  if (cfg.synth.n_subjects < 1) throw ConfigError("synth.subjects must be >= 1");
  const fs::path out = cfg.out_dir;
  ensure_output_dir(out, o.force);
  const std::size_t n = emit_synthetic_dataset(cfg.synth, out);
  write_text(out / "config.ini", config_to_ini(cfg));
  spdlog::info("wrote {} sequences to {}", n, out.string());
  return kOk;
}

int cmd_train(const CommonOpts& o, const std::string& resume_path) {
  RunConfig cfg = build_config(o, "train");
  const fs::path out = cfg.out_dir;
  std::optional<TrainState> resume;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    fs::create_directories(out);
  } else {
    ensure_output_dir(out, o.force);
  }
  PreparedData data = prepare_data(cfg);
  surface_warnings(data.index);
  write_text(out / "config.ini", config_to_ini(cfg));
  spdlog::info("training on {} sequences ({} identities), output {}", data.index.train_count(),
               data.index.train_subjects.size(), out.string());
  TrainResult res = run_training(cfg, data, std::move(resume));
  if (!data.index.select(Role::Gallery).empty() && !data.index.select(Role::Probe).empty()) {
    std::vector<EmbeddingRecord> records;
    const EvalReport report = evaluate(res.state.model, data.index, data.store, &records);
    write_eval_outputs(out, report, records, "final");
    log_summary(summarize(report), "final");
  }
  return kOk;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint, const std::vector<std::string>& compare) {
  RunConfig cfg = build_config(o, "eval");
  std::vector<std::string> ckpts;
  if (!checkpoint.empty()) ckpts.push_back(checkpoint);
  ckpts.insert(ckpts.end(), compare.begin(), compare.end());
  if (ckpts.empty()) throw ConfigError("eval needs --checkpoint or --compare");
  if (ckpts.size() > 2) throw ConfigError("eval compares at most two checkpoints");

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  PreparedData data = prepare_data(cfg);
  surface_warnings(data.index);
  write_text(out / "config.ini", config_to_ini(cfg));

  std::vector<Summary> summaries;
  std::optional<int> width;
  for (std::size_t i = 0; i < ckpts.size(); ++i) {
    const TrainState st = load_checkpoint(ckpts[i]);
    const int w = st.model.config().embedding_size();
    if (width && *width != w)
      throw DataError("embedding width mismatch: " + std::to_string(*width) + " vs " + std::to_string(w));
    width = w;
    std::vector<EmbeddingRecord> records;
    const EvalReport report = evaluate(st.model, data.index, data.store, &records);
    const fs::path dir = ckpts.size() == 1 ? out : out / (i == 0 ? "baseline" : "model");
    fs::create_directories(dir);
    write_eval_outputs(dir, report, records, fs::path(ckpts[i]).filename().string());
    summaries.push_back(summarize(report));
    log_summary(summaries.back(), fs::path(ckpts[i]).filename().string());
  }
  if (summaries.size() == 2) {
    const Summary delta = summary_delta(summaries[1], summaries[0]);
    write_text(out / "delta.csv", summary_csv(delta, "delta"));
    log_summary(delta, "delta");
  }
  return kOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

int cmd_ablate(const CommonOpts& o, const std::vector<std::string>& grid_specs) {
  RunConfig base = build_config(o, "ablate");
  std::vector<GridAxis> axes;
  for (const auto& spec : grid_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--grid expects key=v1,v2,..., got '" + spec + "'");
    GridAxis a{spec.substr(0, eq), {}};
    std::stringstream ss(spec.substr(eq + 1));
    std::string v;
    while (std::getline(ss, v, ','))
      if (!v.empty()) a.values.push_back(v);
    if (a.values.empty()) throw ConfigError("grid axis " + a.key + " has no values");
    get_config_value(base, a.key);  // rejects unknown keys before any run starts
    axes.push_back(std::move(a));
  }
  if (axes.empty()) throw ConfigError("empty grid (pass at least one --grid key=values)");

  const fs::path out = base.out_dir;
  ensure_output_dir(out, o.force);
  std::size_t n_runs = 1;
  for (const auto& a : axes) n_runs *= a.values.size();

  std::ofstream table(out / "ablation.csv");
  table << "run";
  for (const auto& a : axes) table << ',' << a.key;
  for (Variant v : {Variant::NM, Variant::BG, Variant::CL})
    table << ',' << variant_name(v) << "_mean," << variant_name(v) << "_std";
  table << '\n';
  for (std::size_t r = 0; r < n_runs; ++r) {
    RunConfig cfg = base;
    std::vector<std::string> point;
    std::size_t rest = r;
    for (auto it = axes.rbegin(); it != axes.rend(); ++it) {
      point.insert(point.begin(), it->values[rest % it->values.size()]);
      rest /= it->values.size();
    }
    for (std::size_t k = 0; k < axes.size(); ++k) set_config_value(cfg, axes[k].key, point[k]);
    validate(cfg.train);
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", r);
    cfg.out_dir = (out / name).string();
    fs::create_directories(cfg.out_dir);
    write_text(fs::path(cfg.out_dir) / "config.ini", config_to_ini(cfg));
    spdlog::info("ablation run {}/{}", r + 1, n_runs);

    PreparedData data = prepare_data(cfg);
    TrainResult res = run_training(cfg, data, std::nullopt);
    std::vector<EmbeddingRecord> records;
    const EvalReport report = evaluate(res.state.model, data.index, data.store, &records);
    write_eval_outputs(cfg.out_dir, report, records, name);
    const Summary summary = summarize(report);
    table << name;
    for (const auto& v : point) table << ',' << v;
    for (Variant v : {Variant::NM, Variant::BG, Variant::CL}) {
      if (const SummaryRow* row = summary.find(v)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.4f,%.4f", row->mean, row->stddev);
        table << buf;
      } else {
        table << ",,";
      }
    }
    table << '\n';
    table.flush();
  }
  spdlog::info("wrote {}", (out / "ablation.csv").string());
  return kOk;
}

/// Per-view accuracies of one variant column in a report.csv written by train/eval.
std::map<int, double> read_report_column(const fs::path& path, const std::string& variant) {
  std::stringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream hs(line);
    std::string tok;
    while (std::getline(hs, tok, ',')) header.push_back(tok);
  }
  const auto col = std::find(header.begin(), header.end(), variant) - header.begin();
  if (col == static_cast<long>(header.size())) throw DataError(path.string() + " has no column " + variant);
  std::map<int, double> out;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) cells.push_back(tok);
    if (cells.empty() || cells[0] == "mean" || cells[0] == "std") continue;
    if (static_cast<long>(cells.size()) > col && !cells[col].empty()) out[std::stoi(cells[0])] = std::stod(cells[col]);
  }
  return out;
}

int cmd_report(const std::vector<std::string>& entries, const std::string& variant, const std::string& out_dir) {
  if (entries.empty()) throw ConfigError("report needs at least one --entry NAME=RUN_DIR");
  std::vector<NovelViewEntry> rows;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw ConfigError("--entry expects NAME=RUN_DIR, got '" + e + "'");
    const fs::path dir = e.substr(eq + 1);
    RunConfig cfg = default_run_config();
    if (fs::exists(dir / "config.ini")) apply_config_file(cfg, dir / "config.ini");
    std::string train_views = "all";
    if (!cfg.data.view_split.empty()) {
      std::string s;
      for (int v : parse_view_split(cfg.data.view_split).train) s += (s.empty() ? "" : ",") + std::to_string(v);
      train_views = s;
    }
    rows.push_back({e.substr(0, eq), train_views, read_report_column(dir / "report.csv", variant)});
  }
  const NovelViewTable table = novel_view_report(rows);
  const fs::path out = out_dir.empty() ? default_out("report") : fs::path(out_dir);
  fs::create_directories(out);
  write_text(out / "novel_view.csv", novel_view_csv(table));
  write_text(out / "novel_view.txt", novel_view_text(table));
  std::printf("%s", novel_view_text(table).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("gaithbs"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");

  CLI::App app{"Gait recognition with distilled body-shape priors"};
  app.require_subcommand(1);

  CommonOpts synth_o, train_o, eval_o, ablate_o;
  auto* synth = app.add_subcommand("synth", "render a synthetic walker dataset");
  add_common(synth, synth_o, false);
  synth->add_flag("--force", synth_o.force, "write into a non-empty output directory");

  auto* trn = app.add_subcommand("train", "train a model");
  add_common(trn, train_o, true);
  std::string resume;
  trn->add_option("--resume", resume, "continue from a checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate checkpoints");
  add_common(ev, eval_o, false);
  std::string checkpoint;
  std::vector<std::string> compare;
  ev->add_option("--checkpoint", checkpoint, "checkpoint to evaluate");
  ev->add_option("--compare", compare, "baseline and model checkpoints; writes model - baseline")->expected(2);

  auto* abl = app.add_subcommand("ablate", "run a grid of trainings");
  add_common(abl, ablate_o, true);
  std::vector<std::string> grid;
  abl->add_option("--grid", grid, "axis key=v1,v2,... (repeatable; runs the cartesian product)");

  auto* rep = app.add_subcommand("report", "novel-view comparison table from run directories");
  std::vector<std::string> entries;
  std::string report_variant = "nm", report_out;
  rep->add_option("--entry", entries, "NAME=RUN_DIR (first entry is the baseline)");
  rep->add_option("--variant", report_variant, "probe variant column");
  rep->add_option("-o,--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_o);
    if (trn->parsed()) return cmd_train(train_o, resume);
    if (ev->parsed()) return cmd_eval(eval_o, checkpoint, compare);
    if (abl->parsed()) return cmd_ablate(ablate_o, grid);
    if (rep->parsed()) return cmd_report(entries, report_variant, report_out);
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const DataError& e) {
    spdlog::error("data: {}", e.what());
    return kData;
  } catch (const NumericError& e) {
    spdlog::error("numeric: {}", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kOther;
  }
  return kOther;
}
