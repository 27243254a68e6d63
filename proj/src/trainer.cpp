#include "gait/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gait/checkpoint.hpp"
#include "gait/error.hpp"
#include "gait/losses.hpp"
#include "gait/seed.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;

namespace gait {

void validate(const TrainConfig& cfg) {
  if (cfg.P < 2) throw ConfigError("P must be >= 2 for the triplet loss");
  if (cfg.K < 1) throw ConfigError("K must be >= 1");
  if (cfg.P * cfg.K < 3) throw ConfigError("batch too small for triplets");
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(cfg.adam.beta1 >= 0.0 && cfg.adam.beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(cfg.adam.beta2 >= 0.0 && cfg.adam.beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(cfg.adam.eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (cfg.adam.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (cfg.max_iters < 0) throw ConfigError("max_iters must be >= 0");
  if (!(cfg.margin > 0.0)) throw ConfigError("margin must be positive");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw ConfigError("loss weights must be non-negative");
  if (cfg.frames < 1) throw ConfigError("frames must be >= 1");
  if (cfg.eval_every < 0) throw ConfigError("eval_every must be >= 0");
  validate(cfg.model);
}

TrainState init_state(const TrainConfig& cfg, const DatasetIndex& index) {
  validate(cfg);
  if (index.train_subjects.empty()) throw DataError("index has no training subjects (run split_subjects)");
  TrainState st;
  st.subjects.assign(index.train_subjects.begin(), index.train_subjects.end());
  st.cardinality = index.train_count();
  if (st.cardinality == 0) throw DataError("index has no training sequences");
  st.prior_stats = index.prior_stats;

  ModelConfig mc = cfg.model;
  mc.num_classes = cfg.use_ce ? static_cast<int>(st.subjects.size()) : 0;
  st.model = GaitModel<float>(mc);
  st.model.init();
  if (!cfg.init_body_from.empty()) load_body_encoder(st.model, cfg.init_body_from);
  if (cfg.freeze_body_encoder) st.model.freeze("body_shape_encoder");
  st.opt = Adam<float>(cfg.adam);
  return st;
}

TrainBatch make_train_batch(const TrainState& state, const DatasetIndex& index, SequenceStore& store,
                            const TrainConfig& cfg, long iteration) {
  const std::uint64_t step_seed = seed_mix(cfg.seed, static_cast<std::uint64_t>(iteration));
  TrainBatch b;
  b.entries = make_pk_batch(index, cfg.P, cfg.K, step_seed);
  for (std::size_t i = 0; i < b.entries.size(); ++i) {
    const auto& e = index.entries[b.entries[i]];
    const auto& seq = store.get(e);
    b.clips.push_back(sample_frames(seq, cfg.frames, SampleMode::OrderedWindow, seed_mix(step_seed, i + 1)));
    auto it = std::lower_bound(state.subjects.begin(), state.subjects.end(), e.key.subject);
    if (it == state.subjects.end() || *it != e.key.subject)
      throw DataError("batch subject " + e.key.subject + " is not a training identity of this state");
    b.labels.push_back(static_cast<int>(it - state.subjects.begin()));
    if (e.has_prior && e.prior)
      b.priors.push_back(e.prior->beta);
    else
      b.priors.push_back(std::nullopt);
  }
  return b;
}

namespace {

// Keeps freed activation blocks in the heap between steps.
void retain_heap_blocks() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    mallopt(M_TOP_PAD, 256 << 20);
    return true;
  }();
  (void)once;
#endif
}

void scale_grads(const std::vector<Param<float>*>& ps, float s) {
  for (auto* p : ps)
    for (auto& g : p->grad.data) g *= s;
}

}  // namespace

MetricsRecord train_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                         const DatasetIndex& index) {
  const auto t0 = std::chrono::steady_clock::now();
  auto& model = state.model;
  model.zero_grad();

  const int B = static_cast<int>(batch.clips.size());
  const int D = model.config().embedding_size();
  std::vector<GaitModel<float>::Forward> fwd(B);
  Tensor<float> E({B, D});
  for (int i = 0; i < B; ++i) {
    fwd[i] = model.forward(sequence_tensor<float>(batch.clips[i]), true);
    std::copy(fwd[i].embedding.data.begin(), fwd[i].embedding.data.end(), E.data.begin() + static_cast<std::size_t>(i) * D);
  }

  MetricsRecord rec;
  rec.iter = state.iteration + 1;
  rec.lr = cfg.adam.lr;

  auto tri = triplet_loss(E, batch.labels, model.config().horizontal_bins, cfg.margin);
  rec.l_id = tri.loss;
  Tensor<float> dE = std::move(tri.grad);
  if (cfg.use_ce) {
    auto ce = ce_identity_loss(E, batch.labels, model.ce_head);
    rec.l_id += ce.loss;
    for (std::size_t k = 0; k < dE.size(); ++k) dE.data[k] += ce.grad.data[k];
    scale_grads(model.component_params("ce_head"), static_cast<float>(cfg.lambda1));
  }
  for (auto& g : dE.data) g *= static_cast<float>(cfg.lambda1);

  std::vector<int> covered;
  for (int i = 0; i < B; ++i)
    if (batch.priors[i]) covered.push_back(i);
  rec.prior_items = static_cast<int>(covered.size());
  const bool has_kd = cfg.distill != DistillMode::None && !covered.empty();

  Tensor<float> dV({B, kShapeDim});
  if (has_kd) {
    const int n = static_cast<int>(covered.size());
    Tensor<float> vbs({n, kShapeDim}), vbr({n, kShapeDim});
    std::vector<int> kd_labels;
    for (int r = 0; r < n; ++r) {
      const int i = covered[r];
      for (int d = 0; d < kShapeDim; ++d) {
        vbs.data[r * kShapeDim + d] = fwd[i].v_bs.data[d];
        vbr.data[r * kShapeDim + d] = static_cast<float>((*batch.priors[i])[d]);
      }
      kd_labels.push_back(batch.labels[i]);
    }
    DistillResult<float> kd = cfg.distill == DistillMode::CRD
                                  ? crd_loss(vbs, vbr, kd_labels, state.cardinality, model.crd)
                                  : l2_hint_loss(vbs, vbr);
    rec.l_kd = kd.loss;
    scale_grads(model.component_params("crd_heads"), static_cast<float>(cfg.lambda2));
    for (int r = 0; r < n; ++r)
      for (int d = 0; d < kShapeDim; ++d)
        dV.data[covered[r] * kShapeDim + d] = static_cast<float>(cfg.lambda2) * kd.d_vbs.data[r * kShapeDim + d];
  }
  rec.total = combined_loss(rec.l_id, rec.l_kd, has_kd, cfg.lambda1, cfg.lambda2);

  if (!std::isfinite(rec.total) || !std::isfinite(rec.l_id) || !std::isfinite(rec.l_kd)) {
    std::string msg = "non-finite loss at iteration " + std::to_string(rec.iter) + "; batch:";
    for (std::size_t pos : batch.entries) msg += " " + index.entries[pos].locator;
    throw NumericError(msg);
  }

  for (int i = 0; i < B; ++i) {
    Tensor<float> de({D}), dv({kShapeDim});
    std::copy(dE.data.begin() + static_cast<std::size_t>(i) * D,
              dE.data.begin() + static_cast<std::size_t>(i + 1) * D, de.data.begin());
    std::copy(dV.data.begin() + i * kShapeDim, dV.data.begin() + (i + 1) * kShapeDim, dv.data.begin());
    model.backward(fwd[i], de, has_kd ? &dv : nullptr);
  }
  state.opt.step(model.params());
  ++state.iteration;
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

namespace {

std::string eval_csv_row(long iter, const Summary& s) {
  std::ostringstream os;
  char buf[32];
  for (const auto& r : s.rows) {
    os << iter << ',' << variant_name(r.variant);
    std::snprintf(buf, sizeof buf, ",%.4f,%.4f\n", r.mean, r.stddev);
    os << buf;
  }
  return os.str();
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const DatasetIndex& index, SequenceStore& store,
                  std::optional<TrainState> resume, const StepHook& hook) {
  validate(cfg);
  retain_heap_blocks();
  TrainResult res;
  const bool resumed = resume.has_value();
  res.state = resumed ? std::move(*resume) : init_state(cfg, index);
  if (resumed) {
    std::vector<std::string> subjects(index.train_subjects.begin(), index.train_subjects.end());
    if (subjects != res.state.subjects)
      throw DataError("checkpoint training identities do not match the dataset split");
    if (cfg.freeze_body_encoder) res.state.model.freeze("body_shape_encoder");
  }
  const bool can_eval = !index.select(Role::Gallery).empty() && !index.select(Role::Probe).empty();

  std::ofstream metrics, evals;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    const auto mpath = cfg.out_dir / "metrics.csv";
    const auto epath = cfg.out_dir / "eval.csv";
    const bool append = resumed && fs::exists(mpath);
    metrics.open(mpath, append ? std::ios::app : std::ios::trunc);
    if (!append) metrics << metrics_csv_header() << '\n';
    const bool eappend = resumed && fs::exists(epath);
    evals.open(epath, eappend ? std::ios::app : std::ios::trunc);
    if (!eappend) evals << "iter,variant,mean,std\n";
  }

  for (long it = res.state.iteration + 1; it <= cfg.max_iters; ++it) {
    const TrainBatch batch = make_train_batch(res.state, index, store, cfg, it);
    const MetricsRecord rec = train_step(res.state, batch, cfg, index);
    res.metrics.push_back(rec);
    if (metrics.is_open()) metrics << format_metrics(rec) << '\n' << std::flush;
    if (hook) hook(res.state, rec);

    const bool eval_point = cfg.eval_every > 0 && (it % cfg.eval_every == 0 || it == cfg.max_iters);
    if (eval_point && can_eval) {
      EvalPoint ep{it, summarize(evaluate(res.state.model, index, store))};
      if (evals.is_open()) evals << eval_csv_row(it, ep.summary) << std::flush;
      res.evals.push_back(std::move(ep));
    }
    if (eval_point && !cfg.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06ld.bin", it);
      save_checkpoint(res.state, cfg.out_dir / name);
    }
  }
  if (!cfg.out_dir.empty()) save_checkpoint(res.state, cfg.out_dir / "final.bin");
  return res;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& meta_at(const CheckpointFile& f, const std::string& key) {
  auto it = f.meta.find(key);
  if (it == f.meta.end()) throw DataError("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

CheckpointTensor f32_tensor(const std::string& name, const Tensor<float>& t) {
  CheckpointTensor c;
  c.name = name;
  c.shape = t.shape;
  c.f32 = t.data;
  return c;
}

CheckpointTensor f64_tensor(const std::string& name, const ShapeVector& v) {
  CheckpointTensor c;
  c.name = name;
  c.shape = {kShapeDim};
  c.f64.assign(v.begin(), v.end());
  c.is_f64 = true;
  return c;
}

void copy_into(const CheckpointTensor& src, Tensor<float>& dst) {
  if (src.is_f64 || src.shape != dst.shape)
    throw DataError("checkpoint tensor " + src.name + " has shape " + shape_str(src.shape) +
                    ", expected " + shape_str(dst.shape));
  dst.data = src.f32;
}

ModelConfig model_config_from(const CheckpointFile& f) {
  ModelConfig mc;
  const auto sw = split_ints(meta_at(f, "model.silhouette_widths"));
  if (sw.size() != 3) throw DataError("checkpoint: bad silhouette widths");
  mc.silhouette_widths = {sw[0], sw[1], sw[2]};
  mc.horizontal_bins = std::stoi(meta_at(f, "model.horizontal_bins"));
  mc.embedding_dim = std::stoi(meta_at(f, "model.embedding_dim"));
  mc.shift.ratio = std::stod(meta_at(f, "model.shift_ratio"));
  mc.shift.n_blocks = std::stoi(meta_at(f, "model.n_blocks"));
  mc.shift.temporal_fusion = parse_fusion(meta_at(f, "model.temporal_fusion"));
  mc.body_widths = split_ints(meta_at(f, "model.body_widths"));
  mc.num_classes = std::stoi(meta_at(f, "model.num_classes"));
  mc.init_seed = std::stoull(meta_at(f, "model.init_seed"));
  return mc;
}

}  // namespace

void save_checkpoint(const TrainState& st, const fs::path& path) {
  CheckpointFile f;
  const auto& mc = st.model.config();
  f.meta["model.silhouette_widths"] =
      join_ints({mc.silhouette_widths[0], mc.silhouette_widths[1], mc.silhouette_widths[2]});
  f.meta["model.horizontal_bins"] = std::to_string(mc.horizontal_bins);
  f.meta["model.embedding_dim"] = std::to_string(mc.embedding_dim);
  f.meta["model.shift_ratio"] = fmt17(mc.shift.ratio);
  f.meta["model.n_blocks"] = std::to_string(mc.shift.n_blocks);
  f.meta["model.temporal_fusion"] = fusion_name(mc.shift.temporal_fusion);
  f.meta["model.body_widths"] = join_ints(mc.body_widths);
  f.meta["model.num_classes"] = std::to_string(mc.num_classes);
  f.meta["model.init_seed"] = std::to_string(mc.init_seed);
  f.meta["train.iteration"] = std::to_string(st.iteration);
  f.meta["train.cardinality"] = std::to_string(st.cardinality);
  std::string subjects;
  for (std::size_t i = 0; i < st.subjects.size(); ++i) subjects += (i ? "," : "") + st.subjects[i];
  f.meta["train.subjects"] = subjects;
  const auto& ac = st.opt.config();
  f.meta["adam.lr"] = fmt17(ac.lr);
  f.meta["adam.beta1"] = fmt17(ac.beta1);
  f.meta["adam.beta2"] = fmt17(ac.beta2);
  f.meta["adam.eps"] = fmt17(ac.eps);
  f.meta["adam.weight_decay"] = fmt17(ac.weight_decay);
  f.meta["adam.steps"] = std::to_string(st.opt.steps());

  for (const auto* p : st.model.params()) f.tensors.push_back(f32_tensor("param/" + p->name, p->value));
  for (const auto& [name, mo] : st.opt.moments()) {
    f.tensors.push_back(f32_tensor("adam.m/" + name, mo.m));
    f.tensors.push_back(f32_tensor("adam.v/" + name, mo.v));
  }
  if (st.prior_stats) {
    f.tensors.push_back(f64_tensor("prior.mean", st.prior_stats->mean));
    f.tensors.push_back(f64_tensor("prior.scale", st.prior_stats->scale));
  }
  write_checkpoint_file(path, f);
}

TrainState load_checkpoint(const fs::path& path) {
  const CheckpointFile f = read_checkpoint_file(path);
  TrainState st;
  st.model = GaitModel<float>(model_config_from(f));
  for (auto* p : st.model.params()) {
    const auto* t = f.find("param/" + p->name);
    if (!t) throw DataError("checkpoint is missing parameter " + p->name);
    copy_into(*t, p->value);
  }
  AdamConfig ac;
  ac.lr = std::stod(meta_at(f, "adam.lr"));
  ac.beta1 = std::stod(meta_at(f, "adam.beta1"));
  ac.beta2 = std::stod(meta_at(f, "adam.beta2"));
  ac.eps = std::stod(meta_at(f, "adam.eps"));
  ac.weight_decay = std::stod(meta_at(f, "adam.weight_decay"));
  st.opt = Adam<float>(ac);
  st.opt.set_steps(std::stol(meta_at(f, "adam.steps")));
  for (const auto& t : f.tensors) {
    if (t.name.rfind("adam.m/", 0) != 0) continue;
    const std::string name = t.name.substr(7);
    const auto* v = f.find("adam.v/" + name);
    if (!v) throw DataError("checkpoint is missing adam.v/" + name);
    auto& mo = st.opt.moments()[name];
    mo.m = Tensor<float>(t.shape);
    mo.v = Tensor<float>(v->shape);
    copy_into(t, mo.m);
    copy_into(*v, mo.v);
  }
  st.iteration = std::stol(meta_at(f, "train.iteration"));
  st.cardinality = std::stoull(meta_at(f, "train.cardinality"));
  std::stringstream ss(meta_at(f, "train.subjects"));
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) st.subjects.push_back(tok);
  const auto* mean = f.find("prior.mean");
  const auto* scale = f.find("prior.scale");
  if (mean && scale && mean->is_f64 && scale->is_f64 && mean->f64.size() == kShapeDim &&
      scale->f64.size() == kShapeDim) {
    PriorNormStats ps;
    std::copy(mean->f64.begin(), mean->f64.end(), ps.mean.begin());
    std::copy(scale->f64.begin(), scale->f64.end(), ps.scale.begin());
    st.prior_stats = ps;
  }
  return st;
}

void load_body_encoder(GaitModel<float>& model, const fs::path& path) {
  const CheckpointFile f = read_checkpoint_file(path);
  for (auto* p : model.component_params("body_shape_encoder")) {
    const auto* t = f.find("param/" + p->name);
    if (!t) throw DataError("checkpoint " + path.string() + " has no body-encoder parameter " + p->name);
    copy_into(*t, p->value);
  }
}

// ---------------------------------------------------------------------------
// metrics log

std::string metrics_csv_header() { return "iter,L_ID,L_KD,total,lr,wall_ms"; }

std::string format_metrics(const MetricsRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.3f", r.iter, r.l_id, r.l_kd, r.total, r.lr,
                r.wall_ms);
  return buf;
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<MetricsRecord> out;
  std::string line;
  std::getline(in, line);
  if (line != metrics_csv_header()) throw DataError(path.string() + ": unexpected metrics header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRecord r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf", &r.iter, &r.l_id, &r.l_kd, &r.total, &r.lr,
                    &r.wall_ms) != 6)
      throw DataError(path.string() + ": malformed metrics line '" + line + "'");
    out.push_back(r);
  }
  return out;
}

}  // namespace gait
