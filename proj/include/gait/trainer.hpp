#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gait/data.hpp"
#include "gait/distill.hpp"
#include "gait/encoders.hpp"
#include "gait/eval.hpp"
#include "gait/optim.hpp"

namespace gait {

struct TrainConfig {
  int P = 8;
  int K = 16;
  AdamConfig adam;
  int max_iters = 2000;
  double margin = 0.2;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  DistillMode distill = DistillMode::CRD;
  bool use_ce = false;  // add the cross-entropy identity head to L_ID
  int frames = 30;      // training window length
  bool freeze_body_encoder = false;
  std::string init_body_from;  // checkpoint providing pretrained body-encoder weights
  std::uint64_t seed = 1;
  int eval_every = 500;  // 0 disables periodic evaluation
  ModelConfig model;
  std::filesystem::path out_dir;  // metrics.csv, eval.csv and checkpoints; empty keeps all in memory
};

void validate(const TrainConfig& cfg);

struct MetricsRecord {
  long iter = 0;
  double l_id = 0.0;
  double l_kd = 0.0;
  double total = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
  int prior_items = 0;  // prior-covered sequences in the batch
};

struct TrainState {
  GaitModel<float> model;
  Adam<float> opt;
  long iteration = 0;  // completed steps
  std::optional<PriorNormStats> prior_stats;
  std::vector<std::string> subjects;  // training identities, label = position
  std::size_t cardinality = 0;        // M: number of training sequences
};

/// Fresh state: model built from cfg.model (CE head sized to the training subjects when
/// cfg.use_ce), parameters initialized from cfg.model.init_seed, freeze flags applied.
TrainState init_state(const TrainConfig& cfg, const DatasetIndex& index);

struct TrainBatch {
  std::vector<std::size_t> entries;
  std::vector<SilhouetteSequence> clips;
  std::vector<int> labels;
  std::vector<std::optional<ShapeVector>> priors;  // normalized beta for covered items
};

/// Batch for step `iteration` (1-based); depends only on (index, cfg.seed, iteration).
TrainBatch make_train_batch(const TrainState& state, const DatasetIndex& index, SequenceStore& store,
                            const TrainConfig& cfg, long iteration);

/// One optimizer update. Throws NumericError (listing batch locators) on a non-finite loss.
MetricsRecord train_step(TrainState& state, const TrainBatch& batch, const TrainConfig& cfg,
                         const DatasetIndex& index);

struct EvalPoint {
  long iter = 0;
  Summary summary;
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> metrics;
  std::vector<EvalPoint> evals;
};

using StepHook = std::function<void(const TrainState&, const MetricsRecord&)>;

/// Runs steps state.iteration+1 .. cfg.max_iters. Evaluates on the index's gallery/probe roles
/// every cfg.eval_every steps (when roles exist) and writes a checkpoint at each evaluation.
TrainResult train(const TrainConfig& cfg, const DatasetIndex& index, SequenceStore& store,
                  std::optional<TrainState> resume = std::nullopt, const StepHook& hook = {});

// --- persistence -----------------------------------------------------------

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);
/// Copies the body-shape encoder parameters of a checkpoint into `model`.
void load_body_encoder(GaitModel<float>& model, const std::filesystem::path& path);

std::string metrics_csv_header();
std::string format_metrics(const MetricsRecord& r);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

}  // namespace gait
