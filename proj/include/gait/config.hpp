#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "gait/data.hpp"
#include "gait/synth.hpp"
#include "gait/trainer.hpp"

namespace gait {

struct DataConfig {
  std::string root;              // dataset directory; empty = synthesize in memory from [synth]
  std::string layout = "any";    // casiab | oumvlp | any
  std::string priors;            // sidecar path; empty = <root>/priors.tsv when present
  std::string split = "first:12";  // casiab | oumvlp_odd | first:N
  std::string roles = "first_sequence";  // casiab | first_sequence
  std::string view_split;        // "train=0,18;test=108,126"; empty = all views everywhere
  double prior_coverage = 0.2;
  std::uint64_t prior_seed = 1;
};

/// Everything a verb needs: file values overridden by flags, echoed next to the run outputs.
struct RunConfig {
  DataConfig data;
  TrainConfig train;
  SyntheticDatasetSpec synth;
  std::string out_dir;
};

RunConfig default_run_config();

/// Reads an INI file with sections [data], [train], [model], [synth], [run].
/// Unknown sections or keys raise ConfigError naming the offending key.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Sets one dotted key, e.g. "train.lambda2" = "0.5".
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);
std::vector<std::string> config_keys();

/// Full effective configuration as INI text; apply_config_file on it reproduces `cfg`.
std::string config_to_ini(const RunConfig& cfg);

struct ViewSplit {
  std::set<int> train;
  std::set<int> test;
};

/// "train=0,18,36;test=108,126". Throws ConfigError on malformed text or overlapping sets.
ViewSplit parse_view_split(const std::string& text);
SubjectScheme parse_subject_scheme(const std::string& text);
RoleConvention parse_role_convention(const std::string& text);
LayoutDescriptor parse_layout(const std::string& text);
std::vector<std::pair<Variant, int>> parse_variant_counts(const std::string& text);  // "nm:2,bg:1"

/// The dataset a run trains and evaluates on, split, role-tagged and with priors attached.
struct PreparedData {
  DatasetIndex index;
  SequenceStore store;
};

PreparedData prepare_data(const RunConfig& cfg);

}  // namespace gait
