#include "gait/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "gait/error.hpp"
#include "gait/prior.hpp"

namespace fs = std::filesystem;

namespace gait {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(trim(tok));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(key + ": cannot parse '" + raw + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + raw + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  for (const auto& tok : split(raw, ','))
    if (!tok.empty()) out.push_back(parse_number<int>(key, tok));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename C>
std::string join(const C& values) {
  std::string s;
  for (const auto& v : values) s += (s.empty() ? "" : ",") + std::to_string(v);
  return s;
}

struct Key {
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define GAIT_STR(key, field) \
  Key { key, [](const RunConfig& c) { return c.field; }, [](RunConfig& c, const std::string& v) { c.field = trim(v); } }
#define GAIT_NUM(key, field, T)                                                       \
  Key {                                                                               \
    key, [](const RunConfig& c) { return std::to_string(c.field); },                  \
        [](RunConfig& c, const std::string& v) { c.field = parse_number<T>(key, v); } \
  }
#define GAIT_DBL(key, field)                                                               \
  Key {                                                                                    \
    key, [](const RunConfig& c) { return fmt_double(c.field); },                           \
        [](RunConfig& c, const std::string& v) { c.field = parse_number<double>(key, v); } \
  }
#define GAIT_BOOL(key, field)                                                       \
  Key {                                                                             \
    key, [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); }     \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      GAIT_STR("data.root", data.root),
      GAIT_STR("data.layout", data.layout),
      GAIT_STR("data.priors", data.priors),
      GAIT_STR("data.split", data.split),
      GAIT_STR("data.roles", data.roles),
      GAIT_STR("data.view_split", data.view_split),
      GAIT_DBL("data.prior_coverage", data.prior_coverage),
      GAIT_NUM("data.prior_seed", data.prior_seed, std::uint64_t),

      GAIT_NUM("train.P", train.P, int),
      GAIT_NUM("train.K", train.K, int),
      GAIT_DBL("train.lr", train.adam.lr),
      GAIT_DBL("train.beta1", train.adam.beta1),
      GAIT_DBL("train.beta2", train.adam.beta2),
      GAIT_DBL("train.eps", train.adam.eps),
      GAIT_DBL("train.weight_decay", train.adam.weight_decay),
      GAIT_NUM("train.max_iters", train.max_iters, int),
      GAIT_DBL("train.margin", train.margin),
      GAIT_DBL("train.lambda1", train.lambda1),
      GAIT_DBL("train.lambda2", train.lambda2),
      Key{"train.distill", [](const RunConfig& c) { return distill_name(c.train.distill); },
          [](RunConfig& c, const std::string& v) { c.train.distill = parse_distill(trim(v)); }},
      GAIT_BOOL("train.use_ce", train.use_ce),
      GAIT_NUM("train.frames", train.frames, int),
      GAIT_BOOL("train.freeze_body_encoder", train.freeze_body_encoder),
      GAIT_STR("train.init_body_from", train.init_body_from),
      GAIT_NUM("train.seed", train.seed, std::uint64_t),
      GAIT_NUM("train.eval_every", train.eval_every, int),

      Key{"model.silhouette_widths", [](const RunConfig& c) { return join(c.train.model.silhouette_widths); },
          [](RunConfig& c, const std::string& v) {
            const auto w = parse_ints("model.silhouette_widths", v);
            if (w.size() != 3) throw ConfigError("model.silhouette_widths needs exactly 3 values");
            std::copy(w.begin(), w.end(), c.train.model.silhouette_widths.begin());
          }},
      GAIT_NUM("model.horizontal_bins", train.model.horizontal_bins, int),
      GAIT_NUM("model.embedding_dim", train.model.embedding_dim, int),
      Key{"model.body_widths", [](const RunConfig& c) { return join(c.train.model.body_widths); },
          [](RunConfig& c, const std::string& v) { c.train.model.body_widths = parse_ints("model.body_widths", v); }},
      GAIT_DBL("model.shift_ratio", train.model.shift.ratio),
      GAIT_NUM("model.shift_blocks", train.model.shift.n_blocks, int),
      Key{"model.fusion", [](const RunConfig& c) { return fusion_name(c.train.model.shift.temporal_fusion); },
          [](RunConfig& c, const std::string& v) { c.train.model.shift.temporal_fusion = parse_fusion(trim(v)); }},
      GAIT_NUM("model.init_seed", train.model.init_seed, std::uint64_t),

      GAIT_NUM("synth.subjects", synth.n_subjects, int),
      Key{"synth.variants",
          [](const RunConfig& c) {
            std::string s;
            for (const auto& [v, n] : c.synth.variants)
              s += (s.empty() ? "" : ",") + variant_name(v) + ":" + std::to_string(n);
            return s;
          },
          [](RunConfig& c, const std::string& v) { c.synth.variants = parse_variant_counts(v); }},
      Key{"synth.views", [](const RunConfig& c) { return join(c.synth.views); },
          [](RunConfig& c, const std::string& v) { c.synth.views = parse_ints("synth.views", v); }},
      GAIT_NUM("synth.frames", synth.frames, int),
      GAIT_NUM("synth.seed", synth.seed, std::uint64_t),

      GAIT_STR("run.out_dir", out_dir),
  };
  return keys;
}

#undef GAIT_STR
#undef GAIT_NUM
#undef GAIT_DBL
#undef GAIT_BOOL

const Key& find_key(const std::string& name) {
  for (const auto& k : key_table())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.train.model.silhouette_widths = {8, 16, 32};
  cfg.train.P = 4;
  cfg.train.K = 4;
  cfg.synth.variants = {{Variant::NM, 2}, {Variant::BG, 1}, {Variant::CL, 1}};
  return cfg;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  find_key(key).set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) { return find_key(key).get(cfg); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.name);
  return out;
}

void apply_config_file(RunConfig& cfg, const fs::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(path.string() + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_config_value(cfg, section + "." + key, value.data());
  }
}

std::string config_to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << k.name.substr(dot + 1) << " = " << k.get(cfg) << '\n';
  }
  return os.str();
}

ViewSplit parse_view_split(const std::string& text) {
  ViewSplit vs;
  bool seen_train = false, seen_test = false;
  for (const auto& part : split(text, ';')) {
    if (part.empty()) continue;
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("view split: expected name=views in '" + part + "'");
    const std::string name = trim(part.substr(0, eq));
    const auto views = parse_ints("view split", part.substr(eq + 1));
    if (name == "train") {
      vs.train.insert(views.begin(), views.end());
      seen_train = true;
    } else if (name == "test") {
      vs.test.insert(views.begin(), views.end());
      seen_test = true;
    } else {
      throw ConfigError("view split: unknown set '" + name + "'");
    }
  }
  if (!seen_train || !seen_test || vs.train.empty() || vs.test.empty())
    throw ConfigError("view split needs non-empty train= and test= sets");
  for (int v : vs.train)
    if (vs.test.count(v)) throw ConfigError("view split: view " + std::to_string(v) + " is in both sets");
  return vs;
}

SubjectScheme parse_subject_scheme(const std::string& text) {
  const std::string s = trim(text);
  if (s == "casiab") return SubjectScheme::casiab_74();
  if (s == "oumvlp_odd") return SubjectScheme::oumvlp_odd();
  if (s.rfind("first:", 0) == 0) {
    const int n = parse_number<int>("data.split", s.substr(6));
    if (n < 1) throw ConfigError("data.split: first:N needs N >= 1");
    return SubjectScheme::first(n);
  }
  throw ConfigError("unknown subject split '" + text + "' (expected casiab, oumvlp_odd or first:N)");
}

RoleConvention parse_role_convention(const std::string& text) {
  const std::string s = trim(text);
  if (s == "casiab") return RoleConvention::CasiaB;
  if (s == "first_sequence") return RoleConvention::FirstSequence;
  throw ConfigError("unknown role convention '" + text + "' (expected casiab or first_sequence)");
}

LayoutDescriptor parse_layout(const std::string& text) {
  const std::string s = trim(text);
  if (s == "casiab") return LayoutDescriptor::casiab();
  if (s == "oumvlp") return LayoutDescriptor::oumvlp();
  if (s == "any") return LayoutDescriptor::any();
  throw ConfigError("unknown layout '" + text + "' (expected casiab, oumvlp or any)");
}

std::vector<std::pair<Variant, int>> parse_variant_counts(const std::string& text) {
  std::vector<std::pair<Variant, int>> out;
  for (const auto& tok : split(text, ',')) {
    if (tok.empty()) continue;
    const auto colon = tok.find(':');
    Variant v;
    try {
      v = parse_variant(tok.substr(0, colon));
    } catch (const std::exception& e) {
      throw ConfigError("synth.variants: " + std::string(e.what()));
    }
    const int n = colon == std::string::npos ? 1 : parse_number<int>("synth.variants", tok.substr(colon + 1));
    if (n < 1) throw ConfigError("synth.variants: sequence count must be >= 1");
    out.emplace_back(v, n);
  }
  if (out.empty()) throw ConfigError("synth.variants must name at least one variant");
  return out;
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData pd;
  std::vector<PriorRecord> priors;
  if (cfg.data.root.empty()) {
    auto ds = make_synthetic_dataset(cfg.synth);
    pd.index = std::move(ds.index);
    pd.store = std::move(ds.store);
    priors = std::move(ds.ground_truth);
  } else {
    pd.index = load_dataset(cfg.data.root, parse_layout(cfg.data.layout));
    fs::path sidecar = cfg.data.priors;
    if (sidecar.empty() && fs::exists(fs::path(cfg.data.root) / "priors.tsv"))
      sidecar = fs::path(cfg.data.root) / "priors.tsv";
    if (!sidecar.empty()) priors = read_prior_sidecar(sidecar);
  }
  pd.index = split_subjects(std::move(pd.index), parse_subject_scheme(cfg.data.split));
  pd.index = assign_roles(std::move(pd.index), parse_role_convention(cfg.data.roles));
  if (!cfg.data.view_split.empty()) {
    const auto vs = parse_view_split(cfg.data.view_split);
    pd.index = make_view_split(std::move(pd.index), vs.train, vs.test);
  }
  if (!(cfg.data.prior_coverage >= 0.0 && cfg.data.prior_coverage <= 1.0))
    throw ConfigError("data.prior_coverage must be in [0, 1]");
  if (!priors.empty())
    pd.index = attach_priors(std::move(pd.index), priors, cfg.data.prior_coverage, cfg.data.prior_seed);
  return pd;
}

}  // namespace gait
