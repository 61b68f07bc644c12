#include "fairij/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cerrno>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>
#include <utility>

#include "fairij/dataset.hpp"
#include "fairij/errors.hpp"
#include "fairij/fairness.hpp"
#include "fairij/ihvp.hpp"
#include "fairij/influence.hpp"
#include "fairij/json_writer.hpp"
#include "fairij/mitigate.hpp"
#include "fairij/mlp.hpp"
#include "fairij/numfmt.hpp"
#include "fairij/oracle.hpp"
#include "fairij/report_io.hpp"
#include "fairij/rng.hpp"
#include "fairij/train.hpp"

namespace fairij {
namespace {

namespace fs = std::filesystem;

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// ---------------------------------------------------------------------------
// Typed value parsing with the offending key in every error message.

long long parse_integer(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  long long parsed = std::strtoll(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE)
    throw InputError("config key '" + key + "': expected an integer, got '" + value + "'");
  return parsed;
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  unsigned long long parsed = std::strtoull(value.c_str(), &end, 10);
  if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE ||
      value.front() == '-')
    throw InputError("config key '" + key +
                     "': expected a non-negative integer seed, got '" + value + "'");
  return static_cast<std::uint64_t>(parsed);
}

double parse_real(const std::string& key, const std::string& value) {
  errno = 0;
  char* end = nullptr;
  double parsed = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(parsed))
    throw InputError("config key '" + key + "': expected a finite number, got '" +
                     value + "'");
  return parsed;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw InputError("config key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& key, const std::string& value) {
  std::vector<std::string> items;
  if (trimmed(value).empty()) return items;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = value.find(',', start);
    std::string item = trimmed(value.substr(start, comma - start));
    if (item.empty())
      throw InputError("config key '" + key + "': empty item in list '" + value + "'");
    items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

// Short human-facing number for the one-line summaries (artifacts use the
// full 17-digit form).
std::string short_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

void ensure_directory(const std::string& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_json_file(const std::string& path, const JsonValue& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration plumbing.

FlatConfig parse_config_text(const std::string& text) {
  FlatConfig out;
  std::istringstream lines(text);
  std::string line;
  int line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    std::string flat = trimmed(line);
    if (flat.empty() || flat.front() == '#') continue;
    std::size_t eq = flat.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(line_no) +
                       ": expected key=value, got '" + flat + "'");
    std::string key = trimmed(flat.substr(0, eq));
    std::string value = trimmed(flat.substr(eq + 1));
    if (key.empty())
      throw InputError("config line " + std::to_string(line_no) + ": empty key");
    out[key] = value;
  }
  return out;
}

FlatConfig config_from_file(const std::string& path) {
  std::string text = read_text_file(path);
  std::string flat = trimmed(text);
  if (!flat.empty() && flat.front() == '{') {
    // A report emitted by this tool; reuse its embedded configuration.
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("config file '" + path + "': invalid JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("config") || !doc["config"].is_object())
      throw InputError("config file '" + path +
                       "': JSON configs must be reports with a top-level \"config\" object");
    FlatConfig out;
    for (const auto& [key, value] : doc["config"].items()) {
      if (!value.is_string())
        throw InputError("config file '" + path + "': config key '" + key +
                         "' is not a string");
      out[key] = value.get<std::string>();
    }
    return out;
  }
  try {
    return parse_config_text(text);
  } catch (const InputError& e) {
    throw InputError("config file '" + path + "': " + e.what());
  }
}

const FlatConfig& Settings::defaults() {
  static const FlatConfig table = {
      // Run-wide knobs.
      {"run.seed", "0"},        // master seed; every stage derives from it
      {"run.out", "out"},       // artifact directory (file path for gen-moons)
      {"run.trials", "10"},     // sweep repetitions
      {"run.jobs", "1"},        // sweep parallelism bound
      // Data source (prep / sweep) and prepared split files (train & co.).
      {"data.kind", "csv"},     // csv | moons | mixture
      {"data.path", ""},
      {"data.label", "label"},
      {"data.sensitive", "sensitive"},
      {"data.positive", "1"},
      {"data.privileged", "1"},
      {"data.categorical", ""},
      {"data.drop", ""},
      {"data.header", ""},      // non-empty: headerless file with these names
      {"data.standardize", "true"},
      {"data.n", "2000"},       // synthetic sources
      {"data.noise", "0.1"},
      {"data.separation", "0.7"},
      {"data.bias", "0.2"},
      {"data.train", ""},       // prepared split CSVs
      {"data.val", ""},
      {"data.test", ""},
      {"split.train", "0.5"},
      {"split.val", "0.2"},
      {"split.test", "0.3"},
      // Model and training.
      {"model.path", ""},
      {"model.hidden", "100"},
      {"model.activation", "selu"},
      {"train.epochs", "100"},
      {"train.batch", "128"},
      {"train.lr", "0.0001"},
      {"train.optimizer", "adam"},
      {"train.checkpoint", "best_val_accuracy"},
      // Fairness metric and inverse-Hessian engine.
      {"metric.kind", "dp"},
      {"ihvp.method", "woodfisher"},
      {"ihvp.iterations", "1000"},
      {"ihvp.damping", "1.0"},
      {"ihvp.neumann_scale", "25.0"},
      {"ihvp.wf_scale", "1.0"},
      {"ihvp.order_seed", ""},  // empty: derived from run.seed
      {"ihvp.exact_cap", "2000"},
      {"influence.with_loss", "false"},
      // Mitigation search.
      {"mitigate.selection", "fairness_only"},
      {"mitigate.search", "grid"},
      {"mitigate.k_grid", ""},  // empty: default 40-point grid
      {"mitigate.scale_grid", "0.01,0.1,1.0,2.0,3.0,5.0,10.0"},
      // IHVP accuracy study (ihvp-bench).
      {"study.n", "10000"},
      {"study.noise", "0.2"},
      {"study.separation", "0.4"},
      {"study.depths", "1,2,3"},
      {"study.width", "5"},
      {"study.runs", "10"},
      {"study.epochs", "200"},
      {"study.batch", "128"},
      {"study.lr", "0.001"},
      {"study.iterations", "1000"},
      {"study.neumann_scale", "25.0"},
      {"study.wf_damping", "0.003125"},
      {"study.exact_damping", "0.025"},
      {"study.points", "true"},
  };
  return table;
}

Settings::Settings(const std::vector<FlatConfig>& layers) : values_(defaults()) {
  for (const FlatConfig& layer : layers) {
    for (const auto& [key, value] : layer) {
      if (values_.find(key) == values_.end())
        throw InputError("unknown config key '" + key + "'");
      values_[key] = value;
    }
  }
}

const std::string& Settings::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw InputError("unknown config key '" + key + "'");
  return it->second;
}

int Settings::integer(const std::string& key) const {
  long long v = parse_integer(key, str(key));
  if (v < INT_MIN || v > INT_MAX)
    throw InputError("config key '" + key + "': value out of range");
  return static_cast<int>(v);
}

std::int64_t Settings::integer64(const std::string& key) const {
  return parse_integer(key, str(key));
}

std::uint64_t Settings::seed(const std::string& key) const {
  return parse_seed(key, str(key));
}

double Settings::real(const std::string& key) const {
  return parse_real(key, str(key));
}

bool Settings::flag(const std::string& key) const {
  return parse_bool(key, str(key));
}

std::vector<int> Settings::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& item : split_list(key, str(key))) {
    long long v = parse_integer(key, item);
    if (v < INT_MIN || v > INT_MAX)
      throw InputError("config key '" + key + "': value out of range");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<double> Settings::real_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(key, str(key)))
    out.push_back(parse_real(key, item));
  return out;
}

std::vector<std::string> Settings::str_list(const std::string& key) const {
  return split_list(key, str(key));
}

FlatConfig Settings::embedded() const {
  FlatConfig out = values_;
  out.erase("run.out");
  out.erase("run.jobs");
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Settings -> module configs.

std::string require_value(const Settings& s, const std::string& key) {
  const std::string& v = s.str(key);
  if (v.empty())
    throw InputError("config key '" + key + "' is required for this command");
  return v;
}

DataSchema schema_from(const Settings& s) {
  DataSchema schema;
  schema.label_column = s.str("data.label");
  schema.sensitive_column = s.str("data.sensitive");
  schema.positive_label_value = s.str("data.positive");
  schema.privileged_value = s.str("data.privileged");
  schema.categorical_columns = s.str_list("data.categorical");
  schema.drop_columns = s.str_list("data.drop");
  schema.header_override = s.str_list("data.header");
  return schema;
}

// Prepared split files are plain numeric CSVs with trailing label/sensitive
// columns; this schema reads them back.
DataSchema prepared_schema() {
  DataSchema schema;
  schema.label_column = "label";
  schema.sensitive_column = "sensitive";
  schema.positive_label_value = "1";
  schema.privileged_value = "1";
  return schema;
}

TabularDataset load_prepared(const std::string& path) {
  return load_csv(path, prepared_schema()).dataset;
}

// Raw dataset for prep/sweep: a CSV per schema or a seeded synthetic set.
std::pair<TabularDataset, std::optional<LoadReport>> load_source(
    const Settings& s, std::uint64_t seed) {
  const std::string& kind = s.str("data.kind");
  if (kind == "csv") {
    LoadedCsv loaded = load_csv(require_value(s, "data.path"), schema_from(s));
    return {std::move(loaded.dataset), std::move(loaded.report)};
  }
  if (kind == "moons")
    return {two_moons(s.integer("data.n"), s.real("data.noise"),
                      s.real("data.separation"), seed),
            std::nullopt};
  if (kind == "mixture")
    return {biased_mixture(s.integer("data.n"), s.real("data.bias"), seed),
            std::nullopt};
  throw InputError("config key 'data.kind': expected csv, moons, or mixture; got '" +
                   kind + "'");
}

MlpArchitecture arch_from(const Settings& s, Eigen::Index input_dim) {
  MlpArchitecture arch;
  arch.input_dim = static_cast<int>(input_dim);
  arch.hidden_widths = s.int_list("model.hidden");
  arch.activation = activation_from_string(s.str("model.activation"));
  arch.validate();
  return arch;
}

TrainConfig train_config_from(const Settings& s, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = s.integer("train.epochs");
  cfg.batch_size = s.integer("train.batch");
  cfg.learning_rate = s.real("train.lr");
  cfg.optimizer = optimizer_from_string(s.str("train.optimizer"));
  cfg.seed = seed;
  cfg.checkpoint_selection = checkpoint_selection_from_string(s.str("train.checkpoint"));
  cfg.validate();
  return cfg;
}

IhvpConfig ihvp_from(const Settings& s, std::uint64_t fallback_order_seed) {
  IhvpConfig cfg;
  cfg.method = ihvp_method_from_string(s.str("ihvp.method"));
  cfg.iterations = s.integer("ihvp.iterations");
  cfg.damping = s.real("ihvp.damping");
  cfg.neumann_scale = s.real("ihvp.neumann_scale");
  cfg.wf_scale = s.real("ihvp.wf_scale");
  cfg.instance_order_seed = s.str("ihvp.order_seed").empty()
                                ? fallback_order_seed
                                : s.seed("ihvp.order_seed");
  cfg.exact_dim_cap = s.integer("ihvp.exact_cap");
  cfg.validate();
  return cfg;
}

MitigationConfig mitigation_from(const Settings& s, std::uint64_t fallback_order_seed) {
  MitigationConfig cfg;
  cfg.metric = metric_from_string(s.str("metric.kind"));
  cfg.selection = selection_from_string(s.str("mitigate.selection"));
  cfg.search = search_from_string(s.str("mitigate.search"));
  cfg.k_grid = s.int_list("mitigate.k_grid");
  cfg.scale_grid = s.real_list("mitigate.scale_grid");
  cfg.ihvp = ihvp_from(s, fallback_order_seed);
  cfg.validate();
  return cfg;
}

MoonsStudyConfig study_from(const Settings& s) {
  MoonsStudyConfig cfg;
  cfg.n = s.integer("study.n");
  cfg.noise = s.real("study.noise");
  cfg.separation = s.real("study.separation");
  cfg.depths = s.int_list("study.depths");
  cfg.width = s.integer("study.width");
  cfg.runs = s.integer("study.runs");
  cfg.seed = s.seed("run.seed");
  cfg.train_epochs = s.integer("study.epochs");
  cfg.train_batch_size = s.integer("study.batch");
  cfg.train_learning_rate = s.real("study.lr");
  cfg.iterations = s.integer("study.iterations");
  cfg.neumann_scale = s.real("study.neumann_scale");
  cfg.woodfisher_damping = s.real("study.wf_damping");
  cfg.exact_damping = s.real("study.exact_damping");
  cfg.keep_points = s.flag("study.points");
  cfg.validate();
  return cfg;
}

JsonValue config_json(const Settings& s) {
  JsonValue obj = JsonValue::object();
  for (const auto& [key, value] : s.embedded()) obj[key] = JsonValue(value);
  return obj;
}

// ---------------------------------------------------------------------------
// Prepared-dataset CSV emission (features..., label, sensitive).

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string dataset_csv(const TabularDataset& data) {
  std::ostringstream out;
  const Eigen::Index p = data.width();
  for (Eigen::Index j = 0; j < p; ++j) {
    std::string name = j < static_cast<Eigen::Index>(data.feature_names.size())
                           ? data.feature_names[static_cast<std::size_t>(j)]
                           : "f" + std::to_string(j);
    // The reserved trailing columns must stay unambiguous on reload.
    if (name == "label" || name == "sensitive") name += "_feature";
    out << csv_quote(name) << ',';
  }
  out << "label,sensitive\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < p; ++j) out << format_double(data.features(i, j)) << ',';
    out << data.labels[static_cast<std::size_t>(i)] << ','
        << data.sensitive[static_cast<std::size_t>(i)] << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns the one-line summary to print.

std::string run_prep(const Settings& s) {
  const std::uint64_t run_seed = s.seed("run.seed");
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  auto [raw, load_report] = load_source(s, derive_seed(run_seed, 17));
  SplitResult parts = split(raw, s.real("split.train"), s.real("split.val"),
                            s.real("split.test"), derive_seed(run_seed, 2));
  const bool standardized = s.flag("data.standardize");
  if (standardized) {
    auto scaled = standardize(parts.train, {parts.val, parts.test});
    parts.train = std::move(scaled.first);
    parts.val = std::move(scaled.second[0]);
    parts.test = std::move(scaled.second[1]);
  }

  write_text_file(join_path(out_dir, "train.csv"), dataset_csv(parts.train));
  write_text_file(join_path(out_dir, "val.csv"), dataset_csv(parts.val));
  write_text_file(join_path(out_dir, "test.csv"), dataset_csv(parts.test));

  JsonValue report = JsonValue::object();
  report["config"] = config_json(s);
  report["standardized"] = JsonValue(standardized);
  JsonValue rows = JsonValue::object();
  rows["train"] = JsonValue(static_cast<std::int64_t>(parts.train.size()));
  rows["val"] = JsonValue(static_cast<std::int64_t>(parts.val.size()));
  rows["test"] = JsonValue(static_cast<std::int64_t>(parts.test.size()));
  report["rows"] = rows;
  if (load_report) report["load"] = json_of(*load_report);
  write_json_file(join_path(out_dir, "prep_report.json"), report);

  std::ostringstream line;
  line << "prep: " << raw.size() << " rows -> train " << parts.train.size() << " / val "
       << parts.val.size() << " / test " << parts.test.size() << " (" << out_dir << ")";
  if (load_report && load_report->rows_dropped > 0)
    line << ", dropped " << load_report->rows_dropped << " incomplete rows";
  return line.str();
}

std::string run_gen_moons(const Settings& s) {
  const std::uint64_t run_seed = s.seed("run.seed");
  TabularDataset data = two_moons(s.integer("data.n"), s.real("data.noise"),
                                  s.real("data.separation"), run_seed);

  // run.out may name the CSV directly or a directory to drop moons.csv into.
  std::string target = s.str("run.out");
  fs::path path(target);
  if (path.extension() != ".csv") path /= "moons.csv";
  if (path.has_parent_path()) ensure_directory(path.parent_path().string());
  write_text_file(path.string(), dataset_csv(data));

  JsonValue report = JsonValue::object();
  report["config"] = config_json(s);
  report["rows"] = JsonValue(static_cast<std::int64_t>(data.size()));
  fs::path report_path = path;
  report_path.replace_extension();
  write_json_file(report_path.string() + "_report.json", report);

  std::ostringstream line;
  line << "gen-moons: " << data.size() << " rows -> " << path.string();
  return line.str();
}

std::string run_train(const Settings& s) {
  const std::uint64_t run_seed = s.seed("run.seed");
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  TabularDataset train = load_prepared(require_value(s, "data.train"));
  TabularDataset val = load_prepared(require_value(s, "data.val"));
  MlpArchitecture arch = arch_from(s, train.width());
  TrainConfig cfg = train_config_from(s, run_seed);

  TrainResult result = train_erm(train, val, arch, cfg);
  const double train_acc = accuracy(result.model, train);
  const double val_acc = accuracy(result.model, val);

  const std::string model_path = join_path(out_dir, "model.json");
  save_checkpoint(model_path, result.model, run_seed, "fairij train");

  JsonValue report = JsonValue::object();
  report["config"] = config_json(s);
  report["best_epoch"] = JsonValue(result.best_epoch);
  report["best_val_accuracy"] = JsonValue(result.best_val_accuracy);
  report["train_accuracy"] = JsonValue(train_acc);
  report["val_accuracy"] = JsonValue(val_acc);
  report["param_count"] = JsonValue(arch.param_count());
  report["checkpoint"] = JsonValue("model.json");
  write_json_file(join_path(out_dir, "train_report.json"), report);

  std::ostringstream line;
  line << "train: D=" << arch.param_count() << ", val_accuracy=" << short_num(val_acc)
       << " (epoch " << result.best_epoch << ") -> " << model_path;
  return line.str();
}

std::string run_influence(const Settings& s) {
  const std::uint64_t run_seed = s.seed("run.seed");
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  Checkpoint ckpt = load_checkpoint(require_value(s, "model.path"));
  TabularDataset train = load_prepared(require_value(s, "data.train"));
  TabularDataset val = load_prepared(require_value(s, "data.val"));
  FairnessMetricKind kind = metric_from_string(s.str("metric.kind"));
  IhvpConfig cfg = ihvp_from(s, derive_seed(run_seed, 11));

  IhvpSolver solver(ckpt.model, train, cfg);
  InfluenceReport report = fairness_influence(ckpt.model, train, val, kind, solver);
  report.validation_id = s.str("data.val");
  if (s.flag("influence.with_loss"))
    report.loss_scores = loss_influence(ckpt.model, train, val, solver);

  write_text_file(join_path(out_dir, "influence.csv"), influence_csv(report, train));
  write_text_file(join_path(out_dir, "influence_sorted.csv"),
                  influence_sorted_csv(report, train));

  const int positive =
      static_cast<int>((report.scores.array() > 0.0).count());
  JsonValue doc = JsonValue::object();
  doc["config"] = config_json(s);
  doc["metric"] = JsonValue(to_string(kind));
  doc["ihvp"] = json_of(report.config);
  doc["degenerate"] = JsonValue(report.degenerate);
  doc["instances"] = JsonValue(static_cast<std::int64_t>(report.scores.size()));
  doc["positive_scores"] = JsonValue(positive);
  doc["validation_id"] = JsonValue(report.validation_id);
  write_json_file(join_path(out_dir, "influence_report.json"), doc);

  std::ostringstream line;
  line << "influence: " << report.scores.size() << " scores (" << positive
       << " positive), metric=" << to_string(kind) << " -> " << out_dir
       << "/influence.csv";
  if (report.degenerate) line << " [degenerate surrogate gradient]";
  return line.str();
}

std::string run_mitigate(const Settings& s) {
  const std::uint64_t run_seed = s.seed("run.seed");
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  Checkpoint ckpt = load_checkpoint(require_value(s, "model.path"));
  TabularDataset train = load_prepared(require_value(s, "data.train"));
  TabularDataset val = load_prepared(require_value(s, "data.val"));
  std::optional<TabularDataset> test;
  if (!s.str("data.test").empty()) test = load_prepared(s.str("data.test"));

  MitigationConfig cfg = mitigation_from(s, derive_seed(run_seed, 11));
  MitigationResult result =
      fair_ij(ckpt.model, train, val, cfg, test ? &*test : nullptr);

  write_json_file(join_path(out_dir, "mitigation_report.json"),
                  mitigation_report_json(result, cfg, s.embedded()));
  MlpModel fair_model{ckpt.model.arch, result.theta_fair};
  save_checkpoint(join_path(out_dir, "model_fair.json"), fair_model, run_seed,
                  "fairij mitigate");
  write_text_file(join_path(out_dir, "influence.csv"),
                  influence_csv(result.report, train));
  write_text_file(join_path(out_dir, "influence_sorted.csv"),
                  influence_sorted_csv(result.report, train));

  const std::string kind = to_string(cfg.metric);
  std::ostringstream line;
  if (result.no_op) {
    line << "mitigate: no-op (k=0), val " << kind << " stays "
         << short_num(result.before_val.hard);
  } else {
    line << "mitigate: k=" << result.chosen_k << " scale=" << short_num(result.chosen_scale)
         << ", val " << kind << " " << short_num(result.before_val.hard) << " -> "
         << short_num(result.after_val.hard) << ", val acc "
         << short_num(result.before_val.accuracy) << " -> "
         << short_num(result.after_val.accuracy);
  }
  if (result.after_test)
    line << ", test " << kind << " " << short_num(result.before_test->hard) << " -> "
         << short_num(result.after_test->hard);
  return line.str();
}

std::string run_eval(const Settings& s) {
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  Checkpoint ckpt = load_checkpoint(require_value(s, "model.path"));
  TabularDataset data = load_prepared(require_value(s, "data.path"));
  FairnessMetricKind kind = metric_from_string(s.str("metric.kind"));

  GroupStats stats = group_stats(ckpt.model, data);
  const double hard = hard_metric(ckpt.model, data, kind);
  const double soft = surrogate(ckpt.model, data, kind);
  const double acc = accuracy(ckpt.model, data);

  JsonValue doc = metric_report_json(kind, hard, soft, stats, false);
  doc["accuracy"] = JsonValue(acc);
  doc["config"] = config_json(s);
  write_json_file(join_path(out_dir, "metric_report.json"), doc);

  std::ostringstream line;
  line << "eval: " << to_string(kind) << " hard=" << short_num(hard)
       << " surrogate=" << short_num(soft) << " accuracy=" << short_num(acc);
  return line.str();
}

std::string run_ihvp_bench(const Settings& s) {
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  MoonsStudyConfig cfg = study_from(s);
  MoonsStudyOutcome outcome = run_moons_study(cfg);

  write_text_file(join_path(out_dir, "ihvp_bench_summary.csv"),
                  moons_summary_csv(outcome.rows));
  if (cfg.keep_points)
    write_text_file(join_path(out_dir, "ihvp_bench_points.csv"),
                    moons_points_csv(outcome.points));

  // Mean MAD / R^2 per (depth, method) across runs.
  std::map<int, std::map<std::string, std::array<double, 3>>> sums;
  for (const MoonsStudyRow& row : outcome.rows) {
    std::array<double, 3>& cell = sums[row.depth][row.method];
    cell[0] += row.mad;
    cell[1] += row.r_squared;
    cell[2] += 1.0;
  }
  JsonValue means = JsonValue::object();
  for (const auto& [depth, methods] : sums) {
    JsonValue depth_obj = JsonValue::object();
    for (const auto& [method, cell] : methods) {
      JsonValue m = JsonValue::object();
      m["mad"] = JsonValue(cell[0] / cell[2]);
      m["r_squared"] = JsonValue(cell[1] / cell[2]);
      depth_obj[method] = m;
    }
    means["depth_" + std::to_string(depth)] = depth_obj;
  }
  JsonValue doc = JsonValue::object();
  doc["config"] = config_json(s);
  doc["means"] = means;
  doc["runs"] = JsonValue(cfg.runs);
  write_json_file(join_path(out_dir, "ihvp_bench_report.json"), doc);

  std::ostringstream line;
  line << "ihvp-bench: " << cfg.runs << " runs; mean R^2";
  for (const auto& [depth, methods] : sums) {
    line << " | depth " << depth << ":";
    for (const auto& [method, cell] : methods)
      line << " " << method << "=" << short_num(cell[1] / cell[2]);
  }
  return line.str();
}

struct SweepOutcome {
  std::vector<SweepTrialRow> rows;
  JsonValue report;
  std::string csv;
};

SweepTrialRow sweep_trial(const Settings& s, const TabularDataset& base, int trial) {
  const std::uint64_t trial_seed = derive_seed(s.seed("run.seed"), 1000 + trial);

  SplitResult parts = split(base, s.real("split.train"), s.real("split.val"),
                            s.real("split.test"), derive_seed(trial_seed, 2));
  if (s.flag("data.standardize")) {
    auto scaled = standardize(parts.train, {parts.val, parts.test});
    parts.train = std::move(scaled.first);
    parts.val = std::move(scaled.second[0]);
    parts.test = std::move(scaled.second[1]);
  }

  MlpArchitecture arch = arch_from(s, parts.train.width());
  TrainResult trained =
      train_erm(parts.train, parts.val, arch, train_config_from(s, derive_seed(trial_seed, 3)));

  MitigationConfig cfg = mitigation_from(s, derive_seed(trial_seed, 4));
  MitigationResult result =
      fair_ij(trained.model, parts.train, parts.val, cfg, &parts.test);

  SweepTrialRow row;
  row.trial = trial;
  row.seed = trial_seed;
  row.val_hard_before = result.before_val.hard;
  row.val_hard_after = result.after_val.hard;
  row.test_hard_before = result.before_test->hard;
  row.test_hard_after = result.after_test->hard;
  row.test_accuracy_before = result.before_test->accuracy;
  row.test_accuracy_after = result.after_test->accuracy;
  row.chosen_k = result.chosen_k;
  row.chosen_scale = result.chosen_scale;
  return row;
}

std::string run_sweep(const Settings& s) {
  const std::string out_dir = s.str("run.out");
  ensure_directory(out_dir);

  const int trials = s.integer("run.trials");
  if (trials < 1) throw InputError("config key 'run.trials': must be at least 1");
  int jobs = s.integer("run.jobs");
  if (jobs < 1) throw InputError("config key 'run.jobs': must be at least 1");
  jobs = std::min(jobs, trials);

  TabularDataset base = load_source(s, derive_seed(s.seed("run.seed"), 999)).first;

  std::vector<SweepTrialRow> rows(static_cast<std::size_t>(trials));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(trials));
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int t = next.fetch_add(1);
      if (t >= trials) return;
      try {
        rows[static_cast<std::size_t>(t)] = sweep_trial(s, base, t);
      } catch (...) {
        failures[static_cast<std::size_t>(t)] = std::current_exception();
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  // Report the first failure in trial order so errors are deterministic too.
  for (const std::exception_ptr& failure : failures)
    if (failure) std::rethrow_exception(failure);

  double val_before = 0.0, val_after = 0.0, test_before = 0.0, test_after = 0.0;
  double acc_before = 0.0, acc_after = 0.0;
  JsonValue trial_array = JsonValue::array();
  for (const SweepTrialRow& row : rows) {
    val_before += row.val_hard_before;
    val_after += row.val_hard_after;
    test_before += row.test_hard_before;
    test_after += row.test_hard_after;
    acc_before += row.test_accuracy_before;
    acc_after += row.test_accuracy_after;
    JsonValue obj = JsonValue::object();
    obj["trial"] = JsonValue(row.trial);
    obj["seed"] = JsonValue(static_cast<std::int64_t>(row.seed));
    obj["val_hard_before"] = JsonValue(row.val_hard_before);
    obj["val_hard_after"] = JsonValue(row.val_hard_after);
    obj["test_hard_before"] = JsonValue(row.test_hard_before);
    obj["test_hard_after"] = JsonValue(row.test_hard_after);
    obj["test_accuracy_before"] = JsonValue(row.test_accuracy_before);
    obj["test_accuracy_after"] = JsonValue(row.test_accuracy_after);
    obj["chosen_k"] = JsonValue(row.chosen_k);
    obj["chosen_scale"] = JsonValue(row.chosen_scale);
    trial_array.push_back(obj);
  }
  const double n = static_cast<double>(trials);
  JsonValue means = JsonValue::object();
  means["val_hard_before"] = JsonValue(val_before / n);
  means["val_hard_after"] = JsonValue(val_after / n);
  means["test_hard_before"] = JsonValue(test_before / n);
  means["test_hard_after"] = JsonValue(test_after / n);
  means["test_accuracy_before"] = JsonValue(acc_before / n);
  means["test_accuracy_after"] = JsonValue(acc_after / n);
  means["test_accuracy_drop"] = JsonValue((acc_before - acc_after) / n);

  JsonValue doc = JsonValue::object();
  doc["config"] = config_json(s);
  doc["trials"] = trial_array;
  doc["means"] = means;
  write_json_file(join_path(out_dir, "sweep_report.json"), doc);
  write_text_file(join_path(out_dir, "sweep.csv"), sweep_csv(rows));

  const std::string kind = s.str("metric.kind");
  std::ostringstream line;
  line << "sweep: " << trials << " trials, mean test " << kind << " "
       << short_num(test_before / n) << " -> " << short_num(test_after / n)
       << ", mean test acc " << short_num(acc_before / n) << " -> "
       << short_num(acc_after / n) << " (" << out_dir << ")";
  return line.str();
}

// ---------------------------------------------------------------------------
// Flag wiring: every convenience flag is an override of one config key.

struct SubCommand {
  CLI::App* app = nullptr;
  std::string config_path;
  std::vector<std::string> sets;
  struct Binding {
    CLI::Option* option = nullptr;
    std::string key;
    std::unique_ptr<std::string> value = std::make_unique<std::string>();
  };
  std::vector<Binding> bindings;
  std::function<std::string(const Settings&)> run;

  void bind(const std::string& flag, const std::string& key, const std::string& desc) {
    Binding binding;
    binding.key = key;
    binding.option = app->add_option(flag, *binding.value, desc);
    bindings.push_back(std::move(binding));
  }

  void add_common() {
    app->add_option("--config", config_path,
                    "key=value config file, or a report JSON with an embedded config");
    app->add_option("--set", sets, "extra key=value overrides (repeatable)");
    bind("--out", "run.out", "output directory");
    bind("--seed", "run.seed", "master seed");
  }

  Settings settings() const {
    std::vector<FlatConfig> layers;
    FlatConfig from_file;
    if (!config_path.empty()) from_file = config_from_file(config_path);
    layers.push_back(from_file);
    if (from_file.find("run.seed") == from_file.end()) {
      if (const char* env = std::getenv("FAIRIJ_SEED"))
        layers.push_back({{"run.seed", env}});
    }
    FlatConfig from_flags;
    for (const Binding& binding : bindings)
      if (binding.option->count() > 0) from_flags[binding.key] = *binding.value;
    layers.push_back(from_flags);
    FlatConfig from_sets;
    for (const std::string& entry : sets) {
      std::size_t eq = entry.find('=');
      if (eq == std::string::npos)
        throw InputError("--set expects key=value, got '" + entry + "'");
      from_sets[trimmed(entry.substr(0, eq))] = trimmed(entry.substr(eq + 1));
    }
    layers.push_back(from_sets);
    return Settings(layers);
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"fairij: post-hoc fairness repair for tabular classifiers via "
               "influence functions"};
  app.require_subcommand(1);

  std::vector<std::unique_ptr<SubCommand>> subs;
  auto add = [&](const std::string& name, const std::string& desc,
                 std::function<std::string(const Settings&)> fn) -> SubCommand& {
    auto sub = std::make_unique<SubCommand>();
    sub->app = app.add_subcommand(name, desc);
    sub->run = std::move(fn);
    sub->add_common();
    subs.push_back(std::move(sub));
    return *subs.back();
  };

  SubCommand& prep = add("prep", "load a raw CSV (or synthetic source), split and "
                                 "standardize, write prepared split files",
                         run_prep);
  prep.bind("--data", "data.path", "raw CSV path");

  SubCommand& gen = add("gen-moons", "write a two-moons CSV", run_gen_moons);
  gen.bind("--n", "data.n", "number of instances");
  gen.bind("--noise", "data.noise", "Gaussian coordinate noise");
  gen.bind("--separation", "data.separation", "vertical gap between moons");
  gen.bind("-o,--output", "run.out", "output CSV path (or directory)");

  SubCommand& train = add("train", "fit the classifier on prepared splits and save a "
                                   "checkpoint",
                          run_train);
  train.bind("--train", "data.train", "prepared training CSV");
  train.bind("--val", "data.val", "prepared validation CSV");
  train.bind("--epochs", "train.epochs", "training epochs");
  train.bind("--lr", "train.lr", "learning rate");
  train.bind("--batch", "train.batch", "minibatch size");

  SubCommand& influence = add("influence", "score every training instance's influence "
                                           "on the validation fairness surrogate",
                              run_influence);
  influence.bind("--model", "model.path", "model checkpoint");
  influence.bind("--train", "data.train", "prepared training CSV");
  influence.bind("--val", "data.val", "prepared validation CSV");
  influence.bind("--metric", "metric.kind", "dp, eo, or eqopp");
  influence.bind("--method", "ihvp.method", "woodfisher, neumann, or exact");
  influence.bind("--iterations", "ihvp.iterations", "IHVP iteration budget");

  SubCommand& mitigate = add("mitigate", "edit the checkpoint to cancel the most "
                                         "harmful training instances",
                             run_mitigate);
  mitigate.bind("--model", "model.path", "model checkpoint");
  mitigate.bind("--train", "data.train", "prepared training CSV");
  mitigate.bind("--val", "data.val", "prepared validation CSV");
  mitigate.bind("--test", "data.test", "prepared test CSV (optional)");
  mitigate.bind("--metric", "metric.kind", "dp, eo, or eqopp");
  mitigate.bind("--method", "ihvp.method", "woodfisher, neumann, or exact");
  mitigate.bind("--search", "mitigate.search", "grid or early_stop");
  mitigate.bind("--selection", "mitigate.selection", "fairness_only or loss_aware");

  SubCommand& eval = add("eval", "report fairness metrics and accuracy of a "
                                 "checkpoint on one dataset",
                         run_eval);
  eval.bind("--model", "model.path", "model checkpoint");
  eval.bind("--data", "data.path", "prepared CSV to evaluate on");
  eval.bind("--metric", "metric.kind", "dp, eo, or eqopp");

  SubCommand& bench = add("ihvp-bench", "two-moons IHVP accuracy study: iterative "
                                        "engines vs the dense reference solve",
                          run_ihvp_bench);
  bench.bind("--runs", "study.runs", "number of repetitions");
  bench.bind("--depths", "study.depths", "comma-separated hidden depths");
  bench.bind("--n", "study.n", "instances per repetition");

  SubCommand& sweep = add("sweep", "repeated end-to-end trials: split, train, "
                                   "mitigate; emits per-trial CSV and means",
                          run_sweep);
  sweep.bind("--data", "data.path", "raw CSV path");
  sweep.bind("--metric", "metric.kind", "dp, eo, or eqopp");
  sweep.bind("--trials", "run.trials", "number of trials");
  sweep.bind("--jobs", "run.jobs", "parallel trial bound");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help requests exit 0; unknown flags/subcommands print usage and exit 1.
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (const auto& sub : subs) {
      if (sub->app->parsed()) {
        std::cout << sub->run(sub->settings()) << "\n";
        return 0;
      }
    }
    std::cerr << "error: no subcommand given\n" << app.help();
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 2;
  } catch (const CLI::Error&) {
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace fairij
