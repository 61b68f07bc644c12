#include "fairij/report_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fairij/errors.hpp"
#include "fairij/numfmt.hpp"

namespace fairij {

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void save_checkpoint(const std::string& path, const MlpModel& model,
                     std::uint64_t seed, const std::string& created_by) {
  model.validate();
  JsonValue arch = JsonValue::object();
  arch["input_dim"] = JsonValue(static_cast<std::int64_t>(model.arch.input_dim));
  JsonValue widths = JsonValue::array();
  for (int w : model.arch.hidden_widths) {
    widths.push_back(JsonValue(static_cast<std::int64_t>(w)));
  }
  arch["hidden_widths"] = std::move(widths);
  arch["activation"] = JsonValue(to_string(model.arch.activation));

  JsonValue doc = JsonValue::object();
  doc["arch"] = std::move(arch);
  JsonValue params = JsonValue::array();
  for (Eigen::Index i = 0; i < model.params.size(); ++i) {
    params.push_back(JsonValue(model.params[i]));
  }
  doc["params"] = std::move(params);
  doc["seed"] = JsonValue(static_cast<std::int64_t>(seed));
  doc["created_by"] = JsonValue(created_by);
  write_text_file(path, doc.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse checkpoint '" + path + "': " + e.what());
  }
  try {
    Checkpoint out;
    const auto& arch = doc.at("arch");
    out.model.arch.input_dim = arch.at("input_dim").get<int>();
    out.model.arch.hidden_widths = arch.at("hidden_widths").get<std::vector<int>>();
    out.model.arch.activation =
        activation_from_string(arch.at("activation").get<std::string>());
    const auto values = doc.at("params").get<std::vector<double>>();
    out.model.params.resize(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      out.model.params[static_cast<Eigen::Index>(i)] = values[i];
    }
    out.seed = static_cast<std::uint64_t>(doc.value("seed", std::int64_t{0}));
    out.created_by = doc.value("created_by", std::string{});
    out.model.validate();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint '" + path + "': " + e.what());
  }
}

JsonValue json_of(const IhvpConfig& cfg) {
  JsonValue out = JsonValue::object();
  out["method"] = JsonValue(to_string(cfg.method));
  out["iterations"] = JsonValue(static_cast<std::int64_t>(cfg.iterations));
  out["damping"] = JsonValue(cfg.damping);
  out["neumann_scale"] = JsonValue(cfg.neumann_scale);
  out["wf_scale"] = JsonValue(cfg.wf_scale);
  out["instance_order_seed"] =
      JsonValue(static_cast<std::int64_t>(cfg.instance_order_seed));
  out["exact_dim_cap"] = JsonValue(static_cast<std::int64_t>(cfg.exact_dim_cap));
  return out;
}

JsonValue json_of(const GroupStats& stats) {
  JsonValue out = JsonValue::object();
  for (int s = 0; s < 2; ++s) {
    JsonValue group = JsonValue::object();
    group["count"] = JsonValue(stats.group_count[s]);
    group["positive_rate"] = JsonValue(stats.group_positive_rate[s]);
    group["mean_prob"] = JsonValue(stats.group_mean_prob[s]);
    for (int y = 0; y < 2; ++y) {
      JsonValue cell = JsonValue::object();
      cell["count"] = JsonValue(stats.cell_count[s][y]);
      cell["positive_rate"] = JsonValue(stats.cell_positive_rate[s][y]);
      cell["mean_prob"] = JsonValue(stats.cell_mean_prob[s][y]);
      group["y" + std::to_string(y)] = std::move(cell);
    }
    out["s" + std::to_string(s)] = std::move(group);
  }
  return out;
}

JsonValue json_of(const LoadReport& report) {
  JsonValue out = JsonValue::object();
  out["rows_read"] = JsonValue(report.rows_read);
  out["rows_dropped"] = JsonValue(report.rows_dropped);
  out["columns_used"] = JsonValue::string_array(report.columns_used);
  JsonValue one_hot = JsonValue::object();
  for (const auto& [column, values] : report.one_hot_map) {
    one_hot[column] = JsonValue::string_array(values);
  }
  out["one_hot_map"] = std::move(one_hot);
  return out;
}

JsonValue json_of(const MetricSnapshot& snapshot) {
  JsonValue out = JsonValue::object();
  out["hard"] = JsonValue(snapshot.hard);
  out["surrogate"] = JsonValue(snapshot.surrogate);
  out["accuracy"] = JsonValue(snapshot.accuracy);
  return out;
}

JsonValue metric_report_json(FairnessMetricKind kind, double hard,
                             double surrogate_value, const GroupStats& stats,
                             bool degenerate) {
  JsonValue out = JsonValue::object();
  out["kind"] = JsonValue(to_string(kind));
  out["hard"] = JsonValue(hard);
  out["surrogate"] = JsonValue(surrogate_value);
  out["group_cells"] = json_of(stats);
  out["degenerate"] = JsonValue(degenerate);
  return out;
}

JsonValue mitigation_report_json(const MitigationResult& result,
                                 const MitigationConfig& cfg,
                                 const std::map<std::string, std::string>& config_echo) {
  JsonValue out = JsonValue::object();
  out["metric"] = JsonValue(to_string(cfg.metric));
  out["selection"] = JsonValue(to_string(cfg.selection));
  out["search"] = JsonValue(to_string(cfg.search));
  out["ihvp"] = json_of(result.report.config);
  out["chosen_k"] = JsonValue(static_cast<std::int64_t>(result.chosen_k));
  out["chosen_scale"] = JsonValue(result.chosen_scale);
  out["no_op"] = JsonValue(result.no_op);
  out["degenerate"] = JsonValue(result.report.degenerate);
  out["linearized_metric_delta"] = JsonValue(result.linearized_metric_delta);
  out["dropped_count"] =
      JsonValue(static_cast<std::int64_t>(result.dropped.size()));
  JsonValue dropped = JsonValue::array();
  for (int idx : result.dropped) {
    dropped.push_back(JsonValue(static_cast<std::int64_t>(idx)));
  }
  out["dropped"] = std::move(dropped);
  out["before_val"] = json_of(result.before_val);
  out["after_val"] = json_of(result.after_val);
  if (result.before_test) out["before_test"] = json_of(*result.before_test);
  if (result.after_test) out["after_test"] = json_of(*result.after_test);

  JsonValue echo = JsonValue::object();
  for (const auto& [key, value] : config_echo) {
    echo[key] = JsonValue(value);
  }
  out["config"] = std::move(echo);
  return out;
}

namespace {

void influence_rows(std::ostringstream& out, const InfluenceReport& report,
                    const TabularDataset& train, const std::vector<int>& order) {
  const bool with_loss = report.loss_scores.has_value();
  out << "index,score";
  if (with_loss) out << ",loss_score";
  out << ",label,sensitive\n";
  for (int idx : order) {
    out << idx << ',' << format_double(report.scores[idx]);
    if (with_loss) out << ',' << format_double((*report.loss_scores)[idx]);
    out << ',' << train.labels[idx] << ',' << train.sensitive[idx] << '\n';
  }
}

}  // namespace

std::string influence_csv(const InfluenceReport& report, const TabularDataset& train) {
  if (report.scores.size() != train.size()) {
    throw InputError("influence report does not match dataset size");
  }
  std::vector<int> order(train.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;
  std::ostringstream out;
  influence_rows(out, report, train, order);
  return out.str();
}

std::string influence_sorted_csv(const InfluenceReport& report,
                                 const TabularDataset& train) {
  if (report.scores.size() != train.size()) {
    throw InputError("influence report does not match dataset size");
  }
  std::vector<int> order(train.size());
  for (int i = 0; i < static_cast<int>(order.size()); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&report](int a, int b) {
    if (report.scores[a] != report.scores[b]) {
      return report.scores[a] > report.scores[b];
    }
    return a < b;
  });
  std::ostringstream out;
  influence_rows(out, report, train, order);
  return out.str();
}

std::string moons_summary_csv(const std::vector<MoonsStudyRow>& rows) {
  std::ostringstream out;
  out << "depth,run,method,mad,r_squared\n";
  for (const auto& row : rows) {
    out << row.depth << ',' << row.run << ',' << row.method << ','
        << format_double(row.mad) << ',' << format_double(row.r_squared) << '\n';
  }
  return out.str();
}

std::string moons_points_csv(const std::vector<MoonsStudyPoint>& points) {
  std::ostringstream out;
  out << "exact_score,approx_score,method,depth,run\n";
  for (const auto& point : points) {
    out << format_double(point.exact_score) << ','
        << format_double(point.approx_score) << ',' << point.method << ','
        << point.depth << ',' << point.run << '\n';
  }
  return out.str();
}

std::string sweep_csv(const std::vector<SweepTrialRow>& rows) {
  std::ostringstream out;
  out << "trial,seed,val_hard_before,val_hard_after,test_hard_before,"
         "test_hard_after,test_accuracy_before,test_accuracy_after,chosen_k,"
         "chosen_scale\n";
  for (const auto& row : rows) {
    out << row.trial << ',' << format_int(static_cast<std::int64_t>(row.seed)) << ','
        << format_double(row.val_hard_before) << ','
        << format_double(row.val_hard_after) << ','
        << format_double(row.test_hard_before) << ','
        << format_double(row.test_hard_after) << ','
        << format_double(row.test_accuracy_before) << ','
        << format_double(row.test_accuracy_after) << ',' << row.chosen_k << ','
        << format_double(row.chosen_scale) << '\n';
  }
  return out.str();
}

}  // namespace fairij
