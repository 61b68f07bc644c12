#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fairij/dataset.hpp"
#include "fairij/fairness.hpp"
#include "fairij/influence.hpp"
#include "fairij/json_writer.hpp"
#include "fairij/mitigate.hpp"
#include "fairij/mlp.hpp"
#include "fairij/oracle.hpp"

namespace fairij {

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

struct Checkpoint {
  MlpModel model;
  std::uint64_t seed = 0;
  std::string created_by;
};

/// Model checkpoint as deterministic JSON; floats carry 17 significant digits
/// so parameters round-trip exactly.
void save_checkpoint(const std::string& path, const MlpModel& model,
                     std::uint64_t seed, const std::string& created_by);
Checkpoint load_checkpoint(const std::string& path);

JsonValue json_of(const IhvpConfig& cfg);
JsonValue json_of(const GroupStats& stats);
JsonValue json_of(const LoadReport& report);
JsonValue json_of(const MetricSnapshot& snapshot);

JsonValue metric_report_json(FairnessMetricKind kind, double hard,
                             double surrogate_value, const GroupStats& stats,
                             bool degenerate);

/// MitigationResult with the embedded resolved run configuration.
JsonValue mitigation_report_json(const MitigationResult& result,
                                 const MitigationConfig& cfg,
                                 const std::map<std::string, std::string>& config_echo);

/// One row per training instance: index, score, optional loss score, label,
/// sensitive attribute.
std::string influence_csv(const InfluenceReport& report, const TabularDataset& train);
/// Same rows ordered by descending score (the sorted-curve plot data).
std::string influence_sorted_csv(const InfluenceReport& report,
                                 const TabularDataset& train);

std::string moons_summary_csv(const std::vector<MoonsStudyRow>& rows);
std::string moons_points_csv(const std::vector<MoonsStudyPoint>& points);

struct SweepTrialRow {
  int trial = 0;
  std::uint64_t seed = 0;
  double val_hard_before = 0.0;
  double val_hard_after = 0.0;
  double test_hard_before = 0.0;
  double test_hard_after = 0.0;
  double test_accuracy_before = 0.0;
  double test_accuracy_after = 0.0;
  int chosen_k = 0;
  double chosen_scale = 1.0;
};

std::string sweep_csv(const std::vector<SweepTrialRow>& rows);

}  // namespace fairij
