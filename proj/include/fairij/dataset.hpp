#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fairij {

/// Affine per-feature map fitted on a training set: x -> (x - mean) / scale.
/// Features whose stddev collapses below 1e-12 keep scale 1 (centered only).
struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;
  std::string fitted_on = "train";
};

struct TabularDataset {
  Eigen::MatrixXd features;  // one instance per row
  std::vector<int> sensitive;
  std::vector<int> labels;
  std::vector<std::string> feature_names;
  std::optional<Standardization> standardization;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index width() const { return features.cols(); }
  void validate() const;

  /// Features transposed to one instance per column, the layout the model
  /// batch operations consume.
  Eigen::MatrixXd inputs() const { return features.transpose(); }

  Eigen::VectorXd labels_vector() const;

  TabularDataset subset(const std::vector<int>& indices) const;
  /// Copy with the given (unique) indices removed; used by leave-out studies.
  TabularDataset without(const std::vector<int>& indices) const;
};

/// How to interpret a CSV file: which columns carry the label and sensitive
/// attribute, which are categorical, and which to ignore. If header_override
/// is non-empty the file is treated as headerless and these names are used.
struct DataSchema {
  std::string label_column;
  std::string sensitive_column;
  std::string positive_label_value;
  std::string privileged_value;
  std::vector<std::string> categorical_columns;
  std::vector<std::string> drop_columns;
  std::vector<std::string> header_override;
};

struct LoadReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_dropped = 0;
  std::vector<std::string> columns_used;
  std::map<std::string, std::vector<std::string>> one_hot_map;
};

struct LoadedCsv {
  TabularDataset dataset;
  LoadReport report;
};

/// Parses a comma-separated file (RFC-4180 quoting, values trimmed of
/// surrounding blanks). Categorical columns are one-hot encoded in category
/// first-appearance order; rows with a missing value ("" or "?") in any used
/// column are dropped and counted.
LoadedCsv load_csv(const std::string& path, const DataSchema& schema);

/// Fits mean/stddev on `train` (population stddev) and applies the same
/// affine map to `train` and every dataset in `others`.
std::pair<TabularDataset, std::vector<TabularDataset>> standardize(
    const TabularDataset& train, const std::vector<TabularDataset>& others);

struct SplitResult {
  TabularDataset train;
  TabularDataset val;
  TabularDataset test;
};

/// Seeded shuffle followed by a contiguous cut. Validation and test sizes are
/// floor(N * fraction); when the fractions sum to 1 the remainder goes to
/// train, otherwise train is floor(N * f_train) and the tail is unused.
SplitResult split(const TabularDataset& dataset, double train_fraction,
                  double val_fraction, double test_fraction, std::uint64_t seed);

/// Two-way variant: the first part gets floor(N * first_fraction) instances
/// after a seeded shuffle, the second part the rest.
std::pair<TabularDataset, TabularDataset> split_two(const TabularDataset& dataset,
                                                    double first_fraction,
                                                    std::uint64_t seed);

/// Two interleaved half-circles, shifted apart vertically by `separation` so
/// that a large enough separation admits a linear separator. Label = moon id;
/// the sensitive attribute is set equal to the label.
TabularDataset two_moons(int n, double noise, double separation,
                         std::uint64_t seed);

/// Synthetic tabular set where most labels follow a group-blind rule on the
/// first feature while a `bias_fraction` minority has its label overwritten
/// with the group id; the second feature exposes the group to the model, so
/// exactly that minority teaches a classifier to discriminate.
TabularDataset biased_mixture(int n, double bias_fraction, std::uint64_t seed);

}  // namespace fairij
