#include "fairij/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fairij/errors.hpp"
#include "fairij/rng.hpp"

namespace fairij {
namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && (s[begin] == ' ' || s[begin] == '\t' || s[begin] == '\r')) ++begin;
  while (end > begin && (s[end - 1] == ' ' || s[end - 1] == '\t' || s[end - 1] == '\r')) --end;
  return s.substr(begin, end - begin);
}

bool is_missing(const std::string& value) {
  return value.empty() || value == "?";
}

// Splits a whole file into records of fields, honoring double-quote quoting
// with "" escapes; newlines inside quotes stay part of the field. Unquoted
// fields are trimmed of surrounding blanks.
std::vector<std::vector<std::string>> read_csv_records(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;

  auto end_field = [&] {
    record.push_back(field_was_quoted ? field : trim(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    end_field();
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && trim(field).empty()) {
      quoted = true;
      field_was_quoted = true;
      field.clear();
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
    }
  }
  if (!field.empty() || !record.empty()) end_record();
  if (quoted) throw InputError("unterminated quoted field in '" + path + "'");
  return records;
}

int column_index(const std::vector<std::string>& header, const std::string& name,
                 const std::string& role) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) {
    throw SchemaError(role + " column '" + name + "' not found in header");
  }
  return static_cast<int>(it - header.begin());
}

double parse_numeric(const std::string& value, std::int64_t row, const std::string& column) {
  errno = 0;
  char* end = nullptr;
  const double parsed = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || value.empty() || errno == ERANGE ||
      !std::isfinite(parsed)) {
    throw InputError("unparseable numeric cell '" + value + "' at data row " +
                     std::to_string(row) + ", column '" + column + "'");
  }
  return parsed;
}

}  // namespace

void TabularDataset::validate() const {
  const auto n = features.rows();
  if (n < 1) throw InputError("dataset must contain at least one instance");
  if (!features.allFinite()) throw InputError("dataset contains a non-finite feature");
  if (static_cast<Eigen::Index>(sensitive.size()) != n ||
      static_cast<Eigen::Index>(labels.size()) != n) {
    throw InputError("sensitive/label arrays do not match instance count");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sensitive[i] != 0 && sensitive[i] != 1) {
      throw InputError("sensitive attribute must be 0 or 1");
    }
    if (labels[i] != 0 && labels[i] != 1) {
      throw InputError("label must be 0 or 1");
    }
  }
  if (!feature_names.empty() &&
      static_cast<Eigen::Index>(feature_names.size()) != features.cols()) {
    throw InputError("feature name count does not match feature width");
  }
}

Eigen::VectorXd TabularDataset::labels_vector() const {
  Eigen::VectorXd y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i];
  return y;
}

TabularDataset TabularDataset::subset(const std::vector<int>& indices) const {
  TabularDataset out;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.sensitive.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int idx = indices[i];
    if (idx < 0 || idx >= features.rows()) {
      throw InputError("subset index " + std::to_string(idx) + " out of range");
    }
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx);
    out.sensitive.push_back(sensitive[idx]);
    out.labels.push_back(labels[idx]);
  }
  out.feature_names = feature_names;
  out.standardization = standardization;
  return out;
}

TabularDataset TabularDataset::without(const std::vector<int>& indices) const {
  std::set<int> removed(indices.begin(), indices.end());
  std::vector<int> kept;
  kept.reserve(features.rows());
  for (int i = 0; i < features.rows(); ++i) {
    if (!removed.count(i)) kept.push_back(i);
  }
  return subset(kept);
}

LoadedCsv load_csv(const std::string& path, const DataSchema& schema) {
  auto records = read_csv_records(path);
  if (records.empty()) throw InputError("'" + path + "' contains no records");

  std::vector<std::string> header;
  std::size_t first_data = 0;
  if (!schema.header_override.empty()) {
    header = schema.header_override;
  } else {
    header = records[0];
    first_data = 1;
  }
  const std::size_t width = header.size();

  const int label_col = column_index(header, schema.label_column, "label");
  const int sensitive_col = column_index(header, schema.sensitive_column, "sensitive");

  std::set<int> dropped_cols;
  for (const auto& name : schema.drop_columns) {
    dropped_cols.insert(column_index(header, name, "drop"));
  }
  std::set<int> categorical_cols;
  for (const auto& name : schema.categorical_columns) {
    const int idx = column_index(header, name, "categorical");
    if (dropped_cols.count(idx)) {
      throw SchemaError("column '" + name + "' is both categorical and dropped");
    }
    categorical_cols.insert(idx);
  }
  if (dropped_cols.count(label_col)) {
    throw SchemaError("label column '" + schema.label_column + "' is dropped");
  }
  if (dropped_cols.count(sensitive_col)) {
    throw SchemaError("sensitive column '" + schema.sensitive_column + "' is dropped");
  }
  if (categorical_cols.count(label_col)) {
    throw SchemaError("label column '" + schema.label_column +
                      "' cannot be categorical");
  }
  if (categorical_cols.count(sensitive_col)) {
    throw SchemaError("sensitive column '" + schema.sensitive_column +
                      "' cannot be categorical");
  }

  // Feature columns keep their file order; label/sensitive are not features.
  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(width); ++c) {
    if (c == label_col || c == sensitive_col || dropped_cols.count(c)) continue;
    feature_cols.push_back(c);
  }

  LoadReport report;
  report.columns_used.push_back(header[label_col]);
  report.columns_used.push_back(header[sensitive_col]);
  for (int c : feature_cols) report.columns_used.push_back(header[c]);

  // First pass: drop rows with missing used cells, collect category order.
  std::vector<const std::vector<std::string>*> kept;
  std::map<int, std::vector<std::string>> categories;       // column -> order
  std::map<int, std::unordered_map<std::string, int>> cat_index;
  for (std::size_t r = first_data; r < records.size(); ++r) {
    const auto& row = records[r];
    ++report.rows_read;
    if (row.size() != width) {
      throw InputError("data row " + std::to_string(report.rows_read) + " has " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(width));
    }
    bool missing = is_missing(row[label_col]) || is_missing(row[sensitive_col]);
    for (std::size_t i = 0; i < feature_cols.size() && !missing; ++i) {
      missing = is_missing(row[feature_cols[i]]);
    }
    if (missing) {
      ++report.rows_dropped;
      continue;
    }
    kept.push_back(&row);
    for (int c : feature_cols) {
      if (!categorical_cols.count(c)) continue;
      auto& index = cat_index[c];
      if (index.emplace(row[c], static_cast<int>(index.size())).second) {
        categories[c].push_back(row[c]);
      }
    }
  }
  if (kept.empty()) throw InputError("'" + path + "' has no usable rows");

  for (const auto& [col, values] : categories) {
    report.one_hot_map[header[col]] = values;
  }

  // Feature layout: each categorical column expands in place.
  std::vector<std::string> feature_names;
  std::vector<int> offsets(feature_cols.size());
  int total_width = 0;
  for (std::size_t i = 0; i < feature_cols.size(); ++i) {
    const int c = feature_cols[i];
    offsets[i] = total_width;
    if (categorical_cols.count(c)) {
      for (const auto& value : categories[c]) {
        feature_names.push_back(header[c] + "=" + value);
      }
      total_width += static_cast<int>(categories[c].size());
    } else {
      feature_names.push_back(header[c]);
      ++total_width;
    }
  }

  TabularDataset ds;
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kept.size()), total_width);
  ds.feature_names = std::move(feature_names);
  ds.sensitive.reserve(kept.size());
  ds.labels.reserve(kept.size());
  std::int64_t data_row = 0;
  for (std::size_t r = 0; r < kept.size(); ++r) {
    const auto& row = *kept[r];
    ++data_row;
    for (std::size_t i = 0; i < feature_cols.size(); ++i) {
      const int c = feature_cols[i];
      if (categorical_cols.count(c)) {
        ds.features(static_cast<Eigen::Index>(r), offsets[i] + cat_index[c][row[c]]) = 1.0;
      } else {
        ds.features(static_cast<Eigen::Index>(r), offsets[i]) =
            parse_numeric(row[c], data_row, header[c]);
      }
    }
    ds.labels.push_back(row[label_col] == schema.positive_label_value ? 1 : 0);
    ds.sensitive.push_back(row[sensitive_col] == schema.privileged_value ? 1 : 0);
  }
  ds.validate();
  return LoadedCsv{std::move(ds), std::move(report)};
}

std::pair<TabularDataset, std::vector<TabularDataset>> standardize(
    const TabularDataset& train, const std::vector<TabularDataset>& others) {
  train.validate();
  const Eigen::Index p = train.width();
  for (const auto& other : others) {
    if (other.width() != p) {
      throw InputError("standardize: feature width mismatch between datasets");
    }
  }

  Standardization fit;
  fit.mean = train.features.colwise().mean();
  Eigen::VectorXd variance =
      (train.features.rowwise() - fit.mean.transpose()).array().square().colwise().mean();
  fit.scale.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double stddev = std::sqrt(variance[j]);
    fit.scale[j] = stddev < 1e-12 ? 1.0 : stddev;
  }

  auto apply = [&fit](const TabularDataset& ds) {
    TabularDataset out = ds;
    out.features = (ds.features.rowwise() - fit.mean.transpose()).array().rowwise() /
                   fit.scale.transpose().array();
    out.standardization = fit;
    return out;
  };

  std::vector<TabularDataset> mapped;
  mapped.reserve(others.size());
  for (const auto& other : others) mapped.push_back(apply(other));
  return {apply(train), std::move(mapped)};
}

SplitResult split(const TabularDataset& dataset, double train_fraction,
                  double val_fraction, double test_fraction, std::uint64_t seed) {
  dataset.validate();
  if (train_fraction <= 0.0 || val_fraction <= 0.0 || test_fraction <= 0.0) {
    throw InputError("split fractions must be positive");
  }
  const double total = train_fraction + val_fraction + test_fraction;
  if (total > 1.0 + 1e-9) {
    throw InputError("split fractions sum to more than 1");
  }

  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  const int n_val = static_cast<int>(std::floor(n * val_fraction));
  const int n_test = static_cast<int>(std::floor(n * test_fraction));
  int n_train;
  if (total >= 1.0 - 1e-9) {
    n_train = n - n_val - n_test;  // remainder joins train
  } else {
    n_train = static_cast<int>(std::floor(n * train_fraction));
  }
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw InputError("split would leave an empty part (N=" + std::to_string(n) + ")");
  }

  const std::vector<int> train_idx(order.begin(), order.begin() + n_train);
  const std::vector<int> val_idx(order.begin() + n_train, order.begin() + n_train + n_val);
  const std::vector<int> test_idx(order.begin() + n_train + n_val,
                                  order.begin() + n_train + n_val + n_test);
  return SplitResult{dataset.subset(train_idx), dataset.subset(val_idx),
                     dataset.subset(test_idx)};
}

std::pair<TabularDataset, TabularDataset> split_two(const TabularDataset& dataset,
                                                    double first_fraction,
                                                    std::uint64_t seed) {
  dataset.validate();
  if (!(first_fraction > 0.0) || !(first_fraction < 1.0)) {
    throw InputError("split_two fraction must lie strictly between 0 and 1");
  }
  const int n = static_cast<int>(dataset.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const int n_first = static_cast<int>(std::floor(n * first_fraction));
  if (n_first < 1 || n_first >= n) {
    throw InputError("split_two would leave an empty part");
  }
  const std::vector<int> first(order.begin(), order.begin() + n_first);
  const std::vector<int> second(order.begin() + n_first, order.end());
  return {dataset.subset(first), dataset.subset(second)};
}

TabularDataset two_moons(int n, double noise, double separation, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InputError("two_moons requires an even n >= 2");
  if (noise < 0.0) throw InputError("two_moons noise must be non-negative");

  const int per_moon = n / 2;
  Rng rng(seed);
  TabularDataset ds;
  ds.features.resize(n, 2);
  ds.feature_names = {"x1", "x2"};
  ds.sensitive.resize(n);
  ds.labels.resize(n);

  auto angle = [per_moon](int i) {
    if (per_moon == 1) return 0.0;
    return M_PI * static_cast<double>(i) / static_cast<double>(per_moon - 1);
  };
  for (int i = 0; i < per_moon; ++i) {
    const double t = angle(i);
    ds.features(i, 0) = std::cos(t) + noise * rng.normal();
    ds.features(i, 1) = std::sin(t) + separation / 2.0 + noise * rng.normal();
    ds.labels[i] = 0;
    ds.sensitive[i] = 0;
  }
  for (int i = 0; i < per_moon; ++i) {
    const double t = angle(i);
    const int row = per_moon + i;
    ds.features(row, 0) = 1.0 - std::cos(t) + noise * rng.normal();
    ds.features(row, 1) = 0.5 - std::sin(t) - separation / 2.0 + noise * rng.normal();
    ds.labels[row] = 1;
    ds.sensitive[row] = 1;
  }
  return ds;
}

TabularDataset biased_mixture(int n, double bias_fraction, std::uint64_t seed) {
  if (n < 4) throw InputError("biased_mixture requires n >= 4");
  if (bias_fraction < 0.0 || bias_fraction > 1.0) {
    throw InputError("bias_fraction must lie in [0, 1]");
  }

  Rng rng(seed);
  TabularDataset ds;
  ds.features.resize(n, 2);
  ds.feature_names = {"merit", "group_signal"};
  ds.sensitive.resize(n);
  ds.labels.resize(n);

  for (int i = 0; i < n; ++i) {
    // Alternate group membership so both groups are always non-empty.
    const int s = i % 2;
    const double merit = rng.normal();
    ds.features(i, 0) = merit;
    ds.features(i, 1) = static_cast<double>(s) + 0.3 * rng.normal();
    ds.sensitive[i] = s;
    // Group-blind ground truth with a little label noise ...
    int y = merit + 0.25 * rng.normal() > 0.0 ? 1 : 0;
    // ... except for a biased minority whose label just copies the group.
    if (rng.uniform() < bias_fraction) y = s;
    ds.labels[i] = y;
  }
  return ds;
}

}  // namespace fairij
