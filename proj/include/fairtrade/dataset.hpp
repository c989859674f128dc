#pragma once

#include "fairtrade/core.hpp"
#include "fairtrade/graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fairtrade {

enum class ColumnKind { Bernoulli, Gaussian, Categorical };

std::string to_string(ColumnKind k);
ColumnKind column_kind_from_string(const std::string& s);

struct Column {
  std::string name;
  std::string node;
  graph::Role role = graph::Role::Other;
  ColumnKind kind = ColumnKind::Gaussian;
  Index categories = 0;
  bool observed = true;

  bool operator==(const Column&) const = default;
};

/// Per-column distribution profile of a dataset.
using DataProfile = std::vector<Column>;

/// Columnar records: values is rows x columns, one row per record. Exogenous
/// noise, when retained, lives in a parallel matrix with its own column names.
class Dataset {
 public:
  Dataset() = default;
  Dataset(DataProfile columns, MatrixXd values);

  Index rows() const { return values_.rows(); }
  const DataProfile& columns() const { return columns_; }
  const MatrixXd& values() const { return values_; }
  MatrixXd& values() { return values_; }

  Index column_index(const std::string& name) const;  // throws if absent
  bool has_node(const std::string& node) const;
  /// Column indices of a node, in table order.
  std::vector<Index> node_columns(const std::string& node) const;
  /// rows x width block of a node.
  MatrixXd node_block(const std::string& node) const;
  void set_node_block(const std::string& node, const Eigen::Ref<const MatrixXd>& block);
  DataProfile node_profile(const std::string& node) const;
  /// Columns of the given role with observed == true, concatenated in table order.
  std::vector<Index> role_columns(graph::Role role) const;

  void append_columns(const DataProfile& cols, const Eigen::Ref<const MatrixXd>& block);

  bool has_noise() const { return noise_.cols() > 0 && noise_.rows() == rows(); }
  const std::vector<std::string>& noise_names() const { return noise_names_; }
  const MatrixXd& noise() const { return noise_; }
  void set_noise(std::vector<std::string> names, MatrixXd noise);
  void drop_noise();

  Dataset select_rows(const std::vector<Index>& rows) const;
  /// Keeps the listed value columns in the given order; noise is carried along.
  Dataset select_columns(const std::vector<Index>& cols) const;

 private:
  DataProfile columns_;
  MatrixXd values_;
  std::vector<std::string> noise_names_;
  MatrixXd noise_;
};

/// Deterministic train/test split: shuffles with `seed`, `test_fraction` of rows go to test.
std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_fraction, std::uint64_t seed);

nlohmann::json to_json(const DataProfile& profile);
DataProfile profile_from_json(const nlohmann::json& cols);
nlohmann::json schema_json(const Dataset& d);
/// CSV (header row, 17 significant digits) + schema JSON sidecar. Noise columns only when `with_noise`.
void write_dataset(const Dataset& d, const std::filesystem::path& csv, const std::filesystem::path& schema,
                   bool with_noise);
Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema);
/// Sidecar path convention: data.csv -> data.schema.json
std::filesystem::path default_schema_path(const std::filesystem::path& csv);

}  // namespace fairtrade
