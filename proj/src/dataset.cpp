#include "fairtrade/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fairtrade {

std::string to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::Bernoulli: return "bernoulli";
    case ColumnKind::Gaussian: return "gaussian";
    case ColumnKind::Categorical: return "categorical";
  }
  return "?";
}

ColumnKind column_kind_from_string(const std::string& s) {
  if (s == "bernoulli") return ColumnKind::Bernoulli;
  if (s == "gaussian") return ColumnKind::Gaussian;
  if (s == "categorical") return ColumnKind::Categorical;
  throw ContractError("unknown column kind '" + s + "'");
}

Dataset::Dataset(DataProfile columns, MatrixXd values) : columns_(std::move(columns)), values_(std::move(values)) {
  if (static_cast<Index>(columns_.size()) != values_.cols())
    throw ContractError("profile has " + std::to_string(columns_.size()) + " columns, values have " +
                        std::to_string(values_.cols()));
}

Index Dataset::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return static_cast<Index>(i);
  throw ContractError("dataset has no column '" + name + "'");
}

bool Dataset::has_node(const std::string& node) const {
  return std::any_of(columns_.begin(), columns_.end(), [&](const Column& c) { return c.node == node; });
}

std::vector<Index> Dataset::node_columns(const std::string& node) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].node == node) out.push_back(static_cast<Index>(i));
  return out;
}

MatrixXd Dataset::node_block(const std::string& node) const {
  const auto cols = node_columns(node);
  if (cols.empty()) throw ContractError("dataset has no columns for node '" + node + "'");
  return values_(Eigen::all, cols);
}

void Dataset::set_node_block(const std::string& node, const Eigen::Ref<const MatrixXd>& block) {
  const auto cols = node_columns(node);
  if (static_cast<Index>(cols.size()) != block.cols() || block.rows() != rows())
    throw ContractError("block shape does not match node '" + node + "'");
  values_(Eigen::all, cols) = block;
}

DataProfile Dataset::node_profile(const std::string& node) const {
  DataProfile out;
  for (const auto& c : columns_)
    if (c.node == node) out.push_back(c);
  return out;
}

std::vector<Index> Dataset::role_columns(graph::Role role) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].role == role && columns_[i].observed) out.push_back(static_cast<Index>(i));
  return out;
}

void Dataset::append_columns(const DataProfile& cols, const Eigen::Ref<const MatrixXd>& block) {
  if (static_cast<Index>(cols.size()) != block.cols() || (values_.size() > 0 && block.rows() != rows()))
    throw ContractError("appended block shape mismatch");
  for (const auto& c : cols)
    for (const auto& existing : columns_)
      if (existing.name == c.name) throw ContractError("duplicate column '" + c.name + "'");
  MatrixXd next(block.rows(), values_.cols() + block.cols());
  if (values_.cols() > 0) next.leftCols(values_.cols()) = values_;
  next.rightCols(block.cols()) = block;
  values_ = std::move(next);
  columns_.insert(columns_.end(), cols.begin(), cols.end());
}

void Dataset::set_noise(std::vector<std::string> names, MatrixXd noise) {
  if (static_cast<Index>(names.size()) != noise.cols() || noise.rows() != rows())
    throw ContractError("noise block shape mismatch");
  noise_names_ = std::move(names);
  noise_ = std::move(noise);
}

void Dataset::drop_noise() {
  noise_names_.clear();
  noise_.resize(0, 0);
}

Dataset Dataset::select_columns(const std::vector<Index>& cols) const {
  DataProfile profile;
  for (Index c : cols) profile.push_back(columns_.at(static_cast<std::size_t>(c)));
  Dataset out(std::move(profile), values_(Eigen::all, cols));
  if (has_noise()) out.set_noise(noise_names_, noise_);
  return out;
}

Dataset Dataset::select_rows(const std::vector<Index>& rows) const {
  Dataset out(columns_, values_(rows, Eigen::all));
  if (has_noise()) out.set_noise(noise_names_, noise_(rows, Eigen::all));
  return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractError("test_fraction must be in (0,1)");
  std::vector<Index> idx(static_cast<std::size_t>(d.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(d.rows())));
  std::vector<Index> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<Index> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {d.select_rows(train), d.select_rows(test)};
}

nlohmann::json to_json(const DataProfile& profile) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : profile)
    cols.push_back({{"name", c.name},
                    {"node", c.node},
                    {"role", graph::to_string(c.role)},
                    {"kind", to_string(c.kind)},
                    {"categories", c.categories},
                    {"observed", c.observed}});
  return cols;
}

DataProfile profile_from_json(const nlohmann::json& cols) {
  DataProfile profile;
  for (const auto& c : cols)
    profile.push_back({c.at("name").get<std::string>(), c.at("node").get<std::string>(),
                       graph::role_from_string(c.at("role").get<std::string>()),
                       column_kind_from_string(c.at("kind").get<std::string>()), c.value("categories", Index{0}),
                       c.value("observed", true)});
  return profile;
}

nlohmann::json schema_json(const Dataset& d) {
  return {{"version", 1}, {"columns", to_json(d.columns())}, {"noise_columns", nlohmann::json::array()}};
}

std::filesystem::path default_schema_path(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".schema.json");
  return p;
}

void write_dataset(const Dataset& d, const std::filesystem::path& csv, const std::filesystem::path& schema,
                   bool with_noise) {
  auto doc = schema_json(d);
  const bool noise = with_noise && d.has_noise();
  if (noise) doc["noise_columns"] = d.noise_names();
  {
    std::ofstream s(schema);
    if (!s) throw ContractError("cannot write " + schema.string());
    s << doc.dump(2) << "\n";
  }
  std::ofstream out(csv);
  if (!out) throw ContractError("cannot write " + csv.string());
  out << std::setprecision(17);
  bool first = true;
  for (const auto& c : d.columns()) {
    out << (first ? "" : ",") << c.name;
    first = false;
  }
  if (noise)
    for (const auto& n : d.noise_names()) out << "," << n;
  out << "\n";
  for (Index i = 0; i < d.rows(); ++i) {
    for (Index j = 0; j < d.values().cols(); ++j) out << (j ? "," : "") << d.values()(i, j);
    if (noise)
      for (Index j = 0; j < d.noise().cols(); ++j) out << "," << d.noise()(i, j);
    out << "\n";
  }
}

Dataset read_dataset(const std::filesystem::path& csv, const std::filesystem::path& schema) {
  std::ifstream s(schema);
  if (!s) throw ContractError("cannot read schema " + schema.string());
  const auto doc = nlohmann::json::parse(s);
  DataProfile profile = profile_from_json(doc.at("columns"));
  const auto noise_names = doc.value("noise_columns", std::vector<std::string>{});

  std::ifstream in(csv);
  if (!in) throw ContractError("cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw ContractError(csv.string() + " is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  // Map schema columns (and noise columns) to CSV positions by name.
  auto position = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ContractError(csv.string() + " lacks column '" + name + "' from schema");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> value_pos, noise_pos;
  for (const auto& c : profile) value_pos.push_back(position(c.name));
  for (const auto& n : noise_names) noise_pos.push_back(position(n));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ContractError(csv.string() + ":" + std::to_string(line_no) + ": non-numeric cell '" + cell + "'");
      }
    }
    if (cells.size() != header.size())
      throw ContractError(csv.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(header.size()) + " cells");
    rows.push_back(std::move(cells));
  }
  MatrixXd values(static_cast<Index>(rows.size()), static_cast<Index>(profile.size()));
  MatrixXd noise(static_cast<Index>(rows.size()), static_cast<Index>(noise_names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < value_pos.size(); ++j) values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][value_pos[j]];
    for (std::size_t j = 0; j < noise_pos.size(); ++j) noise(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][noise_pos[j]];
  }
  Dataset d(std::move(profile), std::move(values));
  if (!noise_names.empty()) d.set_noise(noise_names, std::move(noise));
  return d;
}

}  // namespace fairtrade
