#pragma once

#include "fairtrade/core.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fairtrade::graph {

enum class Role { Sensitive, Latent, Base, Covariate, Resolving, Outcome, Treatment, Other };

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct Node {
  std::string name;
  Role role = Role::Other;
  bool observed = true;
};

/// Node names from the sensitive node to the outcome, e.g. {"A","X","Y"}.
using DirectedPath = std::vector<std::string>;
using PathSet = std::set<DirectedPath>;

std::string to_string(const DirectedPath& p);  // "A>X>Y"
DirectedPath parse_path(std::string_view text);
/// Comma-separated list of paths; empty string is the empty set.
PathSet parse_path_set(std::string_view text);

class CausalGraph {
 public:
  void add_node(const std::string& name, Role role);
  void add_node(const std::string& name, Role role, bool observed);
  void add_edge(const std::string& from, const std::string& to);

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::set<std::pair<std::string, std::string>>& edges() const { return edges_; }
  bool has_node(const std::string& name) const;
  bool has_edge(const std::string& from, const std::string& to) const { return edges_.contains({from, to}); }
  const Node& node(const std::string& name) const;

  /// Sorted by name.
  std::vector<std::string> parents(const std::string& name) const;
  std::vector<std::string> children(const std::string& name) const;
  std::vector<std::string> nodes_with_role(Role role) const;

  /// The unique Sensitive / Outcome node; ContractError otherwise.
  const std::string& sensitive() const;
  const std::string& outcome() const;

  bool is_descendant(const std::string& node, const std::string& of) const;

 private:
  std::vector<Node> nodes_;
  std::set<std::pair<std::string, std::string>> edges_;
  const std::string& unique_role(Role r) const;
};

struct DagCheck {
  bool ok = false;
  std::vector<std::string> order;  // topological order when ok
  std::vector<std::string> cycle;  // offending cycle when not ok
};

DagCheck validate_dag(const CausalGraph& g);

/// Topological order with ties broken by name; ValidationError naming the cycle otherwise.
std::vector<std::string> topological_order(const CausalGraph& g);

/// Every directed path from -> to, sorted lexicographically by node-name sequence.
std::vector<DirectedPath> enumerate_paths(const CausalGraph& g, const std::string& from, const std::string& to);
/// Sensitive -> Outcome paths.
std::vector<DirectedPath> enumerate_paths(const CausalGraph& g);

struct Identifiability {
  bool identifiable = true;
  std::optional<std::string> witness;
  DirectedPath active_path;    // member of the set through the witness
  DirectedPath inactive_path;  // non-member sharing the prefix up to the witness
};

/// Recanting-witness check: non-identifiable iff some node W (not A or Y) is
/// reached by identical A->W prefixes of one path inside and one path outside the set.
Identifiability check_identifiability(const CausalGraph& g, const PathSet& active);

/// fig1a, fig1b, fig1c, fig2.
CausalGraph builtin(std::string_view name);

nlohmann::json to_json(const CausalGraph& g);
CausalGraph graph_from_json(const nlohmann::json& j);

}  // namespace fairtrade::graph
