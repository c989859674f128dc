#include "fairtrade/graph.hpp"

#include <algorithm>
#include <map>
#include <queue>

namespace fairtrade::graph {

namespace {

const std::vector<std::pair<Role, std::string>> kRoleNames = {
    {Role::Sensitive, "sensitive"}, {Role::Latent, "latent"},       {Role::Base, "base"},
    {Role::Covariate, "covariate"}, {Role::Resolving, "resolving"}, {Role::Outcome, "outcome"},
    {Role::Treatment, "treatment"}, {Role::Other, "other"}};

}  // namespace

std::string to_string(Role r) {
  for (const auto& [role, name] : kRoleNames)
    if (role == r) return name;
  return "other";
}

Role role_from_string(const std::string& s) {
  for (const auto& [role, name] : kRoleNames)
    if (name == s) return role;
  throw ContractError("unknown role '" + s + "'");
}

std::string to_string(const DirectedPath& p) {
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) out += '>';
    out += p[i];
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

DirectedPath parse_path(std::string_view text) {
  DirectedPath p = split(text, '>');
  if (p.size() < 2) throw ContractError("path '" + std::string(text) + "' needs at least two nodes");
  for (const auto& n : p)
    if (n.empty()) throw ContractError("empty node name in path '" + std::string(text) + "'");
  return p;
}

PathSet parse_path_set(std::string_view text) {
  PathSet out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) out.insert(parse_path(item));
  return out;
}

// ---------------------------------------------------------------- CausalGraph

void CausalGraph::add_node(const std::string& name, Role role) { add_node(name, role, role != Role::Latent); }

void CausalGraph::add_node(const std::string& name, Role role, bool observed) {
  if (name.empty()) throw ContractError("node name must be nonempty");
  if (has_node(name)) throw ContractError("duplicate node '" + name + "'");
  nodes_.push_back({name, role, observed});
}

void CausalGraph::add_edge(const std::string& from, const std::string& to) {
  if (!has_node(from) || !has_node(to)) throw ContractError("edge " + from + "->" + to + " references unknown node");
  if (from == to) throw ValidationError("self loop on '" + from + "'");
  edges_.insert({from, to});
}

bool CausalGraph::has_node(const std::string& name) const {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const Node& n) { return n.name == name; });
}

const Node& CausalGraph::node(const std::string& name) const {
  for (const auto& n : nodes_)
    if (n.name == name) return n;
  throw ContractError("no node named '" + name + "'");
}

std::vector<std::string> CausalGraph::parents(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& [from, to] : edges_)
    if (to == name) out.push_back(from);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> CausalGraph::children(const std::string& name) const {
  std::vector<std::string> out;
  for (const auto& [from, to] : edges_)
    if (from == name) out.push_back(to);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> CausalGraph::nodes_with_role(Role role) const {
  std::vector<std::string> out;
  for (const auto& n : nodes_)
    if (n.role == role) out.push_back(n.name);
  return out;
}

const std::string& CausalGraph::unique_role(Role r) const {
  const std::string* found = nullptr;
  for (const auto& n : nodes_) {
    if (n.role != r) continue;
    if (found) throw ContractError("graph has more than one " + to_string(r) + " node");
    found = &n.name;
  }
  if (!found) throw ContractError("graph has no " + to_string(r) + " node");
  return *found;
}

const std::string& CausalGraph::sensitive() const { return unique_role(Role::Sensitive); }
const std::string& CausalGraph::outcome() const { return unique_role(Role::Outcome); }

bool CausalGraph::is_descendant(const std::string& node, const std::string& of) const {
  std::vector<std::string> stack = children(of);
  std::set<std::string> seen;
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    if (cur == node) return true;
    if (!seen.insert(cur).second) continue;
    for (auto& c : children(cur)) stack.push_back(c);
  }
  return false;
}

// ---------------------------------------------------------------- algorithms

DagCheck validate_dag(const CausalGraph& g) {
  std::map<std::string, int> indegree;
  for (const auto& n : g.nodes()) indegree[n.name] = 0;
  for (const auto& e : g.edges()) ++indegree[e.second];

  std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
  for (const auto& [name, d] : indegree)
    if (d == 0) ready.push(name);

  DagCheck result;
  while (!ready.empty()) {
    auto cur = ready.top();
    ready.pop();
    result.order.push_back(cur);
    for (const auto& c : g.children(cur))
      if (--indegree[c] == 0) ready.push(c);
  }
  if (result.order.size() == g.nodes().size()) {
    result.ok = true;
    return result;
  }

  // Remaining nodes all have a parent inside the remainder, so walking parents must revisit one.
  std::set<std::string> done(result.order.begin(), result.order.end());
  std::string start;
  for (const auto& [name, d] : indegree)
    if (!done.contains(name)) {
      start = name;
      break;
    }
  std::vector<std::string> walk;
  std::map<std::string, std::size_t> pos;
  std::string cur = start;
  while (!pos.contains(cur)) {
    pos[cur] = walk.size();
    walk.push_back(cur);
    for (const auto& p : g.parents(cur))
      if (!done.contains(p)) {
        cur = p;
        break;
      }
  }
  std::vector<std::string> cycle(walk.begin() + static_cast<std::ptrdiff_t>(pos[cur]), walk.end());
  std::reverse(cycle.begin(), cycle.end());  // parent walk -> edge direction
  auto smallest = std::min_element(cycle.begin(), cycle.end());
  std::rotate(cycle.begin(), smallest, cycle.end());
  result.order.clear();
  result.cycle = std::move(cycle);
  return result;
}

std::vector<std::string> topological_order(const CausalGraph& g) {
  auto check = validate_dag(g);
  if (!check.ok) {
    std::string msg = "graph has a cycle:";
    for (const auto& n : check.cycle) msg += " " + n;
    throw ValidationError(msg);
  }
  return check.order;
}

std::vector<DirectedPath> enumerate_paths(const CausalGraph& g, const std::string& from, const std::string& to) {
  topological_order(g);
  g.node(from);
  g.node(to);
  std::vector<DirectedPath> out;
  DirectedPath cur{from};
  auto dfs = [&](auto&& self, const std::string& at) -> void {
    if (at == to) {
      out.push_back(cur);
      return;
    }
    for (const auto& c : g.children(at)) {
      cur.push_back(c);
      self(self, c);
      cur.pop_back();
    }
  };
  if (from != to) dfs(dfs, from);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<DirectedPath> enumerate_paths(const CausalGraph& g) {
  return enumerate_paths(g, g.sensitive(), g.outcome());
}

Identifiability check_identifiability(const CausalGraph& g, const PathSet& active) {
  const auto all = enumerate_paths(g);
  const std::set<DirectedPath> known(all.begin(), all.end());
  for (const auto& p : active)
    if (!known.contains(p)) throw ContractError("path " + to_string(p) + " is not a sensitive->outcome path of the graph");

  for (const auto& in : active) {
    for (const auto& out : all) {
      if (active.contains(out)) continue;
      // Any shared prefix A->W implies the first hop is shared, so W = in[1] is a witness.
      if (in.size() > 2 && out.size() > 2 && in[1] == out[1]) {
        Identifiability r;
        r.identifiable = false;
        r.witness = in[1];
        r.active_path = in;
        r.inactive_path = out;
        return r;
      }
    }
  }
  return {};
}

CausalGraph builtin(std::string_view name) {
  CausalGraph g;
  auto edges = [&](std::initializer_list<std::pair<const char*, const char*>> list) {
    for (const auto& [a, b] : list) g.add_edge(a, b);
  };
  if (name == "fig1a") {
    g.add_node("Z", Role::Latent);
    g.add_node("A", Role::Sensitive);
    g.add_node("X", Role::Covariate);
    g.add_node("Y", Role::Outcome);
    edges({{"Z", "X"}, {"Z", "Y"}, {"A", "X"}, {"A", "Y"}, {"X", "Y"}});
  } else if (name == "fig1b") {
    g.add_node("Z", Role::Latent);
    g.add_node("B", Role::Base);
    g.add_node("A", Role::Sensitive);
    g.add_node("X", Role::Covariate);
    g.add_node("Y", Role::Outcome);
    edges({{"Z", "X"}, {"Z", "Y"}, {"B", "X"}, {"B", "Y"}, {"A", "X"}, {"A", "Y"}, {"X", "Y"}});
  } else if (name == "fig1c") {
    g.add_node("Z", Role::Latent);
    g.add_node("B", Role::Base);
    g.add_node("A", Role::Sensitive);
    g.add_node("X", Role::Covariate);
    g.add_node("R", Role::Resolving);
    g.add_node("Y", Role::Outcome);
    edges({{"Z", "X"}, {"Z", "R"}, {"Z", "Y"}, {"B", "X"}, {"B", "R"}, {"B", "Y"}, {"A", "X"}, {"A", "R"},
           {"A", "Y"}, {"X", "R"}, {"X", "Y"}, {"R", "Y"}});
  } else if (name == "fig2") {
    g.add_node("Z", Role::Latent);
    g.add_node("A", Role::Sensitive);
    g.add_node("X", Role::Covariate);
    g.add_node("T", Role::Treatment);
    g.add_node("Y", Role::Outcome);
    edges({{"Z", "X"}, {"Z", "T"}, {"Z", "Y"}, {"A", "X"}, {"A", "T"}, {"A", "Y"}, {"X", "Y"}, {"T", "Y"}});
  } else {
    throw ContractError("unknown builtin graph '" + std::string(name) + "' (fig1a, fig1b, fig1c, fig2)");
  }
  return g;
}

nlohmann::json to_json(const CausalGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : g.nodes()) nodes.push_back({{"name", n.name}, {"role", to_string(n.role)}, {"observed", n.observed}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : g.edges()) edges.push_back({a, b});
  return {{"nodes", nodes}, {"edges", edges}};
}

CausalGraph graph_from_json(const nlohmann::json& j) {
  CausalGraph g;
  for (const auto& n : j.at("nodes")) {
    const Role role = role_from_string(n.at("role").get<std::string>());
    g.add_node(n.at("name").get<std::string>(), role, n.value("observed", role != Role::Latent));
  }
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ContractError("edge entries must be [from, to]");
    g.add_edge(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return g;
}

}  // namespace fairtrade::graph
