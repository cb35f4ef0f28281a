#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "msgca/data/prices.hpp"
#include "msgca/data/types.hpp"
#include "msgca/log.hpp"

namespace msgca::data {

struct GraphEdge {
  std::string src;
  std::string relation;
  std::string dst;
};

/// Static stock structure. Group nodes (sectors, industries) are collapsed so
/// that `adjacency[i]` lists the stocks sharing any group with stock i, plus
/// direct stock-stock relations and i itself. Lists are sorted.
struct RelationalGraph {
  std::vector<std::string> stocks;
  std::vector<std::string> nodes;  // stocks followed by group identifiers
  std::vector<GraphEdge> edges;    // edges kept after validation
  std::vector<std::vector<std::size_t>> adjacency;

  std::size_t num_stocks() const { return stocks.size(); }

  std::optional<std::size_t> index_of(const std::string& symbol) const {
    auto it = std::lower_bound(order_.begin(), order_.end(), symbol,
                               [this](std::size_t i, const std::string& s) { return stocks[i] < s; });
    if (it == order_.end() || stocks[*it] != symbol) return std::nullopt;
    return *it;
  }

  bool are_neighbors(std::size_t a, std::size_t b) const {
    return std::binary_search(adjacency[a].begin(), adjacency[a].end(), b);
  }

  void reindex() {
    order_.resize(stocks.size());
    for (std::size_t i = 0; i < stocks.size(); ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) { return stocks[a] < stocks[b]; });
  }

 private:
  std::vector<std::size_t> order_;
};

/// Builds the collapsed graph over `stocks` (in the given order). In each
/// edge `src` must be a stock; `dst` is a stock (direct relation) or a group
/// identifier. Edges whose `src` is not a known stock are dropped with a warning.
inline RelationalGraph build_graph(const std::vector<std::string>& stocks, const std::vector<GraphEdge>& edges) {
  RelationalGraph g;
  g.stocks = stocks;
  g.reindex();
  if (std::set<std::string>(stocks.begin(), stocks.end()).size() != stocks.size())
    throw DataError("graph: duplicate stock symbol");
  std::vector<std::set<std::size_t>> adj(stocks.size());
  for (std::size_t i = 0; i < stocks.size(); ++i) adj[i].insert(i);

  std::map<std::string, std::vector<std::size_t>> members;
  for (const auto& e : edges) {
    const auto src = g.index_of(e.src);
    if (!src) {
      log::warn("graph: edge references unknown stock '" + e.src + "', dropped");
      continue;
    }
    g.edges.push_back(e);
    if (const auto dst = g.index_of(e.dst)) {
      adj[*src].insert(*dst);
      adj[*dst].insert(*src);
    } else {
      members[e.dst].push_back(*src);
    }
  }
  g.nodes = stocks;
  for (const auto& [group, list] : members) {
    g.nodes.push_back(group);
    for (std::size_t a : list)
      for (std::size_t b : list) adj[a].insert(b);
  }
  g.adjacency.resize(stocks.size());
  for (std::size_t i = 0; i < stocks.size(); ++i) g.adjacency[i].assign(adj[i].begin(), adj[i].end());
  return g;
}

inline std::vector<GraphEdge> parse_graph_edges(std::istream& in, const std::string& source = "graph") {
  std::vector<GraphEdge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), '\t');
    if (f.size() != 3 || f[0].empty() || f[2].empty())
      throw FormatError(source + ": line " + std::to_string(line_no) + ": expected src<TAB>relation<TAB>dst");
    edges.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
  }
  return edges;
}

inline RelationalGraph load_graph(const std::string& path, const std::vector<std::string>& stocks) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open graph file: " + path);
  return build_graph(stocks, parse_graph_edges(in, path));
}

inline void save_graph_edges(const std::string& path, const std::vector<GraphEdge>& edges) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write graph file: " + path);
  for (const auto& e : edges) out << e.src << '\t' << e.relation << '\t' << e.dst << '\n';
}

}  // namespace msgca::data
