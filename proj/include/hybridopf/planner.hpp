#pragma once

#include <algorithm>
#include <future>
#include <optional>
#include <utility>
#include <vector>

#include "hybridopf/grid.hpp"
#include "hybridopf/opf.hpp"
#include "hybridopf/types.hpp"

namespace hybridopf {

/// Undirected AC line of a conventional grid, candidate for HVDC conversion.
struct AcLine {
  int id = 0;
  int bus_a = 0;
  int bus_b = 0;
  Complex series_impedance_pu{0.0, 0.0};
  Complex shunt_a_pu{0.0, 0.0};
  Complex shunt_b_pu{0.0, 0.0};
  Complex ratio_a{1.0, 0.0};
  Complex ratio_b{1.0, 0.0};
  double rating_mva = 0.0;
  double drop_min = -0.05;
  double drop_max = 0.05;
  double angle_min_rad = deg_to_rad(-50.0);
  double angle_max_rad = deg_to_rad(50.0);
};

struct AcOnlyGrid {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<AcLine> lines;
  int ref_bus = 1;
  double ref_angle_rad = 0.0;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_line() const { return static_cast<int>(lines.size()); }

  int bus_index(int id) const {
    for (int i = 0; i < n_bus(); ++i)
      if (buses[i].id == id) return i;
    throw Error("unknown bus id " + std::to_string(id));
  }
};

/// Spanning tree count by the matrix tree theorem: any principal minor of
/// the graph Laplacian. Returns 0 for a disconnected graph.
inline long long count_spanning_trees(const AcOnlyGrid& grid) {
  const int n = grid.n_bus();
  if (n == 0) return 0;
  if (n == 1) return 1;
  RMatrix laplacian = RMatrix::Zero(n, n);
  for (const AcLine& line : grid.lines) {
    const int a = grid.bus_index(line.bus_a);
    const int b = grid.bus_index(line.bus_b);
    if (a == b) continue;
    laplacian(a, a) += 1.0;
    laplacian(b, b) += 1.0;
    laplacian(a, b) -= 1.0;
    laplacian(b, a) -= 1.0;
  }
  const double det = laplacian.topLeftCorner(n - 1, n - 1).determinant();
  return std::llround(std::max(0.0, det));
}

/// All spanning trees as sorted sets of line ids, in lexicographic order of
/// the chosen line positions. Throws when the matrix-tree count exceeds the
/// cap, which guards against combinatorial explosion.
inline std::vector<std::vector<int>> enumerate_spanning_trees(const AcOnlyGrid& grid,
                                                              long long cap = 1'000'000) {
  const int n = grid.n_bus();
  const int e = grid.n_line();
  const long long count = count_spanning_trees(grid);
  if (count > cap)
    throw Error("spanning tree enumeration would produce " + std::to_string(count) +
                " trees, above the cap of " + std::to_string(cap));
  std::vector<std::vector<int>> trees;
  if (count == 0) return trees;
  if (n == 1) {
    trees.push_back({});
    return trees;
  }

  std::vector<int> chosen;
  std::vector<std::pair<int, int>> endpoints(e);
  for (int k = 0; k < e; ++k)
    endpoints[k] = {grid.bus_index(grid.lines[k].bus_a), grid.bus_index(grid.lines[k].bus_b)};

  // Depth-first over line positions; union-find per prefix keeps it acyclic.
  auto recurse = [&](auto&& self, int next, const detail::DisjointSet& dsu) -> void {
    if (static_cast<int>(chosen.size()) == n - 1) {
      std::vector<int> ids;
      ids.reserve(chosen.size());
      for (int pos : chosen) ids.push_back(grid.lines[pos].id);
      std::sort(ids.begin(), ids.end());
      trees.push_back(std::move(ids));
      return;
    }
    const int missing = (n - 1) - static_cast<int>(chosen.size());
    for (int k = next; k <= e - missing; ++k) {
      detail::DisjointSet dsu_next = dsu;
      if (!dsu_next.unite(endpoints[k].first, endpoints[k].second)) continue;
      chosen.push_back(k);
      self(self, k + 1, dsu_next);
      chosen.pop_back();
    }
  };
  recurse(recurse, 0, detail::DisjointSet(n));
  return trees;
}

/// How off-tree lines turn into DC branches: a shared loss factor; capacity
/// equals the line MVA rating as MW. Lines listed in directional_overrides
/// (by endpoint pair) become a single directed branch, everything else an
/// antiparallel pair.
struct DcConversionTemplate {
  double loss_factor = 0.035;
  std::vector<std::pair<int, int>> directional_overrides;
};

struct UpgradeOutcome {
  double cost = 0.0;
  double kappa = 0.0;
  SolveStatus status = SolveStatus::kMaxIterations;
};

struct UpgradeCandidate {
  std::vector<int> tree_edges;
  std::vector<int> converted_edges;
  std::optional<UpgradeOutcome> result;
};

/// Builds the hybrid grid for one spanning tree: tree lines stay AC with
/// their input orientation, the rest become HVDC per the template.
inline Grid hybrid_grid_from_tree(const AcOnlyGrid& grid, const std::vector<int>& tree_edges,
                                  const DcConversionTemplate& tmpl) {
  Grid hybrid;
  hybrid.base_mva = grid.base_mva;
  hybrid.buses = grid.buses;
  hybrid.ref_bus = grid.ref_bus;
  hybrid.ref_angle_rad = grid.ref_angle_rad;

  int next_dc_id = 1;
  for (const AcLine& line : grid.lines) {
    const bool on_tree =
        std::find(tree_edges.begin(), tree_edges.end(), line.id) != tree_edges.end();
    if (on_tree) {
      AcBranch br;
      br.id = line.id;
      br.from_bus = line.bus_a;
      br.to_bus = line.bus_b;
      br.series_impedance_pu = line.series_impedance_pu;
      br.shunt_from_pu = line.shunt_a_pu;
      br.shunt_to_pu = line.shunt_b_pu;
      br.ratio_from = line.ratio_a;
      br.ratio_to = line.ratio_b;
      br.rating_mva = line.rating_mva;
      br.drop_min = line.drop_min;
      br.drop_max = line.drop_max;
      br.angle_min_rad = line.angle_min_rad;
      br.angle_max_rad = line.angle_max_rad;
      hybrid.ac_branches.push_back(br);
    } else {
      auto directed = [&](int a, int b) {
        for (const auto& [oa, ob] : tmpl.directional_overrides)
          if (oa == a && ob == b) return true;
        return false;
      };
      const double cap = line.rating_mva;  // MW capacity equals the MVA rating
      if (directed(line.bus_a, line.bus_b)) {
        hybrid.dc_branches.push_back({next_dc_id++, line.bus_a, line.bus_b,
                                      tmpl.loss_factor, 0.0, cap});
      } else if (directed(line.bus_b, line.bus_a)) {
        hybrid.dc_branches.push_back({next_dc_id++, line.bus_b, line.bus_a,
                                      tmpl.loss_factor, 0.0, cap});
      } else {
        hybrid.dc_branches.push_back({next_dc_id++, line.bus_a, line.bus_b,
                                      tmpl.loss_factor, 0.0, cap});
        hybrid.dc_branches.push_back({next_dc_id++, line.bus_b, line.bus_a,
                                      tmpl.loss_factor, 0.0, cap});
      }
    }
  }
  return hybrid;
}

/// Solves the OPF for every spanning-tree upgrade option and ranks the
/// candidates by generation cost (failed solves last). Solves run
/// concurrently; the ranking is deterministic.
inline std::vector<UpgradeCandidate> plan_upgrade(const AcOnlyGrid& grid,
                                                  const DcConversionTemplate& tmpl,
                                                  const ObjectiveWeights& weights,
                                                  const OpfSettings& settings = {}) {
  const std::vector<std::vector<int>> trees = enumerate_spanning_trees(grid);
  std::vector<UpgradeCandidate> candidates(trees.size());
  for (std::size_t i = 0; i < trees.size(); ++i) {
    candidates[i].tree_edges = trees[i];
    for (const AcLine& line : grid.lines)
      if (std::find(trees[i].begin(), trees[i].end(), line.id) == trees[i].end())
        candidates[i].converted_edges.push_back(line.id);
    std::sort(candidates[i].converted_edges.begin(), candidates[i].converted_edges.end());
  }

  std::vector<std::future<std::optional<UpgradeOutcome>>> jobs;
  jobs.reserve(candidates.size());
  for (const UpgradeCandidate& cand : candidates) {
    jobs.push_back(std::async(std::launch::async, [&grid, &tmpl, &weights, &settings,
                                                   tree = cand.tree_edges] {
      std::optional<UpgradeOutcome> outcome;
      try {
        const Grid hybrid = hybrid_grid_from_tree(grid, tree, tmpl);
        const OpfResult res = solve_opf(hybrid, weights, settings);
        outcome = UpgradeOutcome{res.sdp.objective, res.state.kappa, res.sdp.status};
      } catch (const Error&) {
        outcome = std::nullopt;
      }
      return outcome;
    }));
  }
  for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].result = jobs[i].get();

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const UpgradeCandidate& a, const UpgradeCandidate& b) {
                     const bool a_ok = a.result && a.result->status == SolveStatus::kOptimal;
                     const bool b_ok = b.result && b.result->status == SolveStatus::kOptimal;
                     if (a_ok != b_ok) return a_ok;
                     if (!a_ok) return false;
                     if (a.result->cost != b.result->cost) return a.result->cost < b.result->cost;
                     return a.converted_edges < b.converted_edges;
                   });
  return candidates;
}

}  // namespace hybridopf
