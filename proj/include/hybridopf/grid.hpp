#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "hybridopf/types.hpp"

namespace hybridopf {

/// Generation capability attached to a bus. Cost is linear in $/MWh.
struct GenData {
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
  double q_min_mvar = 0.0;
  double q_max_mvar = 0.0;
  double cost_per_mwh = 0.0;
};

struct Bus {
  int id = 0;  // external identifier, unique within the grid
  double v_min_pu = 0.9;
  double v_max_pu = 1.1;
  Complex shunt_pu{0.0, 0.0};
  double load_p_mw = 0.0;
  double load_q_mvar = 0.0;
  std::optional<GenData> gen;

  /// Cost weight used by the objective; buses without generation bid zero.
  double cost_per_mwh() const { return gen ? gen->cost_per_mwh : 0.0; }
};

/// AC branch with the usual two-port model: series admittance, one shunt
/// admittance and one complex voltage ratio per end. The directionality is
/// a bookkeeping choice and unrelated to power flow direction.
struct AcBranch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  Complex series_impedance_pu{0.0, 0.0};
  Complex shunt_from_pu{0.0, 0.0};
  Complex shunt_to_pu{0.0, 0.0};
  Complex ratio_from{1.0, 0.0};
  Complex ratio_to{1.0, 0.0};
  double rating_mva = 0.0;
  double drop_min = -0.05;  // lower bound on |V_to|/|V_from| - 1
  double drop_max = 0.05;
  double angle_min_rad = deg_to_rad(-50.0);
  double angle_max_rad = deg_to_rad(50.0);

  /// Total voltage ratio conj(ratio_from) * ratio_to.
  Complex total_ratio() const { return std::conj(ratio_from) * ratio_to; }
};

/// Directed lossy power pipe: transfers p in [p_min, p_max] from the source
/// terminal, delivering (1 - loss_factor) * p at the destination.
struct DcBranch {
  int id = 0;
  int from_bus = 0;
  int to_bus = 0;
  double loss_factor = 0.0;
  double p_min_mw = 0.0;
  double p_max_mw = 0.0;
};

struct Grid {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<AcBranch> ac_branches;
  std::vector<DcBranch> dc_branches;
  int ref_bus = 1;
  double ref_angle_rad = 0.0;

  int n_bus() const { return static_cast<int>(buses.size()); }
  int n_ac() const { return static_cast<int>(ac_branches.size()); }
  int n_dc() const { return static_cast<int>(dc_branches.size()); }

  /// 0-based position of the bus with the given external id.
  int bus_index(int id) const {
    for (int i = 0; i < n_bus(); ++i)
      if (buses[i].id == id) return i;
    throw Error("unknown bus id " + std::to_string(id));
  }

  bool has_bus(int id) const {
    return std::any_of(buses.begin(), buses.end(),
                       [id](const Bus& b) { return b.id == id; });
  }
};

struct Violation {
  std::string code;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool admissible() const { return violations.empty(); }

  void add(std::string code, std::string message) {
    violations.push_back({std::move(code), std::move(message)});
  }

  bool has(const std::string& code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.code == code; });
  }

  std::string to_string() const {
    if (violations.empty()) return "grid admissible\n";
    std::ostringstream os;
    for (const auto& v : violations) os << "[" << v.code << "] " << v.message << "\n";
    return os.str();
  }
};

namespace detail {

/// Union-find over 0-based vertex positions.
class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(n) {
    for (int i = 0; i < n; ++i) parent_[i] = i;
  }
  int find(int a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  /// Returns false if a and b were already connected.
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[a] = b;
    return true;
  }

 private:
  std::vector<int> parent_;
};

}  // namespace detail

/// Coefficients of the branch admittance rows: the current at each end is
/// alpha * (own-end voltage) + beta * (far-end voltage).
struct BranchCoefficients {
  Complex alpha_from;
  Complex beta_from;
  Complex alpha_to;
  Complex beta_to;
};

inline BranchCoefficients branch_coefficients(const AcBranch& branch) {
  if (branch.series_impedance_pu == Complex(0.0, 0.0))
    throw Error("degenerate branch " + std::to_string(branch.id) +
                ": zero series impedance");
  const Complex y_series = 1.0 / branch.series_impedance_pu;
  const Complex rho = branch.total_ratio();
  BranchCoefficients c;
  c.alpha_from = std::norm(branch.ratio_from) * (y_series + branch.shunt_from_pu);
  c.beta_from = -rho * y_series;
  c.alpha_to = std::norm(branch.ratio_to) * (y_series + branch.shunt_to_pu);
  c.beta_to = -std::conj(rho) * y_series;
  return c;
}

/// Checks the architecture requirements and the electrical conditions that
/// the exactness guarantee rests on. Violations are collected, not thrown.
inline ValidationReport validate_topology(const Grid& grid) {
  ValidationReport report;
  const int n = grid.n_bus();

  std::set<int> ids;
  for (const Bus& bus : grid.buses) {
    if (!ids.insert(bus.id).second)
      report.add("duplicate-bus", "bus id " + std::to_string(bus.id) + " appears twice");
    if (!(bus.v_min_pu >= 0.0 && bus.v_min_pu < bus.v_max_pu))
      report.add("voltage-band", "bus " + std::to_string(bus.id) +
                                     ": voltage bounds must satisfy 0 <= v_min < v_max");
    if (bus.gen) {
      if (bus.gen->p_min_mw > bus.gen->p_max_mw || bus.gen->q_min_mvar > bus.gen->q_max_mvar)
        report.add("gen-range", "bus " + std::to_string(bus.id) +
                                    ": generator ranges must be proper intervals");
    }
  }
  if (grid.buses.empty()) {
    report.add("empty", "grid has no buses");
    return report;
  }
  if (ids.count(grid.ref_bus) == 0)
    report.add("ref-bus", "reference bus " + std::to_string(grid.ref_bus) + " does not exist");

  auto known = [&](int id) { return ids.count(id) > 0; };

  // Architecture requirements on the AC subgraph.
  std::set<std::pair<int, int>> undirected_edges;
  detail::DisjointSet components(n);
  bool acyclic = true;
  for (const AcBranch& br : grid.ac_branches) {
    const std::string tag = "AC branch " + std::to_string(br.id);
    if (!known(br.from_bus) || !known(br.to_bus)) {
      report.add("dangling-bus", tag + " references an unknown bus");
      continue;
    }
    if (br.from_bus == br.to_bus) {
      report.add("self-loop", tag + " is a self-loop at bus " + std::to_string(br.from_bus));
      continue;
    }
    auto key = std::minmax(br.from_bus, br.to_bus);
    if (!undirected_edges.insert({key.first, key.second}).second)
      report.add("parallel-ac", "parallel AC branches between bus " +
                                    std::to_string(key.first) + " and " +
                                    std::to_string(key.second));
    else if (!components.unite(grid.bus_index(br.from_bus), grid.bus_index(br.to_bus)))
      acyclic = false;
  }
  if (!acyclic) report.add("ac-cyclic", "AC subgraph is cyclic; it must be a tree");
  int roots = 0;
  for (int i = 0; i < n; ++i)
    if (components.find(i) == i) ++roots;
  if (roots > 1) report.add("ac-disconnected", "AC subgraph does not connect all buses");
  if (grid.n_ac() != n - 1)
    report.add("ac-count", "tree requires |E| = |V| - 1, got " +
                               std::to_string(grid.n_ac()) + " AC branches for " +
                               std::to_string(n) + " buses");

  // Electrical conditions per AC branch.
  for (const AcBranch& br : grid.ac_branches) {
    const std::string tag = "AC branch " + std::to_string(br.id);
    if (br.series_impedance_pu == Complex(0.0, 0.0)) {
      report.add("degenerate-branch", tag + ": zero series impedance");
      continue;
    }
    const Complex y_series = 1.0 / br.series_impedance_pu;
    if (!(y_series.real() > 0.0))
      report.add("series-conductance", tag + ": Re(1/z) must be strictly positive");
    if (y_series.imag() > 0.0)
      report.add("series-capacitive", tag + ": Im(1/z) must be nonpositive (inductive)");
    if (br.shunt_from_pu.real() < 0.0 || br.shunt_to_pu.real() < 0.0)
      report.add("active-shunt", tag + ": shunt conductances must be nonnegative");
    const double y_abs = std::abs(y_series);
    if (std::abs(br.shunt_from_pu) > y_abs || std::abs(br.shunt_to_pu) > y_abs)
      report.add("insulation", tag + ": |shunt| must not exceed |1/z| on either end");
    if (br.ratio_from == Complex(0.0, 0.0) || br.ratio_to == Complex(0.0, 0.0)) {
      report.add("zero-ratio", tag + ": voltage ratios must be nonzero");
      continue;
    }
    const double rho_arg = std::arg(br.total_ratio());
    if (std::abs(rho_arg) > kPi / 2.0)
      report.add("phase-shift", tag + ": total phase shift exceeds 90 degrees");
    if (!(br.angle_min_rad > -kPi / 2.0 && br.angle_max_rad < kPi / 2.0 &&
          br.angle_min_rad <= -rho_arg && -rho_arg <= br.angle_max_rad))
      report.add("angle-bounds", tag + ": need -pi/2 < angle_min <= -arg(rho) <= angle_max < pi/2");
    if (!(br.drop_min >= -1.0 && br.drop_min < br.drop_max))
      report.add("drop-bounds", tag + ": need -1 <= drop_min < drop_max");
    if (!(br.rating_mva > 0.0))
      report.add("rating", tag + ": rating must be strictly positive");
  }

  for (const DcBranch& dc : grid.dc_branches) {
    const std::string tag = "DC branch " + std::to_string(dc.id);
    if (!known(dc.from_bus) || !known(dc.to_bus)) {
      report.add("dangling-bus", tag + " references an unknown bus");
      continue;
    }
    if (dc.from_bus == dc.to_bus)
      report.add("self-loop", tag + " is a self-loop at bus " + std::to_string(dc.from_bus));
    if (!(dc.loss_factor >= 0.0 && dc.loss_factor < 1.0))
      report.add("loss-factor", tag + ": loss factor must be in [0, 1)");
    if (!(dc.p_min_mw >= 0.0 && dc.p_min_mw <= dc.p_max_mw))
      report.add("dc-bounds", tag + ": need 0 <= p_min <= p_max");
  }

  return report;
}

/// Branch and bus admittance matrices. Row k of y_from / y_to carries the
/// source / destination current of AC branch k as a linear map of the bus
/// voltage vector; y_bus maps voltages to injection currents.
struct AdmittanceMatrices {
  CMatrix y_from;  // E x N
  CMatrix y_to;    // E x N
  CMatrix y_bus;   // N x N
};

inline AdmittanceMatrices build_admittance_matrices(const Grid& grid) {
  const int n = grid.n_bus();
  const int e = grid.n_ac();
  AdmittanceMatrices m;
  m.y_from = CMatrix::Zero(e, n);
  m.y_to = CMatrix::Zero(e, n);
  m.y_bus = CMatrix::Zero(n, n);

  for (int i = 0; i < n; ++i) m.y_bus(i, i) = grid.buses[i].shunt_pu;

  for (int k = 0; k < e; ++k) {
    const AcBranch& br = grid.ac_branches[k];
    const BranchCoefficients c = branch_coefficients(br);
    const int f = grid.bus_index(br.from_bus);
    const int t = grid.bus_index(br.to_bus);
    m.y_from(k, f) = c.alpha_from;
    m.y_from(k, t) = c.beta_from;
    m.y_to(k, t) = c.alpha_to;
    m.y_to(k, f) = c.beta_to;
    m.y_bus(f, f) += c.alpha_from;
    m.y_bus(t, t) += c.alpha_to;
    m.y_bus(f, t) += c.beta_from;
    m.y_bus(t, f) += c.beta_to;
  }
  return m;
}

}  // namespace hybridopf
