#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "hybridopf/grid.hpp"
#include "hybridopf/qcqp.hpp"
#include "hybridopf/sdp.hpp"
#include "hybridopf/types.hpp"

namespace hybridopf {

/// Rank-1 state recovered from a relaxation optimizer. kappa = |sigma2/sigma1|
/// measures how far the optimizer is from rank 1; zero means exact recovery.
struct RecoveredState {
  CVector v;  // bus voltage phasors, p.u.
  RVector p;  // DC flows, p.u.
  double kappa = 0.0;
  double objective = std::numeric_limits<double>::quiet_NaN();  // $/h
  bool exact = false;
};

/// Recovers v = sqrt(sigma1) * u1 from the dominant eigenpair of V and pins
/// the phase so that arg(v[ref_index]) equals ref_angle. No tie-breaking is
/// attempted for sigma1 ~ sigma2; kappa simply reports the degeneracy.
inline RecoveredState recover_state(const CMatrix& V, const RVector& p, int ref_index,
                                    double ref_angle, double kappa_threshold = 1e-6,
                                    const Objective* objective = nullptr) {
  const int n = static_cast<int>(V.rows());
  if (ref_index < 0 || ref_index >= n) throw Error("recover_state: reference index out of range");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (V + V.adjoint()));
  const RVector& eigs = es.eigenvalues();  // ascending
  const double sigma1 = eigs(n - 1);
  const double sigma2 = n > 1 ? std::abs(eigs(n - 2)) : 0.0;
  if (!(sigma1 > 0.0)) throw Error("recover_state: zero state (all eigenvalues nonpositive)");

  RecoveredState state;
  state.kappa = sigma2 / sigma1;
  state.exact = state.kappa <= kappa_threshold;
  state.v = std::sqrt(sigma1) * es.eigenvectors().col(n - 1);
  const Complex ref = state.v(ref_index);
  const double shift = ref_angle - (ref == Complex(0.0, 0.0) ? 0.0 : std::arg(ref));
  state.v *= std::exp(Complex(0.0, shift));
  state.p = p;
  if (objective) state.objective = objective_value(*objective, state.v, state.p);
  return state;
}

struct BusOperating {
  int id = 0;
  double p_gen_mw = 0.0;
  double q_gen_mvar = 0.0;
  double v_mag_pu = 0.0;
  double v_arg_deg = 0.0;
};

struct AcBranchOperating {
  int id = 0;
  double s_from_mva = 0.0;
  double pf_from = 1.0;
  double s_to_mva = 0.0;
  double pf_to = 1.0;
  double drop_pct = 0.0;
  double angle_deg = 0.0;
  double loss_mw = 0.0;
};

struct DcBranchOperating {
  int id = 0;
  double p_mw = 0.0;
  double loss_mw = 0.0;
};

struct OperatingReport {
  std::vector<BusOperating> buses;
  std::vector<AcBranchOperating> ac_branches;
  std::vector<DcBranchOperating> dc_branches;
  double cost_per_h = 0.0;       // sum of gamma_n * P_gen_n
  double total_gen_mw = 0.0;
  double total_load_mw = 0.0;
  double ac_loss_mw = 0.0;
  double dc_loss_mw = 0.0;
  double shunt_loss_mw = 0.0;
  double total_loss_mw = 0.0;
};

/// Evaluates every reported physical quantity of a state (v, p): injections,
/// branch flows with power factors, voltage drops and angle differences.
/// All results depend on v only through magnitudes and angle differences, so
/// the report is invariant under a global phase rotation.
inline OperatingReport evaluate_state(const Grid& grid, const CVector& v, const RVector& p) {
  const int n = grid.n_bus();
  const int e = grid.n_ac();
  const int nd = grid.n_dc();
  if (v.size() != n || p.size() != nd) throw Error("evaluate_state: dimension mismatch");
  const AdmittanceMatrices adm = build_admittance_matrices(grid);
  const double base = grid.base_mva;

  OperatingReport rep;
  const CVector i_inj = adm.y_bus * v;
  const CVector i_from = e > 0 ? CVector(adm.y_from * v) : CVector();
  const CVector i_to = e > 0 ? CVector(adm.y_to * v) : CVector();

  for (int i = 0; i < n; ++i) {
    const Bus& bus = grid.buses[i];
    const Complex s_ac = v(i) * std::conj(i_inj(i));  // injection into the AC subgrid
    double p_dc = 0.0;
    for (int l = 0; l < nd; ++l) {
      if (grid.dc_branches[l].from_bus == bus.id) p_dc += p(l);
      if (grid.dc_branches[l].to_bus == bus.id)
        p_dc -= (1.0 - grid.dc_branches[l].loss_factor) * p(l);
    }
    BusOperating b;
    b.id = bus.id;
    b.p_gen_mw = (s_ac.real() + p_dc) * base + bus.load_p_mw;
    b.q_gen_mvar = s_ac.imag() * base + bus.load_q_mvar;
    b.v_mag_pu = std::abs(v(i));
    b.v_arg_deg = rad_to_deg(std::arg(v(i)));
    rep.buses.push_back(b);
    rep.cost_per_h += bus.cost_per_mwh() * b.p_gen_mw;
    rep.total_gen_mw += b.p_gen_mw;
    rep.total_load_mw += bus.load_p_mw;
    rep.shunt_loss_mw += bus.shunt_pu.real() * std::norm(v(i)) * base;
  }

  for (int k = 0; k < e; ++k) {
    const AcBranch& br = grid.ac_branches[k];
    const int f = grid.bus_index(br.from_bus);
    const int t = grid.bus_index(br.to_bus);
    const Complex s_from = std::conj(i_from(k)) * v(f);
    const Complex s_to = std::conj(i_to(k)) * v(t);
    AcBranchOperating a;
    a.id = br.id;
    a.s_from_mva = std::abs(s_from) * base;
    a.s_to_mva = std::abs(s_to) * base;
    a.pf_from = a.s_from_mva > 0.0 ? s_from.real() / std::abs(s_from) : 1.0;
    a.pf_to = a.s_to_mva > 0.0 ? s_to.real() / std::abs(s_to) : 1.0;
    a.drop_pct = (std::abs(v(t)) / std::abs(v(f)) - 1.0) * 100.0;
    a.angle_deg = rad_to_deg(std::arg(std::conj(v(f)) * v(t)));
    a.loss_mw = (s_from.real() + s_to.real()) * base;
    rep.ac_loss_mw += a.loss_mw;
    rep.ac_branches.push_back(a);
  }

  for (int l = 0; l < nd; ++l) {
    DcBranchOperating dcb;
    dcb.id = grid.dc_branches[l].id;
    dcb.p_mw = p(l) * base;
    dcb.loss_mw = grid.dc_branches[l].loss_factor * p(l) * base;
    rep.dc_loss_mw += dcb.loss_mw;
    rep.dc_branches.push_back(dcb);
  }
  rep.total_loss_mw = rep.ac_loss_mw + rep.dc_loss_mw + rep.shunt_loss_mw;
  return rep;
}

struct OpfSettings {
  SdpSettings sdp;
  double kappa_threshold = 1e-6;
};

struct OpfResult {
  SdpSolution sdp;
  RecoveredState state;
};

class GridValidationError : public Error {
 public:
  explicit GridValidationError(ValidationReport rep)
      : Error("grid validation failed:\n" + rep.to_string()), report(std::move(rep)) {}
  ValidationReport report;
};

/// End-to-end pipeline: validate, build the canonical QCQP, solve the
/// semidefinite relaxation and recover the rank-1 state.
inline OpfResult solve_opf(const Grid& grid, const ObjectiveWeights& weights,
                           const OpfSettings& settings = {}) {
  ValidationReport report = validate_topology(grid);
  if (!report.admissible()) throw GridValidationError(std::move(report));

  const CanonicalQcqp qcqp = build_qcqp(grid, weights);
  OpfResult result;
  result.sdp = solve(embed(qcqp), settings.sdp);
  result.state = recover_state(result.sdp.V, result.sdp.p, grid.bus_index(grid.ref_bus),
                               grid.ref_angle_rad, settings.kappa_threshold,
                               &qcqp.objective);
  return result;
}

}  // namespace hybridopf
