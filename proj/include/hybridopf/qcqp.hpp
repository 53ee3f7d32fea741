#pragma once

#include <string>
#include <vector>

#include "hybridopf/grid.hpp"
#include "hybridopf/types.hpp"

namespace hybridopf {

/// Dense complex Hermitian matrix. Construction symmetrizes the input as
/// (A + A^H)/2, so the stored matrix always equals its conjugate transpose
/// up to rounding.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(const CMatrix& a) : m_(0.5 * (a + a.adjoint())) {}

  const CMatrix& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }

  static HermitianMatrix zero(int n) { return HermitianMatrix(CMatrix::Zero(n, n)); }

  /// Largest entry-wise deviation of the input from Hermitian symmetry.
  static double asymmetry(const CMatrix& a) {
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
  }

 private:
  CMatrix m_;
};

enum class ConstraintTag {
  kVoltageUb,
  kVoltageLb,
  kPInjection,
  kQInjection,
  kCurrentFrom,
  kCurrentTo,
  kDropLb,
  kDropUb,
  kAngleCos,
  kAngleLb,
  kAngleUb,
  kDcUb,
  kDcLb,
};

inline const char* tag_name(ConstraintTag tag) {
  switch (tag) {
    case ConstraintTag::kVoltageUb: return "voltage-ub";
    case ConstraintTag::kVoltageLb: return "voltage-lb";
    case ConstraintTag::kPInjection: return "p-inj";
    case ConstraintTag::kQInjection: return "q-inj";
    case ConstraintTag::kCurrentFrom: return "current-from";
    case ConstraintTag::kCurrentTo: return "current-to";
    case ConstraintTag::kDropLb: return "drop-lb";
    case ConstraintTag::kDropUb: return "drop-ub";
    case ConstraintTag::kAngleCos: return "angle-cos";
    case ConstraintTag::kAngleLb: return "angle-lb";
    case ConstraintTag::kAngleUb: return "angle-ub";
    case ConstraintTag::kDcUb: return "dc-ub";
    case ConstraintTag::kDcLb: return "dc-lb";
  }
  return "?";
}

/// One scalar constraint v^H C v + c^T p <= b. `subject` is the external id
/// of the bus, AC branch, or DC branch the constraint belongs to.
struct Constraint {
  HermitianMatrix C;
  RVector c;
  double b = 0.0;
  ConstraintTag tag = ConstraintTag::kVoltageUb;
  int subject = 0;
};

/// Objective v^H C0 v + c0^T p + constant, in $/h for per-unit (v, p).
struct Objective {
  HermitianMatrix C0;
  RVector c0;
  double constant = 0.0;
};

struct ObjectiveWeights {
  double w = 1.0;                    // dimensionless weight on generation cost
  double gamma_loss_per_mwh = 1e-6;  // weight on electrical loss, $/MWh
};

struct CanonicalQcqp {
  int n_bus = 0;
  int n_dc = 0;
  Objective objective;
  std::vector<Constraint> constraints;

  int n_constraints() const { return static_cast<int>(constraints.size()); }
};

struct CurrentBounds {
  double i_from_max_pu = 0.0;
  double i_to_max_pu = 0.0;
};

/// Conservative per-end current bounds derived from the MVA rating and the
/// voltage band: I_max = S_rating / V_max at the respective end.
inline CurrentBounds substitute_current_bounds(const AcBranch& branch, const Bus& from_bus,
                                               const Bus& to_bus, double base_mva = 100.0) {
  if (!(branch.rating_mva > 0.0))
    throw Error("AC branch " + std::to_string(branch.id) +
                ": rating must be strictly positive to derive current bounds");
  if (!(from_bus.v_max_pu > 0.0 && to_bus.v_max_pu > 0.0))
    throw Error("AC branch " + std::to_string(branch.id) +
                ": endpoint voltage upper bounds must be positive");
  const double s_pu = branch.rating_mva / base_mva;
  return {s_pu / from_bus.v_max_pu, s_pu / to_bus.v_max_pu};
}

namespace detail {

/// h_n maps DC flows to the active power drawn from bus n: +1 per outgoing
/// branch, -(1 - loss factor) per incoming branch.
inline RVector dc_incidence(const Grid& grid, int bus_pos) {
  RVector h = RVector::Zero(grid.n_dc());
  const int id = grid.buses[bus_pos].id;
  for (int l = 0; l < grid.n_dc(); ++l) {
    const DcBranch& dc = grid.dc_branches[l];
    if (dc.from_bus == id) h(l) += 1.0;
    if (dc.to_bus == id) h(l) -= 1.0 - dc.loss_factor;
  }
  return h;
}

}  // namespace detail

/// Emits the full constraint set of the OPF problem in deterministic order:
/// per bus (voltage ub/lb, P injection ub, Q injection ub), per AC branch
/// (current from/to, drop lb/ub, angle cos/lb/ub), then the DC flow bounds.
/// Lower bounds on power injection are intentionally absent; adding them
/// would break the half-space structure the exactness result relies on.
inline std::vector<Constraint> build_constraints(const Grid& grid) {
  const int n = grid.n_bus();
  const int e = grid.n_ac();
  const int d = grid.n_dc();
  const AdmittanceMatrices adm = build_admittance_matrices(grid);
  const double base = grid.base_mva;

  std::vector<Constraint> out;
  out.reserve(4 * n + 7 * e + 2 * d);
  const RVector zero_c = RVector::Zero(d);

  for (int i = 0; i < n; ++i) {
    const Bus& bus = grid.buses[i];
    CMatrix m_n = CMatrix::Zero(n, n);
    m_n(i, i) = 1.0;

    out.push_back({HermitianMatrix(m_n), zero_c, bus.v_max_pu * bus.v_max_pu,
                   ConstraintTag::kVoltageUb, bus.id});
    out.push_back({HermitianMatrix(-m_n), zero_c, -bus.v_min_pu * bus.v_min_pu,
                   ConstraintTag::kVoltageLb, bus.id});

    // S_n = Y^H e_n e_n^T; P_n and Q_n are its Hermitian and skew parts.
    CMatrix s_n = CMatrix::Zero(n, n);
    s_n.col(i) = adm.y_bus.row(i).adjoint();
    const CMatrix p_n = 0.5 * (s_n + s_n.adjoint());
    const CMatrix q_n = (s_n - s_n.adjoint()) / Complex(0.0, 2.0);

    const double p_gen_max = bus.gen ? bus.gen->p_max_mw : 0.0;
    const double q_gen_max = bus.gen ? bus.gen->q_max_mvar : 0.0;
    const double p_ub = (p_gen_max - bus.load_p_mw) / base;
    const double q_ub = (q_gen_max - bus.load_q_mvar) / base;

    out.push_back({HermitianMatrix(p_n), detail::dc_incidence(grid, i), p_ub,
                   ConstraintTag::kPInjection, bus.id});
    out.push_back({HermitianMatrix(q_n), zero_c, q_ub, ConstraintTag::kQInjection, bus.id});
  }

  for (int k = 0; k < e; ++k) {
    const AcBranch& br = grid.ac_branches[k];
    const int f = grid.bus_index(br.from_bus);
    const int t = grid.bus_index(br.to_bus);
    const CurrentBounds ib = substitute_current_bounds(br, grid.buses[f], grid.buses[t], base);

    const CMatrix i_from = adm.y_from.row(k).adjoint() * adm.y_from.row(k);
    const CMatrix i_to = adm.y_to.row(k).adjoint() * adm.y_to.row(k);
    out.push_back({HermitianMatrix(i_from), zero_c, ib.i_from_max_pu * ib.i_from_max_pu,
                   ConstraintTag::kCurrentFrom, br.id});
    out.push_back({HermitianMatrix(i_to), zero_c, ib.i_to_max_pu * ib.i_to_max_pu,
                   ConstraintTag::kCurrentTo, br.id});

    CMatrix drop_lb = CMatrix::Zero(n, n);
    drop_lb(f, f) = (1.0 + br.drop_min) * (1.0 + br.drop_min);
    drop_lb(t, t) = -1.0;
    CMatrix drop_ub = CMatrix::Zero(n, n);
    drop_ub(f, f) = -(1.0 + br.drop_max) * (1.0 + br.drop_max);
    drop_ub(t, t) = 1.0;
    out.push_back({HermitianMatrix(drop_lb), zero_c, 0.0, ConstraintTag::kDropLb, br.id});
    out.push_back({HermitianMatrix(drop_ub), zero_c, 0.0, ConstraintTag::kDropUb, br.id});

    // M_k = e_f e_t^T; the three angle constraints bound arg(V_f* V_t).
    CMatrix m_k = CMatrix::Zero(n, n);
    m_k(f, t) = 1.0;
    const CMatrix a_cos = -m_k - m_k.adjoint();
    const Complex tl(std::tan(br.angle_min_rad), 0.0);
    const Complex tu(std::tan(br.angle_max_rad), 0.0);
    const Complex iu(0.0, 1.0);
    const CMatrix a_lb = (tl + iu) * m_k + (tl - iu) * m_k.adjoint();
    const CMatrix a_ub = -(tu + iu) * m_k - (tu - iu) * m_k.adjoint();
    out.push_back({HermitianMatrix(a_cos), zero_c, 0.0, ConstraintTag::kAngleCos, br.id});
    out.push_back({HermitianMatrix(a_lb), zero_c, 0.0, ConstraintTag::kAngleLb, br.id});
    out.push_back({HermitianMatrix(a_ub), zero_c, 0.0, ConstraintTag::kAngleUb, br.id});
  }

  for (int l = 0; l < d; ++l) {
    RVector c = RVector::Zero(d);
    c(l) = 1.0;
    out.push_back({HermitianMatrix::zero(n), c, grid.dc_branches[l].p_max_mw / base,
                   ConstraintTag::kDcUb, grid.dc_branches[l].id});
  }
  for (int l = 0; l < d; ++l) {
    RVector c = RVector::Zero(d);
    c(l) = -1.0;
    out.push_back({HermitianMatrix::zero(n), c, -grid.dc_branches[l].p_min_mw / base,
                   ConstraintTag::kDcLb, grid.dc_branches[l].id});
  }

  return out;
}

/// Weighted objective w * (generation cost) + gamma_loss * (electrical loss).
/// Cost coefficients are folded with the MVA base so that evaluating the
/// objective on per-unit (v, p) yields $/h directly.
inline Objective build_objective(const Grid& grid, const ObjectiveWeights& weights) {
  if (!(weights.gamma_loss_per_mwh > 0.0))
    throw Error("loss weight must be strictly positive");
  const int n = grid.n_bus();
  const int e = grid.n_ac();
  const int d = grid.n_dc();
  const AdmittanceMatrices adm = build_admittance_matrices(grid);
  const double base = grid.base_mva;

  CMatrix c_cost = CMatrix::Zero(n, n);
  RVector c_cost_dc = RVector::Zero(d);
  double gamma_load = 0.0;
  for (int i = 0; i < n; ++i) {
    const Bus& bus = grid.buses[i];
    const double gamma = bus.cost_per_mwh() * base;  // $/h per p.u.
    if (gamma == 0.0) continue;
    CMatrix s_n = CMatrix::Zero(n, n);
    s_n.col(i) = adm.y_bus.row(i).adjoint();
    c_cost += gamma * 0.5 * (s_n + s_n.adjoint());
    c_cost_dc += gamma * detail::dc_incidence(grid, i);
    gamma_load += bus.cost_per_mwh() * bus.load_p_mw;
  }

  CMatrix c_loss = CMatrix::Zero(n, n);
  for (int k = 0; k < e; ++k) {
    const AcBranch& br = grid.ac_branches[k];
    const int f = grid.bus_index(br.from_bus);
    const int t = grid.bus_index(br.to_bus);
    CMatrix s_k = CMatrix::Zero(n, n);
    s_k.col(f) += adm.y_from.row(k).adjoint();
    s_k.col(t) += adm.y_to.row(k).adjoint();
    c_loss += 0.5 * (s_k + s_k.adjoint());
  }
  for (int i = 0; i < n; ++i) c_loss(i, i) += grid.buses[i].shunt_pu.real();
  RVector c_loss_dc = RVector::Zero(d);
  for (int l = 0; l < d; ++l) c_loss_dc(l) = grid.dc_branches[l].loss_factor;

  const double gamma_loss = weights.gamma_loss_per_mwh * base;  // $/h per p.u.
  Objective obj;
  obj.C0 = HermitianMatrix(weights.w * c_cost + gamma_loss * c_loss);
  obj.c0 = weights.w * c_cost_dc + gamma_loss * c_loss_dc;
  obj.constant = weights.w * gamma_load;
  return obj;
}

inline CanonicalQcqp build_qcqp(const Grid& grid, const ObjectiveWeights& weights) {
  CanonicalQcqp q;
  q.n_bus = grid.n_bus();
  q.n_dc = grid.n_dc();
  q.objective = build_objective(grid, weights);
  q.constraints = build_constraints(grid);
  return q;
}

/// Evaluates v^H C v + c^T p - b for one constraint (positive = violated).
inline double constraint_residual(const Constraint& con, const CVector& v, const RVector& p) {
  const Complex quad = (v.adjoint() * con.C.mat() * v)(0, 0);
  double val = quad.real();
  if (con.c.size() > 0) val += con.c.dot(p);
  return val - con.b;
}

/// Objective value v^H C0 v + c0^T p + constant.
inline double objective_value(const Objective& obj, const CVector& v, const RVector& p) {
  const Complex quad = (v.adjoint() * obj.C0.mat() * v)(0, 0);
  double val = quad.real() + obj.constant;
  if (obj.c0.size() > 0) val += obj.c0.dot(p);
  return val;
}

}  // namespace hybridopf
