#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "hybridopf/qcqp.hpp"
#include "hybridopf/types.hpp"

namespace hybridopf {

/// Real symmetric embedding of a complex Hermitian matrix,
/// [[Re A, -Im A], [Im A, Re A]]. Throws if the input is not Hermitian.
inline RMatrix embed_hermitian(const CMatrix& a) {
  const double scale = a.size() > 0 ? a.cwiseAbs().maxCoeff() : 0.0;
  if (a.size() > 0 && HermitianMatrix::asymmetry(a) > 1e-12 * (1.0 + scale))
    throw Error("embed: input matrix is not Hermitian");
  const auto n = a.rows();
  RMatrix e(2 * n, 2 * n);
  e.topLeftCorner(n, n) = a.real();
  e.topRightCorner(n, n) = -a.imag();
  e.bottomLeftCorner(n, n) = a.imag();
  e.bottomRightCorner(n, n) = a.real();
  return 0.5 * (e + e.transpose());
}

/// Inverse of the embedding: averages the redundant blocks, so arbitrary
/// symmetric matrices project onto the nearest embedded Hermitian matrix.
inline CMatrix extract_hermitian(const RMatrix& x, int n) {
  const RMatrix re = 0.5 * (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n));
  const RMatrix im = 0.5 * (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n));
  CMatrix a(n, n);
  a.real() = re;
  a.imag() = im;
  return 0.5 * (a + a.adjoint());
}

/// Relaxed OPF in real symmetric form. Constraint matrices are scaled so
/// that ||C_m||_F + ||c_m|| + |b_m| is about one, and carry the extra 1/2
/// that makes <a_m, X> equal trace(C_m V) for X = embed(V).
struct SdpProblem {
  int n_complex = 0;     // N
  int dim = 0;           // 2N
  int n_constraints = 0; // M
  int n_free = 0;        // D
  std::vector<RMatrix> a;
  std::vector<bool> a_is_zero;
  RMatrix coeff;  // M x D
  RVector b;
  RMatrix a0;
  RVector c0;
  double obj_scale = 1.0;
  RVector con_scale;
  double constant = 0.0;
  double x_init_scale = 1.0;
  RVector p_init;
  std::vector<int> re_index;  // complex row i -> real row
  std::vector<int> im_index;  // complex row i -> real row of imaginary part
};

inline SdpProblem embed(const CanonicalQcqp& qcqp) {
  SdpProblem prob;
  prob.n_complex = qcqp.n_bus;
  prob.dim = 2 * qcqp.n_bus;
  prob.n_constraints = qcqp.n_constraints();
  prob.n_free = qcqp.n_dc;
  prob.constant = qcqp.objective.constant;
  prob.re_index.resize(qcqp.n_bus);
  prob.im_index.resize(qcqp.n_bus);
  for (int i = 0; i < qcqp.n_bus; ++i) {
    prob.re_index[i] = i;
    prob.im_index[i] = qcqp.n_bus + i;
  }

  const int m = prob.n_constraints;
  const int d = prob.n_free;
  prob.a.reserve(m);
  prob.a_is_zero.reserve(m);
  prob.coeff = RMatrix::Zero(m, d);
  prob.b = RVector::Zero(m);
  prob.con_scale = RVector::Ones(m);

  for (int j = 0; j < m; ++j) {
    const Constraint& con = qcqp.constraints[j];
    const double c_norm = con.c.size() > 0 ? con.c.norm() : 0.0;
    const double mag = con.C.mat().norm() + c_norm + std::abs(con.b);
    const double omega = 1.0 / std::max(1e-8, mag);
    prob.con_scale(j) = omega;
    const bool zero = con.C.mat().cwiseAbs().maxCoeff() == 0.0;
    prob.a_is_zero.push_back(zero);
    if (zero)
      prob.a.emplace_back(RMatrix::Zero(prob.dim, prob.dim));
    else
      prob.a.emplace_back(0.5 * omega * embed_hermitian(con.C.mat()));
    if (con.c.size() > 0) prob.coeff.row(j) = omega * con.c.transpose();
    prob.b(j) = omega * con.b;
  }

  const double obj_mag = qcqp.objective.C0.mat().norm() +
                         (qcqp.objective.c0.size() > 0 ? qcqp.objective.c0.norm() : 0.0);
  prob.obj_scale = 1.0 / std::max(1e-8, obj_mag);
  prob.a0 = 0.5 * prob.obj_scale * embed_hermitian(qcqp.objective.C0.mat());
  prob.c0 = prob.obj_scale *
            (qcqp.objective.c0.size() > 0 ? qcqp.objective.c0 : RVector::Zero(d));

  // Starting point heuristics from the constraint data itself: voltage-band
  // midpoints for the PSD block, DC-bound midpoints for the free variables.
  double mid_sum = 0.0;
  int mid_count = 0;
  RVector p_lo = RVector::Zero(d), p_hi = RVector::Zero(d);
  std::vector<bool> has_lo(d, false), has_hi(d, false);
  for (int j = 0; j < m; ++j) {
    const Constraint& con = qcqp.constraints[j];
    if (con.tag == ConstraintTag::kVoltageUb) {
      // paired lower bound follows by construction ordering, but search anyway
      for (const Constraint& other : qcqp.constraints) {
        if (other.tag == ConstraintTag::kVoltageLb && other.subject == con.subject) {
          const double v_hi = std::sqrt(std::max(0.0, con.b));
          const double v_lo = std::sqrt(std::max(0.0, -other.b));
          const double mid = 0.5 * (v_lo + v_hi);
          mid_sum += mid * mid;
          ++mid_count;
          break;
        }
      }
    }
    if (con.tag == ConstraintTag::kDcUb || con.tag == ConstraintTag::kDcLb) {
      for (int l = 0; l < d; ++l) {
        if (con.c(l) > 0.5) {
          p_hi(l) = con.b;
          has_hi[l] = true;
        } else if (con.c(l) < -0.5) {
          p_lo(l) = -con.b;
          has_lo[l] = true;
        }
      }
    }
  }
  prob.x_init_scale = mid_count > 0 ? mid_sum / mid_count : 1.0;
  prob.p_init = RVector::Zero(d);
  for (int l = 0; l < d; ++l)
    if (has_lo[l] && has_hi[l]) prob.p_init(l) = 0.5 * (p_lo(l) + p_hi(l));
  return prob;
}

struct SdpSettings {
  double gap_tol = 1e-9;
  double feas_tol = 1e-9;
  int max_iters = 200;
  // Post-processing of the interior-point iterate: crossover projects the
  // primal onto the rank-1 face through the active set (the relaxation is
  // exact for admissible grids, so the true optimizer lives there), polish
  // refits the multipliers by least squares. Both steps verify their result
  // and fall back to the raw iterate when the checks fail.
  bool crossover = true;
  bool polish = true;
  bool verbose = false;
};

enum class SolveStatus { kOptimal, kInfeasible, kMaxIterations };

inline const char* status_name(SolveStatus s) {
  switch (s) {
    case SolveStatus::kOptimal: return "optimal";
    case SolveStatus::kInfeasible: return "infeasible";
    case SolveStatus::kMaxIterations: return "max-iters";
  }
  return "?";
}

struct IterationStat {
  double primal_obj = 0.0;
  double dual_obj = 0.0;
  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  double mu = 0.0;
  double step_primal = 0.0;
  double step_dual = 0.0;
};

struct SdpSolution {
  CMatrix V;
  RVector p;
  RVector lambda;  // multipliers for the original (unscaled) constraints
  SolveStatus status = SolveStatus::kMaxIterations;
  double gap = std::numeric_limits<double>::infinity();
  double objective = 0.0;   // $/h, includes the objective constant
  double primal_obj = 0.0;  // unscaled, without constant
  double dual_obj = 0.0;
  double primal_infeas = 0.0;
  double dual_infeas = 0.0;
  double comp_slack_max = 0.0;
  double v_min_eig = 0.0;
  int iterations = 0;
  std::vector<IterationStat> trace;
};

namespace detail {

inline double dot(const RMatrix& a, const RMatrix& b) {
  return a.cwiseProduct(b).sum();
}

/// Symmetric square root and inverse square root via eigendecomposition.
struct MatrixSqrt {
  RMatrix half;
  RMatrix inv_half;
};

inline MatrixSqrt symmetric_sqrt(const RMatrix& a, double floor = 1e-300) {
  Eigen::SelfAdjointEigenSolver<RMatrix> es(a);
  RVector d = es.eigenvalues().cwiseMax(floor);
  const RMatrix& u = es.eigenvectors();
  MatrixSqrt out;
  out.half = u * d.cwiseSqrt().asDiagonal() * u.transpose();
  out.inv_half = u * d.cwiseSqrt().cwiseInverse().asDiagonal() * u.transpose();
  return out;
}

/// Largest step t so that x + t*dx keeps the PSD cone, in a basis where the
/// current iterate is s_hat (shared scaled point of the NT direction).
inline double psd_step_to_boundary(const Eigen::SelfAdjointEigenSolver<RMatrix>& s_hat_eig,
                                   const RMatrix& delta_hat) {
  const RVector d = s_hat_eig.eigenvalues();
  const RMatrix& u = s_hat_eig.eigenvectors();
  RVector inv_sqrt = d.cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  RMatrix scaled = inv_sqrt.asDiagonal() * (u.transpose() * delta_hat * u) * inv_sqrt.asDiagonal();
  scaled = 0.5 * (scaled + scaled.transpose());
  const double lam_min = Eigen::SelfAdjointEigenSolver<RMatrix>(scaled).eigenvalues().minCoeff();
  if (lam_min >= -1e-16) return std::numeric_limits<double>::infinity();
  return -1.0 / lam_min;
}

inline double vector_step_to_boundary(const RVector& x, const RVector& dx) {
  double t = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (dx(i) < 0.0) t = std::min(t, -x(i) / dx(i));
  return t;
}

/// Solves L_S(U) = S U + U S = rhs given the eigendecomposition of S.
inline RMatrix lyapunov_solve(const Eigen::SelfAdjointEigenSolver<RMatrix>& s_eig,
                              const RMatrix& rhs) {
  const RVector& d = s_eig.eigenvalues();
  const RMatrix& u = s_eig.eigenvectors();
  RMatrix t = u.transpose() * rhs * u;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    for (Eigen::Index j = 0; j < d.size(); ++j)
      t(i, j) /= std::max(d(i) + d(j), 1e-300);
  RMatrix out = u * t * u.transpose();
  return 0.5 * (out + out.transpose());
}

/// Projects onto the subspace of matrices that are embeddings of Hermitian
/// matrices; iterates stay there in exact arithmetic, this removes drift.
inline void project_embedding(RMatrix& x, int n) {
  const RMatrix re = 0.5 * (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n));
  RMatrix im = 0.5 * (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n));
  im = 0.5 * (im - im.transpose());
  x.topLeftCorner(n, n) = re;
  x.bottomRightCorner(n, n) = re;
  x.bottomLeftCorner(n, n) = im;
  x.topRightCorner(n, n) = -im;
  x = 0.5 * (x + x.transpose()).eval();
}

}  // namespace detail

/// Primal-dual path-following interior point method with Nesterov-Todd
/// scaling on the PSD block and a log barrier on the inequality slacks.
/// Dense linear algebra throughout; intended for grids up to a few dozen
/// buses, where the O(M^2 n^2 + M^3) per-iteration cost is negligible.
inline SdpSolution solve(const SdpProblem& prob, const SdpSettings& settings = {}) {
  using detail::dot;
  const int n = prob.dim;
  const int m = prob.n_constraints;
  const int d = prob.n_free;
  const int nc = prob.n_complex;

  RMatrix x = prob.x_init_scale * RMatrix::Identity(n, n);
  RMatrix z = RMatrix::Identity(n, n);
  RVector p = prob.p_init;
  RVector lambda = RVector::Ones(m);
  RVector s(m);
  for (int j = 0; j < m; ++j) {
    const double margin = prob.b(j) - dot(prob.a[j], x) -
                          (d > 0 ? prob.coeff.row(j).dot(p) : 0.0);
    s(j) = std::max(1.0, 1.1 * std::abs(margin));
  }

  SdpSolution sol;
  sol.trace.reserve(settings.max_iters);

  const double b_norm = 1.0 + prob.b.norm();
  const double a0_norm = 1.0 + prob.a0.norm() + prob.c0.norm();

  // Best iterate so far by a feasibility+gap merit, returned on stall.
  double best_merit = std::numeric_limits<double>::infinity();
  RMatrix best_x = x, best_z = z;
  RVector best_p = p, best_lambda = lambda, best_s = s;
  int no_progress = 0;

  auto residuals = [&](RVector& rp, RMatrix& rd, RVector& rpsi) {
    rp.resize(m);
    for (int j = 0; j < m; ++j)
      rp(j) = prob.b(j) - dot(prob.a[j], x) -
              (d > 0 ? prob.coeff.row(j).dot(p) : 0.0) - s(j);
    rd = prob.a0 - z;
    for (int j = 0; j < m; ++j)
      if (!prob.a_is_zero[j]) rd += lambda(j) * prob.a[j];
    rd = 0.5 * (rd + rd.transpose()).eval();
    if (d > 0)
      rpsi = -(prob.c0 + prob.coeff.transpose() * lambda);
    else
      rpsi.resize(0);
  };

  int stall_count = 0;
  SolveStatus status = SolveStatus::kMaxIterations;
  int iter = 0;
  for (; iter < settings.max_iters; ++iter) {
    RVector rp, rpsi;
    RMatrix rd;
    residuals(rp, rd, rpsi);

    const double pobj = dot(prob.a0, x) + (d > 0 ? prob.c0.dot(p) : 0.0);
    const double dobj = -prob.b.dot(lambda);
    const double mu = (dot(x, z) + s.dot(lambda)) / (n + m);
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double prim_inf = rp.norm() / b_norm;
    const double dual_inf =
        (rd.norm() + (d > 0 ? rpsi.norm() : 0.0)) / a0_norm;

    sol.trace.push_back({pobj, dobj, prim_inf, dual_inf, mu, 0.0, 0.0});
    if (settings.verbose)
      std::fprintf(stderr, "iter %3d  pobj % .12e  dobj % .12e  gap %.2e  pinf %.2e  dinf %.2e  mu %.2e\n",
                   iter, pobj, dobj, rel_gap, prim_inf, dual_inf, mu);

    const double merit = std::max({rel_gap, prim_inf, dual_inf});
    if (merit < 0.9 * best_merit) {
      no_progress = 0;
    } else if (++no_progress >= 10) {
      break;
    }
    if (merit < best_merit) {
      best_merit = merit;
      best_x = x;
      best_z = z;
      best_p = p;
      best_lambda = lambda;
      best_s = s;
    }

    if (rel_gap <= settings.gap_tol && prim_inf <= settings.feas_tol &&
        dual_inf <= settings.feas_tol) {
      status = SolveStatus::kOptimal;
      break;
    }

    // Farkas-type certificate: lambda >= 0 with Psi_cone(lambda) PSD,
    // psi_cone(lambda) = 0 and b^T lambda < 0 proves primal infeasibility.
    const double lambda_max = lambda.maxCoeff();
    if (lambda_max > 1e8) {
      RVector ln = lambda / lambda_max;
      RMatrix acc = RMatrix::Zero(n, n);
      for (int j = 0; j < m; ++j)
        if (!prob.a_is_zero[j]) acc += ln(j) * prob.a[j];
      const double min_eig =
          Eigen::SelfAdjointEigenSolver<RMatrix>(0.5 * (acc + acc.transpose()))
              .eigenvalues()
              .minCoeff();
      const double psi_norm = d > 0 ? (prob.coeff.transpose() * ln).norm() : 0.0;
      if (min_eig > -1e-6 && psi_norm < 1e-6 && prob.b.dot(ln) < -1e-8) {
        status = SolveStatus::kInfeasible;
        break;
      }
    }

    // Nesterov-Todd scaling point: w z w = x, g = w^{1/2}.
    detail::MatrixSqrt z_sqrt = detail::symmetric_sqrt(z);
    RMatrix bmat = z_sqrt.half * x * z_sqrt.half;
    bmat = 0.5 * (bmat + bmat.transpose()).eval();
    detail::MatrixSqrt b_sqrt = detail::symmetric_sqrt(bmat);
    RMatrix w = z_sqrt.inv_half * b_sqrt.half * z_sqrt.inv_half;
    w = 0.5 * (w + w.transpose()).eval();
    detail::MatrixSqrt w_sqrt = detail::symmetric_sqrt(w);
    const RMatrix& g = w_sqrt.half;
    RMatrix s_hat = g * z * g;
    s_hat = 0.5 * (s_hat + s_hat.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<RMatrix> s_hat_eig(s_hat);

    // Scaled constraint matrices and the Schur complement.
    std::vector<RMatrix> t(m);
    for (int j = 0; j < m; ++j)
      if (!prob.a_is_zero[j]) t[j] = g * prob.a[j] * g;
    RMatrix schur = RMatrix::Zero(m, m);
    for (int j = 0; j < m; ++j) {
      if (prob.a_is_zero[j]) continue;
      for (int k = j; k < m; ++k) {
        if (prob.a_is_zero[k]) continue;
        schur(j, k) = dot(t[j], t[k]);
        schur(k, j) = schur(j, k);
      }
    }
    for (int j = 0; j < m; ++j) schur(j, j) += s(j) / lambda(j);

    Eigen::LLT<RMatrix> schur_llt(schur);
    double ridge = 0.0;
    while (schur_llt.info() != Eigen::Success && ridge < 1e-2 * schur.trace() / m) {
      ridge = std::max(1e-14 * schur.trace() / m, 10.0 * ridge);
      schur_llt.compute(schur + ridge * RMatrix::Identity(m, m));
    }
    if (schur_llt.info() != Eigen::Success) break;

    auto schur_solve = [&](const RVector& rhs) {
      RVector sol_v = schur_llt.solve(rhs);
      for (int r = 0; r < 2; ++r) {
        RVector res = rhs - schur * sol_v;
        sol_v += schur_llt.solve(res);
      }
      return sol_v;
    };

    Eigen::LLT<RMatrix> k_llt;
    RMatrix k_mat;
    RMatrix schur_inv_coeff;
    if (d > 0) {
      schur_inv_coeff.resize(m, d);
      for (int cdx = 0; cdx < d; ++cdx)
        schur_inv_coeff.col(cdx) = schur_solve(prob.coeff.col(cdx));
      k_mat = prob.coeff.transpose() * schur_inv_coeff;
      k_mat = 0.5 * (k_mat + k_mat.transpose()).eval();
      k_llt.compute(k_mat);
      if (k_llt.info() != Eigen::Success) break;
    }

    const RMatrix rd_hat = g * rd * g;

    // One Newton solve for given right-hand sides, reusing the factorized
    // Schur complement.
    struct Direction {
      RMatrix dx, dz;
      RVector dp, ds, dlambda;
      RMatrix dx_hat, dz_hat;
    };
    auto newton_raw = [&](const RMatrix& rc_hat, const RVector& rc_lp, const RVector& rp_in,
                          const RMatrix& rd_in, const RMatrix& rd_hat_in,
                          const RVector& rpsi_in) {
      Direction dir;
      RVector h(m);
      const RMatrix f = rc_hat - rd_hat_in;
      for (int j = 0; j < m; ++j) {
        const double tf = prob.a_is_zero[j] ? 0.0 : dot(t[j], f);
        h(j) = tf + rc_lp(j) / lambda(j) - rp_in(j);
      }
      if (d > 0) {
        const RVector rhs_p = rpsi_in - schur_inv_coeff.transpose() * h;
        RVector dp = k_llt.solve(rhs_p);
        for (int r = 0; r < 2; ++r) {
          RVector res = rhs_p - k_mat * dp;
          dp += k_llt.solve(res);
        }
        dir.dp = dp;
        dir.dlambda = schur_solve(h + prob.coeff * dp);
      } else {
        dir.dp.resize(0);
        dir.dlambda = schur_solve(h);
      }
      dir.dz = rd_in;
      for (int j = 0; j < m; ++j)
        if (!prob.a_is_zero[j]) dir.dz += dir.dlambda(j) * prob.a[j];
      dir.dz = 0.5 * (dir.dz + dir.dz.transpose()).eval();
      dir.dz_hat = g * dir.dz * g;
      dir.dx_hat = rc_hat - dir.dz_hat;
      dir.dx = g * dir.dx_hat * g;
      dir.dx = 0.5 * (dir.dx + dir.dx.transpose()).eval();
      dir.ds.resize(m);
      for (int j = 0; j < m; ++j)
        dir.ds(j) = rc_lp(j) / lambda(j) - (s(j) / lambda(j)) * dir.dlambda(j);
      return dir;
    };

    // The Schur elimination only solves the primal-feasibility and free-
    // variable rows approximately; residual-correction passes recover the
    // digits lost to its conditioning. The achieved equation error is
    // reported so the caller can refuse to step on a bad direction.
    double direction_error = 0.0;
    auto newton = [&](const RMatrix& rc_hat, const RVector& rc_lp) {
      Direction dir = newton_raw(rc_hat, rc_lp, rp, rd, rd_hat, rpsi);
      const RMatrix zero_mat = RMatrix::Zero(n, n);
      double err = std::numeric_limits<double>::infinity();
      for (int pass = 0; pass < 8; ++pass) {
        RVector e1(m);
        for (int j = 0; j < m; ++j)
          e1(j) = rp(j) - dot(prob.a[j], dir.dx) -
                  (d > 0 ? prob.coeff.row(j).dot(dir.dp) : 0.0) - dir.ds(j);
        RVector e3 = d > 0 ? RVector(rpsi - prob.coeff.transpose() * dir.dlambda) : RVector();
        const double new_err = e1.lpNorm<Eigen::Infinity>() +
                               (d > 0 ? e3.lpNorm<Eigen::Infinity>() : 0.0);
        if (new_err < 1e-14 * b_norm || new_err > 0.5 * err) {
          err = std::min(err, new_err);
          break;
        }
        err = new_err;
        Direction corr = newton_raw(zero_mat, RVector::Zero(m), e1, zero_mat, zero_mat, e3);
        dir.dx += corr.dx;
        dir.dz += corr.dz;
        dir.dx_hat += corr.dx_hat;
        dir.dz_hat += corr.dz_hat;
        dir.ds += corr.ds;
        dir.dlambda += corr.dlambda;
        if (d > 0) dir.dp += corr.dp;
      }
      direction_error = std::max(direction_error, err);
      return dir;
    };

    // Predictor (affine scaling direction).
    Direction aff = newton(-s_hat, (-lambda.array() * s.array()).matrix());
    if (direction_error > 1e-7 * b_norm) break;  // linear algebra exhausted
    const double ax_aff = detail::psd_step_to_boundary(s_hat_eig, aff.dx_hat);
    const double az_aff = detail::psd_step_to_boundary(s_hat_eig, aff.dz_hat);
    const double as_aff = detail::vector_step_to_boundary(s, aff.ds);
    const double al_aff = detail::vector_step_to_boundary(lambda, aff.dlambda);
    const double ap_aff = std::min(1.0, std::min(ax_aff, as_aff));
    const double ad_aff = std::min(1.0, std::min(az_aff, al_aff));

    const double mu_aff =
        ((x + ap_aff * aff.dx).cwiseProduct(z + ad_aff * aff.dz).sum() +
         (s + ap_aff * aff.ds).dot(lambda + ad_aff * aff.dlambda)) /
        (n + m);
    double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector with Mehrotra second-order terms.
    RMatrix k2 = aff.dx_hat * aff.dz_hat + aff.dz_hat * aff.dx_hat;
    RMatrix rhs_hat = 2.0 * sigma * mu * RMatrix::Identity(n, n) - 2.0 * s_hat * s_hat - k2;
    const RMatrix rc_hat = detail::lyapunov_solve(s_hat_eig, rhs_hat);
    RVector rc_lp(m);
    for (int j = 0; j < m; ++j)
      rc_lp(j) = sigma * mu - lambda(j) * s(j) - aff.dlambda(j) * aff.ds(j);
    Direction dir = newton(rc_hat, rc_lp);
    if (direction_error > 1e-7 * b_norm) break;

    const double ax = detail::psd_step_to_boundary(s_hat_eig, dir.dx_hat);
    const double az = detail::psd_step_to_boundary(s_hat_eig, dir.dz_hat);
    const double as = detail::vector_step_to_boundary(s, dir.ds);
    const double al = detail::vector_step_to_boundary(lambda, dir.dlambda);
    double tau = 0.9 + 0.09 * std::min(1.0, std::min(ap_aff, ad_aff));
    if (mu < 1e-7) tau = std::max(tau, 0.999);
    if (mu < 1e-10) tau = std::max(tau, 0.9999);
    const double alpha_p = std::min(1.0, tau * std::min(ax, as));
    const double alpha_d = std::min(1.0, tau * std::min(az, al));
    if (settings.verbose)
      std::fprintf(stderr,
                   "        sigma %.2e  |dx| %.2e  |dz| %.2e  ap %.2e  ad %.2e\n",
                   sigma, dir.dx.norm(), dir.dz.norm(), alpha_p, alpha_d);
    sol.trace.back().step_primal = alpha_p;
    sol.trace.back().step_dual = alpha_d;

    x += alpha_p * dir.dx;
    s += alpha_p * dir.ds;
    if (d > 0) p += alpha_p * dir.dp;
    z += alpha_d * dir.dz;
    lambda += alpha_d * dir.dlambda;
    detail::project_embedding(x, nc);
    detail::project_embedding(z, nc);
    s = s.cwiseMax(1e-300);
    lambda = lambda.cwiseMax(1e-300);

    if (alpha_p < 1e-5 && alpha_d < 1e-5)
      ++stall_count;
    else
      stall_count = 0;
    if (stall_count >= 3) break;
  }

  if (status != SolveStatus::kOptimal && status != SolveStatus::kInfeasible) {
    x = best_x;
    z = best_z;
    p = best_p;
    lambda = best_lambda;
    s = best_s;
  }

  std::vector<int> support;
  for (int j = 0; j < m; ++j)
    if (lambda(j) > s(j)) support.push_back(j);

  auto constraint_value = [&](const RMatrix& x_mat, const RVector& p_vec, int j) {
    return dot(prob.a[j], x_mat) + (d > 0 ? prob.coeff.row(j).dot(p_vec) : 0.0);
  };

  // Crossover: Newton-project the recovered rank-1 point onto the active
  // constraints, then adopt V = v v^H if it is feasible and its objective
  // stays within the certified gap.
  if (settings.crossover && status != SolveStatus::kInfeasible && !support.empty()) {
    Eigen::SelfAdjointEigenSolver<RMatrix> x_eig(x);
    const double sigma1 = x_eig.eigenvalues()(n - 1);
    const double lambda_peak = lambda.maxCoeff();
    std::vector<int> active;
    for (int j : support)
      if (lambda(j) > 1e-7 * lambda_peak) active.push_back(j);

    // Newton projection of (v, p) onto the active constraints; weakly active
    // candidates that make the system inconsistent get dropped one by one.
    for (int attempt = 0; attempt < 6 && sigma1 > 0.0 && !active.empty(); ++attempt) {
      RVector xv = std::sqrt(sigma1) * x_eig.eigenvectors().col(n - 1);
      RVector pv = p;
      const int na = static_cast<int>(active.size());
      for (int step = 0; step < 8; ++step) {
        RMatrix jac(na + 1, n + d);
        RVector rhs_nt(na + 1);
        for (int r = 0; r < na; ++r) {
          const int j = active[r];
          if (prob.a_is_zero[j])
            jac.row(r).head(n).setZero();
          else
            jac.row(r).head(n) = 4.0 * (prob.a[j] * xv).transpose();
          if (d > 0) jac.row(r).tail(d) = prob.coeff.row(j);
          rhs_nt(r) = prob.b(j) - 2.0 * xv.dot(prob.a[j] * xv) -
                      (d > 0 ? prob.coeff.row(j).dot(pv) : 0.0);
        }
        // pin the global phase: steps orthogonal to the rotation direction
        RVector rot(n);
        rot.head(nc) = -xv.tail(nc);
        rot.tail(nc) = xv.head(nc);
        jac.row(na).head(n) = rot.transpose();
        if (d > 0) jac.row(na).tail(d).setZero();
        rhs_nt(na) = 0.0;
        if (rhs_nt.lpNorm<Eigen::Infinity>() < 1e-14) break;
        RVector delta = jac.completeOrthogonalDecomposition().solve(rhs_nt);
        xv += delta.head(n);
        if (d > 0) pv += delta.tail(d);
      }
      double viol = 0.0;
      for (int j = 0; j < m; ++j)
        viol = std::max(viol, 2.0 * xv.dot(prob.a[j] * xv) +
                                  (d > 0 ? prob.coeff.row(j).dot(pv) : 0.0) - prob.b(j));
      RMatrix x_cross = xv * xv.transpose();
      RMatrix jx_mat(n, 1);
      jx_mat.col(0).head(nc) = -xv.tail(nc);
      jx_mat.col(0).tail(nc) = xv.head(nc);
      x_cross += jx_mat * jx_mat.transpose();
      x_cross = 0.5 * (x_cross + x_cross.transpose()).eval();
      const double pobj_old = dot(prob.a0, x) + (d > 0 ? prob.c0.dot(p) : 0.0);
      const double dobj_cur = -prob.b.dot(lambda);
      const double pobj_new = dot(prob.a0, x_cross) + (d > 0 ? prob.c0.dot(pv) : 0.0);
      const double gap_allow =
          10.0 * std::abs(pobj_old - dobj_cur) + 1e-12 * (1.0 + std::abs(pobj_old));
      if (settings.verbose)
        std::fprintf(stderr,
                     "crossover: active %d  viol %.3e  pobj_new-dobj %.3e  allow %.3e\n",
                     na, viol, pobj_new - dobj_cur, gap_allow);
      if (viol <= 1e-9 && pobj_new - dobj_cur <= gap_allow &&
          pobj_new - dobj_cur >= -1e-9 * (1.0 + std::abs(dobj_cur))) {
        x = x_cross;
        if (d > 0) p = pv;
        for (int j = 0; j < m; ++j)
          s(j) = std::max(0.0, prob.b(j) - constraint_value(x, p, j));
        support = active;
        break;
      }
      // drop the weakest multiplier and retry
      int weakest = 0;
      for (int r = 1; r < na; ++r)
        if (lambda(active[r]) < lambda(active[weakest])) weakest = r;
      active.erase(active.begin() + weakest);
    }
  }

  // Dual refinement: refit the multipliers on a candidate active set by
  // nonnegative least squares against the stationarity conditions
  // Psi(lambda) v = 0 and psi(lambda) = 0 for the recovered top eigenvector.
  // Accepted only when the certificate improves: smaller duality gap,
  // stationarity residual no worse, Psi(lambda) still PSD.
  if (settings.polish && status != SolveStatus::kInfeasible) {
    Eigen::SelfAdjointEigenSolver<RMatrix> x_eig(x);
    const RVector x1 = x_eig.eigenvectors().col(n - 1);
    const double pobj_cur = dot(prob.a0, x) + (d > 0 ? prob.c0.dot(p) : 0.0);

    auto psi_residual = [&](const RVector& lam) {
      return d > 0 ? (prob.c0 + prob.coeff.transpose() * lam).norm() : 0.0;
    };
    auto try_polish = [&](const std::vector<int>& cand) {
      if (cand.empty()) return false;
      RVector rhs(n + d);
      rhs.head(n) = -(prob.a0 * x1);
      if (d > 0) rhs.tail(d) = -prob.c0;
      RVector lam_new;
      std::vector<int> active = cand;
      for (int round = 0; round < 30 && !active.empty(); ++round) {
        RMatrix bmat_ls(n + d, active.size());
        for (std::size_t c = 0; c < active.size(); ++c) {
          const int j = active[c];
          bmat_ls.col(c).head(n) =
              prob.a_is_zero[j] ? RVector::Zero(n) : RVector(prob.a[j] * x1);
          if (d > 0) bmat_ls.col(c).tail(d) = prob.coeff.row(j).transpose();
        }
        RVector coef = bmat_ls.colPivHouseholderQr().solve(rhs);
        std::vector<int> keep;
        for (std::size_t c = 0; c < active.size(); ++c)
          if (coef(c) > 0.0) keep.push_back(active[c]);
        if (keep.size() == active.size()) {
          lam_new = RVector::Zero(m);
          for (std::size_t c = 0; c < active.size(); ++c) lam_new(active[c]) = coef(c);
          break;
        }
        active = keep;
      }
      if (lam_new.size() != m) return false;
      RMatrix z_new = prob.a0;
      for (int j = 0; j < m; ++j)
        if (!prob.a_is_zero[j] && lam_new(j) != 0.0) z_new += lam_new(j) * prob.a[j];
      z_new = 0.5 * (z_new + z_new.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<RMatrix> z_eig(z_new);
      const bool psd_ok = z_eig.eigenvalues().minCoeff() >=
                          -1e-9 * std::max(1.0, std::abs(z_eig.eigenvalues().maxCoeff()));
      const double gap_old = std::abs(pobj_cur + prob.b.dot(lambda));
      const double gap_new = std::abs(pobj_cur + prob.b.dot(lam_new));
      const bool gap_ok = gap_new <= std::max(gap_old, 1e-12 * (1.0 + std::abs(pobj_cur)));
      const bool psi_ok =
          psi_residual(lam_new) <= std::max(psi_residual(lambda), 1e-10 * (1.0 + prob.c0.norm()));
      if (settings.verbose)
        std::fprintf(stderr,
                     "polish: support %zu  gap %.3e -> %.3e  psi %.3e -> %.3e  psd %s\n",
                     cand.size(), gap_old, gap_new, psi_residual(lambda),
                     psi_residual(lam_new), psd_ok ? "ok" : "violated");
      if (!(psd_ok && gap_ok && psi_ok)) return false;
      lambda = lam_new;
      z = z_new;
      return true;
    };

    std::vector<int> near_active;
    for (int j = 0; j < m; ++j)
      if (lambda(j) > s(j) || s(j) < 1e-6 * (1.0 + std::abs(prob.b(j))))
        near_active.push_back(j);
    std::vector<int> strict;
    for (int j = 0; j < m; ++j)
      if (lambda(j) > s(j)) strict.push_back(j);
    if (!try_polish(strict)) try_polish(near_active);
  }

  sol.iterations = iter;
  sol.V = extract_hermitian(x, nc);
  sol.p = p;
  sol.lambda = (lambda.array() * prob.con_scale.array()).matrix() / prob.obj_scale;

  const double pobj_scaled = dot(prob.a0, x) + (d > 0 ? prob.c0.dot(p) : 0.0);
  sol.primal_obj = pobj_scaled / prob.obj_scale;
  sol.dual_obj = -prob.b.dot(lambda) / prob.obj_scale;
  sol.objective = sol.primal_obj + prob.constant;
  sol.gap = std::abs(sol.primal_obj - sol.dual_obj) /
            (1.0 + std::abs(sol.primal_obj) + std::abs(sol.dual_obj));

  RVector rp, rpsi;
  RMatrix rd;
  residuals(rp, rd, rpsi);
  sol.primal_infeas = rp.norm() / b_norm;
  sol.dual_infeas = (rd.norm() + (d > 0 ? rpsi.norm() : 0.0)) / a0_norm;
  double cs = 0.0;
  for (int j = 0; j < m; ++j) {
    const double g_val = dot(prob.a[j], x) +
                         (d > 0 ? prob.coeff.row(j).dot(p) : 0.0) - prob.b(j);
    cs = std::max(cs, std::abs(lambda(j) * g_val) / prob.obj_scale);
  }
  sol.comp_slack_max = cs;
  sol.v_min_eig =
      Eigen::SelfAdjointEigenSolver<CMatrix>(sol.V).eigenvalues().minCoeff();

  // Status from the final reported metrics, so that status == optimal
  // always implies gap <= gap_tol and residuals <= feas_tol.
  if (status == SolveStatus::kInfeasible) {
    sol.status = status;
  } else if (sol.gap <= settings.gap_tol && sol.primal_infeas <= settings.feas_tol &&
             sol.dual_infeas <= settings.feas_tol) {
    sol.status = SolveStatus::kOptimal;
  } else {
    sol.status = SolveStatus::kMaxIterations;
  }
  return sol;
}

inline SdpSolution solve(const CanonicalQcqp& qcqp, const SdpSettings& settings = {}) {
  return solve(embed(qcqp), settings);
}

}  // namespace hybridopf
