// Temporary smoke driver; removed before the suites land.
#include <cstdio>

#include "hybridopf/opf.hpp"
#include "tests/test_cases.hpp"

using namespace hybridopf;

int main(int argc, char** argv) {
  Grid grid = testcases::pjm5_hybrid();
  if (argc > 1 && std::string(argv[1]) == "case2") grid = testcases::pjm5_hybrid_case2();
  auto report = validate_topology(grid);
  std::printf("validation: %s", report.to_string().c_str());

  OpfSettings settings;
  settings.sdp.gap_tol = 1e-12;
  settings.sdp.feas_tol = 1e-10;
  settings.sdp.verbose = true;
  const OpfResult res = solve_opf(grid, testcases::cost_weights(), settings);
  std::printf("status=%s iters=%d gap=%.3e obj=%.6f kappa=%.3e\n",
              status_name(res.sdp.status), res.sdp.iterations, res.sdp.gap,
              res.sdp.objective, res.state.kappa);
  const OperatingReport rep = evaluate_state(grid, res.state.v, res.state.p);
  for (const auto& b : rep.buses)
    std::printf("bus %d: Pg=%8.2f Qg=%8.2f |V|=%.4f arg=%8.4f\n", b.id, b.p_gen_mw,
                b.q_gen_mvar, b.v_mag_pu, b.v_arg_deg);
  for (const auto& dc : rep.dc_branches) std::printf("dc %d: P=%8.2f\n", dc.id, dc.p_mw);
  for (const auto& a : rep.ac_branches)
    std::printf("ac %d: |Sf|=%8.2f pf=%7.3f |St|=%8.2f pf=%7.3f nu=%6.2f%% delta=%8.3f\n",
                a.id, a.s_from_mva, a.pf_from, a.s_to_mva, a.pf_to, a.drop_pct, a.angle_deg);
  std::printf("cost=%.4f loss=%.4f\n", rep.cost_per_h, rep.total_loss_mw);

  // KKT certificate quality.
  const CanonicalQcqp qcqp = build_qcqp(grid, testcases::cost_weights());
  CMatrix psi = qcqp.objective.C0.mat();
  RVector psi_vec = qcqp.objective.c0;
  for (int m = 0; m < qcqp.n_constraints(); ++m) {
    psi += res.sdp.lambda(m) * qcqp.constraints[m].C.mat();
    psi_vec += res.sdp.lambda(m) * qcqp.constraints[m].c;
  }
  psi = 0.5 * (psi + psi.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> pe(psi);
  const double trace_psi_v = (psi * res.sdp.V).trace().real();
  std::printf("psi eigs:");
  for (int i = 0; i < pe.eigenvalues().size(); ++i) std::printf(" %.3e", pe.eigenvalues()(i));
  std::printf("\n||psi_vec||=%.3e trace(PsiV)=%.3e comp_slack=%.3e gap=%.3e\n",
              psi_vec.norm(), trace_psi_v, res.sdp.comp_slack_max, res.sdp.gap);
  return 0;
}
