#pragma once

// Shared grid fixtures for the test suites: the adapted PJM 5-bus system in
// its hybrid configuration (two HVDC conversions), the heavier-load variant,
// the six-line AC-only version used by the upgrade planner, and a couple of
// small synthetic grids.

#include "hybridopf/grid.hpp"
#include "hybridopf/planner.hpp"
#include "hybridopf/qcqp.hpp"

namespace hybridopf::testcases {

inline Bus make_bus(int id, double load_p, double load_q) {
  Bus b;
  b.id = id;
  b.v_min_pu = 0.9;
  b.v_max_pu = 1.1;
  b.load_p_mw = load_p;
  b.load_q_mvar = load_q;
  return b;
}

inline Bus make_gen_bus(int id, double load_p, double load_q, double p_max, double q_max,
                        double cost) {
  Bus b = make_bus(id, load_p, load_q);
  b.gen = GenData{0.0, p_max, -q_max, q_max, cost};
  return b;
}

inline AcBranch make_line(int id, int from, int to, double r, double x, double shunt_b,
                          double rating) {
  AcBranch br;
  br.id = id;
  br.from_bus = from;
  br.to_bus = to;
  br.series_impedance_pu = Complex(r, x);
  br.shunt_from_pu = Complex(0.0, shunt_b);
  br.shunt_to_pu = Complex(0.0, shunt_b);
  br.rating_mva = rating;
  br.drop_min = -0.05;
  br.drop_max = 0.05;
  br.angle_min_rad = deg_to_rad(-50.0);
  br.angle_max_rad = deg_to_rad(50.0);
  return br;
}

/// Hybrid PJM 5-bus system: 4 AC tree branches, bidirectional HVDC 3-4 and
/// directional HVDC 5-4, reference at bus 3.
inline Grid pjm5_hybrid() {
  Grid g;
  g.base_mva = 100.0;
  g.ref_bus = 3;
  g.ref_angle_rad = 0.0;
  g.buses = {
      make_gen_bus(1, 0.0, 0.0, 210.0, 155.0, 14.0),
      make_bus(2, 300.0, 100.0),
      make_gen_bus(3, 300.0, 100.0, 520.0, 390.0, 30.0),
      make_bus(4, 400.0, 130.0),
      make_gen_bus(5, 0.0, 0.0, 600.0, 450.0, 10.0),
  };
  g.ac_branches = {
      make_line(1, 1, 2, 0.00281, 0.02810, 0.00356, 400.0),
      make_line(2, 1, 4, 0.00304, 0.03040, 0.00329, 500.0),
      make_line(3, 1, 5, 0.00064, 0.00640, 0.01563, 500.0),
      make_line(4, 2, 3, 0.00108, 0.01080, 0.00926, 500.0),
  };
  g.dc_branches = {
      {1, 3, 4, 0.035, 0.0, 500.0},
      {2, 4, 3, 0.035, 0.0, 500.0},
      {3, 5, 4, 0.035, 0.0, 240.0},
  };
  return g;
}

/// Same grid with the bus 2 and 4 loads raised to 450 MW and 550 MW.
inline Grid pjm5_hybrid_case2() {
  Grid g = pjm5_hybrid();
  g.buses[1].load_p_mw = 450.0;
  g.buses[3].load_p_mw = 550.0;
  return g;
}

inline ObjectiveWeights cost_weights() { return {1.0, 1e-6}; }

/// The six-line AC-only PJM system the planner starts from.
inline AcOnlyGrid pjm5_ac_only() {
  AcOnlyGrid g;
  g.base_mva = 100.0;
  g.ref_bus = 3;
  g.ref_angle_rad = 0.0;
  g.buses = pjm5_hybrid().buses;
  auto line = [](int id, int a, int b, double r, double x, double shb, double rating) {
    AcLine l;
    l.id = id;
    l.bus_a = a;
    l.bus_b = b;
    l.series_impedance_pu = Complex(r, x);
    l.shunt_a_pu = Complex(0.0, shb);
    l.shunt_b_pu = Complex(0.0, shb);
    l.rating_mva = rating;
    l.drop_min = -0.05;
    l.drop_max = 0.05;
    l.angle_min_rad = deg_to_rad(-50.0);
    l.angle_max_rad = deg_to_rad(50.0);
    return l;
  };
  g.lines = {
      line(1, 1, 2, 0.00281, 0.02810, 0.00356, 400.0),
      line(2, 1, 4, 0.00304, 0.03040, 0.00329, 500.0),
      line(3, 1, 5, 0.00064, 0.00640, 0.01563, 500.0),
      line(4, 2, 3, 0.00108, 0.01080, 0.00926, 500.0),
      line(5, 3, 4, 0.00297, 0.02970, 0.00337, 500.0),
      line(6, 5, 4, 0.00297, 0.02970, 0.00337, 240.0),
  };
  return g;
}

/// Two-bus grid with one AC branch and one parallel HVDC link; small enough
/// for exhaustive grid-search oracles.
inline Grid two_bus_grid() {
  Grid g;
  g.base_mva = 100.0;
  g.ref_bus = 1;
  g.ref_angle_rad = 0.0;
  g.buses = {
      make_gen_bus(1, 0.0, 0.0, 300.0, 200.0, 20.0),
      make_bus(2, 100.0, 20.0),
  };
  AcBranch br = make_line(1, 1, 2, 0.004, 0.04, 0.001, 200.0);
  br.drop_min = -0.08;
  br.drop_max = 0.08;
  g.ac_branches = {br};
  g.dc_branches = {{1, 1, 2, 0.05, 0.0, 50.0}};
  return g;
}

}  // namespace hybridopf::testcases
