#pragma once

// Monotone finite-difference solver for the flux-limited junction problem,
// the closed-form flat-datum solutions used as oracles, and the micro-macro
// comparison.

#include <functional>
#include <optional>
#include <vector>

#include "trafhom/homog.hpp"
#include "trafhom/micro_sim.hpp"

namespace trafhom {

struct JunctionGrid {
    double dx = 0.01;
    int M = 200;        // nodes per branch in addition to the shared x = 0 node
    double cfl = 0.45;  // dt = cfl * dx / max_k max|dH^k/dp|  (<= 1/2)
};

struct GridSolution {
    JunctionGrid grid;
    double A = 0.0;
    double t = 0.0;
    int K = 1;
    // branch 0 stores x = -M dx .. 0 (index 0 = far field, M = node);
    // branch k >= 1 stores x = 0 .. M dx (index 0 = node). The node value is
    // identical across branches by construction.
    std::vector<std::vector<double>> v;
    // snapshots at requested times (same layout), parallel to sample_times
    std::vector<double> sample_times;
    std::vector<std::vector<std::vector<double>>> snapshots;

    double value(double x, int k) const;  // linear interpolation on the branch
    double node() const { return v[0].back(); }
};

using InitialDatum = std::function<double(double x, int k)>;

// Explicit monotone scheme: Godunov flux from the envelopes away from the
// node, the flux-limited junction condition with one-sided differences.
// Far field extrapolates with the frozen initial slope. A Dirichlet node
// mode (node value g(t)) replaces the junction update when given.
GridSolution solve_hj(const EffectiveModel& eff, double A, const InitialDatum& nu0,
                      const JunctionGrid& grid, double T,
                      const std::vector<double>& sample_times = {},
                      const std::optional<std::function<double(double)>>& node_dirichlet = {},
                      int branches_override = -1);

// Flat-datum closed form: min{phi_A(x,k) - A t, -x/e^k - t H^k(-1/e^k)}
// (road-0 expression for x <= 0, shared across k).
double closed_form_nu(const EffectiveModel& eff, const JunctionProfile& prof, double x, int k,
                      double t);

// Closed-form position field: the two-branch min with psi_A.
double closed_form_u(const EffectiveModel& eff, const JunctionProfile& prof, double y, int k,
                     double t);

struct CompareRow {
    double epsilon = 0.0;
    double sup_micro_vs_closed = 0.0;
    double sup_micro_vs_grid = 0.0;
    double sup_grid_vs_closed = 0.0;
    // incoming-road branch only: the part not dominated by the route-sampling
    // noise of the outgoing branches
    double sup_micro_vs_closed_road0 = 0.0;
};

struct CompareTable {
    std::vector<CompareRow> rows;
    double A_used = 0.0;
    double grid_dx = 0.0;
};

// Micro-to-macro limit at desk scale: for each epsilon, run the micro system from the
// flat datum, build nu^eps, and report sup errors over the (x, k, t) grid
// against the closed form and against the grid solution.
CompareTable micro_macro_compare(const ModelSpec& spec, const JunctionLaw& law,
                                 const EffectiveModel& eff, double A_hat,
                                 const std::vector<double>& epsilons, double T,
                                 const std::vector<double>& x_grid,
                                 const std::vector<double>& t_grid, std::uint64_t seed,
                                 double grid_dx = 0.02);

}  // namespace trafhom
