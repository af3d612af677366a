#pragma once

// Homogenized description of the junction model: effective velocities
// Vbar^k, Hamiltonians H^k with their monotone envelopes, the baseline
// limiter A0, the flat-datum spacings e^k and the junction profile
// functions phi_A / psi_A.

#include <vector>

#include "trafhom/model.hpp"
#include "trafhom/util.hpp"

namespace trafhom {

struct RoadEffective {
    int k = 0;
    double pi = 1.0;        // route weight (pi^0 = 1)
    PiecewiseLinear v_bar;  // e -> Vbar^k(e); 0 before first knot, flat after last
    PiecewiseLinear hamiltonian;  // exact PL knots of H^k(p) on [-1/(pi delta_min), 0]
    double v_bar_max = 0.0;   // \bar v^k
    double e_upper = 0.0;     // end of the increasing part of Vbar^k
    double e_k = 0.0;         // flat-datum spacing: H^k(-1/e_k) = min H^k
    double p_star = 0.0;      // -1/e_k
    double h_min = 0.0;       // min_p H^k
    double v_e = 0.0;         // Vbar^k(e_k / pi^k)
    int z_min = 0;            // slow type: argmin Vtilde_z^k(e_max)

    double H(double p) const;       // exact evaluation (0 for p >= 0)
    double Hplus(double p) const;   // largest nondecreasing map below H^k
    double Hminus(double p) const;  // largest nonincreasing map below H^k
    double dH_bound() const;        // max |dH/dp|
};

struct EffectiveModel {
    int K = 1;
    std::vector<RoadEffective> roads;  // index 0..K
    double A0 = 0.0;                   // max_k min_p H^k

    std::vector<double> flat_spacings() const;  // e* = (e^0, ..., e^K)
    std::vector<double> steady_speeds() const;  // (v_e^0, ..., v_e^K)
};

// Exact inversion of the increasing part of a profile; v in (0, max_velocity()].
double invert_profile(const VelocityProfile& profile, double v);

// Exact weighted-sum expectations over the finite type set; no sampling.
EffectiveModel compute_effective(const ModelSpec& spec);

struct ConvexityReport {
    struct Entry {
        int road = 0;
        double location = 0.0;
        double second_difference = 0.0;
    };
    std::vector<Entry> failures;   // H^k second differences below -tol
    double worst_h_second_diff = 0.0;   // most negative over all roads
    double worst_vbar_second_diff = 0.0;  // most positive (Vbar must be concave)
    bool ok() const { return failures.empty(); }
};

// Discrete convexity of H^k on [-1/(pi^k delta_min), 0] and concavity of
// Vbar^k on [delta_min, inf), via second differences on a dense grid.
ConvexityReport check_convexity(const EffectiveModel& eff, double tol = 1e-9);

struct JunctionProfile {
    double A = 0.0;
    std::vector<double> p_minus;  // per road, smallest root of H^k(p) = A
    std::vector<double> p_plus;   // per road, largest root

    double phi(double x, int k) const;  // p^{0,-} x for x <= 0, p^{k,+} x for x >= 0
    double psi(double y, int k) const;  // branch-wise inverse of x -> -phi(x, k)
};

// Roots found on the two monotone branches of the convex H^k.
// Requires A in [A0, 0); throws std::invalid_argument otherwise.
JunctionProfile junction_profile(const EffectiveModel& eff, double A);

}  // namespace trafhom
