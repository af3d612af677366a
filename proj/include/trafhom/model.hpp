#pragma once

// Vehicle types, velocity laws and the random environment of the 1-to-K
// junction model: free-road profiles, the three-band junction law with
// smoothstep cutoffs, seeded type realizations and dependency indices J_n.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trafhom/util.hpp"

namespace trafhom {

// Free-road velocity profile: continuous piecewise-linear, zero up to the
// minimal spacing, increasing and concave up to h_max, constant after.
struct VelocityProfile {
    std::vector<double> breakpoints;  // strictly increasing, front() = delta_min
    std::vector<double> values;       // values.front() = 0, nondecreasing

    double operator()(double e) const;
    double inverse(double v) const;  // exact PL inversion, v in (0, max_velocity()]
    double max_velocity() const { return values.back(); }
    double h_max() const { return breakpoints.back(); }
    double slope_bound() const;

    // Structural checks: zero at delta_min, strictly increasing then flat,
    // concave, h_max within (delta_min, e_max]. Throws std::invalid_argument.
    void validate(double delta_min, double e_max) const;
};

struct VehicleType {
    std::string name;
    int route = 1;       // T(z) in {1..K}
    double weight = 1.0; // P[Z = z]
    // One profile per road 0..K. Most specs use the same profile on every
    // road; road_uniform records that (it decides the published radii).
    std::vector<VelocityProfile> road_profiles;
    bool road_uniform = true;
};

struct ModelSpec {
    std::string name;
    int roads = 1;  // K
    double delta_min = 1.0;
    double e_max = 3.0;
    double r0 = 4.0, r1 = 3.0, r2 = 2.0, r3 = 1.0;  // 0 < r3 < r2 < r1 < r0
    std::optional<double> kappa_explicit;
    std::vector<VehicleType> types;

    double route_weight(int k) const;  // pi^k (pi^0 = 1 by convention)
    bool road_uniform() const;
    // Slow-regime threshold; default min_z Vtilde_z(R1 - R2 + delta_min) / 2
    // with (R1, R2) as published by the example law.
    double kappa() const;
    double sup_velocity() const;  // ||V||_inf over types and roads

    void validate() const;  // throws std::invalid_argument with the failing check
};

class JunctionLaw;
namespace detail {
JunctionLaw build_law_unchecked(const ModelSpec& spec);
}

// The worked junction law: three smoothstep bands blending the free-road
// profile on road 0 into the outgoing-road profile.
class JunctionLaw {
  public:
    JunctionLaw() = default;

    // V_z(e1, e2, x)
    double operator()(int type, double e1, double e2, double x) const;
    double free_road_in(int type, double e1) const;   // Vtilde_z^0
    double free_road_out(int type, double e2) const;  // Vtilde_z^{T(z)}
    double profile(int type, int road, double e) const;

    double R0() const { return R0_; }
    double R1() const { return R1_; }
    double R2() const { return R2_; }
    double sup_velocity() const { return sup_v_; }
    double kappa() const { return kappa_; }
    bool junction_free() const { return junction_free_; }

    // Lipschitz bounds measured on the validation lattice, split between the
    // gap directions and the position direction.
    double gap_lipschitz() const { return gap_lip_; }
    double x_lipschitz() const { return x_lip_; }

    const ModelSpec& spec() const { return *spec_; }

    friend JunctionLaw build_example_law(const ModelSpec&);
    friend JunctionLaw build_control_law(const ModelSpec&);
    friend JunctionLaw detail::build_law_unchecked(const ModelSpec&);

  private:
    const ModelSpec* spec_ = nullptr;  // laws never outlive their spec
    double R0_ = 0, R1_ = 0, R2_ = 0;
    double delta_ = 0;
    double kappa_ = 0;
    double sup_v_ = 0;
    double gap_lip_ = 0, x_lip_ = 0;
    bool junction_free_ = false;  // control law: Vtilde_z^0(e1) everywhere

    double cutoff(int i, double x) const;  // xi_i, smoothstep on [-r_{i-1}, -r_i]
    void measure_lipschitz();
};

// Builds the worked law from a validated spec. Radii published as
// (r0, r1, r2) for road-uniform specs, (r0, r2, r3) otherwise.
JunctionLaw build_example_law(const ModelSpec& spec);

// Free-road law everywhere (no junction): V = Vtilde_z^0(e1) for all x.
JunctionLaw build_control_law(const ModelSpec& spec);

struct AssumptionViolation {
    std::string check;  // "monotone-e1", "stop-zone", "free-road-in", ...
    int type = 0;
    double e1 = 0, e2 = 0, x = 0;
    double detail = 0;  // violation magnitude
};

struct AssumptionReport {
    std::vector<AssumptionViolation> violations;
    long points_checked = 0;
    bool ok() const { return violations.empty(); }
};

// Grid-samples (e1, e2, x) on a documented lattice and checks monotonicity,
// stop zones, gap saturation, free-road exactness and the slow-regime
// position behavior.
AssumptionReport validate_assumptions(const JunctionLaw& law, const ModelSpec& spec);

// A seeded sample of the i.i.d. type sequence on an index window, with the
// same-route links l_i and l_i^{-1}. Types are a pure per-index function of
// (seed, i), so overlapping windows agree and shifts commute with sampling.
class Realization {
  public:
    std::uint64_t seed() const { return seed_; }
    long lo() const { return lo_; }
    long hi() const { return hi_; }          // requested window end
    long hi_sampled() const { return hi_ext_; }  // extended so l_i exists for i <= hi
    int roads() const { return roads_; }

    int type_at(long i) const;
    int route_at(long i) const;
    long next_same(long i) const;  // l_i, defined for i <= hi
    long prev_same(long i) const;  // l_i^{-1}, or lo()-1 when none sampled

    // sup{i <= m : T_i = k} within the sampled window; throws if none.
    long last_of_route_leq(int k, long m) const;
    // inf{i >= m : T_i = k} within the sampled window; throws if none.
    long first_of_route_geq(int k, long m) const;
    // #{j in [a, b] : T_j = k}
    long route_count(int k, long a, long b) const;

    // Truncated environment: types at i >= m replaced by the given per-route
    // slow type (routes, hence links, are unchanged).
    Realization truncated(long m, const std::vector<int>& z_min_per_route) const;

    friend Realization sample_realization(const ModelSpec&, std::uint64_t, long, long);

  private:
    std::uint64_t seed_ = 0;
    long lo_ = 0, hi_ = 0, hi_ext_ = 0;
    int roads_ = 1;
    std::vector<std::int16_t> type_;
    std::vector<std::int16_t> route_;
    std::vector<long> next_same_, prev_same_;
    std::vector<std::vector<long>> occ_;  // per-route occurrence lists, ascending
    std::size_t idx(long i) const;
};

// Deterministic in (seed, spec, window); extends past hi until every route
// appeared so l_i is defined on the whole window. The extension is capped at
// 64 * (min_k pi^k)^-1 * ln(window length) indices.
Realization sample_realization(const ModelSpec& spec, std::uint64_t seed, long lo, long hi);

// J_n(T) of the dependency recursion J_n = inf_k sup{i : T_i = k, l_i <= J_{n-1}}.
// Throws std::runtime_error on window underflow.
long propagation_index(const Realization& real, long T, long n);

struct AlphaEstimate {
    double alpha = 0.0;
    double ci_halfwidth = 0.0;
    int replicates = 0;
    long n = 0;
};

// Mean per-step drop of J_n over independent replicates: (T - J_n(T)) / n
// averaged over seeds, with a normal CI from replicate dispersion.
AlphaEstimate estimate_alpha(const ModelSpec& spec, std::uint64_t seed, int replicates, long n);

}  // namespace trafhom
