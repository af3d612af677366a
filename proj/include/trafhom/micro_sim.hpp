#pragma once

// Finite-window integration of the follow-the-leader system with the
// constant-speed right-boundary closure, plus the observables theta, N, nu, u
// and rho.

#include <functional>
#include <vector>

#include "trafhom/homog.hpp"
#include "trafhom/model.hpp"

namespace trafhom {

// Positions of a finite index window. Vehicles whose i+1 or l_i leaves the
// window see a per-route virtual leader moving at constant speed from a
// flat-datum anchor, so truncation errors decay geometrically inward.
// The left side needs no closure: a vehicle depends only on higher indices.
struct WindowState {
    long i_lo = 0, i_hi = 0;
    double t = 0.0;
    std::vector<double> pos;           // size i_hi - i_lo + 1
    const Realization* real = nullptr; // non-owning

    std::vector<long> closure_index;    // per route 1..K: first index past i_hi
    std::vector<double> closure_anchor; // its position at t = 0
    std::vector<double> closure_speed;  // constant speed

    double at(long i) const { return pos[static_cast<std::size_t>(i - i_lo)]; }
    double& at(long i) { return pos[static_cast<std::size_t>(i - i_lo)]; }
    bool in_window(long i) const { return i >= i_lo && i <= i_hi; }
    double leader_pos(long j, double t_abs) const;  // in-window or virtual
};

struct SimConfig {
    double dt = 0.05;
    double horizon = 0.0;
    std::vector<double> sample_times;
    double tau_ord = 1e-6;
    int max_halvings = 8;
};

// dt <= min(delta_min / (4 ||V||_inf), 1 / (4 L)) with L the law's measured
// Lipschitz bound, then refined to divide the sample spacing exactly.
SimConfig make_sim_config(const JunctionLaw& law, double horizon, int n_samples);

// Auto window sizing for theta runs: left = ceil(2 ||V|| T / delta_min) + 64,
// right = ceil(8 ||V|| T / delta_min) + 64 (see README on the closure wave
// argument; checked at runtime by the doubling-margin invariance test).
struct WindowExtent {
    long lo = 0;
    long hi = 0;
};
WindowExtent sized_window(const JunctionLaw& law, double horizon);

// Flat initial datum U_i = e^0 i (i <= 0), e^{T_i} i (i >= 0), with closure
// anchored on its extrapolation at speeds v_e^k. Spacings must exceed
// delta_min on every road.
WindowState flat_initial_condition(const Realization& real, const EffectiveModel& eff,
                                   const std::vector<double>& spacings, long i_lo, long i_hi);

struct CompatibilityReport {
    struct Failure {
        long index = 0;
        double gap = 0.0;
        bool same_route_link = false;
    };
    std::vector<Failure> failures;
    bool ok() const { return failures.empty(); }
};

// Spacing compatibility: U_{i+1} >= U_i + delta_min wherever U_{i+1} <= -R2,
// and U_{l_i} >= U_i + delta_min for every i with l_i in window.
CompatibilityReport check_compatibility(const WindowState& state, const JunctionLaw& law);

// Velocity of every window index at the state's own time. Outside [-R0, 0]
// the law reduces exactly to a single profile and is evaluated as such.
void rhs(const WindowState& state, const JunctionLaw& law, std::vector<double>& out);

struct RunStats {
    double min_step_velocity = 0.0;   // min over steps/indices of step-averaged dU/dt
    double worst_ordering_slack = 0.0;  // min over audited gaps of (gap - delta_min)
    long steps = 0;
    long halvings = 0;
};

using SampleObserver = std::function<void(const WindowState&)>;

// Classical fixed-step RK4 with a per-step ordering audit; an offending step
// is retried at halved dt (at most max_halvings deep), then the run errors.
RunStats integrate(WindowState& state, const JunctionLaw& law, const SimConfig& cfg,
                   const SampleObserver& on_sample);

// theta_e(t) = inf{i >= 0 : U_{-i}(t) <= 0}; prev is the value at an earlier
// time (theta is nondecreasing). Throws when the window is exhausted, with
// the required width in the message.
long theta_of_state(const WindowState& state, long prev = 0);

struct ThetaCurve {
    std::vector<double> t;
    std::vector<double> theta;
};

// Convenience run: flat datum, integrate, record theta on the sample grid.
ThetaCurve run_theta(const Realization& real, const JunctionLaw& law, const EffectiveModel& eff,
                     const SimConfig& cfg, long i_lo, long i_hi, RunStats* stats = nullptr);

// Scaled observables on an x-grid at one sample time set.
struct ObservableTrace {
    double epsilon = 0.0;
    std::vector<double> times;   // macroscopic times
    std::vector<double> x_grid;  // macroscopic positions
    // nu[ti][k][xi]; k = 0 only meaningful for x <= 0
    std::vector<std::vector<std::vector<double>>> nu;
    // rho[ti][k][xi]: minus the discrete x-difference quotient of nu
    std::vector<std::vector<std::vector<double>>> rho;
    std::vector<double> theta;  // microscopic theta at times/epsilon
};

// Two-sum crossing count N(x, k, t); k = 0 sums the route branches.
long count_N(const WindowState& state, double x, int k);

// u^eps(y, k, t) = eps * U_{[y/eps]_k}(t/eps).
double u_scaled(const WindowState& state, double y, int k, double epsilon);

// Runs the micro system to horizon max(times)/epsilon and fills nu, rho and
// theta. The x-grid must stay inside the covered region (throws otherwise).
ObservableTrace observables(const Realization& real, const JunctionLaw& law,
                            const EffectiveModel& eff, double epsilon,
                            const std::vector<double>& times, const std::vector<double>& x_grid,
                            long i_lo, long i_hi);

struct FiniteSpeedResult {
    double max_deviation = 0.0;    // max over i <= J_n(i0+L), t of (U_i - Utilde_i)_+
    double bound_scale = 0.0;      // 2^-n e^{beta T} with beta = gamma + 2 C1
    long j_n = 0;
};

// Finite-speed-of-propagation check: integrates two ordered initial data
// (displaced >= base, the excess sitting at or above i0 + L) over [0, T] and
// measures how much of it leaks below the dependency index J_n(i0 + L).
FiniteSpeedResult finite_speed_check(const Realization& real, const JunctionLaw& law,
                                     const EffectiveModel& eff, const WindowState& base,
                                     const WindowState& displaced, long i0, long L, long n,
                                     double T);

}  // namespace trafhom
