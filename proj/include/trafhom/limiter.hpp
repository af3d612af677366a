#pragma once

// Empirical flux limiter Abar = -lim theta_e(t)/t and the probabilistic
// diagnostics around it: concentration of theta, the corrector sequence
// outside the junction, the superadditive quantity Mbar and the m-truncated
// system.

#include <cstdint>
#include <vector>

#include "trafhom/micro_sim.hpp"

namespace trafhom {

struct LimiterEstimate {
    double A_hat = 0.0;          // -(LS slope of mean theta over [T/2, T])
    double A_hat_clamped = 0.0;  // reported value, clamped to [A0, 0]
    double ci = 0.0;             // max(replicate-dispersion CI, 2 x regression se)
    double T_est = 0.0;
    int replicates = 0;
    std::vector<double> slopes;  // per replicate
    ThetaCurve mean_curve;
    std::uint64_t seed = 0;
};

// R independent flat-datum runs to horizon T_est; the window is sized
// automatically unless window_total > 0 (split by the left-width rule).
// dt_scale shrinks the integrator step below its default, for the
// discretization-invariance check.
LimiterEstimate estimate_flux_limiter(const ModelSpec& spec, const JunctionLaw& law,
                                      const EffectiveModel& eff, int replicates, double T_est,
                                      std::uint64_t seed, int workers = 1, long window_total = 0,
                                      double dt_scale = 1.0);

struct ConcentrationReport {
    std::vector<double> times;
    std::vector<double> sigma;          // sample std of theta(t) across replicates
    std::vector<double> sigma_over_t;
    double loglog_slope = 0.0;          // LS slope of log sigma vs log t
    double loglog_slope_se = 0.0;
    int replicates = 0;
    bool degenerate = false;            // R < 2: no fit
};

ConcentrationReport concentration_diagnostic(const ModelSpec& spec, const JunctionLaw& law,
                                             const EffectiveModel& eff, int replicates,
                                             const std::vector<double>& times, std::uint64_t seed,
                                             int workers = 1);

struct CorrectorSequence {
    long anchor = 0;  // the environment is shifted by tau_anchor
    long n = 0;       // indices anchor-n .. anchor+n
    std::vector<double> w;  // W_j for j in [-n, n], W_0 = 0
    std::vector<int> route; // route of anchor+j (for the LLN check)

    double at(long j) const { return w[static_cast<std::size_t>(j + n)]; }
};

// Backward recursion below the anchor (profile inversion at v_e^0), forward
// recursion above it through the l^{-1} links at v_e^k.
CorrectorSequence build_corrector(const ModelSpec& spec, const Realization& real,
                                  const EffectiveModel& eff, long anchor, long n);

struct SuperadditivityReport {
    std::vector<double> h_grid;
    std::vector<double> k_eh;      // fitted tail slope of Mbar_{e,h}(t)/t per h
    std::vector<double> k_eh_se;
    std::vector<std::vector<double>> m_curves;  // Mbar on the curve's grid, per h
    std::vector<double> t_grid;
    // superadditivity defects Mbar(t+h) - Mbar(t) - Mbar(h) on grid pairs
    std::vector<double> defect_t, defect_h, defect;
    double k_e = 0.0;        // inf over the h grid
    bool k_negative = false; // dichotomy branch: k_e < -3 se
    double implied_A = 0.0;  // -(k_{e,h*} + h*) when k_negative, else A0
};

// Mbar_{e,h}(t) = inf_{s <= t} (thetabar(s) - h s) computed on the mean
// curve; per-h slopes fitted on the tail with jackknife standard errors
// from the replicate curves. Every h must satisfy h < -A0.
SuperadditivityReport superadditivity_diagnostic(const std::vector<ThetaCurve>& replicate_curves,
                                                 const EffectiveModel& eff,
                                                 const std::vector<double>& h_grid);

// theta^m of the truncated system: types replaced by z_min^k beyond m and the
// initial datum compressed per the truncation display.
struct TruncatedThetaResult {
    ThetaCurve theta;    // unmodified system
    ThetaCurve theta_m;  // truncated system
    long m = 0;
};

TruncatedThetaResult truncated_theta(const ModelSpec& spec, const JunctionLaw& law,
                                     const EffectiveModel& eff, long m, double T,
                                     std::uint64_t seed, long window_total = 0);

}  // namespace trafhom
