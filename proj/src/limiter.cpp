#include "trafhom/limiter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

namespace trafhom {

namespace {

// Deterministic replicate fan-out: results land in slot r regardless of the
// thread schedule.
void parallel_replicates(int replicates, int workers,
                         const std::function<void(int)>& run_one) {
    if (workers <= 1) {
        for (int r = 0; r < replicates; ++r) run_one(r);
        return;
    }
    std::mutex mu;
    int next = 0;
    auto worker = [&] {
        for (;;) {
            int r;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= replicates) return;
                r = next++;
            }
            run_one(r);
        }
    };
    std::vector<std::thread> pool;
    const int n = std::min(workers, replicates);
    pool.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

ThetaCurve one_theta_run(const ModelSpec& spec, const JunctionLaw& law, const EffectiveModel& eff,
                         double T, std::uint64_t seed, long window_total, int n_samples,
                         double dt_scale = 1.0) {
    WindowExtent w = sized_window(law, T);
    if (window_total > 0) {
        // split an explicit total by the left-width rule
        const long left = std::min<long>(
            window_total - 1,
            static_cast<long>(std::ceil(2.0 * law.sup_velocity() * T / spec.delta_min)) + 64);
        w.lo = -left;
        w.hi = window_total - left - 1;
    }
    Realization real = sample_realization(spec, seed, w.lo, w.hi);
    SimConfig cfg = make_sim_config(law, T, n_samples);
    cfg.dt *= dt_scale;
    return run_theta(real, law, eff, cfg, w.lo, w.hi);
}

// LS slope of the curve over [T/2, T].
LineFit tail_fit(const ThetaCurve& c) {
    const double T = c.t.back();
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < c.t.size(); ++i)
        if (c.t[i] >= T / 2.0 - 1e-12) {
            xs.push_back(c.t[i]);
            ys.push_back(c.theta[i]);
        }
    return fit_line(xs, ys);
}

}  // namespace

LimiterEstimate estimate_flux_limiter(const ModelSpec& spec, const JunctionLaw& law,
                                      const EffectiveModel& eff, int replicates, double T_est,
                                      std::uint64_t seed, int workers, long window_total,
                                      double dt_scale) {
    if (replicates < 8) throw std::invalid_argument("estimate_flux_limiter: need R >= 8");
    if (!(dt_scale > 0.0) || dt_scale > 1.0)
        throw std::invalid_argument("estimate_flux_limiter: dt_scale must be in (0, 1]");
    const int n_samples = 256;

    std::vector<ThetaCurve> curves(static_cast<std::size_t>(replicates));
    parallel_replicates(replicates, workers, [&](int r) {
        curves[static_cast<std::size_t>(r)] =
            one_theta_run(spec, law, eff, T_est, replicate_seed(seed, static_cast<std::uint64_t>(r)),
                          window_total, n_samples, dt_scale);
    });

    LimiterEstimate est;
    est.T_est = T_est;
    est.replicates = replicates;
    est.seed = seed;
    est.mean_curve.t = curves[0].t;
    est.mean_curve.theta.assign(curves[0].theta.size(), 0.0);
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.theta.size(); ++i)
            est.mean_curve.theta[i] += c.theta[i] / static_cast<double>(replicates);

    for (const auto& c : curves) est.slopes.push_back(tail_fit(c).slope);
    const LineFit mean_fit = tail_fit(est.mean_curve);
    const MeanCi disp = mean_ci(est.slopes);

    est.A_hat = -mean_fit.slope;
    // The dispersion CI collapses for deterministic models; the regression se
    // is the honest noise floor there.
    est.ci = std::max(disp.ci_halfwidth, 2.0 * mean_fit.slope_se);
    est.A_hat_clamped = std::min(0.0, std::max(eff.A0, est.A_hat));
    return est;
}

ConcentrationReport concentration_diagnostic(const ModelSpec& spec, const JunctionLaw& law,
                                             const EffectiveModel& eff, int replicates,
                                             const std::vector<double>& times, std::uint64_t seed,
                                             int workers) {
    if (times.empty()) throw std::invalid_argument("concentration_diagnostic: no times");
    ConcentrationReport rep;
    rep.times = times;
    rep.replicates = replicates;
    if (replicates < 2) {
        rep.degenerate = true;
        return rep;
    }
    const double T = *std::max_element(times.begin(), times.end());

    std::vector<std::vector<double>> theta_at(times.size());
    for (auto& v : theta_at) v.assign(static_cast<std::size_t>(replicates), 0.0);

    parallel_replicates(replicates, workers, [&](int r) {
        WindowExtent w = sized_window(law, T);
        Realization real =
            sample_realization(spec, replicate_seed(seed, static_cast<std::uint64_t>(r)), w.lo, w.hi);
        SimConfig cfg = make_sim_config(law, T, 1);
        cfg.sample_times = times;
        if (times.front() > 0.0) cfg.sample_times.insert(cfg.sample_times.begin(), 0.0);
        ThetaCurve c = run_theta(real, law, eff, cfg, w.lo, w.hi);
        for (std::size_t ti = 0; ti < times.size(); ++ti)
            for (std::size_t j = 0; j < c.t.size(); ++j)
                if (std::abs(c.t[j] - times[ti]) < 1e-9)
                    theta_at[ti][static_cast<std::size_t>(r)] = c.theta[j];
    });

    std::vector<double> log_t, log_sigma;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        double m = 0.0;
        for (double v : theta_at[ti]) m += v;
        m /= static_cast<double>(replicates);
        double ss = 0.0;
        for (double v : theta_at[ti]) ss += (v - m) * (v - m);
        const double sigma = std::sqrt(ss / static_cast<double>(replicates - 1));
        rep.sigma.push_back(sigma);
        rep.sigma_over_t.push_back(sigma / times[ti]);
        if (sigma > 0.0) {
            log_t.push_back(std::log(times[ti]));
            log_sigma.push_back(std::log(sigma));
        }
    }
    if (log_t.size() >= 2) {
        const LineFit fit = fit_line(log_t, log_sigma);
        rep.loglog_slope = fit.slope;
        rep.loglog_slope_se = fit.slope_se;
    } else {
        rep.degenerate = true;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// corrector

CorrectorSequence build_corrector(const ModelSpec& spec, const Realization& real,
                                  const EffectiveModel& eff, long anchor, long n) {
    if (anchor - n < real.lo() || anchor + n > real.hi_sampled())
        throw std::invalid_argument("build_corrector: window does not cover [anchor-n, anchor+n]");
    CorrectorSequence cs;
    cs.anchor = anchor;
    cs.n = n;
    cs.w.assign(static_cast<std::size_t>(2 * n + 1), 0.0);
    cs.route.assign(static_cast<std::size_t>(2 * n + 1), 0);
    for (long j = -n; j <= n; ++j)
        cs.route[static_cast<std::size_t>(j + n)] = real.route_at(anchor + j);

    auto profile_of = [&](long abs_i, int road) -> const VelocityProfile& {
        const int z = real.type_at(abs_i);
        return spec.types[static_cast<std::size_t>(z)].road_profiles[static_cast<std::size_t>(road)];
    };

    // backward: Vtilde_{Z_j}^0(W_{j+1} - W_j) = v_e^0 for j < 0
    const double ve0 = eff.roads[0].v_e;
    for (long j = -1; j >= -n; --j)
        cs.w[static_cast<std::size_t>(j + n)] =
            cs.w[static_cast<std::size_t>(j + 1 + n)] - profile_of(anchor + j, 0).inverse(ve0);

    // forward: through the l^{-1} links at v_e^k, zero when the link is below
    // the anchor
    for (long j = 1; j <= n; ++j) {
        const long prev_abs = real.prev_same(anchor + j);
        const long jp = prev_abs - anchor;  // < 0 also when nothing is sampled below
        if (jp < 0) {
            cs.w[static_cast<std::size_t>(j + n)] = 0.0;
            continue;
        }
        const int k = real.route_at(anchor + j);
        const double vek = eff.roads[static_cast<std::size_t>(k)].v_e;
        cs.w[static_cast<std::size_t>(j + n)] =
            cs.w[static_cast<std::size_t>(jp + n)] + profile_of(prev_abs, k).inverse(vek);
    }
    return cs;
}

SuperadditivityReport superadditivity_diagnostic(const std::vector<ThetaCurve>& replicate_curves,
                                                 const EffectiveModel& eff,
                                                 const std::vector<double>& h_grid) {
    if (replicate_curves.empty())
        throw std::invalid_argument("superadditivity_diagnostic: no curves");
    for (double h : h_grid)
        if (!(h < -eff.A0))
            throw std::invalid_argument("superadditivity_diagnostic: need h < -A0");

    const std::size_t R = replicate_curves.size();
    const std::vector<double>& t = replicate_curves[0].t;
    SuperadditivityReport rep;
    rep.h_grid = h_grid;
    rep.t_grid = t;

    // mean curve and leave-one-out means for jackknife slope errors
    std::vector<double> mean(t.size(), 0.0);
    for (const auto& c : replicate_curves)
        for (std::size_t i = 0; i < t.size(); ++i) mean[i] += c.theta[i] / static_cast<double>(R);

    auto m_curve = [&](const std::vector<double>& theta, double h) {
        std::vector<double> m(theta.size());
        double running = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            running = std::min(running, theta[i] - h * t[i]);
            m[i] = std::min(running, 0.0);
        }
        return m;
    };
    auto tail_slope = [&](const std::vector<double>& m) {
        std::vector<double> xs, ys;
        const double T = t.back();
        for (std::size_t i = 0; i < t.size(); ++i)
            if (t[i] >= T / 2.0 - 1e-12) {
                xs.push_back(t[i]);
                ys.push_back(m[i]);
            }
        return fit_line(xs, ys).slope;
    };

    double best_k = std::numeric_limits<double>::infinity();
    std::size_t best_h = 0;
    std::vector<double> best_se_store;
    for (std::size_t hi = 0; hi < h_grid.size(); ++hi) {
        const double h = h_grid[hi];
        const std::vector<double> m = m_curve(mean, h);
        rep.m_curves.push_back(m);
        const double k = tail_slope(m);
        // jackknife over replicates
        double se = 0.0;
        if (R >= 2) {
            std::vector<double> loo_slopes;
            for (std::size_t drop = 0; drop < R; ++drop) {
                std::vector<double> loo(t.size(), 0.0);
                for (std::size_t i = 0; i < t.size(); ++i)
                    loo[i] = (mean[i] * static_cast<double>(R) - replicate_curves[drop].theta[i]) /
                             static_cast<double>(R - 1);
                loo_slopes.push_back(tail_slope(m_curve(loo, h)));
            }
            double lm = 0.0;
            for (double s : loo_slopes) lm += s / static_cast<double>(R);
            double ss = 0.0;
            for (double s : loo_slopes) ss += (s - lm) * (s - lm);
            se = std::sqrt(ss * static_cast<double>(R - 1) / static_cast<double>(R));
        }
        rep.k_eh.push_back(k);
        rep.k_eh_se.push_back(se);
        if (k < best_k) {
            best_k = k;
            best_h = hi;
        }
    }
    rep.k_e = best_k;
    const double se_star = rep.k_eh_se[best_h];
    rep.k_negative = best_k < -3.0 * se_star;
    rep.implied_A = rep.k_negative ? -(rep.k_eh[best_h] + h_grid[best_h]) : eff.A0;

    // superadditivity defects of the mean-curve Mbar at the largest h
    const std::vector<double>& m = rep.m_curves[best_h];
    auto m_at = [&](double tt) {
        // t grid is uniform enough for linear interpolation
        if (tt <= t.front()) return m.front();
        if (tt >= t.back()) return m.back();
        std::size_t lo = 0, hi2 = t.size() - 1;
        while (hi2 - lo > 1) {
            const std::size_t mid = (lo + hi2) / 2;
            if (t[mid] <= tt) lo = mid; else hi2 = mid;
        }
        const double w = (tt - t[lo]) / (t[lo + 1] - t[lo]);
        return m[lo] + w * (m[lo + 1] - m[lo]);
    };
    for (int a = 1; a <= 8; ++a)
        for (int b = a; a + b <= 10; ++b) {
            const double ta = t.back() * a / 10.0, tb = t.back() * b / 10.0;
            rep.defect_t.push_back(tb);
            rep.defect_h.push_back(ta);
            rep.defect.push_back(m_at(ta + tb) - m_at(ta) - m_at(tb));
        }
    return rep;
}

// ---------------------------------------------------------------------------
// truncated system

TruncatedThetaResult truncated_theta(const ModelSpec& spec, const JunctionLaw& law,
                                     const EffectiveModel& eff, long m, double T,
                                     std::uint64_t seed, long window_total) {
    if (m < 2) throw std::invalid_argument("truncated_theta: m must be >= 2");
    WindowExtent w = sized_window(law, T);
    if (window_total > 0) {
        const long left = std::min<long>(
            window_total - 1,
            static_cast<long>(std::ceil(2.0 * law.sup_velocity() * T / spec.delta_min)) + 64);
        w.lo = -left;
        w.hi = window_total - left - 1;
    }
    Realization real = sample_realization(spec, seed, w.lo, w.hi);
    SimConfig cfg = make_sim_config(law, T, 128);

    TruncatedThetaResult out;
    out.m = m;
    out.theta = run_theta(real, law, eff, cfg, w.lo, w.hi);

    if (m > w.hi) {
        // no modification inside the window: theta^m = theta exactly
        out.theta_m = out.theta;
        return out;
    }

    // modified environment: route preserved, type swapped to z_min^k past m
    std::vector<int> zmins(static_cast<std::size_t>(eff.K) + 1, 0);
    for (int k = 1; k <= eff.K; ++k)
        zmins[static_cast<std::size_t>(k)] = eff.roads[static_cast<std::size_t>(k)].z_min;
    Realization trunc = real.truncated(m, zmins);

    const auto spacings = eff.flat_spacings();
    WindowState s;
    s.i_lo = w.lo;
    s.i_hi = w.hi;
    s.t = 0.0;
    s.real = &trunc;
    s.pos.resize(static_cast<std::size_t>(w.hi - w.lo + 1));
    for (long i = w.lo; i <= w.hi; ++i) {
        if (i <= 0) {
            s.at(i) = spacings[0] * static_cast<double>(i);
        } else {
            const int k = trunc.route_at(i);
            const double ek = spacings[static_cast<std::size_t>(k)];
            if (i <= m - 1) {
                s.at(i) = ek * static_cast<double>(i);
            } else {
                // e^{T_i}(m-1) + e^{T_i} #{j in {m..i} : T_j = T_i}
                s.at(i) = ek * static_cast<double>(m - 1) +
                          ek * static_cast<double>(trunc.route_count(k, m, i));
            }
        }
    }
    const int K = eff.K;
    s.closure_index.assign(static_cast<std::size_t>(K) + 1, 0);
    s.closure_anchor.assign(static_cast<std::size_t>(K) + 1, 0.0);
    s.closure_speed.assign(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 1; k <= K; ++k) {
        const long j = trunc.first_of_route_geq(k, w.hi + 1);
        const double ek = spacings[static_cast<std::size_t>(k)];
        s.closure_index[static_cast<std::size_t>(k)] = j;
        s.closure_anchor[static_cast<std::size_t>(k)] =
            ek * static_cast<double>(m - 1) + ek * static_cast<double>(trunc.route_count(k, m, j));
        // the compressed slow chain moves at exactly Vtilde_{z_min^k}(e^k)
        const int zmin = eff.roads[static_cast<std::size_t>(k)].z_min;
        s.closure_speed[static_cast<std::size_t>(k)] = law.profile(zmin, k, ek);
    }

    ThetaCurve curve;
    long prev = 0;
    integrate(s, law, cfg, [&](const WindowState& st) {
        prev = theta_of_state(st, prev);
        curve.t.push_back(st.t);
        curve.theta.push_back(static_cast<double>(prev));
    });
    out.theta_m = curve;
    return out;
}

}  // namespace trafhom
