#include "trafhom/micro_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace trafhom {

// ---------------------------------------------------------------------------
// WindowState

double WindowState::leader_pos(long j, double t_abs) const {
    if (in_window(j)) return at(j);
    const int r = real->route_at(j);
    return closure_anchor[static_cast<std::size_t>(r)] +
           closure_speed[static_cast<std::size_t>(r)] * t_abs;
}

// ---------------------------------------------------------------------------
// configuration and window sizing

SimConfig make_sim_config(const JunctionLaw& law, double horizon, int n_samples) {
    SimConfig cfg;
    const double d = law.spec().delta_min;
    const double L = std::max(law.gap_lipschitz(), law.x_lipschitz());
    cfg.dt = std::min(d / (4.0 * law.sup_velocity()), 1.0 / (4.0 * std::max(L, 1e-12)));
    cfg.horizon = horizon;
    cfg.tau_ord = 1e-6 * d;
    if (n_samples < 1) n_samples = 1;
    cfg.sample_times.resize(static_cast<std::size_t>(n_samples) + 1);
    for (int i = 0; i <= n_samples; ++i)
        cfg.sample_times[static_cast<std::size_t>(i)] = horizon * i / n_samples;
    return cfg;
}

WindowExtent sized_window(const JunctionLaw& law, double horizon) {
    const double base = law.sup_velocity() * horizon / law.spec().delta_min;
    WindowExtent w;
    w.lo = -(static_cast<long>(std::ceil(2.0 * base)) + 64);
    w.hi = static_cast<long>(std::ceil(8.0 * base)) + 64;
    return w;
}

// ---------------------------------------------------------------------------
// initial data

WindowState flat_initial_condition(const Realization& real, const EffectiveModel& eff,
                                   const std::vector<double>& spacings, long i_lo, long i_hi) {
    if (spacings.size() != eff.roads.size())
        throw std::invalid_argument("flat datum: need one spacing per road 0..K");
    const double d = eff.roads[0].v_bar.xs.front();  // delta_min
    for (std::size_t k = 0; k < spacings.size(); ++k)
        if (!(spacings[k] > d)) {
            std::ostringstream os;
            os << "flat datum: spacing " << spacings[k] << " on road " << k
               << " does not exceed delta_min = " << d;
            throw std::invalid_argument(os.str());
        }
    if (i_lo < real.lo() || i_hi > real.hi())
        throw std::invalid_argument("flat datum: window exceeds the sampled realization");

    WindowState s;
    s.i_lo = i_lo;
    s.i_hi = i_hi;
    s.t = 0.0;
    s.real = &real;
    s.pos.resize(static_cast<std::size_t>(i_hi - i_lo + 1));
    for (long i = i_lo; i <= i_hi; ++i) {
        const double e = i <= 0 ? spacings[0] : spacings[static_cast<std::size_t>(real.route_at(i))];
        s.at(i) = e * static_cast<double>(i);
    }
    const int K = eff.K;
    s.closure_index.assign(static_cast<std::size_t>(K) + 1, 0);
    s.closure_anchor.assign(static_cast<std::size_t>(K) + 1, 0.0);
    s.closure_speed.assign(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 1; k <= K; ++k) {
        const long j = real.first_of_route_geq(k, i_hi + 1);
        const auto& road = eff.roads[static_cast<std::size_t>(k)];
        s.closure_index[static_cast<std::size_t>(k)] = j;
        s.closure_anchor[static_cast<std::size_t>(k)] = spacings[static_cast<std::size_t>(k)] * static_cast<double>(j);
        s.closure_speed[static_cast<std::size_t>(k)] = road.v_bar(spacings[static_cast<std::size_t>(k)] / road.pi);
    }
    return s;
}

CompatibilityReport check_compatibility(const WindowState& state, const JunctionLaw& law) {
    CompatibilityReport rep;
    const double d = law.spec().delta_min;
    for (long i = state.i_lo; i < state.i_hi; ++i) {
        if (state.at(i + 1) <= -law.R2()) {
            const double gap = state.at(i + 1) - state.at(i);
            if (gap < d) rep.failures.push_back({i, gap, false});
        }
        const long li = state.real->next_same(i);
        if (li <= state.i_hi) {
            const double gap = state.at(li) - state.at(i);
            if (gap < d) rep.failures.push_back({i, gap, true});
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// right-hand side

namespace {

// Per-index leader links resolved once per run. In-window leaders store the
// index; virtual leaders of route r store i_lo - 1 - r (strictly below the
// window so the two cases cannot collide).
struct SimPlan {
    std::vector<int> type;
    std::vector<long> lead1;
    std::vector<long> lead2;
};

SimPlan make_plan(const WindowState& s) {
    SimPlan plan;
    const std::size_t n = s.pos.size();
    plan.type.resize(n);
    plan.lead1.resize(n);
    plan.lead2.resize(n);
    const auto virtual_code = [&](int route) { return s.i_lo - 1 - static_cast<long>(route); };
    for (long i = s.i_lo; i <= s.i_hi; ++i) {
        const std::size_t off = static_cast<std::size_t>(i - s.i_lo);
        plan.type[off] = s.real->type_at(i);
        plan.lead1[off] = i + 1 <= s.i_hi ? i + 1 : virtual_code(s.real->route_at(i + 1));
        const long li = s.real->next_same(i);
        plan.lead2[off] = li <= s.i_hi ? li : virtual_code(s.real->route_at(i));
    }
    return plan;
}

inline double resolve(const WindowState& s, const std::vector<double>& pos, long code,
                      double t_abs) {
    if (code >= s.i_lo) return pos[static_cast<std::size_t>(code - s.i_lo)];
    const std::size_t r = static_cast<std::size_t>(s.i_lo - 1 - code);
    return s.closure_anchor[r] + s.closure_speed[r] * t_abs;
}

void rhs_impl(const SimPlan& plan, const WindowState& s, const std::vector<double>& pos,
              double t_abs, const JunctionLaw& law, std::vector<double>& out) {
    const double R0 = law.R0();
    const bool free = law.junction_free();
    const std::size_t n = pos.size();
    out.resize(n);
    for (std::size_t off = 0; off < n; ++off) {
        const double x = pos[off];
        const int z = plan.type[off];
        if (free || x <= -R0) {
            const double e1 = resolve(s, pos, plan.lead1[off], t_abs) - x;
            out[off] = law.free_road_in(z, e1);
        } else if (x >= 0.0) {
            const double e2 = resolve(s, pos, plan.lead2[off], t_abs) - x;
            out[off] = law.free_road_out(z, e2);
        } else {
            const double e1 = resolve(s, pos, plan.lead1[off], t_abs) - x;
            const double e2 = resolve(s, pos, plan.lead2[off], t_abs) - x;
            out[off] = law(z, e1, e2, x);
        }
    }
}

struct OrderingAudit {
    double slack = std::numeric_limits<double>::infinity();
    long index = 0;
    bool same_route_link = false;
};

// min over audited gaps of (gap - delta_min); audits the same-route links and
// the consecutive pairs in the ordered zone before -R2.
OrderingAudit ordering_slack(const SimPlan& plan, const WindowState& s, const JunctionLaw& law) {
    const double d = law.spec().delta_min;
    const double R2 = law.R2();
    OrderingAudit audit;
    for (long i = s.i_lo; i <= s.i_hi; ++i) {
        const std::size_t off = static_cast<std::size_t>(i - s.i_lo);
        if (i < s.i_hi && (s.at(i) <= -R2 || s.at(i + 1) <= -R2)) {
            const double sl = s.at(i + 1) - s.at(i) - d;
            if (sl < audit.slack) audit = {sl, i, false};
        }
        const long l2 = plan.lead2[off];
        if (l2 >= s.i_lo) {
            const double sl = s.at(l2) - s.at(i) - d;
            if (sl < audit.slack) audit = {sl, i, true};
        }
    }
    return audit;
}

struct Rk4Buffers {
    std::vector<double> k1, k2, k3, k4, stage, save;
};

void rk4_step(const SimPlan& plan, WindowState& s, const JunctionLaw& law, double dt,
              Rk4Buffers& b) {
    const std::size_t n = s.pos.size();
    rhs_impl(plan, s, s.pos, s.t, law, b.k1);
    b.stage.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.stage[i] = s.pos[i] + 0.5 * dt * b.k1[i];
    rhs_impl(plan, s, b.stage, s.t + 0.5 * dt, law, b.k2);
    for (std::size_t i = 0; i < n; ++i) b.stage[i] = s.pos[i] + 0.5 * dt * b.k2[i];
    rhs_impl(plan, s, b.stage, s.t + 0.5 * dt, law, b.k3);
    for (std::size_t i = 0; i < n; ++i) b.stage[i] = s.pos[i] + dt * b.k3[i];
    rhs_impl(plan, s, b.stage, s.t + dt, law, b.k4);
    for (std::size_t i = 0; i < n; ++i)
        s.pos[i] += dt / 6.0 * (b.k1[i] + 2.0 * (b.k2[i] + b.k3[i]) + b.k4[i]);
    s.t += dt;
}

// One committed step of size dt, retried at halved dt on an ordering
// violation; returns the number of halvings spent.
long guarded_step(const SimPlan& plan, WindowState& s, const JunctionLaw& law, double dt,
                  const SimConfig& cfg, int depth, Rk4Buffers& b, RunStats& stats) {
    b.save = s.pos;
    const double t_save = s.t;
    rk4_step(plan, s, law, dt, b);
    const OrderingAudit audit = ordering_slack(plan, s, law);
    stats.worst_ordering_slack = std::min(stats.worst_ordering_slack, audit.slack);
    if (audit.slack >= -cfg.tau_ord) {
        double vmin = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < s.pos.size(); ++i)
            vmin = std::min(vmin, (s.pos[i] - b.save[i]) / dt);
        stats.min_step_velocity = std::min(stats.min_step_velocity, vmin);
        return 0;
    }
    if (depth >= cfg.max_halvings) {
        std::ostringstream os;
        os << "integrate: ordering violation of " << -audit.slack << " at t = " << s.t
           << " (index " << audit.index << ", " << (audit.same_route_link ? "l-link" : "consecutive")
           << " gap, position " << s.at(audit.index) << ") persists after " << cfg.max_halvings
           << " step halvings";
        throw std::runtime_error(os.str());
    }
    s.pos = b.save;
    s.t = t_save;
    long halved = 1;
    halved += guarded_step(plan, s, law, dt / 2.0, cfg, depth + 1, b, stats);
    halved += guarded_step(plan, s, law, dt / 2.0, cfg, depth + 1, b, stats);
    return halved;
}

}  // namespace

void rhs(const WindowState& state, const JunctionLaw& law, std::vector<double>& out) {
    const SimPlan plan = make_plan(state);
    rhs_impl(plan, state, state.pos, state.t, law, out);
}

RunStats integrate(WindowState& state, const JunctionLaw& law, const SimConfig& cfg,
                   const SampleObserver& on_sample) {
    RunStats stats;
    stats.min_step_velocity = std::numeric_limits<double>::infinity();
    stats.worst_ordering_slack = std::numeric_limits<double>::infinity();
    const SimPlan plan = make_plan(state);
    Rk4Buffers buffers;

    std::vector<double> samples = cfg.sample_times;
    std::sort(samples.begin(), samples.end());
    for (double target : samples) {
        if (target < state.t - 1e-12) continue;
        const double gap = target - state.t;
        const long nsteps = std::max(1L, static_cast<long>(std::ceil(gap / cfg.dt - 1e-12)));
        if (gap > 1e-12) {
            const double dt = gap / static_cast<double>(nsteps);
            for (long k = 0; k < nsteps; ++k) {
                stats.halvings += guarded_step(plan, state, law, dt, cfg, 0, buffers, stats);
                ++stats.steps;
            }
            state.t = target;  // kill accumulated rounding
        }
        if (on_sample) on_sample(state);
    }
    if (stats.min_step_velocity == std::numeric_limits<double>::infinity())
        stats.min_step_velocity = 0.0;
    return stats;
}

// ---------------------------------------------------------------------------
// theta

long theta_of_state(const WindowState& state, long prev) {
    long i = std::max(prev, 0L);
    for (;;) {
        if (-i < state.i_lo) {
            std::ostringstream os;
            os << "theta: left window exhausted at t = " << state.t << " (i_lo = " << state.i_lo
               << "); widen the window (rule: ceil(2 ||V|| T / delta_min) + 64 indices)";
            throw std::runtime_error(os.str());
        }
        if (state.at(-i) <= 0.0) return i;
        ++i;
    }
}

ThetaCurve run_theta(const Realization& real, const JunctionLaw& law, const EffectiveModel& eff,
                     const SimConfig& cfg, long i_lo, long i_hi, RunStats* stats_out) {
    WindowState s = flat_initial_condition(real, eff, eff.flat_spacings(), i_lo, i_hi);
    ThetaCurve curve;
    long prev = 0;
    RunStats stats = integrate(s, law, cfg, [&](const WindowState& st) {
        prev = theta_of_state(st, prev);
        curve.t.push_back(st.t);
        curve.theta.push_back(static_cast<double>(prev));
    });
    if (stats_out) *stats_out = stats;
    return curve;
}

// ---------------------------------------------------------------------------
// observables

long count_N(const WindowState& state, double x, int k) {
    long n = 0;
    if (k == 0) {
        for (long i = state.i_lo; i <= 0; ++i)
            if (state.at(i) > x) ++n;
        return n;
    }
    for (long i = state.i_lo; i <= std::min(0L, state.i_hi); ++i)
        if (state.real->route_at(i) == k && state.at(i) > x) ++n;
    for (long i = 1; i <= state.i_hi; ++i)
        if (state.real->route_at(i) == k && state.at(i) <= x) --n;
    return n;
}

double u_scaled(const WindowState& state, double y, int k, double epsilon) {
    const long m = static_cast<long>(std::floor(y / epsilon));
    const long i = state.real->last_of_route_leq(k, m);
    if (!state.in_window(i)) throw std::runtime_error("u_scaled: index outside window");
    return epsilon * state.at(i);
}

ObservableTrace observables(const Realization& real, const JunctionLaw& law,
                            const EffectiveModel& eff, double epsilon,
                            const std::vector<double>& times, const std::vector<double>& x_grid,
                            long i_lo, long i_hi) {
    if (times.empty() || x_grid.empty()) throw std::invalid_argument("observables: empty grids");
    for (std::size_t i = 0; i + 1 < x_grid.size(); ++i)
        if (!(x_grid[i + 1] > x_grid[i])) throw std::invalid_argument("observables: x-grid not increasing");

    const double T_micro = *std::max_element(times.begin(), times.end()) / epsilon;
    const double x_min = x_grid.front() / epsilon, x_max = x_grid.back() / epsilon;
    const auto spacings = eff.flat_spacings();

    // coverage: untracked i < i_lo must stay below the grid, untracked
    // i > i_hi must stay above it
    const double left_reach = spacings[0] * static_cast<double>(i_lo) + law.sup_velocity() * T_micro;
    double emin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < spacings.size(); ++k) emin = std::min(emin, spacings[k]);
    const double right_reach = emin * static_cast<double>(i_hi + 1);
    if (left_reach >= x_min || right_reach <= x_max) {
        std::ostringstream os;
        os << "observables: x-grid outside covered region (need i_lo <= "
           << (x_min - law.sup_velocity() * T_micro) / spacings[0] << ", i_hi >= "
           << x_max / emin << ")";
        throw std::invalid_argument(os.str());
    }

    WindowState s = flat_initial_condition(real, eff, spacings, i_lo, i_hi);
    const int K = eff.K;

    ObservableTrace trace;
    trace.epsilon = epsilon;
    trace.times = times;
    trace.x_grid = x_grid;

    SimConfig cfg = make_sim_config(law, T_micro, 1);
    cfg.sample_times.clear();
    for (double t : times) cfg.sample_times.push_back(t / epsilon);

    long prev_theta = 0;
    integrate(s, law, cfg, [&](const WindowState& st) {
        prev_theta = theta_of_state(st, prev_theta);
        trace.theta.push_back(static_cast<double>(prev_theta));

        // per-route sorted positions, split at index 0
        std::vector<std::vector<double>> below(static_cast<std::size_t>(K) + 1);
        std::vector<std::vector<double>> above(static_cast<std::size_t>(K) + 1);
        for (long i = st.i_lo; i <= st.i_hi; ++i) {
            const int r = real.route_at(i);
            (i <= 0 ? below : above)[static_cast<std::size_t>(r)].push_back(st.at(i));
        }
        std::vector<double> below_all;
        for (int k = 1; k <= K; ++k) {
            auto& b = below[static_cast<std::size_t>(k)];
            std::sort(b.begin(), b.end());
            below_all.insert(below_all.end(), b.begin(), b.end());
            std::sort(above[static_cast<std::size_t>(k)].begin(), above[static_cast<std::size_t>(k)].end());
        }
        std::sort(below_all.begin(), below_all.end());

        std::vector<std::vector<double>> nu_t(static_cast<std::size_t>(K) + 1,
                                              std::vector<double>(x_grid.size(), 0.0));
        for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
            const double x = x_grid[xi] / epsilon;
            for (int k = 1; k <= K; ++k) {
                const auto& b = below[static_cast<std::size_t>(k)];
                const auto& a = above[static_cast<std::size_t>(k)];
                const long cnt_above_x = static_cast<long>(b.end() - std::upper_bound(b.begin(), b.end(), x));
                const long cnt_below_x = static_cast<long>(std::upper_bound(a.begin(), a.end(), x) - a.begin());
                nu_t[static_cast<std::size_t>(k)][xi] =
                    epsilon / eff.roads[static_cast<std::size_t>(k)].pi *
                    static_cast<double>(cnt_above_x - cnt_below_x);
            }
            if (x_grid[xi] <= 0.0) {
                const long cnt = static_cast<long>(below_all.end() -
                                                   std::upper_bound(below_all.begin(), below_all.end(), x));
                nu_t[0][xi] = epsilon * static_cast<double>(cnt);
            }
        }

        std::vector<std::vector<double>> rho_t(static_cast<std::size_t>(K) + 1,
                                               std::vector<double>(x_grid.size(), 0.0));
        for (int k = 0; k <= K; ++k)
            for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
                const std::size_t xj = xi + 1 < x_grid.size() ? xi + 1 : xi;
                const std::size_t xp = xj == xi ? xi - 1 : xi;
                rho_t[static_cast<std::size_t>(k)][xi] =
                    -(nu_t[static_cast<std::size_t>(k)][xj] - nu_t[static_cast<std::size_t>(k)][xp]) /
                    (x_grid[xj] - x_grid[xp]);
            }
        trace.nu.push_back(std::move(nu_t));
        trace.rho.push_back(std::move(rho_t));
    });
    return trace;
}

// ---------------------------------------------------------------------------
// finite speed of propagation

// The displaced datum dominates the base one everywhere ({i0..i0+L} ordered,
// the excess concentrated at/above i0+L); the finite-speed estimate applied
// with the roles swapped says the displaced run exceeds the base run by at
// most C 2^-n e^{beta t} below J_n(i0+L).
FiniteSpeedResult finite_speed_check(const Realization& real, const JunctionLaw& law,
                                     const EffectiveModel& eff, const WindowState& base,
                                     const WindowState& displaced, long i0, long L, long n,
                                     double T) {
    (void)eff;
    for (long i = base.i_lo; i <= base.i_hi; ++i)
        if (displaced.at(i) < base.at(i) - 1e-12)
            throw std::invalid_argument("finite_speed_check: initial data not ordered");

    FiniteSpeedResult res;
    res.j_n = propagation_index(real, i0 + L, n);
    const double beta = law.gap_lipschitz() + 2.0 * law.x_lipschitz();
    res.bound_scale = std::pow(2.0, -static_cast<double>(n)) * std::exp(beta * T);

    WindowState a = base, b = displaced;
    SimConfig cfg = make_sim_config(law, T, 32);
    std::vector<std::vector<double>> base_snapshots;
    integrate(a, law, cfg, [&](const WindowState& st) { base_snapshots.push_back(st.pos); });
    std::size_t idx = 0;
    integrate(b, law, cfg, [&](const WindowState& st) {
        const std::vector<double>& pa = base_snapshots[idx++];
        for (long i = st.i_lo; i <= std::min(res.j_n, st.i_hi); ++i) {
            const double dev = st.at(i) - pa[static_cast<std::size_t>(i - st.i_lo)];
            res.max_deviation = std::max(res.max_deviation, dev);
        }
    });
    return res;
}

}  // namespace trafhom
