#include "trafhom/macro_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace trafhom {

// ---------------------------------------------------------------------------
// GridSolution

double GridSolution::value(double x, int k) const {
    const double dx = grid.dx;
    const int M = grid.M;
    const auto& branch = v[static_cast<std::size_t>(k)];
    double j;
    if (k == 0) {
        if (x > 1e-12 || x < -M * dx - 1e-12)
            throw std::invalid_argument("GridSolution::value: x outside branch 0");
        j = (x + M * dx) / dx;
    } else {
        if (x < -1e-12 || x > M * dx + 1e-12)
            throw std::invalid_argument("GridSolution::value: x outside outgoing branch");
        j = x / dx;
    }
    const int j0 = std::clamp(static_cast<int>(std::floor(j)), 0, M - 1);
    const double w = std::clamp(j - j0, 0.0, 1.0);
    return branch[static_cast<std::size_t>(j0)] * (1.0 - w) +
           branch[static_cast<std::size_t>(j0) + 1] * w;
}

// ---------------------------------------------------------------------------
// solve_hj

GridSolution solve_hj(const EffectiveModel& eff, double A, const InitialDatum& nu0,
                      const JunctionGrid& grid, double T, const std::vector<double>& sample_times,
                      const std::optional<std::function<double(double)>>& node_dirichlet,
                      int branches_override) {
    const int K = branches_override >= 0 ? branches_override : eff.K;
    if (K > eff.K) throw std::invalid_argument("solve_hj: more branches than the model has");
    if (!node_dirichlet && A < eff.A0 - 1e-12)
        throw std::invalid_argument("solve_hj: A below A0");
    const int M = grid.M;
    const double dx = grid.dx;

    GridSolution sol;
    sol.grid = grid;
    sol.A = A;
    sol.K = K;
    sol.v.assign(static_cast<std::size_t>(K) + 1, std::vector<double>(static_cast<std::size_t>(M) + 1));
    for (int j = 0; j <= M; ++j)
        sol.v[0][static_cast<std::size_t>(j)] = nu0(-(M - j) * dx, 0);
    for (int k = 1; k <= K; ++k)
        for (int j = 0; j <= M; ++j)
            sol.v[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] = nu0(j * dx, k);
    // single-valued node
    const double node0 = sol.v[0][static_cast<std::size_t>(M)];
    for (int k = 1; k <= K; ++k) sol.v[static_cast<std::size_t>(k)][0] = node0;

    // frozen far-field slopes from the initial datum
    const double slope_in = (sol.v[0][1] - sol.v[0][0]) / dx;
    std::vector<double> slope_out(static_cast<std::size_t>(K) + 1, 0.0);
    for (int k = 1; k <= K; ++k)
        slope_out[static_cast<std::size_t>(k)] =
            (sol.v[static_cast<std::size_t>(k)][static_cast<std::size_t>(M)] -
             sol.v[static_cast<std::size_t>(k)][static_cast<std::size_t>(M - 1)]) /
            dx;

    double dh = 0.0;
    for (int k = 0; k <= K; ++k) dh = std::max(dh, eff.roads[static_cast<std::size_t>(k)].dH_bound());
    const double dt_max = grid.cfl * dx / std::max(dh, 1e-12);

    std::vector<std::vector<double>> next = sol.v;
    std::vector<double> samples = sample_times;
    std::sort(samples.begin(), samples.end());
    if (samples.empty() || std::abs(samples.back() - T) > 1e-12) samples.push_back(T);

    double t = 0.0;
    auto do_step = [&](double dt) {
        const auto& h0 = eff.roads[0];
        const auto& v0 = sol.v[0];
        // branch 0: far-field j = 0 uses the frozen slope as D^-
        for (int j = 0; j < M; ++j) {
            const double dm = j == 0 ? slope_in : (v0[static_cast<std::size_t>(j)] - v0[static_cast<std::size_t>(j - 1)]) / dx;
            const double dp = (v0[static_cast<std::size_t>(j + 1)] - v0[static_cast<std::size_t>(j)]) / dx;
            next[0][static_cast<std::size_t>(j)] =
                v0[static_cast<std::size_t>(j)] - dt * std::max(h0.Hplus(dm), h0.Hminus(dp));
        }
        for (int k = 1; k <= K; ++k) {
            const auto& hk = eff.roads[static_cast<std::size_t>(k)];
            const auto& vk = sol.v[static_cast<std::size_t>(k)];
            for (int j = 1; j <= M; ++j) {
                const double dm = (vk[static_cast<std::size_t>(j)] - vk[static_cast<std::size_t>(j - 1)]) / dx;
                const double dp = j == M ? slope_out[static_cast<std::size_t>(k)]
                                         : (vk[static_cast<std::size_t>(j + 1)] - vk[static_cast<std::size_t>(j)]) / dx;
                next[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)] =
                    vk[static_cast<std::size_t>(j)] - dt * std::max(hk.Hplus(dm), hk.Hminus(dp));
            }
        }
        // node: the flux-limited junction condition with one-sided differences
        double node_new;
        if (node_dirichlet) {
            node_new = (*node_dirichlet)(t + dt);
        } else {
            const double node = v0[static_cast<std::size_t>(M)];
            const double dm0 = (node - v0[static_cast<std::size_t>(M - 1)]) / dx;
            double flux = std::max(A, h0.Hplus(dm0));
            for (int k = 1; k <= K; ++k) {
                const double dpk =
                    (sol.v[static_cast<std::size_t>(k)][1] - node) / dx;
                flux = std::max(flux, eff.roads[static_cast<std::size_t>(k)].Hminus(dpk));
            }
            node_new = node - dt * flux;
        }
        next[0][static_cast<std::size_t>(M)] = node_new;
        for (int k = 1; k <= K; ++k) next[static_cast<std::size_t>(k)][0] = node_new;
        sol.v.swap(next);
        t += dt;
    };

    for (double target : samples) {
        if (target > T + 1e-12) throw std::invalid_argument("solve_hj: sample time beyond horizon");
        const double gap = target - t;
        if (gap > 1e-12) {
            const long nsteps = std::max(1L, static_cast<long>(std::ceil(gap / dt_max - 1e-12)));
            const double dt = gap / static_cast<double>(nsteps);
            for (long s = 0; s < nsteps; ++s) do_step(dt);
            t = target;
        }
        sol.sample_times.push_back(target);
        sol.snapshots.push_back(sol.v);
    }
    sol.t = t;
    return sol;
}

// ---------------------------------------------------------------------------
// closed forms

double closed_form_nu(const EffectiveModel& eff, const JunctionProfile& prof, double x, int k,
                      double t) {
    const double A = prof.A;
    if (x <= 0.0) {
        const auto& r0 = eff.roads[0];
        return std::min(prof.p_minus[0] * x - A * t, -x / r0.e_k - t * r0.h_min);
    }
    if (k < 1 || k > eff.K)
        throw std::invalid_argument("closed_form_nu: positive x needs an outgoing road");
    const auto& rk = eff.roads[static_cast<std::size_t>(k)];
    return std::min(prof.p_plus[static_cast<std::size_t>(k)] * x - A * t, -x / rk.e_k - t * rk.h_min);
}

double closed_form_u(const EffectiveModel& eff, const JunctionProfile& prof, double y, int k,
                     double t) {
    const double A = prof.A;
    if (y <= A * t) {
        const auto& r0 = eff.roads[0];
        return std::min(prof.psi(y - A * t, 0), y * r0.e_k - r0.e_k * t * r0.h_min);
    }
    if (k < 1 || k > eff.K)
        throw std::invalid_argument("closed_form_u: a crossed vehicle needs an outgoing road");
    const auto& rk = eff.roads[static_cast<std::size_t>(k)];
    return std::min(prof.psi(y - A * t, k), y * rk.e_k - rk.e_k * t * rk.h_min);
}

// ---------------------------------------------------------------------------
// micro-macro comparison

CompareTable micro_macro_compare(const ModelSpec& spec, const JunctionLaw& law,
                                 const EffectiveModel& eff, double A_hat,
                                 const std::vector<double>& epsilons, double T,
                                 const std::vector<double>& x_grid,
                                 const std::vector<double>& t_grid, std::uint64_t seed,
                                 double grid_dx) {
    CompareTable table;
    const double A_use = std::min(std::max(A_hat, eff.A0), -1e-12);
    table.A_used = A_use;
    table.grid_dx = grid_dx;
    const JunctionProfile prof = junction_profile(eff, A_use);

    double dh = 0.0;
    for (const auto& r : eff.roads) dh = std::max(dh, r.dH_bound());
    double x_extent = 0.0;
    for (double x : x_grid) x_extent = std::max(x_extent, std::abs(x));
    JunctionGrid grid;
    grid.dx = grid_dx;
    grid.M = static_cast<int>(std::ceil((x_extent + dh * T + 1.0) / grid_dx));
    const auto nu0 = [&](double x, int k) {
        const double e = k == 0 || x <= 0.0 ? eff.roads[0].e_k
                                            : eff.roads[static_cast<std::size_t>(k)].e_k;
        return -x / e;
    };
    const GridSolution hj = solve_hj(eff, A_use, nu0, grid, T, t_grid);

    for (std::size_t ei = 0; ei < epsilons.size(); ++ei) {
        const double eps = epsilons[ei];
        const double T_micro = T / eps;
        const WindowExtent base = sized_window(law, T_micro);
        const double e0 = eff.roads[0].e_k;
        double emin = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= eff.K; ++k)
            emin = std::min(emin, eff.roads[static_cast<std::size_t>(k)].e_k);
        const long lo = std::min(
            base.lo, static_cast<long>(std::floor((x_grid.front() / eps - law.sup_velocity() * T_micro) / e0)) - 64);
        const long hi = std::max(
            base.hi, static_cast<long>(std::ceil(x_grid.back() / eps / emin)) + 64);

        Realization real =
            sample_realization(spec, replicate_seed(seed, static_cast<std::uint64_t>(ei)), lo, hi);
        const ObservableTrace trace = observables(real, law, eff, eps, t_grid, x_grid, lo, hi);

        CompareRow row;
        row.epsilon = eps;
        GridSolution view;
        view.grid = hj.grid;
        view.K = hj.K;
        for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
            view.v = hj.snapshots[ti];
            for (int k = 0; k <= eff.K; ++k)
                for (std::size_t xi = 0; xi < x_grid.size(); ++xi) {
                    const double x = x_grid[xi];
                    if (k == 0 && x > 0.0) continue;
                    const double micro = trace.nu[ti][static_cast<std::size_t>(k)][xi];
                    const double closed = closed_form_nu(eff, prof, x, k == 0 && x <= 0.0 ? 0 : k,
                                                         t_grid[ti]);
                    const int kg = x < 0.0 ? 0 : (k == 0 ? 0 : k);
                    const double gridv = view.value(x, kg);
                    row.sup_micro_vs_closed = std::max(row.sup_micro_vs_closed, std::abs(micro - closed));
                    row.sup_micro_vs_grid = std::max(row.sup_micro_vs_grid, std::abs(micro - gridv));
                    row.sup_grid_vs_closed = std::max(row.sup_grid_vs_closed, std::abs(gridv - closed));
                    if (k == 0)
                        row.sup_micro_vs_closed_road0 =
                            std::max(row.sup_micro_vs_closed_road0, std::abs(micro - closed));
                }
        }
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace trafhom
