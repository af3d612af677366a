#include "trafhom/homog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace trafhom {

double invert_profile(const VelocityProfile& profile, double v) { return profile.inverse(v); }

// ---------------------------------------------------------------------------
// RoadEffective

double RoadEffective::H(double p) const {
    if (p >= 0.0) return 0.0;
    return hamiltonian(p);  // table clamps to 0 below the support
}

double RoadEffective::Hplus(double p) const { return H(std::max(p, p_star)); }

double RoadEffective::Hminus(double p) const { return H(std::min(p, p_star)); }

double RoadEffective::dH_bound() const { return hamiltonian.slope_bound(); }

std::vector<double> EffectiveModel::flat_spacings() const {
    std::vector<double> e;
    for (const auto& r : roads) e.push_back(r.e_k);
    return e;
}

std::vector<double> EffectiveModel::steady_speeds() const {
    std::vector<double> v;
    for (const auto& r : roads) v.push_back(r.v_e);
    return v;
}

// ---------------------------------------------------------------------------
// compute_effective

namespace {

RoadEffective effective_for_road(const ModelSpec& spec, int k) {
    RoadEffective road;
    road.k = k;
    road.pi = spec.route_weight(k);

    struct Included {
        const VelocityProfile* profile;
        double weight;  // conditional on T = k
    };
    std::vector<Included> inc;
    for (const auto& z : spec.types) {
        if (k != 0 && z.route != k) continue;
        const auto& p = z.road_profiles[static_cast<std::size_t>(k)];
        inc.push_back({&p, k == 0 ? z.weight : z.weight / road.pi});
    }

    // \bar v^k = min over the included types of Vtilde_z^k(e_max)
    road.v_bar_max = std::numeric_limits<double>::infinity();
    double zmin_v = std::numeric_limits<double>::infinity();
    int zi = 0;
    for (const auto& z : spec.types) {
        if (k != 0 && z.route != k) {
            ++zi;
            continue;
        }
        const double vmax = z.road_profiles[static_cast<std::size_t>(k)](spec.e_max);
        road.v_bar_max = std::min(road.v_bar_max, vmax);
        if (vmax < zmin_v - 1e-15) {
            zmin_v = vmax;
            road.z_min = zi;
        }
        ++zi;
    }

    // Vbar^k is the inverse of v -> E[(Vtilde^k)^-1(v) | T = k]. The
    // expectation of piecewise-linear inverses is piecewise linear in v, so
    // the exact knots are the union of the profile value-knots in (0, vbar].
    std::vector<double> vknots;
    for (const auto& item : inc)
        for (double v : item.profile->values)
            if (v > 0.0 && v <= road.v_bar_max + 1e-15) vknots.push_back(std::min(v, road.v_bar_max));
    vknots.push_back(road.v_bar_max);
    std::sort(vknots.begin(), vknots.end());
    vknots.erase(std::unique(vknots.begin(), vknots.end(),
                             [](double a, double b) { return std::abs(a - b) < 1e-12; }),
                 vknots.end());

    road.v_bar.xs = {spec.delta_min};
    road.v_bar.ys = {0.0};
    for (double v : vknots) {
        double e = 0.0;
        for (const auto& item : inc) e += item.weight * item.profile->inverse(v);
        road.v_bar.xs.push_back(e);
        road.v_bar.ys.push_back(v);
    }
    road.e_upper = road.v_bar.xs.back();

    // H^k(p) = p Vbar^k(-1/(pi^k p)) is piecewise linear in p with knots at
    // the images of the Vbar knots, plus the closing segment p * vbar to 0.
    for (std::size_t j = 0; j < road.v_bar.xs.size(); ++j) {
        const double e = road.v_bar.xs[j];
        const double p = -1.0 / (road.pi * e);
        road.hamiltonian.xs.push_back(p);
        road.hamiltonian.ys.push_back(-road.v_bar.ys[j] / (road.pi * e));
    }
    road.hamiltonian.xs.push_back(0.0);
    road.hamiltonian.ys.push_back(0.0);

    // Flat-datum spacing: argmin of H^k is the knot maximizing Vbar(e)/e
    // (Vbar/e is monotone on each segment). Ties take the largest spacing.
    double best = -1.0;
    double best_e = road.v_bar.xs.back();
    double best_v = road.v_bar.ys.back();
    for (std::size_t j = 1; j < road.v_bar.xs.size(); ++j) {
        const double ratio = road.v_bar.ys[j] / road.v_bar.xs[j];
        if (ratio > best + 1e-15 || (std::abs(ratio - best) <= 1e-15 && road.v_bar.xs[j] > best_e)) {
            best = ratio;
            best_e = road.v_bar.xs[j];
            best_v = road.v_bar.ys[j];
        }
    }
    road.e_k = road.pi * best_e;
    road.p_star = -1.0 / road.e_k;
    road.v_e = best_v;
    road.h_min = -best / road.pi;  // min H = -Vbar(e*)/(pi^k e*) = -v_e / e_k
    return road;
}

}  // namespace

EffectiveModel compute_effective(const ModelSpec& spec) {
    spec.validate();
    EffectiveModel eff;
    eff.K = spec.roads;
    eff.A0 = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= spec.roads; ++k) {
        eff.roads.push_back(effective_for_road(spec, k));
        eff.A0 = std::max(eff.A0, eff.roads.back().h_min);
    }
    return eff;
}

// ---------------------------------------------------------------------------
// check_convexity

ConvexityReport check_convexity(const EffectiveModel& eff, double tol) {
    ConvexityReport rep;
    for (const auto& road : eff.roads) {
        // second differences of H^k on a uniform grid over its support
        const double lo = road.hamiltonian.xs.front();
        const int n = 512;
        const double h = -lo / n;
        for (int i = 1; i + 1 <= n; ++i) {
            const double p = lo + i * h;
            const double d2 = road.H(p - h) - 2.0 * road.H(p) + road.H(p + h);
            rep.worst_h_second_diff = std::min(rep.worst_h_second_diff, d2);
            if (d2 < -tol) rep.failures.push_back({road.k, p, d2});
        }
        // Vbar^k concave on [delta_min, inf)
        const double e0 = road.v_bar.xs.front();
        const double e1 = road.e_upper + 2.0;
        const double he = (e1 - e0) / n;
        for (int i = 1; i + 1 <= n; ++i) {
            const double e = e0 + i * he;
            const double d2 = road.v_bar(e - he) - 2.0 * road.v_bar(e) + road.v_bar(e + he);
            rep.worst_vbar_second_diff = std::max(rep.worst_vbar_second_diff, d2);
            if (d2 > tol) rep.failures.push_back({road.k, e, d2});
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// junction_profile

namespace {

// Exact root of the piecewise-linear H on one monotone branch.
double pl_root(const PiecewiseLinear& table, double A, std::size_t j0, std::size_t j1) {
    for (std::size_t j = j0; j < j1; ++j) {
        const double a = table.ys[j], b = table.ys[j + 1];
        const bool crosses = (a - A) * (b - A) <= 0.0;
        if (!crosses) continue;
        if (std::abs(b - a) < 1e-300) return table.xs[j];
        const double w = (A - a) / (b - a);
        return table.xs[j] + w * (table.xs[j + 1] - table.xs[j]);
    }
    throw std::logic_error("junction_profile: no root on branch");
}

}  // namespace

JunctionProfile junction_profile(const EffectiveModel& eff, double A) {
    if (A >= 0.0) throw std::invalid_argument("junction_profile: A must be negative");
    if (A < eff.A0 - 1e-12)
        throw std::invalid_argument("junction_profile: A below A0 (no roots on some road)");
    JunctionProfile prof;
    prof.A = A;
    for (const auto& road : eff.roads) {
        const auto& t = road.hamiltonian;
        // knot index of p_star (it is an exact table knot)
        std::size_t js = 0;
        for (std::size_t j = 0; j < t.xs.size(); ++j)
            if (std::abs(t.xs[j] - road.p_star) < 1e-12) js = j;
        const double a = std::max(A, road.h_min);  // clip fp noise at A = A0
        prof.p_minus.push_back(pl_root(t, a, 0, js == 0 ? 1 : js));
        prof.p_plus.push_back(pl_root(t, a, js, t.xs.size() - 1));
    }
    return prof;
}

double JunctionProfile::phi(double x, int k) const {
    if (x <= 0.0) return p_minus[0] * x;
    if (k < 1 || k >= static_cast<int>(p_plus.size()))
        throw std::invalid_argument("phi: positive x needs an outgoing road k >= 1");
    return p_plus[static_cast<std::size_t>(k)] * x;
}

double JunctionProfile::psi(double y, int k) const {
    if (y <= 0.0) return y / (-p_minus[0]);
    if (k < 1 || k >= static_cast<int>(p_plus.size()))
        throw std::invalid_argument("psi: positive y needs an outgoing road k >= 1");
    return y / (-p_plus[static_cast<std::size_t>(k)]);
}

}  // namespace trafhom
