#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "trafhom/homog.hpp"
#include "trafhom/io.hpp"

using namespace trafhom;

namespace {

ModelSpec sym2() { return load_spec(std::string(TRAFHOM_CONFIG_DIR) + "/m_sym_2roads.json"); }
ModelSpec two_type() { return load_spec(std::string(TRAFHOM_CONFIG_DIR) + "/m_two_type.json"); }

ModelSpec single_type() {
    ModelSpec s = two_type();
    s.types.erase(s.types.begin() + 1);
    s.types[0].weight = 1.0;
    return s;
}

// Brute-force oracle for one road: the expectation of the profile inverses on
// a dense v-grid, inverted by scanning, then a 1e-4 grid argmin of
// H = -Vbar(e)/(pi e). Independent of the knot arithmetic in compute_effective.
struct BruteRoad {
    double e_k, h_min, v_e;
    std::vector<double> eg, vg;  // dense (e, Vbar) samples
};

BruteRoad brute_force_road(const ModelSpec& spec, int k) {
    const double pi = spec.route_weight(k);
    std::vector<const VelocityProfile*> profs;
    std::vector<double> wts;
    for (const auto& z : spec.types) {
        if (k != 0 && z.route != k) continue;
        profs.push_back(&z.road_profiles[static_cast<std::size_t>(k)]);
        wts.push_back(k == 0 ? z.weight : z.weight / pi);
    }
    double vbar = 1e300;
    for (const auto* p : profs) vbar = std::min(vbar, p->max_velocity());

    BruteRoad out;
    const int N = 200000;
    out.eg.reserve(N);
    out.vg.reserve(N);
    for (int i = 1; i <= N; ++i) {
        const double v = vbar * i / N;
        double e = 0.0;
        for (std::size_t z = 0; z < profs.size(); ++z) e += wts[z] * profs[z]->inverse(v);
        out.eg.push_back(e);
        out.vg.push_back(v);
    }
    // grid argmin of H(-1/(pi e)) = -Vbar(e)/(pi e) at 1e-4 resolution
    auto vbar_at = [&](double e) {
        if (e <= out.eg.front()) return 0.0;
        if (e >= out.eg.back()) return vbar;
        auto it = std::lower_bound(out.eg.begin(), out.eg.end(), e);
        const std::size_t j = static_cast<std::size_t>(it - out.eg.begin());
        const double w = (e - out.eg[j - 1]) / (out.eg[j] - out.eg[j - 1]);
        return out.vg[j - 1] + w * (out.vg[j] - out.vg[j - 1]);
    };
    double best = 1e300, best_e = 0.0;
    for (double e = spec.delta_min; e <= out.eg.back() + 1.0; e += 1e-4) {
        const double h = -vbar_at(e) / (pi * e);
        if (h < best - 1e-12) {
            best = h;
            best_e = e;
        } else if (h <= best + 1e-12 && e > best_e) {
            best_e = e;  // largest minimizing spacing
        }
    }
    out.e_k = pi * best_e;
    out.h_min = best;
    out.v_e = vbar_at(best_e);
    return out;
}

}  // namespace

TEST_CASE("invert_profile basics") {
    VelocityProfile p{{1.0, 3.0}, {0.0, 2.0}};
    CHECK(invert_profile(p, 1.0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(invert_profile(p, 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS_AS(invert_profile(p, -1.0), std::invalid_argument);
}

TEST_CASE("M-two-type homogenization matches the brute-force oracle") {
    const ModelSpec s = two_type();
    const EffectiveModel eff = compute_effective(s);

    const BruteRoad oracle = brute_force_road(s, 0);
    CHECK(std::abs(eff.roads[0].e_k - oracle.e_k) <= 1e-3);
    CHECK(std::abs(eff.roads[0].h_min - oracle.h_min) <= 1e-3);

    // frozen values: e0 = 2.5, min H0 = -0.8, A0 = -0.8
    CHECK(eff.roads[0].e_k == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(eff.roads[0].h_min == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(eff.A0 == doctest::Approx(-0.8).epsilon(1e-12));
    CHECK(eff.roads[0].v_e == doctest::Approx(2.0).epsilon(1e-12));

    // Vbar^0(e) = 4(e-1)/3 on (1, 2.5], = 2 beyond
    for (double e : {1.3, 1.9, 2.2, 2.5})
        CHECK(eff.roads[0].v_bar(e) == doctest::Approx(4.0 * (e - 1.0) / 3.0).epsilon(1e-12));
    CHECK(eff.roads[0].v_bar(3.7) == doctest::Approx(2.0));
}

TEST_CASE("M-sym-2roads homogenization (bottleneck values)") {
    const ModelSpec s = sym2();
    const EffectiveModel eff = compute_effective(s);
    CHECK(eff.roads[0].e_k == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(eff.roads[1].e_k == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(eff.roads[2].e_k == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(eff.roads[0].h_min == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    CHECK(eff.roads[1].h_min == doctest::Approx(-4.0 / 3.0).epsilon(1e-12));
    CHECK(eff.roads[2].h_min == doctest::Approx(-4.0 / 3.0).epsilon(1e-12));
    // A0 = max over roads of min H^k; the incoming road is the bottleneck here
    CHECK(eff.A0 == doctest::Approx(-2.0 / 3.0).epsilon(1e-12));
    for (const auto& r : eff.roads) CHECK(r.v_e == doctest::Approx(2.0).epsilon(1e-12));

    // capacity identity: min_k v_e^k / e^k = -A0
    double m = 1e300;
    for (const auto& r : eff.roads) m = std::min(m, r.v_e / r.e_k);
    CHECK(std::abs(m + eff.A0) <= 1e-6);

    for (int k = 0; k <= 2; ++k) {
        const BruteRoad oracle = brute_force_road(s, k);
        CHECK(std::abs(eff.roads[static_cast<std::size_t>(k)].e_k - oracle.e_k) <= 1e-3);
        CHECK(std::abs(eff.roads[static_cast<std::size_t>(k)].h_min - oracle.h_min) <= 1e-3);
    }
}

TEST_CASE("single type: Vbar equals the profile") {
    const ModelSpec s = single_type();
    const EffectiveModel eff = compute_effective(s);
    const auto& p = s.types[0].road_profiles[0];
    for (double e : {0.5, 1.0, 1.5, 2.0, 2.7, 3.0, 4.0})
        CHECK(eff.roads[0].v_bar(e) == doctest::Approx(p(e)).epsilon(1e-12));
}

TEST_CASE("H evaluation, tails and envelopes") {
    const EffectiveModel eff = compute_effective(sym2());
    for (const auto& r : eff.roads) {
        CHECK(r.H(0.0) == 0.0);
        CHECK(r.H(0.5) == 0.0);
        CHECK(r.H(-1.0 / (r.pi * eff.roads[0].v_bar.xs.front()) - 5.0) == 0.0);
        CHECK(r.H(r.p_star) == doctest::Approx(r.h_min).epsilon(1e-12));

        // envelope properties on a grid
        double prev_plus = -1e300, prev_minus = 1e300;
        for (int i = 0; i <= 200; ++i) {
            const double p = r.hamiltonian.xs.front() - 0.3 + (0.5 - r.hamiltonian.xs.front()) * i / 200.0;
            const double hp = r.Hplus(p), hm = r.Hminus(p), h = r.H(p);
            CHECK(hp >= prev_plus - 1e-12);
            CHECK(hm <= prev_minus + 1e-12);
            CHECK(hp <= h + 1e-12);
            CHECK(hm <= h + 1e-12);
            CHECK(std::max(hp, hm) == doctest::Approx(h).epsilon(1e-12));
            prev_plus = hp;
            prev_minus = hm;
        }
    }
}

TEST_CASE("check_convexity") {
    SUBCASE("canonical specs pass") {
        for (const ModelSpec& s : {sym2(), two_type()}) {
            const ConvexityReport rep = check_convexity(compute_effective(s));
            CHECK(rep.ok());
            CHECK(rep.worst_h_second_diff >= -1e-9);
        }
    }
    SUBCASE("a poked table fails") {
        EffectiveModel eff = compute_effective(sym2());
        // insert a knot sitting above the chord of its neighbours
        auto& h = eff.roads[1].hamiltonian;
        const double pm = 0.5 * (h.xs[0] + h.xs[1]);
        const double bump = 0.5 * (h.ys[0] + h.ys[1]) + 0.1;
        h.xs.insert(h.xs.begin() + 1, pm);
        h.ys.insert(h.ys.begin() + 1, bump);
        CHECK_FALSE(check_convexity(eff).ok());
    }
    SUBCASE("piecewise-linear boundary case passes") {
        ModelSpec s = single_type();
        s.types[0].road_profiles[0] = {{1.0, 2.0}, {0.0, 2.0}};
        s.types[0].road_profiles[1] = s.types[0].road_profiles[0];
        CHECK(check_convexity(compute_effective(s)).ok());
    }
}

TEST_CASE("junction profile roots and maps") {
    const EffectiveModel eff = compute_effective(sym2());

    SUBCASE("A = A0: road-0 roots collapse at the minimizer") {
        const JunctionProfile prof = junction_profile(eff, eff.A0);
        CHECK(prof.p_minus[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-9));
        CHECK(prof.p_plus[0] == doctest::Approx(-1.0 / 3.0).epsilon(1e-9));
        // outgoing roads have two distinct roots: H^k(p) = -2/3
        CHECK(prof.p_minus[1] == doctest::Approx(-4.0 / 3.0).epsilon(1e-9));
        CHECK(prof.p_plus[1] == doctest::Approx(-1.0 / 3.0).epsilon(1e-9));
        for (double x : {-2.0, -0.7, -0.1})
            CHECK(prof.phi(x, 0) == doctest::Approx(-x / 3.0).epsilon(1e-9));
        CHECK(prof.phi(0.0, 1) == 0.0);
        CHECK(prof.psi(0.0, 2) == 0.0);
    }

    SUBCASE("roots satisfy H(p) = A (independent bisection oracle)") {
        for (double A : {-0.6, -0.4, -0.15, -0.02}) {
            const JunctionProfile prof = junction_profile(eff, A);
            for (int k = 0; k <= 2; ++k) {
                const auto& r = eff.roads[static_cast<std::size_t>(k)];
                CHECK(r.H(prof.p_minus[static_cast<std::size_t>(k)]) == doctest::Approx(A).epsilon(1e-10));
                CHECK(r.H(prof.p_plus[static_cast<std::size_t>(k)]) == doctest::Approx(A).epsilon(1e-10));
                CHECK(prof.p_minus[static_cast<std::size_t>(k)] <=
                      prof.p_plus[static_cast<std::size_t>(k)] + 1e-12);

                // independent scalar bisection on each monotone branch
                double lo = r.hamiltonian.xs.front(), hi = r.p_star;
                for (int it = 0; it < 90; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (r.H(mid) > A ? lo : hi) = mid;
                }
                CHECK(prof.p_minus[static_cast<std::size_t>(k)] == doctest::Approx(hi).epsilon(1e-9));
                lo = r.p_star;
                hi = 0.0;
                for (int it = 0; it < 90; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    (r.H(mid) < A ? lo : hi) = mid;
                }
                CHECK(prof.p_plus[static_cast<std::size_t>(k)] == doctest::Approx(lo).epsilon(1e-9));
            }
        }
    }

    SUBCASE("phi is monotone in A away from the node") {
        const JunctionProfile p1 = junction_profile(eff, -0.6);
        const JunctionProfile p2 = junction_profile(eff, -0.3);
        for (double x : {-3.0, -1.0, -0.2, 0.2, 1.0, 3.0})
            for (int k = 1; k <= 2; ++k) CHECK(p1.phi(x, k) < p2.phi(x, k));
    }

    SUBCASE("psi inverts -phi branch-wise") {
        const JunctionProfile prof = junction_profile(eff, -0.5);
        for (int k = 1; k <= 2; ++k)
            for (double x : {-4.0, -1.2, 0.0, 0.9, 3.3})
                CHECK(prof.psi(-prof.phi(x, k), k) == doctest::Approx(x).epsilon(1e-12));
    }

    SUBCASE("domain errors") {
        CHECK_THROWS_AS(junction_profile(eff, eff.A0 - 0.1), std::invalid_argument);
        CHECK_THROWS_AS(junction_profile(eff, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(junction_profile(eff, 0.3), std::invalid_argument);
    }
}

TEST_CASE("randomized concave-profile specs stay convex") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        ModelSpec s;
        s.name = "random";
        s.roads = 1 + static_cast<int>(U(rng) * 3);
        s.delta_min = 0.5 + U(rng);
        const int ntypes = s.roads + static_cast<int>(U(rng) * 3);
        double emax = 0.0;
        std::vector<VehicleType> types;
        for (int t = 0; t < ntypes; ++t) {
            VehicleType z;
            z.name = "t" + std::to_string(t);
            z.route = t < s.roads ? t + 1 : 1 + static_cast<int>(U(rng) * s.roads);
            z.weight = 0.2 + U(rng);
            for (int road = 0; road <= s.roads; ++road) {
                VelocityProfile p;
                p.breakpoints = {s.delta_min};
                p.values = {0.0};
                double slope = 0.5 + 1.5 * U(rng);
                const int K = 1 + static_cast<int>(U(rng) * 3);
                for (int k = 0; k < K; ++k) {
                    const double de = 0.3 + U(rng);
                    p.breakpoints.push_back(p.breakpoints.back() + de);
                    p.values.push_back(p.values.back() + slope * de);
                    slope *= 0.25 + 0.65 * U(rng);
                }
                emax = std::max(emax, p.h_max());
                z.road_profiles.push_back(std::move(p));
            }
            z.road_uniform = false;
            types.push_back(std::move(z));
        }
        double wsum = 0.0;
        for (auto& z : types) wsum += z.weight;
        for (auto& z : types) z.weight /= wsum;
        s.types = std::move(types);
        s.e_max = emax;
        s.r3 = 0.3;
        s.r2 = 0.6;
        s.r1 = 0.9;
        s.r0 = emax + 1.0;
        s.validate();
        const ConvexityReport rep = check_convexity(compute_effective(s));
        CHECK(rep.worst_h_second_diff >= -1e-9);
    }
}
