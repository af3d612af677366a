#include "trafhom/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace trafhom {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

double clamp01(double s) { return s < 0.0 ? 0.0 : (s > 1.0 ? 1.0 : s); }

// 1 - 3s^2 + 2s^3: C1, equals 1 at s=0 and 0 at s=1.
double smoothdown(double s) {
    s = clamp01(s);
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

}  // namespace

// ---------------------------------------------------------------------------
// VelocityProfile

double VelocityProfile::operator()(double e) const {
    if (e <= breakpoints.front()) return 0.0;
    if (e >= breakpoints.back()) return values.back();
    std::size_t lo = 0, hi = breakpoints.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (breakpoints[mid] <= e) lo = mid; else hi = mid;
    }
    const double w = (e - breakpoints[lo]) / (breakpoints[lo + 1] - breakpoints[lo]);
    return values[lo] + w * (values[lo + 1] - values[lo]);
}

double VelocityProfile::inverse(double v) const {
    if (!(v > 0.0)) fail("profile inverse: v must be positive");
    if (v > values.back() * (1.0 + 1e-12))
        fail("profile inverse: v above maximal velocity");
    if (v >= values.back()) return breakpoints.back();
    std::size_t lo = 0, hi = values.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (values[mid] < v) lo = mid; else hi = mid;
    }
    const double dv = values[lo + 1] - values[lo];
    const double w = (v - values[lo]) / dv;
    return breakpoints[lo] + w * (breakpoints[lo + 1] - breakpoints[lo]);
}

double VelocityProfile::slope_bound() const {
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double a = (values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]);
        s = std::max(s, a);
    }
    return s;
}

void VelocityProfile::validate(double delta_min, double e_max) const {
    if (breakpoints.size() < 2 || breakpoints.size() != values.size())
        fail("profile: need matching breakpoint/value tables with >= 2 knots");
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
        if (!(breakpoints[i + 1] > breakpoints[i])) fail("profile: breakpoints not increasing");
    if (std::abs(breakpoints.front() - delta_min) > 1e-12)
        fail("profile: first breakpoint must equal delta_min");
    if (values.front() != 0.0) fail("profile: value at delta_min must be 0");
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        if (!(values[i + 1] > values[i]))
            fail("profile: values must be strictly increasing up to h_max");
    if (!(h_max() > delta_min) || h_max() > e_max + 1e-12)
        fail("profile: h_max must lie in (delta_min, e_max]");
    // concavity: segment slopes nonincreasing
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double a = (values[i + 1] - values[i]) / (breakpoints[i + 1] - breakpoints[i]);
        if (a > prev + 1e-12) fail("profile: not concave");
        prev = a;
    }
}

// ---------------------------------------------------------------------------
// ModelSpec

double ModelSpec::route_weight(int k) const {
    if (k == 0) return 1.0;
    double w = 0.0;
    for (const auto& z : types)
        if (z.route == k) w += z.weight;
    return w;
}

bool ModelSpec::road_uniform() const {
    for (const auto& z : types)
        if (!z.road_uniform) return false;
    return true;
}

double ModelSpec::sup_velocity() const {
    double v = 0.0;
    for (const auto& z : types)
        for (const auto& p : z.road_profiles) v = std::max(v, p.max_velocity());
    return v;
}

double ModelSpec::kappa() const {
    if (kappa_explicit) return *kappa_explicit;
    const double pr1 = road_uniform() ? r1 : r2;
    const double pr2 = road_uniform() ? r2 : r3;
    const double probe = pr1 - pr2 + delta_min;
    double v = std::numeric_limits<double>::infinity();
    for (const auto& z : types)
        for (const auto& p : z.road_profiles) v = std::min(v, p(probe));
    return 0.5 * v;
}

void ModelSpec::validate() const {
    if (roads < 1) fail("spec: K must be >= 1");
    if (!(delta_min > 0.0)) fail("spec: delta_min must be positive");
    if (!(e_max > delta_min)) fail("spec: e_max must exceed delta_min");
    if (!(0.0 < r3 && r3 < r2 && r2 < r1 && r1 < r0))
        fail("spec: radii must satisfy 0 < r3 < r2 < r1 < r0");
    if (!(r0 > e_max)) fail("spec: r0 must exceed e_max");
    if (types.empty()) fail("spec: need at least one vehicle type");
    double total = 0.0;
    for (const auto& z : types) {
        if (z.route < 1 || z.route > roads) fail("spec: type route outside {1..K}");
        if (!(z.weight > 0.0)) fail("spec: type weights must be positive");
        total += z.weight;
        if (z.road_profiles.size() != static_cast<std::size_t>(roads) + 1)
            fail("spec: need one profile per road 0..K for every type");
        for (const auto& p : z.road_profiles) p.validate(delta_min, e_max);
    }
    if (std::abs(total - 1.0) > 1e-9) fail("spec: type weights must sum to 1");
    for (int k = 1; k <= roads; ++k)
        if (!(route_weight(k) > 0.0)) {
            std::ostringstream os;
            os << "spec: road " << k << " has no type (pi^k must be positive)";
            fail(os.str());
        }
}

// ---------------------------------------------------------------------------
// JunctionLaw

double JunctionLaw::cutoff(int i, double x) const {
    const auto& s = *spec_;
    const double lo = i == 1 ? s.r0 : (i == 2 ? s.r1 : s.r2);
    const double hi = i == 1 ? s.r1 : (i == 2 ? s.r2 : s.r3);
    // xi_i = 1 for x <= -lo, 0 for x >= -hi
    return smoothdown((x + lo) / (lo - hi));
}

double JunctionLaw::profile(int type, int road, double e) const {
    return spec_->types[static_cast<std::size_t>(type)].road_profiles[static_cast<std::size_t>(road)](e);
}

double JunctionLaw::free_road_in(int type, double e1) const { return profile(type, 0, e1); }

double JunctionLaw::free_road_out(int type, double e2) const {
    return profile(type, spec_->types[static_cast<std::size_t>(type)].route, e2);
}

double JunctionLaw::operator()(int type, double e1, double e2, double x) const {
    if (junction_free_) return free_road_in(type, e1);
    if (x <= -R0_) return free_road_in(type, e1);
    if (x >= -spec_->r3) return free_road_out(type, e2);
    const auto& z = spec_->types[static_cast<std::size_t>(type)];
    const auto& w0 = z.road_profiles[0];
    const auto& wk = z.road_profiles[static_cast<std::size_t>(z.route)];
    const double d = delta_;
    // Gaps are clamped at e_max so the blended W argument saturates too;
    // W_z^k(s) = Vtilde_z^k(s + delta_min).
    const double em = spec_->e_max;
    const double g1 = std::min(std::max(e1, d), em);
    const double gm = std::min(std::max(std::min(e1, e2), d), em);
    const double g2 = std::min(std::max(e2, d), em);
    const double x1 = cutoff(1, x);
    const double x2 = cutoff(2, x);
    const double x3 = cutoff(3, x);
    return x1 * w0(g1) + (1.0 - x1) * x2 * w0(gm) +
           (1.0 - x2) * wk(x3 * (gm - d) + (1.0 - x3) * (g2 - d) + d);
}

void JunctionLaw::measure_lipschitz() {
    const auto& s = *spec_;
    const double h = 1e-5;
    double glip = 0.0, xlip = 0.0;
    std::vector<double> es;
    for (int i = 0; i <= 24; ++i) es.push_back(s.e_max * 1.2 * i / 24.0);
    std::vector<double> xs;
    for (int i = 0; i <= 96; ++i) xs.push_back(-(s.r0 + 1.0) + (s.r0 + 2.0) * i / 96.0);
    for (std::size_t t = 0; t < s.types.size(); ++t)
        for (double e1 : es)
            for (double e2 : es)
                for (double x : xs) {
                    const double v = (*this)(static_cast<int>(t), e1, e2, x);
                    const double d1 = ((*this)(static_cast<int>(t), e1 + h, e2, x) - v) / h;
                    const double d2 = ((*this)(static_cast<int>(t), e1, e2 + h, x) - v) / h;
                    const double dx = ((*this)(static_cast<int>(t), e1, e2, x + h) - v) / h;
                    glip = std::max(glip, std::abs(d1) + std::abs(d2));
                    xlip = std::max(xlip, std::abs(dx));
                }
    gap_lip_ = glip;
    x_lip_ = xlip;
}

namespace detail {

JunctionLaw build_law_unchecked(const ModelSpec& spec) {
    JunctionLaw law;
    law.spec_ = &spec;
    law.delta_ = spec.delta_min;
    law.R0_ = spec.r0;
    if (spec.road_uniform()) {
        law.R1_ = spec.r1;
        law.R2_ = spec.r2;
    } else {
        // With road-varying profiles the stop-zone guarantee only holds up
        // to -r2, so the published radii shrink (see validate_assumptions).
        law.R1_ = spec.r2;
        law.R2_ = spec.r3;
    }
    law.kappa_ = spec.kappa();
    law.sup_v_ = spec.sup_velocity();
    law.measure_lipschitz();
    return law;
}

}  // namespace detail

JunctionLaw build_example_law(const ModelSpec& spec) {
    spec.validate();
    return detail::build_law_unchecked(spec);
}

JunctionLaw build_control_law(const ModelSpec& spec) {
    spec.validate();
    JunctionLaw law;
    law.spec_ = &spec;
    law.delta_ = spec.delta_min;
    law.R0_ = spec.r0;
    law.R1_ = spec.r1;
    law.R2_ = spec.r2;
    law.kappa_ = spec.kappa();
    law.sup_v_ = spec.sup_velocity();
    law.junction_free_ = true;
    law.measure_lipschitz();
    return law;
}

// ---------------------------------------------------------------------------
// validate_assumptions

AssumptionReport validate_assumptions(const JunctionLaw& law, const ModelSpec& spec) {
    AssumptionReport rep;
    const double d = spec.delta_min;
    const double kap = law.kappa();
    const double tol = 1e-9;

    std::vector<double> es = {0.0, 0.5 * d, d};
    for (int i = 1; i <= 12; ++i) es.push_back(d + (spec.e_max - d) * i / 12.0);
    es.push_back(spec.e_max + 0.5);
    es.push_back(spec.e_max + 2.0);
    std::vector<double> xs;
    for (int i = 0; i <= 80; ++i) xs.push_back(-(spec.r0 + 2.0) + (spec.r0 + 4.0) * i / 80.0);
    xs.push_back(-law.R0());
    xs.push_back(-law.R1());
    xs.push_back(-law.R2());
    xs.push_back(0.0);
    std::sort(xs.begin(), xs.end());

    auto flag = [&](const char* check, int z, double e1, double e2, double x, double detail) {
        rep.violations.push_back({check, z, e1, e2, x, detail});
    };

    const int nz = static_cast<int>(spec.types.size());
    for (int z = 0; z < nz; ++z) {
        for (double e1 : es)
            for (double e2 : es)
                for (double x : xs) {
                    ++rep.points_checked;
                    const double v = law(z, e1, e2, x);
                    if (v < -tol) flag("velocity-sign", z, e1, e2, x, v);
                    // monotonicity in each gap against a small increment
                    const double he = 1e-4;
                    if (law(z, e1 + he, e2, x) < v - tol) flag("monotone-e1", z, e1, e2, x, v);
                    if (law(z, e1, e2 + he, x) < v - tol) flag("monotone-e2", z, e1, e2, x, v);
                    // stop zones: blocked vehicles must not move
                    if ((e1 <= d && x <= -law.R2()) || (e2 <= d && x >= -law.R1()))
                        if (std::abs(v) > tol) flag("stop-zone", z, e1, e2, x, v);
                    // gap saturation beyond e_max
                    if (e1 >= spec.e_max &&
                        std::abs(v - law(z, spec.e_max, e2, x)) > tol)
                        flag("saturation-e1", z, e1, e2, x, v);
                    if (e2 >= spec.e_max &&
                        std::abs(v - law(z, e1, spec.e_max, x)) > tol)
                        flag("saturation-e2", z, e1, e2, x, v);
                    // single-profile exactness outside [-R0, 0]
                    if (x <= -law.R0() && std::abs(v - law.free_road_in(z, e1)) > tol)
                        flag("free-road-in", z, e1, e2, x, v - law.free_road_in(z, e1));
                    if (x >= 0.0 && std::abs(v - law.free_road_out(z, e2)) > tol)
                        flag("free-road-out", z, e1, e2, x, v - law.free_road_out(z, e2));
                    // slow regime before -R2 must not depend on position
                    if (e1 <= e2 && x <= -law.R2() && v <= kap &&
                        std::abs(v - law.free_road_in(z, e1)) > 1e-7)
                        flag("slow-x-independent", z, e1, e2, x, v - law.free_road_in(z, e1));
                    // slow vehicles may only speed up while crossing [-R1, 0]
                    if (x >= -law.R1() && x <= 0.0 && v <= kap) {
                        const double hx = 1e-5;
                        const double xl = std::max(x - hx, -law.R1());
                        const double xr = std::min(x + hx, 0.0);
                        const double der = (law(z, e1, e2, xr) - law(z, e1, e2, xl)) / (xr - xl);
                        if (der < -1e-6) flag("slow-x-monotone", z, e1, e2, x, der);
                    }
                    // strictly positive speed above the minimal spacing
                    if (std::min(e1, e2) > d + 1e-6 && !(v > 0.0))
                        flag("positive-speed", z, e1, e2, x, v);
                }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Realization

namespace {

int sample_type(const ModelSpec& spec, std::uint64_t seed, long i) {
    const double u = uniform01(splitmix64(seed ^ (0x9E3779B97F4A7C15ULL *
                                                  static_cast<std::uint64_t>(i))));
    double acc = 0.0;
    for (std::size_t z = 0; z < spec.types.size(); ++z) {
        acc += spec.types[z].weight;
        if (u < acc) return static_cast<int>(z);
    }
    return static_cast<int>(spec.types.size()) - 1;
}

}  // namespace

std::size_t Realization::idx(long i) const {
    if (i < lo_ || i > hi_ext_) throw std::out_of_range("realization: index outside sampled window");
    return static_cast<std::size_t>(i - lo_);
}

int Realization::type_at(long i) const { return type_[idx(i)]; }

int Realization::route_at(long i) const { return route_[idx(i)]; }

long Realization::next_same(long i) const {
    const long j = next_same_[idx(i)];
    if (j > hi_ext_) throw std::runtime_error("realization: l_i not sampled (widen window)");
    return j;
}

long Realization::prev_same(long i) const { return prev_same_[idx(i)]; }

long Realization::last_of_route_leq(int k, long m) const {
    const auto& v = occ_[static_cast<std::size_t>(k)];
    auto it = std::upper_bound(v.begin(), v.end(), m);
    if (it == v.begin()) throw std::runtime_error("realization: no route occurrence at or below index");
    return *(it - 1);
}

long Realization::first_of_route_geq(int k, long m) const {
    const auto& v = occ_[static_cast<std::size_t>(k)];
    auto it = std::lower_bound(v.begin(), v.end(), m);
    if (it == v.end()) throw std::runtime_error("realization: no route occurrence at or above index");
    return *it;
}

Realization Realization::truncated(long m, const std::vector<int>& z_min_per_route) const {
    Realization r = *this;
    for (long i = std::max(m, lo_); i <= hi_ext_; ++i) {
        const std::size_t off = static_cast<std::size_t>(i - lo_);
        r.type_[off] = static_cast<std::int16_t>(z_min_per_route[static_cast<std::size_t>(route_[off])]);
    }
    return r;
}

long Realization::route_count(int k, long a, long b) const {
    if (b < a) return 0;
    const auto& v = occ_[static_cast<std::size_t>(k)];
    return std::upper_bound(v.begin(), v.end(), b) - std::lower_bound(v.begin(), v.end(), a);
}

Realization sample_realization(const ModelSpec& spec, std::uint64_t seed, long lo, long hi) {
    if (hi < lo) throw std::invalid_argument("sample_realization: empty window");
    spec.validate();
    Realization r;
    r.seed_ = seed;
    r.lo_ = lo;
    r.hi_ = hi;

    double min_pi = 1.0;
    for (int k = 1; k <= spec.roads; ++k) min_pi = std::min(min_pi, spec.route_weight(k));
    const double len = static_cast<double>(hi - lo + 1);
    const long cap = static_cast<long>(64.0 / min_pi * std::max(1.0, std::log(len))) + spec.roads;

    std::vector<std::int16_t> types;
    types.reserve(static_cast<std::size_t>(hi - lo + 1) + 64);
    for (long i = lo; i <= hi; ++i)
        types.push_back(static_cast<std::int16_t>(sample_type(spec, seed, i)));

    // extend until every route appears past hi, so l_i exists for all i <= hi
    std::vector<char> seen(static_cast<std::size_t>(spec.roads) + 1, 0);
    int remaining = spec.roads;
    long ext = hi;
    while (remaining > 0) {
        ++ext;
        if (ext - hi > cap)
            throw std::runtime_error(
                "sample_realization: extension cap exceeded (near-zero route weight?)");
        const int z = sample_type(spec, seed, ext);
        types.push_back(static_cast<std::int16_t>(z));
        const int route = spec.types[static_cast<std::size_t>(z)].route;
        if (!seen[static_cast<std::size_t>(route)]) {
            seen[static_cast<std::size_t>(route)] = 1;
            --remaining;
        }
    }
    r.hi_ext_ = ext;
    r.type_ = std::move(types);

    const std::size_t n = r.type_.size();
    r.roads_ = spec.roads;
    r.route_.resize(n);
    r.next_same_.assign(n, ext + 1);
    r.prev_same_.assign(n, lo - 1);
    r.occ_.assign(static_cast<std::size_t>(spec.roads) + 1, {});
    std::vector<long> last_seen(static_cast<std::size_t>(spec.roads) + 1, lo - 1);
    for (long i = lo; i <= ext; ++i) {
        const std::size_t off = static_cast<std::size_t>(i - lo);
        const int route = spec.types[static_cast<std::size_t>(r.type_[off])].route;
        r.route_[off] = static_cast<std::int16_t>(route);
        r.occ_[static_cast<std::size_t>(route)].push_back(i);
        const long prev = last_seen[static_cast<std::size_t>(route)];
        r.prev_same_[off] = prev;
        if (prev >= lo) r.next_same_[static_cast<std::size_t>(prev - lo)] = i;
        last_seen[static_cast<std::size_t>(route)] = i;
    }
    return r;
}

long propagation_index(const Realization& real, long T, long n) {
    if (n < 0) throw std::invalid_argument("propagation_index: n must be >= 0");
    if (T < real.lo() || T > real.hi_sampled())
        throw std::runtime_error("propagation_index: T outside sampled window");
    long j = T;
    // sup{i : T_i = k, l_i <= J} is the occurrence of route k just before the
    // last one at or below J, so each step reads two occurrence lookups.
    for (long m = 0; m < n; ++m) {
        long next = std::numeric_limits<long>::max();
        for (int k = 1; k <= real.roads(); ++k) {
            const long a = real.last_of_route_leq(k, j);  // throws on underflow
            const long b = real.prev_same(a);
            if (b < real.lo())
                throw std::runtime_error("propagation_index: window underflow (widen window)");
            next = std::min(next, b);
        }
        j = next;
    }
    return j;
}

AlphaEstimate estimate_alpha(const ModelSpec& spec, std::uint64_t seed, int replicates, long n) {
    if (n < 100) throw std::invalid_argument("estimate_alpha: n must be >= 100");
    std::vector<double> drops;
    drops.reserve(static_cast<std::size_t>(replicates));
    for (int rep = 0; rep < replicates; ++rep) {
        const std::uint64_t s = replicate_seed(seed, static_cast<std::uint64_t>(rep));
        // generous first guess, doubled on underflow
        long width = static_cast<long>(n * (4 * spec.roads + 4)) + 256;
        for (;;) {
            Realization real = sample_realization(spec, s, -width, 0);
            try {
                const long jn = propagation_index(real, 0, n);
                drops.push_back(static_cast<double>(0 - jn) / static_cast<double>(n));
                break;
            } catch (const std::runtime_error&) {
                width *= 2;
                if (width > (1L << 40)) throw;
            }
        }
    }
    const MeanCi mc = mean_ci(drops);
    return {mc.mean, mc.ci_halfwidth, replicates, n};
}

}  // namespace trafhom
