// trafhom: experiment runner for the junction traffic lab.
// Subcommands: homogenize, simulate, estimate-limiter, solve-macro, compare,
// diagnostics. Every run writes CSV/SVG artifacts plus a manifest that
// reproduces them bit-for-bit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "trafhom/io.hpp"
#include "trafhom/limiter.hpp"
#include "trafhom/macro_solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trafhom;

namespace {

// Tracks written artifacts; a run that does not commit (throws) removes them.
class OutputTracker {
  public:
    explicit OutputTracker(const std::string& dir) : dir_(dir) { fs::create_directories(dir); }
    ~OutputTracker() {
        if (committed_) return;
        for (const auto& f : files_) {
            std::error_code ec;
            fs::remove(f, ec);
        }
    }
    std::string path(const std::string& name) {
        const std::string p = (fs::path(dir_) / name).string();
        files_.push_back(p);
        return p;
    }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& f : files_) out.push_back(fs::path(f).filename().string());
        return out;
    }
    void commit() { committed_ = true; }

  private:
    std::string dir_;
    std::vector<std::string> files_;
    bool committed_ = false;
};

// Optional JSON config file; command-line flags override its values.
struct Cfg {
    json j = json::object();
    void load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
        in >> j;
    }
    template <class T>
    T get(const std::string& cmd, const std::string& key, T fallback) const {
        if (j.contains(cmd) && j[cmd].contains(key)) return j[cmd][key].get<T>();
        if (j.contains(key)) return j[key].get<T>();
        return fallback;
    }
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Common {
    std::string spec_path;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int workers = 1;
};

Manifest base_manifest(const std::string& cmd, const Common& c) {
    Manifest m;
    m.command = cmd;
    m.spec_path = c.spec_path;
    m.spec_hash = spec_hash_hex(c.spec_path);
    m.seed = c.seed;
    return m;
}

int run_homogenize(const Common& c) {
    const ModelSpec spec = load_spec(c.spec_path);
    const EffectiveModel eff = compute_effective(spec);
    const ConvexityReport conv = check_convexity(eff);

    OutputTracker out(c.out_dir);
    save_effective(eff, out.path("effective.json"));

    std::vector<CsvColumn> cols;
    for (const auto& r : eff.roads) {
        std::vector<double> p, h;
        for (std::size_t i = 0; i < r.hamiltonian.xs.size(); ++i) {
            p.push_back(r.hamiltonian.xs[i]);
            h.push_back(r.hamiltonian.ys[i]);
        }
        cols.push_back({"p_road" + std::to_string(r.k), p});
        cols.push_back({"H_road" + std::to_string(r.k), h});
    }
    // ragged tables are padded by resampling H on a shared grid instead
    std::vector<double> pg;
    double pmin = 0.0;
    for (const auto& r : eff.roads) pmin = std::min(pmin, r.hamiltonian.xs.front());
    for (int i = 0; i <= 400; ++i) pg.push_back(pmin + (0.0 - pmin) * i / 400.0);
    std::vector<CsvColumn> hcols{{"p", pg}};
    for (const auto& r : eff.roads) {
        std::vector<double> h;
        for (double p : pg) h.push_back(r.H(p));
        hcols.push_back({"H_road" + std::to_string(r.k), h});
    }
    write_csv(out.path("hamiltonians.csv"), hcols);

    std::vector<SvgSeries> series;
    for (const auto& r : eff.roads) {
        SvgSeries s;
        s.label = "H road " + std::to_string(r.k);
        s.x = pg;
        for (double p : pg) s.y.push_back(r.H(p));
        series.push_back(std::move(s));
    }
    write_svg_chart(out.path("hamiltonians.svg"), "effective Hamiltonians", series);

    Manifest m = base_manifest("homogenize", c);
    m.params = {{"A0", fmt(eff.A0)}};
    for (const auto& r : eff.roads)
        m.params.push_back({"e_" + std::to_string(r.k), fmt(r.e_k)});
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();

    std::printf("A0 = %.12g\n", eff.A0);
    for (const auto& r : eff.roads)
        std::printf("road %d: e = %.12g, v_e = %.12g, min H = %.12g\n", r.k, r.e_k, r.v_e, r.h_min);
    if (!conv.ok()) {
        std::fprintf(stderr, "convexity check failed (%zu grid points)\n", conv.failures.size());
        return 3;
    }
    std::printf("convexity: ok (worst H second difference %.3g)\n", conv.worst_h_second_diff);
    return 0;
}

int run_simulate(const Common& c, double T, long window_total, double epsilon,
                 const std::vector<double>& times, const std::vector<double>& x_grid,
                 bool dump_trajectory) {
    const ModelSpec spec = load_spec(c.spec_path);
    const JunctionLaw law = build_example_law(spec);
    const EffectiveModel eff = compute_effective(spec);

    OutputTracker out(c.out_dir);
    WindowExtent w = sized_window(law, T);
    if (window_total > 0) {
        const long left = std::min<long>(window_total - 1,
                                         static_cast<long>(2.0 * law.sup_velocity() * T / spec.delta_min) + 64);
        w.lo = -left;
        w.hi = window_total - left - 1;
    }
    Realization real = sample_realization(spec, c.seed, w.lo, w.hi);
    SimConfig cfg = make_sim_config(law, T, 200);
    RunStats stats;

    std::unique_ptr<TrajectoryWriter> traj;
    if (dump_trajectory) traj = std::make_unique<TrajectoryWriter>(out.path("trajectory.bin"));

    ThetaCurve curve;
    {
        WindowState s = flat_initial_condition(real, eff, eff.flat_spacings(), w.lo, w.hi);
        long prev = 0;
        stats = integrate(s, law, cfg, [&](const WindowState& st) {
            prev = theta_of_state(st, prev);
            curve.t.push_back(st.t);
            curve.theta.push_back(static_cast<double>(prev));
            if (traj)
                for (long i = st.i_lo; i <= st.i_hi; ++i)
                    traj->row(st.t, static_cast<double>(i), st.at(i));
        });
        if (traj) traj->close();
    }
    write_csv(out.path("theta.csv"), {{"t", curve.t}, {"theta", curve.theta}});
    write_svg_chart(out.path("theta.svg"), "theta_e(t)", {{"theta", curve.t, curve.theta}});

    if (epsilon > 0.0 && !times.empty() && !x_grid.empty()) {
        const ObservableTrace trace =
            observables(real, law, eff, epsilon, times, x_grid, w.lo, w.hi);
        std::vector<double> col_t, col_x, col_k, col_nu, col_rho;
        for (std::size_t ti = 0; ti < trace.times.size(); ++ti)
            for (int k = 0; k <= eff.K; ++k)
                for (std::size_t xi = 0; xi < trace.x_grid.size(); ++xi) {
                    if (k == 0 && trace.x_grid[xi] > 0.0) continue;
                    col_t.push_back(trace.times[ti]);
                    col_x.push_back(trace.x_grid[xi]);
                    col_k.push_back(k);
                    col_nu.push_back(trace.nu[ti][static_cast<std::size_t>(k)][xi]);
                    col_rho.push_back(trace.rho[ti][static_cast<std::size_t>(k)][xi]);
                }
        write_csv(out.path("observables.csv"),
                  {{"t", col_t}, {"x", col_x}, {"k", col_k}, {"nu", col_nu}, {"rho", col_rho}});
        std::vector<SvgSeries> prof;
        const std::size_t last = trace.times.size() - 1;
        for (int k = 0; k <= eff.K; ++k) {
            SvgSeries s;
            s.label = "nu road " + std::to_string(k) + " (t=" + fmt(trace.times[last]) + ")";
            for (std::size_t xi = 0; xi < trace.x_grid.size(); ++xi) {
                if (k == 0 && trace.x_grid[xi] > 0.0) continue;
                s.x.push_back(trace.x_grid[xi]);
                s.y.push_back(trace.nu[last][static_cast<std::size_t>(k)][xi]);
            }
            prof.push_back(std::move(s));
        }
        write_svg_chart(out.path("nu_profile.svg"), "nu^eps profiles", prof);
    }

    Manifest m = base_manifest("simulate", c);
    m.params = {{"T", fmt(T)},
                {"window_lo", std::to_string(w.lo)},
                {"window_hi", std::to_string(w.hi)},
                {"dt", fmt(cfg.dt)},
                {"epsilon", fmt(epsilon)},
                {"min_step_velocity", fmt(stats.min_step_velocity)},
                {"worst_ordering_slack", fmt(stats.worst_ordering_slack)}};
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();
    std::printf("theta(T) = %.0f, min step velocity %.6g, ordering slack %.3g\n",
                curve.theta.back(), stats.min_step_velocity, stats.worst_ordering_slack);
    return 0;
}

int run_estimate_limiter(const Common& c, int replicates, double T_est) {
    const ModelSpec spec = load_spec(c.spec_path);
    const JunctionLaw law = build_example_law(spec);
    const EffectiveModel eff = compute_effective(spec);

    const LimiterEstimate est =
        estimate_flux_limiter(spec, law, eff, replicates, T_est, c.seed, c.workers);

    OutputTracker out(c.out_dir);
    write_csv(out.path("theta_mean.csv"), {{"t", est.mean_curve.t}, {"theta", est.mean_curve.theta}});
    write_svg_chart(out.path("theta_mean.svg"), "mean theta_e(t)",
                    {{"mean theta", est.mean_curve.t, est.mean_curve.theta}});

    json rep;
    rep["A_hat"] = est.A_hat;
    rep["A_hat_clamped"] = est.A_hat_clamped;
    rep["ci"] = est.ci;
    rep["A0"] = eff.A0;
    rep["replicates"] = est.replicates;
    rep["T_est"] = est.T_est;
    rep["seed"] = est.seed;
    {
        std::ofstream f(out.path("limiter.json"));
        f << rep.dump(2) << "\n";
    }

    Manifest m = base_manifest("estimate-limiter", c);
    m.params = {{"replicates", std::to_string(replicates)},
                {"T_est", fmt(T_est)},
                {"A_hat", fmt(est.A_hat)},
                {"ci", fmt(est.ci)}};
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();
    std::printf("A_hat = %.6g (CI %.2g), A0 = %.6g, reported %.6g\n", est.A_hat, est.ci, eff.A0,
                est.A_hat_clamped);
    return 0;
}

int run_solve_macro(const Common& c, double A_flag, const std::string& limiter_file, double dx,
                    double extent, double T) {
    const ModelSpec spec = load_spec(c.spec_path);
    const EffectiveModel eff = compute_effective(spec);
    double A = A_flag;
    if (!limiter_file.empty()) {
        std::ifstream f(limiter_file);
        if (!f) throw std::runtime_error("cannot open " + limiter_file);
        json j;
        f >> j;
        A = j.at("A_hat_clamped").get<double>();
    }
    if (A == 0.0) A = eff.A0;
    A = std::min(std::max(A, eff.A0), -1e-12);

    JunctionGrid grid;
    grid.dx = dx;
    grid.M = static_cast<int>(std::ceil(extent / dx));
    std::vector<double> samples;
    for (int i = 1; i <= 8; ++i) samples.push_back(T * i / 8.0);
    const auto nu0 = [&](double x, int k) {
        const double e = k == 0 || x <= 0.0 ? eff.roads[0].e_k
                                            : eff.roads[static_cast<std::size_t>(k)].e_k;
        return -x / e;
    };
    const GridSolution sol = solve_hj(eff, A, nu0, grid, T, samples);

    OutputTracker out(c.out_dir);
    std::vector<double> col_t, col_x, col_k, col_nu;
    for (std::size_t ti = 0; ti < sol.sample_times.size(); ++ti) {
        for (int j = 0; j <= grid.M; ++j) {
            col_t.push_back(sol.sample_times[ti]);
            col_x.push_back(-(grid.M - j) * dx);
            col_k.push_back(0);
            col_nu.push_back(sol.snapshots[ti][0][static_cast<std::size_t>(j)]);
        }
        for (int k = 1; k <= sol.K; ++k)
            for (int j = 0; j <= grid.M; ++j) {
                col_t.push_back(sol.sample_times[ti]);
                col_x.push_back(j * dx);
                col_k.push_back(k);
                col_nu.push_back(sol.snapshots[ti][static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
            }
    }
    write_csv(out.path("nu_grid.csv"), {{"t", col_t}, {"x", col_x}, {"k", col_k}, {"nu", col_nu}});

    std::vector<SvgSeries> prof;
    for (int k = 0; k <= sol.K; ++k) {
        SvgSeries s;
        s.label = "road " + std::to_string(k);
        for (int j = 0; j <= grid.M; ++j) {
            s.x.push_back(k == 0 ? -(grid.M - j) * dx : j * dx);
            s.y.push_back(sol.v[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]);
        }
        prof.push_back(std::move(s));
    }
    write_svg_chart(out.path("nu_final.svg"), "nu(x, k, T)", prof);

    Manifest m = base_manifest("solve-macro", c);
    m.params = {{"A", fmt(A)}, {"dx", fmt(dx)}, {"extent", fmt(extent)}, {"T", fmt(T)}};
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();
    std::printf("node value at T: %.8g (drift rate target %.8g)\n", sol.node(), -A * T);
    return 0;
}

int run_compare(const Common& c, const std::vector<double>& epsilons, double T, int replicates,
                double T_est, double dx) {
    const ModelSpec spec = load_spec(c.spec_path);
    const JunctionLaw law = build_example_law(spec);
    const EffectiveModel eff = compute_effective(spec);

    const LimiterEstimate est =
        estimate_flux_limiter(spec, law, eff, replicates, T_est, c.seed, c.workers);

    std::vector<double> x_grid;
    for (double x = -1.5; x <= 1.5 + 1e-9; x += 0.05) x_grid.push_back(x);
    std::vector<double> t_grid;
    for (int i = 1; i <= 4; ++i) t_grid.push_back(T * i / 4.0);

    const CompareTable table =
        micro_macro_compare(spec, law, eff, est.A_hat_clamped, epsilons, T, x_grid, t_grid,
                            replicate_seed(c.seed, 1000), dx);

    OutputTracker out(c.out_dir);
    std::vector<double> col_eps, col_dx, e1, e2, e3, e0;
    for (const auto& row : table.rows) {
        col_eps.push_back(row.epsilon);
        col_dx.push_back(table.grid_dx);
        e1.push_back(row.sup_micro_vs_closed);
        e2.push_back(row.sup_micro_vs_grid);
        e3.push_back(row.sup_grid_vs_closed);
        e0.push_back(row.sup_micro_vs_closed_road0);
    }
    write_csv(out.path("compare.csv"), {{"epsilon", col_eps},
                                        {"dx", col_dx},
                                        {"sup_micro_vs_closed", e1},
                                        {"sup_micro_vs_grid", e2},
                                        {"sup_grid_vs_closed", e3},
                                        {"sup_micro_vs_closed_road0", e0}});
    write_svg_chart(out.path("error_vs_eps.svg"), "sup errors vs epsilon (log-log)",
                    {{"micro vs closed", col_eps, e1},
                     {"micro vs grid", col_eps, e2},
                     {"grid vs closed", col_eps, e3}},
                    true, true);

    Manifest m = base_manifest("compare", c);
    m.params = {{"T", fmt(T)},
                {"A_hat", fmt(est.A_hat)},
                {"A_used", fmt(table.A_used)},
                {"replicates", std::to_string(replicates)},
                {"T_est", fmt(T_est)},
                {"dx", fmt(dx)}};
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();
    for (const auto& row : table.rows)
        std::printf("eps = %-8g sup|nu_eps - closed| = %-10.4g sup|nu_eps - grid| = %-10.4g "
                    "sup|grid - closed| = %.4g\n",
                    row.epsilon, row.sup_micro_vs_closed, row.sup_micro_vs_grid,
                    row.sup_grid_vs_closed);
    return 0;
}

int run_diagnostics(const Common& c, int replicates, const std::vector<double>& times,
                    double T_theta) {
    const ModelSpec spec = load_spec(c.spec_path);
    const JunctionLaw law = build_example_law(spec);
    const EffectiveModel eff = compute_effective(spec);
    OutputTracker out(c.out_dir);

    const ConcentrationReport conc =
        concentration_diagnostic(spec, law, eff, replicates, times, c.seed, c.workers);
    write_csv(out.path("concentration.csv"),
              {{"t", conc.times}, {"sigma", conc.sigma}, {"sigma_over_t", conc.sigma_over_t}});
    write_svg_chart(out.path("concentration.svg"), "sigma(theta(t)) vs t (log-log)",
                    {{"sigma", conc.times, conc.sigma}}, true, true);

    // superadditivity needs the replicate curves themselves
    std::vector<ThetaCurve> curves(static_cast<std::size_t>(replicates));
    {
        WindowExtent w = sized_window(law, T_theta);
        SimConfig cfg = make_sim_config(law, T_theta, 128);
        for (int r = 0; r < replicates; ++r) {
            Realization real = sample_realization(
                spec, replicate_seed(c.seed ^ 0xD1A6ULL, static_cast<std::uint64_t>(r)), w.lo, w.hi);
            curves[static_cast<std::size_t>(r)] = run_theta(real, law, eff, cfg, w.lo, w.hi);
        }
    }
    std::vector<double> h_grid;
    for (int i = 1; i <= 6; ++i) h_grid.push_back(-eff.A0 * i / 7.0);
    const SuperadditivityReport sup = superadditivity_diagnostic(curves, eff, h_grid);
    write_csv(out.path("superadditivity_k.csv"),
              {{"h", sup.h_grid}, {"k_eh", sup.k_eh}, {"k_eh_se", sup.k_eh_se}});
    {
        std::vector<CsvColumn> mcols{{"t", sup.t_grid}};
        std::vector<double> theta_mean(sup.t_grid.size(), 0.0);
        for (const auto& c2 : curves)
            for (std::size_t i = 0; i < theta_mean.size(); ++i)
                theta_mean[i] += c2.theta[i] / static_cast<double>(curves.size());
        mcols.push_back({"theta_mean", theta_mean});
        for (std::size_t hi = 0; hi < sup.h_grid.size(); ++hi)
            mcols.push_back({"M_h" + std::to_string(hi), sup.m_curves[hi]});
        write_csv(out.path("superadditivity_m.csv"), mcols);
    }
    write_csv(out.path("superadditivity_defects.csv"),
              {{"t", sup.defect_t}, {"h", sup.defect_h}, {"defect", sup.defect}});

    // corrector LLN snapshot
    Realization real = sample_realization(spec, c.seed ^ 0xC0FFEEULL, -20000, 20000);
    const CorrectorSequence cs = build_corrector(spec, real, eff, 0, 10000);
    std::vector<double> idx, wval;
    for (long j = -cs.n; j <= cs.n; j += 25) {
        idx.push_back(static_cast<double>(j));
        wval.push_back(cs.at(j));
    }
    write_csv(out.path("corrector.csv"), {{"i", idx}, {"W", wval}});

    json rep;
    rep["concentration"] = {{"loglog_slope", conc.loglog_slope},
                            {"loglog_slope_se", conc.loglog_slope_se},
                            {"degenerate", conc.degenerate}};
    rep["superadditivity"] = {{"k_e", sup.k_e},
                              {"k_negative", sup.k_negative},
                              {"implied_A", sup.implied_A}};
    {
        std::ofstream f(out.path("diagnostics.json"));
        f << rep.dump(2) << "\n";
    }

    Manifest m = base_manifest("diagnostics", c);
    m.params = {{"replicates", std::to_string(replicates)}, {"T_theta", fmt(T_theta)}};
    m.outputs = out.names();
    write_manifest(out.path("manifest.json"), m);
    out.commit();
    std::printf("concentration log-log slope: %.3f (se %.3f)\n", conc.loglog_slope,
                conc.loglog_slope_se);
    std::printf("superadditivity: k_e = %.4g, dichotomy %s, implied A = %.6g\n", sup.k_e,
                sup.k_negative ? "k_e < 0" : "k_e = 0", sup.implied_A);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"trafhom: micro-to-macro traffic junction laboratory"};
    app.require_subcommand(1);

    Cfg cfg;
    std::string config_path;
    // pre-scan so config values become flag defaults
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    if (!config_path.empty()) cfg.load(config_path);
    app.add_option("--config", config_path, "JSON config file (flags override)");

    Common common;
    common.out_dir.clear();
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--spec", common.spec_path, "model spec JSON");
        sub->add_option("--out", common.out_dir, "output directory");
        sub->add_option("--seed", common.seed, "base RNG seed");
        sub->add_option("--workers", common.workers, "parallel replicate workers");
    };
    // flags override the config file, which overrides the built-in defaults
    auto resolve_common = [&](CLI::App* sub, const std::string& name) {
        if (!sub->count("--spec") && common.spec_path.empty())
            common.spec_path = cfg.get<std::string>(name, "spec", "");
        if (!sub->count("--out") && common.out_dir.empty())
            common.out_dir = cfg.get<std::string>(name, "out", "out-" + name);
        if (!sub->count("--seed")) common.seed = cfg.get<std::uint64_t>(name, "seed", 1);
        if (!sub->count("--workers")) common.workers = cfg.get<int>(name, "workers", 1);
    };

    auto* homog = app.add_subcommand("homogenize", "compute the effective model");
    add_common(homog);

    auto* sim = app.add_subcommand("simulate", "one seeded micro run");
    add_common(sim);
    double sim_T = cfg.get<double>("simulate", "T", 100.0);
    long sim_window = cfg.get<long>("simulate", "window", 0);
    double sim_eps = cfg.get<double>("simulate", "epsilon", 0.0);
    std::string sim_times = cfg.get<std::string>("simulate", "times", "");
    std::string sim_xgrid = cfg.get<std::string>("simulate", "x_grid", "");
    bool sim_dump = cfg.get<bool>("simulate", "dump_trajectory", false);
    sim->add_option("--T", sim_T, "horizon");
    sim->add_option("--window", sim_window, "total window size (0 = auto)");
    sim->add_option("--epsilon", sim_eps, "scale for observables (0 = skip)");
    sim->add_option("--times", sim_times, "macroscopic sample times, comma separated");
    sim->add_option("--x-grid", sim_xgrid, "x grid, comma separated");
    sim->add_flag("--dump-trajectory", sim_dump, "write binary trajectory stream");

    auto* lim = app.add_subcommand("estimate-limiter", "estimate the flux limiter");
    add_common(lim);
    int lim_R = cfg.get<int>("estimate-limiter", "replicates", 64);
    double lim_T = cfg.get<double>("estimate-limiter", "T", 200.0);
    lim->add_option("--replicates", lim_R, "replicate count");
    lim->add_option("--T", lim_T, "estimation horizon");

    auto* mac = app.add_subcommand("solve-macro", "solve the limit junction problem");
    add_common(mac);
    double mac_A = cfg.get<double>("solve-macro", "A", 0.0);
    std::string mac_lim = cfg.get<std::string>("solve-macro", "limiter", "");
    double mac_dx = cfg.get<double>("solve-macro", "dx", 0.02);
    double mac_extent = cfg.get<double>("solve-macro", "extent", 4.0);
    double mac_T = cfg.get<double>("solve-macro", "T", 1.0);
    mac->add_option("--A", mac_A, "flux limiter (0 = use A0)");
    mac->add_option("--limiter", mac_lim, "limiter.json from estimate-limiter");
    mac->add_option("--dx", mac_dx, "grid spacing");
    mac->add_option("--extent", mac_extent, "branch length");
    mac->add_option("--T", mac_T, "horizon");

    auto* cmp = app.add_subcommand("compare", "full micro-macro pipeline");
    add_common(cmp);
    std::string cmp_eps = cfg.get<std::string>("compare", "epsilons", "0.1,0.05,0.025");
    double cmp_T = cfg.get<double>("compare", "T", 2.0);
    int cmp_R = cfg.get<int>("compare", "replicates", 32);
    double cmp_Test = cfg.get<double>("compare", "T_est", 150.0);
    double cmp_dx = cfg.get<double>("compare", "dx", 0.02);
    cmp->add_option("--epsilons", cmp_eps, "epsilon list");
    cmp->add_option("--T", cmp_T, "macroscopic horizon");
    cmp->add_option("--replicates", cmp_R, "limiter replicates");
    cmp->add_option("--T-est", cmp_Test, "limiter horizon");
    cmp->add_option("--dx", cmp_dx, "macro grid spacing");

    auto* diag = app.add_subcommand("diagnostics", "concentration / superadditivity / corrector");
    add_common(diag);
    int diag_R = cfg.get<int>("diagnostics", "replicates", 64);
    std::string diag_times = cfg.get<std::string>("diagnostics", "times", "25,50,100,200");
    double diag_T = cfg.get<double>("diagnostics", "T_theta", 100.0);
    diag->add_option("--replicates", diag_R, "replicate count");
    diag->add_option("--times", diag_times, "concentration sample times");
    diag->add_option("--T-theta", diag_T, "superadditivity horizon");

    CLI11_PARSE(app, argc, argv);

    try {
        if (homog->parsed()) resolve_common(homog, "homogenize");
        if (sim->parsed()) resolve_common(sim, "simulate");
        if (lim->parsed()) resolve_common(lim, "estimate-limiter");
        if (mac->parsed()) resolve_common(mac, "solve-macro");
        if (cmp->parsed()) resolve_common(cmp, "compare");
        if (diag->parsed()) resolve_common(diag, "diagnostics");
        if (common.spec_path.empty())
            throw std::invalid_argument("missing --spec (model spec JSON)");
        if (homog->parsed()) return run_homogenize(common);
        if (sim->parsed())
            return run_simulate(common, sim_T, sim_window, sim_eps,
                                sim_times.empty() ? std::vector<double>{} : parse_list(sim_times),
                                sim_xgrid.empty() ? std::vector<double>{} : parse_list(sim_xgrid),
                                sim_dump);
        if (lim->parsed()) return run_estimate_limiter(common, lim_R, lim_T);
        if (mac->parsed()) return run_solve_macro(common, mac_A, mac_lim, mac_dx, mac_extent, mac_T);
        if (cmp->parsed()) return run_compare(common, parse_list(cmp_eps), cmp_T, cmp_R, cmp_Test, cmp_dx);
        if (diag->parsed())
            return run_diagnostics(common, diag_R, parse_list(diag_times), diag_T);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
