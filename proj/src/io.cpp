#include "trafhom/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace trafhom {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

VelocityProfile parse_profile(const json& j, const std::string& where) {
    VelocityProfile p;
    if (!j.contains("breakpoints") || !j.contains("values"))
        throw std::invalid_argument(where + ": profile needs breakpoints and values arrays");
    p.breakpoints = j.at("breakpoints").get<std::vector<double>>();
    p.values = j.at("values").get<std::vector<double>>();
    return p;
}

}  // namespace

ModelSpec spec_from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    ModelSpec spec;
    try {
        spec.name = j.value("name", "unnamed");
        spec.roads = j.at("roads").get<int>();
        spec.delta_min = j.at("delta_min").get<double>();
        spec.e_max = j.at("e_max").get<double>();
        const json& radii = j.at("radii");
        spec.r0 = radii.at("r0").get<double>();
        spec.r1 = radii.at("r1").get<double>();
        spec.r2 = radii.at("r2").get<double>();
        spec.r3 = radii.at("r3").get<double>();
        if (j.contains("kappa") && !j.at("kappa").is_null())
            spec.kappa_explicit = j.at("kappa").get<double>();
        int ti = 0;
        for (const json& jt : j.at("types")) {
            VehicleType t;
            std::ostringstream where;
            where << origin << ": types[" << ti << "]";
            t.name = jt.value("name", "type-" + std::to_string(ti));
            t.route = jt.at("route").get<int>();
            t.weight = jt.at("weight").get<double>();
            t.road_profiles.assign(static_cast<std::size_t>(spec.roads) + 1, {});
            t.road_uniform = true;
            if (jt.contains("profile")) {
                const VelocityProfile base = parse_profile(jt.at("profile"), where.str());
                for (auto& rp : t.road_profiles) rp = base;
            }
            if (jt.contains("road_profiles")) {
                t.road_uniform = false;
                for (const auto& [key, val] : jt.at("road_profiles").items()) {
                    const int road = std::stoi(key);
                    if (road < 0 || road > spec.roads)
                        throw std::invalid_argument(where.str() + ": road key out of range");
                    t.road_profiles[static_cast<std::size_t>(road)] =
                        parse_profile(val, where.str());
                }
            }
            if (!jt.contains("profile") && !jt.contains("road_profiles"))
                throw std::invalid_argument(where.str() + ": needs profile or road_profiles");
            spec.types.push_back(std::move(t));
            ++ti;
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    spec.validate();
    return spec;
}

ModelSpec load_spec(const std::string& path) { return spec_from_json_text(read_file(path), path); }

std::string spec_hash_hex(const std::string& path) {
    const std::string bytes = read_file(path);
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

// ---------------------------------------------------------------------------
// EffectiveModel serialization

void save_effective(const EffectiveModel& eff, const std::string& path) {
    json j;
    j["K"] = eff.K;
    j["A0"] = eff.A0;
    json roads = json::array();
    for (const auto& r : eff.roads) {
        json jr;
        jr["k"] = r.k;
        jr["pi"] = r.pi;
        jr["v_bar"] = {{"e", r.v_bar.xs}, {"v", r.v_bar.ys}};
        jr["hamiltonian"] = {{"p", r.hamiltonian.xs}, {"h", r.hamiltonian.ys}};
        jr["v_bar_max"] = r.v_bar_max;
        jr["e_upper"] = r.e_upper;
        jr["e_k"] = r.e_k;
        jr["p_star"] = r.p_star;
        jr["h_min"] = r.h_min;
        jr["v_e"] = r.v_e;
        jr["z_min"] = r.z_min;
        roads.push_back(std::move(jr));
    }
    j["roads"] = std::move(roads);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

EffectiveModel load_effective(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
    EffectiveModel eff;
    eff.K = j.at("K").get<int>();
    eff.A0 = j.at("A0").get<double>();
    for (const json& jr : j.at("roads")) {
        RoadEffective r;
        r.k = jr.at("k").get<int>();
        r.pi = jr.at("pi").get<double>();
        r.v_bar.xs = jr.at("v_bar").at("e").get<std::vector<double>>();
        r.v_bar.ys = jr.at("v_bar").at("v").get<std::vector<double>>();
        r.hamiltonian.xs = jr.at("hamiltonian").at("p").get<std::vector<double>>();
        r.hamiltonian.ys = jr.at("hamiltonian").at("h").get<std::vector<double>>();
        r.v_bar_max = jr.at("v_bar_max").get<double>();
        r.e_upper = jr.at("e_upper").get<double>();
        r.e_k = jr.at("e_k").get<double>();
        r.p_star = jr.at("p_star").get<double>();
        r.h_min = jr.at("h_min").get<double>();
        r.v_e = jr.at("v_e").get<double>();
        r.z_min = jr.at("z_min").get<int>();
        eff.roads.push_back(std::move(r));
    }
    return eff;
}

// ---------------------------------------------------------------------------
// CSV

void write_csv(const std::string& path, const std::vector<CsvColumn>& columns) {
    if (columns.empty()) throw std::invalid_argument("write_csv: no columns");
    const std::size_t n = columns.front().values.size();
    for (const auto& c : columns)
        if (c.values.size() != n) throw std::invalid_argument("write_csv: ragged columns");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    for (std::size_t c = 0; c < columns.size(); ++c)
        std::fprintf(f, "%s%s", columns[c].name.c_str(), c + 1 < columns.size() ? "," : "\n");
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < columns.size(); ++c)
            std::fprintf(f, "%.17g%s", columns[c].values[r], c + 1 < columns.size() ? "," : "\n");
    std::fclose(f);
}

// ---------------------------------------------------------------------------
// SVG

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

double nice_tick(double span) {
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    return (r < 1.5 ? 1.0 : r < 3.5 ? 2.0 : r < 7.5 ? 5.0 : 10.0) * mag;
}

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<SvgSeries>& series, bool log_x, bool log_y) {
    const int W = 760, H = 460, ml = 70, mr = 20, mt = 40, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    std::vector<SvgSeries> data = series;
    for (auto& s : data) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            double x = s.x[i], y = s.y[i];
            if (log_x) {
                if (!(x > 0)) continue;
                x = std::log10(x);
            }
            if (log_y) {
                if (!(y > 0)) continue;
                y = std::log10(y);
            }
            xs.push_back(x);
            ys.push_back(y);
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
        s.x = xs;
        s.y = ys;
    }
    if (xmin > xmax) { xmin = 0; xmax = 1; }
    if (ymin > ymax) { ymin = 0; ymax = 1; }
    if (xmax - xmin < 1e-12) { xmax += 0.5; xmin -= 0.5; }
    if (ymax - ymin < 1e-12) { ymax += 0.5; ymin -= 0.5; }
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "viewBox=\"0 0 %d %d\">\n<rect width=\"%d\" height=\"%d\" fill=\"white\"/>\n",
                 W, H, W, H, W, H);
    std::fprintf(f, "<text x=\"%d\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">%s</text>\n",
                 ml, title.c_str());
    std::fprintf(f,
                 "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"none\" "
                 "stroke=\"#444\"/>\n",
                 ml, mt, W - ml - mr, H - mt - mb);
    const double tx = nice_tick(xmax - xmin), ty = nice_tick(ymax - ymin);
    for (double x = std::ceil(xmin / tx) * tx; x <= xmax + 1e-9; x += tx) {
        std::fprintf(f,
                     "<line x1=\"%.1f\" y1=\"%d\" x2=\"%.1f\" y2=\"%d\" stroke=\"#ccc\"/>"
                     "<text x=\"%.1f\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"middle\">%s%.4g</text>\n",
                     px(x), mt, px(x), H - mb, px(x), H - mb + 16, log_x ? "1e" : "", x);
    }
    for (double y = std::ceil(ymin / ty) * ty; y <= ymax + 1e-9; y += ty) {
        std::fprintf(f,
                     "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#ccc\"/>"
                     "<text x=\"%d\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"end\">%s%.4g</text>\n",
                     ml, py(y), W - mr, py(y), ml - 6, py(y) + 4, log_y ? "1e" : "", y);
    }
    for (std::size_t s = 0; s < data.size(); ++s) {
        const char* color = kPalette[s % 8];
        std::fprintf(f, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\" points=\"", color);
        for (std::size_t i = 0; i < data[s].x.size(); ++i)
            std::fprintf(f, "%.2f,%.2f ", px(data[s].x[i]), py(data[s].y[i]));
        std::fprintf(f, "\"/>\n");
        std::fprintf(f,
                     "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"12\" "
                     "fill=\"%s\">%s</text>\n",
                     W - mr - 180, mt + 18 + 16 * static_cast<int>(s), color, data[s].label.c_str());
    }
    std::fprintf(f, "</svg>\n");
    std::fclose(f);
}

// ---------------------------------------------------------------------------
// binary trajectory stream

namespace {
constexpr char kMagic[8] = {'T', 'H', 'T', 'R', 'J', '0', '0', '1'};
}

TrajectoryWriter::TrajectoryWriter(const std::string& path) : path_(path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write " + path);
    f_ = f;
    std::fwrite(kMagic, 1, 8, f);
    const std::uint32_t version = 1, ncols = 3;
    std::fwrite(&version, 4, 1, f);
    std::fwrite(&ncols, 4, 1, f);
    const std::uint64_t rows = 0;  // rewritten on close
    std::fwrite(&rows, 8, 1, f);
}

void TrajectoryWriter::row(double t, double i, double u) {
    std::FILE* f = static_cast<std::FILE*>(f_);
    const double v[3] = {t, i, u};
    std::fwrite(v, 8, 3, f);
    ++rows_;
}

void TrajectoryWriter::close() {
    if (!f_) return;
    std::FILE* f = static_cast<std::FILE*>(f_);
    std::fseek(f, 16, SEEK_SET);
    std::fwrite(&rows_, 8, 1, f);
    std::fclose(f);
    f_ = nullptr;
}

TrajectoryWriter::~TrajectoryWriter() { close(); }

std::vector<TrajectoryRow> read_trajectory(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open " + path);
    char magic[8];
    std::uint32_t version = 0, ncols = 0;
    std::uint64_t rows = 0;
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        std::fclose(f);
        throw std::runtime_error(path + ": not a trajectory stream");
    }
    bool ok = std::fread(&version, 4, 1, f) == 1;
    ok = ok && std::fread(&ncols, 4, 1, f) == 1;
    ok = ok && std::fread(&rows, 8, 1, f) == 1;
    if (!ok) {
        std::fclose(f);
        throw std::runtime_error(path + ": truncated trajectory header");
    }
    if (version != 1 || ncols != 3) {
        std::fclose(f);
        throw std::runtime_error(path + ": unsupported trajectory version");
    }
    std::vector<TrajectoryRow> out;
    out.reserve(rows);
    for (std::uint64_t r = 0; r < rows; ++r) {
        double v[3];
        if (std::fread(v, 8, 3, f) != 3) break;
        out.push_back({v[0], v[1], v[2]});
    }
    std::fclose(f);
    return out;
}

// ---------------------------------------------------------------------------
// manifest

void write_manifest(const std::string& path, const Manifest& m) {
    json j;
    j["command"] = m.command;
    j["spec_path"] = m.spec_path;
    j["spec_hash"] = m.spec_hash;
    j["seed"] = m.seed;
    j["version"] = "0.1.0";
    json params = json::object();
    for (const auto& [k, v] : m.params) params[k] = v;
    j["params"] = std::move(params);
    j["outputs"] = m.outputs;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace trafhom
