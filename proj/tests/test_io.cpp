#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "trafhom/homog.hpp"
#include "trafhom/io.hpp"

using namespace trafhom;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const std::string& name) {
    return (fs::temp_directory_path() / ("trafhom_io_" + name)).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("spec loading") {
    const std::string good = std::string(TRAFHOM_CONFIG_DIR) + "/m_sym_2roads.json";
    const ModelSpec s = load_spec(good);
    CHECK(s.name == "M-sym-2roads");
    CHECK(s.roads == 2);
    CHECK(s.types.size() == 2);
    CHECK(s.types[0].road_profiles.size() == 3);
    CHECK(s.road_uniform());

    SUBCASE("malformed JSON mentions the path") {
        const std::string bad = tmp_path("bad.json");
        std::ofstream(bad) << "{ not json";
        CHECK_THROWS_WITH_AS(load_spec(bad), doctest::Contains("bad.json"), std::invalid_argument);
    }
    SUBCASE("missing field is reported") {
        CHECK_THROWS_AS(spec_from_json_text("{\"roads\": 1}", "x"), std::invalid_argument);
    }
    SUBCASE("schema violation at a type is located") {
        const char* txt = R"({
          "name": "t", "roads": 1, "delta_min": 1.0, "e_max": 3.0,
          "radii": {"r0": 4.0, "r1": 3.0, "r2": 2.0, "r3": 1.0},
          "types": [{"route": 1, "weight": 1.0}]
        })";
        CHECK_THROWS_WITH_AS(spec_from_json_text(txt, "inline"), doctest::Contains("types[0]"),
                             std::invalid_argument);
    }
    SUBCASE("per-road profile override") {
        const char* txt = R"({
          "name": "t", "roads": 1, "delta_min": 1.0, "e_max": 3.0,
          "radii": {"r0": 4.0, "r1": 3.0, "r2": 2.0, "r3": 1.0},
          "types": [{"route": 1, "weight": 1.0,
                     "profile": {"breakpoints": [1.0, 3.0], "values": [0.0, 2.0]},
                     "road_profiles": {"1": {"breakpoints": [1.0, 2.0], "values": [0.0, 2.0]}}}]
        })";
        const ModelSpec t = spec_from_json_text(txt, "inline");
        CHECK_FALSE(t.road_uniform());
        CHECK(t.types[0].road_profiles[0].h_max() == 3.0);
        CHECK(t.types[0].road_profiles[1].h_max() == 2.0);
    }
}

TEST_CASE("spec hash is stable") {
    const std::string good = std::string(TRAFHOM_CONFIG_DIR) + "/m_sym_2roads.json";
    CHECK(spec_hash_hex(good) == spec_hash_hex(good));
    CHECK(spec_hash_hex(good).size() == 16);
}

TEST_CASE("effective model serialization round trip") {
    const ModelSpec s = load_spec(std::string(TRAFHOM_CONFIG_DIR) + "/m_two_type.json");
    const EffectiveModel eff = compute_effective(s);
    const std::string path = tmp_path("eff.json");
    save_effective(eff, path);
    const EffectiveModel back = load_effective(path);
    REQUIRE(back.roads.size() == eff.roads.size());
    CHECK(back.A0 == eff.A0);
    for (std::size_t k = 0; k < eff.roads.size(); ++k) {
        CHECK(back.roads[k].e_k == eff.roads[k].e_k);
        CHECK(back.roads[k].v_e == eff.roads[k].v_e);
        CHECK(back.roads[k].h_min == eff.roads[k].h_min);
        REQUIRE(back.roads[k].hamiltonian.xs == eff.roads[k].hamiltonian.xs);
        REQUIRE(back.roads[k].hamiltonian.ys == eff.roads[k].hamiltonian.ys);
        for (double p : {-1.7, -0.9, -0.33, -0.05})
            CHECK(back.roads[k].H(p) == eff.roads[k].H(p));
    }
}

TEST_CASE("CSV output is byte-identical across reruns") {
    const std::string a = tmp_path("a.csv"), b = tmp_path("b.csv");
    const std::vector<CsvColumn> cols = {{"t", {0.0, 0.1, 0.2}},
                                         {"v", {1.0 / 3.0, 2.0 / 7.0, 1e-17}}};
    write_csv(a, cols);
    write_csv(b, cols);
    CHECK(slurp(a) == slurp(b));
    CHECK(slurp(a).substr(0, 4) == "t,v\n");
    CHECK_THROWS_AS(write_csv(tmp_path("r.csv"), {{"a", {1.0}}, {"b", {1.0, 2.0}}}),
                    std::invalid_argument);
}

TEST_CASE("binary trajectory stream round trip") {
    const std::string path = tmp_path("traj.bin");
    {
        TrajectoryWriter w(path);
        w.row(0.0, -3.0, -7.5);
        w.row(0.5, -3.0, -6.25);
        w.row(0.5, 4.0, 8.0);
    }
    const auto rows = read_trajectory(path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].u == -7.5);
    CHECK(rows[2].i == 4.0);
    CHECK(rows[1].t == 0.5);

    std::ofstream(tmp_path("garbage.bin")) << "nope";
    CHECK_THROWS_AS(read_trajectory(tmp_path("garbage.bin")), std::runtime_error);
}

TEST_CASE("SVG chart writer emits well-formed polylines") {
    const std::string path = tmp_path("chart.svg");
    write_svg_chart(path, "test", {{"one", {1.0, 2.0, 3.0}, {0.5, 0.7, 0.2}}});
    const std::string body = slurp(path);
    CHECK(body.find("<svg") != std::string::npos);
    CHECK(body.find("polyline") != std::string::npos);
    CHECK(body.find("</svg>") != std::string::npos);
    // log-log with nonpositive values silently drops them
    write_svg_chart(path, "log", {{"s", {0.1, 1.0, 10.0}, {-1.0, 1.0, 100.0}}}, true, true);
    CHECK(slurp(path).find("polyline") != std::string::npos);
}

TEST_CASE("manifest is valid JSON with the reproduction fields") {
    const std::string path = tmp_path("manifest.json");
    Manifest m;
    m.command = "simulate";
    m.spec_path = "spec.json";
    m.spec_hash = "abc";
    m.seed = 42;
    m.params = {{"T", "100"}};
    m.outputs = {"theta.csv"};
    write_manifest(path, m);
    const std::string body = slurp(path);
    CHECK(body.find("\"seed\": 42") != std::string::npos);
    CHECK(body.find("\"spec_hash\": \"abc\"") != std::string::npos);
    CHECK(body.find("theta.csv") != std::string::npos);
}
