#pragma once

// File formats: model-spec JSON, EffectiveModel JSON, CSV artifacts with
// manifest siblings, the binary trajectory stream, and small SVG line charts.

#include <string>
#include <vector>

#include "trafhom/homog.hpp"
#include "trafhom/model.hpp"

namespace trafhom {

ModelSpec load_spec(const std::string& path);          // throws with line/field info
ModelSpec spec_from_json_text(const std::string& text, const std::string& origin = "<string>");
std::string spec_hash_hex(const std::string& path);    // FNV-1a 64 of the file bytes

void save_effective(const EffectiveModel& eff, const std::string& path);
EffectiveModel load_effective(const std::string& path);

// CSV writers print doubles with %.17g so reruns are byte-identical.
struct CsvColumn {
    std::string name;
    std::vector<double> values;
};
void write_csv(const std::string& path, const std::vector<CsvColumn>& columns);

struct SvgSeries {
    std::string label;
    std::vector<double> x, y;
};
// Minimal line chart (axes, ticks, legend). log_x/log_y plot log10 of the data.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::vector<SvgSeries>& series, bool log_x = false, bool log_y = false);

// Versioned little-endian stream of (t, i, U) rows.
class TrajectoryWriter {
  public:
    explicit TrajectoryWriter(const std::string& path);
    ~TrajectoryWriter();
    void row(double t, double i, double u);
    void close();

  private:
    void* f_ = nullptr;
    std::string path_;
    std::uint64_t rows_ = 0;
};

struct TrajectoryRow {
    double t, i, u;
};
std::vector<TrajectoryRow> read_trajectory(const std::string& path);

// Every artifact directory gets a manifest.json capturing what reproduces it.
struct Manifest {
    std::string command;
    std::string spec_path;
    std::string spec_hash;
    std::uint64_t seed = 0;
    std::vector<std::pair<std::string, std::string>> params;
    std::vector<std::string> outputs;
};
void write_manifest(const std::string& path, const Manifest& m);

}  // namespace trafhom
