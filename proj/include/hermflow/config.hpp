#pragma once

// Declarative run configuration: a flat key-value text format describing a
// lattice, a flow, initial data and post-run tolerance checks, plus the
// constructors that realize the initial data.  The format is line-oriented
// ("key = value", '#' comments), diff-friendly and trivially parseable.

#include "hermflow/flows.hpp"
#include "hermflow/lattice.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace hermflow {

// Thrown on malformed or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    int dimension = 2;
    int lattice_n = 16;
    std::vector<int> reduction;  // reduced real coordinates, 0..2m-1

    FlowKind flow = FlowKind::Eta;
    TimeNorm time_normalization = TimeNorm::Unit;
    Scheme scheme = Scheme::Rk4;
    double dt = 0.0;  // 0 means automatic: half the CFL bound of the data
    int steps = 100;
    int output_stride = 1;

    // initial.kind in {flat, kahler_potential, perturbation, balanced_file}
    std::string initial_kind = "flat";
    double initial_amplitude = 0.0;  // kahler_potential / perturbation
    std::string initial_path;        // balanced_file (relative to the config)
    std::uint64_t seed = 1;

    // tolerance.<name> = value entries; names are validated by check names.
    std::map<std::string, double> tolerances;
};

// Parses the text format; unknown keys, bad values or inconsistent
// combinations throw ConfigError.  `origin` names the source in messages and
// anchors relative initial.path entries (directory of the config file).
RunConfig parse_run_config(std::istream& in, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

// Realizes the configured initial data (throws ConfigError on bad kinds,
// missing files or amplitudes that break positivity).
MetricField build_initial(const RunConfig& cfg);

// The flows-module configuration implied by cfg and its initial data
// (resolves dt = 0 to half the CFL bound).
FlowConfig flow_config(const RunConfig& cfg, const MetricField& initial);

// Named post-run checks driven by the tolerance.* entries; returns one line
// per check ("ok <name> ..." / "FAIL <name> ...") and sets `ok` accordingly.
// Unknown tolerance names throw ConfigError.
std::vector<std::string> run_checks(const RunConfig& cfg, const RunResult& r, bool& ok);

// ---------------------------------------------------------------------------
// Initial-data constructors (shared with tests and the acceptance suite).

// Exactly Kahler analytic data g = I + ddbar(phi) from a seeded trigonometric
// potential with mixed wavenumbers on the active coordinates.
MetricField kahler_potential_field(const TorusLattice& lat, double amp, std::uint64_t seed);

// Generic non-Kahler data: flat plus seeded Hermitian trigonometric waves.
MetricField perturbation_field(const TorusLattice& lat, double amp, std::uint64_t seed);

}  // namespace hermflow
