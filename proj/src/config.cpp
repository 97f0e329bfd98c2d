#include "hermflow/config.hpp"

#include "hermflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

namespace hermflow {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
    throw ConfigError(origin + ": " + what);
}

int to_int(const std::string& origin, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        bad(origin, "key '" + key + "' needs an integer, got '" + v + "'");
    }
}

double to_double(const std::string& origin, const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        bad(origin, "key '" + key + "' needs a number, got '" + v + "'");
    }
}

std::vector<int> to_int_list(const std::string& origin, const std::string& key,
                             const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_int(origin, key, item));
    }
    return out;
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    bool dt_auto = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = origin + ":" + std::to_string(lineno);
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) bad(where, "expected 'key = value', got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) bad(where, "empty key");

        if (key == "dimension") cfg.dimension = to_int(where, key, val);
        else if (key == "lattice_n") cfg.lattice_n = to_int(where, key, val);
        else if (key == "reduction") cfg.reduction = to_int_list(where, key, val);
        else if (key == "dt") {
            if (val == "auto") { dt_auto = true; cfg.dt = 0.0; }
            else cfg.dt = to_double(where, key, val);
        } else if (key == "steps") cfg.steps = to_int(where, key, val);
        else if (key == "scheme") {
            if (val == "rk4") cfg.scheme = Scheme::Rk4;
            else if (val == "euler") cfg.scheme = Scheme::Euler;
            else bad(where, "scheme must be rk4 or euler, got '" + val + "'");
        } else if (key == "flow") {
            if (val == "eta") cfg.flow = FlowKind::Eta;
            else if (val == "kahler_ricci") cfg.flow = FlowKind::KahlerRicci;
            else bad(where, "flow must be eta or kahler_ricci, got '" + val + "'");
        } else if (key == "time_normalization") {
            if (val == "unit") cfg.time_normalization = TimeNorm::Unit;
            else if (val == "one_over_m_minus_1")
                cfg.time_normalization = TimeNorm::OneOverMMinus1;
            else bad(where, "time_normalization must be unit or one_over_m_minus_1");
        } else if (key == "initial.kind") cfg.initial_kind = val;
        else if (key == "initial.amplitude") cfg.initial_amplitude = to_double(where, key, val);
        else if (key == "initial.path") cfg.initial_path = val;
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(where, key, val));
        else if (key == "output.stride") cfg.output_stride = to_int(where, key, val);
        else if (key.rfind("tolerance.", 0) == 0) {
            std::string name = key.substr(10);
            if (name.empty()) bad(where, "empty tolerance name");
            cfg.tolerances[name] = to_double(where, key, val);
        } else bad(where, "unknown key '" + key + "'");
    }
    (void)dt_auto;

    if (cfg.dimension < 1) bad(origin, "dimension must be >= 1");
    if (cfg.lattice_n < 4) bad(origin, "lattice_n must be >= 4");
    for (int d : cfg.reduction)
        if (d < 0 || d >= 2 * cfg.dimension)
            bad(origin, "reduction entry " + std::to_string(d) + " out of range");
    if (cfg.dt < 0.0) bad(origin, "dt must be >= 0 (0 or 'auto' selects half CFL)");
    if (cfg.steps < 1) bad(origin, "steps must be >= 1");
    if (cfg.output_stride < 1) bad(origin, "output.stride must be >= 1");
    static const char* kinds[] = {"flat", "kahler_potential", "perturbation", "balanced_file"};
    if (std::find(std::begin(kinds), std::end(kinds), cfg.initial_kind) == std::end(kinds))
        bad(origin, "initial.kind must be one of flat, kahler_potential, perturbation, "
                    "balanced_file; got '" + cfg.initial_kind + "'");
    if (cfg.initial_kind == "balanced_file" && cfg.initial_path.empty())
        bad(origin, "initial.kind = balanced_file needs initial.path");
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    RunConfig cfg = parse_run_config(in, path);
    if (!cfg.initial_path.empty()) {
        std::filesystem::path p(cfg.initial_path);
        if (p.is_relative()) p = std::filesystem::path(path).parent_path() / p;
        cfg.initial_path = p.string();
    }
    return cfg;
}

MetricField build_initial(const RunConfig& cfg) {
    TorusLattice lat(cfg.dimension, cfg.lattice_n, cfg.reduction);
    try {
        if (cfg.initial_kind == "flat") return MetricField::flat(lat);
        if (cfg.initial_kind == "kahler_potential")
            return kahler_potential_field(lat, cfg.initial_amplitude, cfg.seed);
        if (cfg.initial_kind == "perturbation")
            return perturbation_field(lat, cfg.initial_amplitude, cfg.seed);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("initial data construction failed: ") + e.what());
    }
    // balanced_file
    MetricField f;
    try {
        f = read_snapshot(cfg.initial_path);
    } catch (const std::exception& e) {
        throw ConfigError("cannot read snapshot '" + cfg.initial_path + "': " + e.what());
    }
    if (f.lat.m() != cfg.dimension || f.lat.n() != cfg.lattice_n)
        throw ConfigError("snapshot grid (m=" + std::to_string(f.lat.m()) + ", n=" +
                          std::to_string(f.lat.n()) + ") does not match the config");
    return f;
}

FlowConfig flow_config(const RunConfig& cfg, const MetricField& initial) {
    FlowConfig fc;
    fc.which = cfg.flow;
    fc.time_normalization = cfg.time_normalization;
    fc.scheme = cfg.scheme;
    fc.steps = cfg.steps;
    fc.stride = cfg.output_stride;
    fc.dt = cfg.dt > 0.0 ? cfg.dt : 0.5 * cfl_bound(initial, fc.cfl_factor);
    if (!(fc.dt > 0.0)) throw ConfigError("automatic dt failed: CFL bound is zero");
    return fc;
}

std::vector<std::string> run_checks(const RunConfig& cfg, const RunResult& r, bool& ok) {
    ok = true;
    std::vector<std::string> lines;
    auto report = [&](const std::string& name, bool pass, double got, double want) {
        std::ostringstream os;
        os.precision(17);
        os << (pass ? "ok   " : "FAIL ") << name << " got " << got << " allowed " << want;
        lines.push_back(os.str());
        ok = ok && pass;
    };
    const DiagnosticsRow& first = r.rows.front();
    const DiagnosticsRow& last = r.rows.back();
    for (const auto& [name, tol] : cfg.tolerances) {
        if (name == "kahler_growth_factor") {
            // ||d eta|| never exceeds tol times its initial discretization value
            double mx = 0.0;
            for (const auto& row : r.rows) mx = std::max(mx, row.kahlerRes);
            report(name, mx <= tol * std::max(first.kahlerRes, 1e-300), mx,
                   tol * first.kahlerRes);
        } else if (name == "balanced_growth") {
            report(name, last.balancedRes <= first.balancedRes + tol, last.balancedRes,
                   first.balancedRes + tol);
        } else if (name == "stationary_variation") {
            double mx = 0.0;
            for (const auto& row : r.rows) {
                mx = std::max({mx, std::abs(row.maxT2 - first.maxT2),
                               std::abs(row.maxRic - first.maxRic),
                               std::abs(row.minEig - first.minEig),
                               std::abs(row.kahlerRes - first.kahlerRes),
                               std::abs(row.balancedRes - first.balancedRes)});
            }
            report(name, mx <= tol, mx, tol);
        } else if (name == "anomaly_residual") {
            std::vector<double> res = anomaly_equivalence_residual(r, r.config.omega);
            double mx = 0.0;
            for (double x : res) mx = std::max(mx, x);
            report(name, mx <= tol, mx, tol);
        } else if (name == "torsion_residual") {
            std::vector<double> res = torsion_flow_residual(r);
            double mx = 0.0;
            for (double x : res) mx = std::max(mx, x);
            report(name, mx <= tol, mx, tol);
        } else if (name == "max_t2_final") {
            report(name, last.maxT2 <= tol, last.maxT2, tol);
        } else if (name == "max_ric_final") {
            report(name, last.maxRic <= tol, last.maxRic, tol);
        } else {
            throw ConfigError("unknown tolerance '" + name + "'");
        }
    }
    return lines;
}

MetricField kahler_potential_field(const TorusLattice& lat, double amp, std::uint64_t seed) {
    const int m = lat.m();
    Rng rng(seed);
    struct Wave {
        std::vector<int> k;
        double phase;
    };
    std::vector<Wave> waves;
    for (int r = 0; r < 2; ++r) {
        Wave w{std::vector<int>(static_cast<std::size_t>(lat.dims()), 0),
               rng.integer(0, 3) * (std::numbers::pi / 2.0)};
        bool nz = false;
        for (int d = 0; d < lat.dims(); ++d)
            if (!lat.is_reduced(d)) {
                w.k[static_cast<std::size_t>(d)] = rng.integer(-2, 2);
                nz |= w.k[static_cast<std::size_t>(d)] != 0;
            }
        if (!nz) w.k[0] = r + 1;
        waves.push_back(std::move(w));
    }
    MetricField f;
    f.lat = lat;
    f.g.reserve(lat.sites());
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        auto x = lat.point(s);
        Mat g = Mat::Identity(m, m);
        for (const Wave& w : waves) {
            double th = w.phase;
            for (std::size_t d = 0; d < x.size(); ++d) th += kTwoPi * w.k[d] * x[d];
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) {
                    cd kb = 0.5 * cd(w.k[static_cast<std::size_t>(2 * b)],
                                     -w.k[static_cast<std::size_t>(2 * b + 1)]);
                    cd ka = 0.5 * cd(w.k[static_cast<std::size_t>(2 * a)],
                                     -w.k[static_cast<std::size_t>(2 * a + 1)]);
                    // g_{\bar ab} += d_b dbar_a phi for phi = amp cos(th)
                    g(a, b) += -amp * kTwoPi * kTwoPi * kb * std::conj(ka) * std::cos(th);
                }
        }
        f.g.push_back(std::move(g));
    }
    f.validate();
    return f;
}

MetricField perturbation_field(const TorusLattice& lat, double amp, std::uint64_t seed) {
    const int m = lat.m();
    Rng rng(seed);
    struct Term {
        Mat c;
        std::vector<int> k;
        double phase;
    };
    std::vector<Term> terms;
    for (int r = 0; r < 3; ++r) {
        Term t{Mat(m, m), std::vector<int>(static_cast<std::size_t>(lat.dims()), 0),
               rng.integer(0, 3) * (std::numbers::pi / 2.0)};
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) t.c(a, b) = amp * rng.complex_unit();
        bool nz = false;
        for (int d = 0; d < lat.dims(); ++d)
            if (!lat.is_reduced(d)) {
                t.k[static_cast<std::size_t>(d)] = rng.integer(-1, 1);
                nz |= t.k[static_cast<std::size_t>(d)] != 0;
            }
        if (!nz) t.k[0] = 1;
        terms.push_back(std::move(t));
    }
    MetricField f;
    f.lat = lat;
    f.g.reserve(lat.sites());
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        auto x = lat.point(s);
        Mat g = Mat::Identity(m, m);
        for (const Term& t : terms) {
            double th = t.phase;
            for (std::size_t d = 0; d < x.size(); ++d) th += kTwoPi * t.k[d] * x[d];
            Mat w = std::cos(th) * t.c;
            g += 0.5 * (w + Mat(w.adjoint()));
        }
        f.g.push_back(std::move(g));
    }
    f.validate();
    return f;
}

}  // namespace hermflow
