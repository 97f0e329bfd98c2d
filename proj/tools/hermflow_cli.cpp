// Batch entry point: identity suites, flow runs from declarative configs,
// and balanced initial-data construction.  Exit codes: 0 = all checks within
// tolerance, 1 = check failure, 2 = configuration error, 3 = numerical halt.

#include "CLI11.hpp"
#include "json.hpp"

#include "hermflow/balanced.hpp"
#include "hermflow/config.hpp"
#include "hermflow/flows.hpp"
#include "hermflow/identities.hpp"
#include "hermflow/lattice.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hermflow;

namespace {

constexpr const char* kVersion = "hermflow 1.0.0";

int cmd_identities(const std::vector<int>& dims, int seeds, double tol,
                   const std::string& only) {
    std::vector<std::string> keys = identity_keys();
    if (!only.empty()) {
        if (std::find(keys.begin(), keys.end(), only) == keys.end()) {
            std::cerr << "error: unknown identity key '" << only << "'; known keys:\n";
            for (const auto& k : keys) std::cerr << "  " << k << "\n";
            return 2;
        }
        keys = {only};
    }
    bool all_ok = true;
    for (int m : dims)
        for (int s = 1; s <= seeds; ++s)
            for (const std::string& key : keys) {
                IdentityReport rep = check_identity(key, m, static_cast<std::uint64_t>(s));
                bool pass = rep.hypothesis_ok && rep.residual_rel <= tol;
                all_ok = all_ok && pass;
                json j = {{"id", rep.id},
                          {"dim", rep.dim},
                          {"seed", rep.seed},
                          {"residual_abs", rep.residual_abs},
                          {"residual_rel", rep.residual_rel},
                          {"scale", rep.scale},
                          {"hypothesis_ok", rep.hypothesis_ok},
                          {"pass", pass}};
                std::cout << j.dump() << "\n";
            }
    return all_ok ? 0 : 1;
}

int cmd_flow(const std::string& config_path, const std::string& out_dir) {
    RunConfig cfg;
    MetricField initial;
    FlowConfig fc;
    try {
        cfg = load_run_config(config_path);
        initial = build_initial(cfg);
        fc = flow_config(cfg, initial);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    RunResult res = run(fc, initial);

    // Stage everything in a sibling temp directory, then rename into place so
    // the output directory appears atomically.  A previous run of ours (it
    // contains manifest.json) is replaced; anything else is not touched.
    fs::path target(out_dir);
    fs::path tmp = target;
    tmp += ".tmp";
    std::error_code ec;
    fs::remove_all(tmp, ec);
    try {
        fs::create_directories(tmp);

        std::ofstream csv(tmp / "diagnostics.csv");
        csv << diagnostics_header() << "\n";
        for (const auto& row : res.rows) csv << csv_row(row) << "\n";

        for (std::size_t i = 0; i < res.snapshots.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "snapshot_%06zu.snap", i);
            write_snapshot((tmp / name).string(), res.snapshots[i]);
        }

        bool checks_ok = true;
        std::vector<std::string> check_lines = run_checks(cfg, res, checks_ok);

        json manifest = {{"subcommand", "flow"},
                         {"config", config_path},
                         {"out", out_dir},
                         {"seed", cfg.seed},
                         {"version", kVersion},
                         {"dt", fc.dt},
                         {"steps", fc.steps},
                         {"halt", halt_reason_name(res.halt)},
                         {"checks", check_lines}};
        std::ofstream(tmp / "manifest.json") << manifest.dump(2) << "\n";

        if (fs::exists(target)) {
            if (!fs::exists(target / "manifest.json")) {
                std::cerr << "error: output directory '" << out_dir
                          << "' exists and is not a previous run\n";
                fs::remove_all(tmp, ec);
                return 2;
            }
            fs::remove_all(target);
        }
        fs::rename(tmp, target);

        for (const auto& line : check_lines) std::cout << line << "\n";
        std::cout << "halt: " << halt_reason_name(res.halt) << "\n";
        if (res.halt != HaltReason::Completed) return 3;
        return checks_ok ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        fs::remove_all(tmp, ec);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        fs::remove_all(tmp, ec);
        return 2;
    }
}

int cmd_make_balanced(int m, int n, double eps, std::uint64_t seed, const std::string& out) {
    if (m == 2) {
        std::cerr << "error: m = 2 is refused: a positive (m-1,m-1)-form determines eta only "
                     "up to the conformal factor fixed through ||Omega||^2_eta, and that fix "
                     "is degenerate at m = 2 (the exponent 1/(m-2) blows up).  Use m >= 3.\n";
        return 2;
    }
    if (m < 2) {
        std::cerr << "error: m must be >= 3\n";
        return 2;
    }
    try {
        // Reduced lattice: fields vary along the first complex coordinate only
        // (the balanced construction is one-dimensional in nature; unreduced
        // m >= 3 grids are prohibitively large).
        std::vector<int> reduction;
        for (int d = 2; d < 2 * m; ++d) reduction.push_back(d);
        TorusLattice lat(m, n, reduction);
        HolVolForm om{};
        MetricField f = eta_root(build_psi(lat, eps, seed), om);
        write_snapshot(out, f);
        IdentityReport tau = check_balanced_tau(f, om);
        std::cout << "sites: " << lat.sites() << "\n"
                  << "balanced residual ||d(||Omega||^2 eta^{m-1})||_inf: "
                  << balanced_residual(f, om) << "\n"
                  << "tau = d log ||Omega||^2 residual: " << tau.residual_abs
                  << (tau.hypothesis_ok ? "" : " (hypothesis not met)") << "\n"
                  << "min metric eigenvalue: " << f.min_eigenvalue() << "\n"
                  << "wrote " << out << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical laboratory for Hermitian curvature flows on the torus"};
    app.require_subcommand(1);

    auto* ident = app.add_subcommand("identities", "Run the pointwise identity catalogue");
    std::vector<int> dims = {2, 3, 4};
    int seeds = 100;
    double tol = 1e-9;
    std::string only;
    ident->add_option("--dims", dims, "Complex dimensions to test");
    ident->add_option("--seeds", seeds, "Number of random jets per dimension");
    ident->add_option("--tol", tol, "Relative residual tolerance");
    ident->add_option("--only", only, "Run a single catalogue key");

    auto* flow = app.add_subcommand("flow", "Integrate a flow from a declarative config");
    std::string config_path, out_dir;
    flow->add_option("--config", config_path, "Config file path")->required();
    flow->add_option("--out", out_dir, "Output directory (created atomically)")->required();

    auto* mb = app.add_subcommand("make-balanced",
                                  "Construct conformally balanced initial data");
    int m = 3, n = 16;
    double eps = 0.05;
    std::uint64_t seed = 1;
    std::string out;
    mb->add_option("--m", m, "Complex dimension (>= 3)");
    mb->add_option("--n", n, "Lattice points per active coordinate");
    mb->add_option("--eps", eps, "Perturbation amplitude (0 gives flat data)");
    mb->add_option("--seed", seed, "RNG seed");
    mb->add_option("--out", out, "Snapshot output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (ident->parsed()) return cmd_identities(dims, seeds, tol, only);
    if (flow->parsed()) return cmd_flow(config_path, out_dir);
    return cmd_make_balanced(m, n, eps, seed, out);
}
