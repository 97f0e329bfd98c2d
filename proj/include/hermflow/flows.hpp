#pragma once

// Time integration of the unified Hermitian flow d/dt eta = -(Rtilde + T.Tbar/2)
// (optionally normalized by 1/(m-1)) and of the Kahler-Ricci flow
// d/dt eta = -Ric, with explicit RK4/Euler stepping, CFL and positivity
// guards, per-stride diagnostics, and residual harnesses for the induced
// evolution equations of T, |T|^2 and tau and for the equivalence with the
// conformally-balanced (m-1,m-1)-form flow.

#include "hermflow/balanced.hpp"
#include "hermflow/geometry.hpp"
#include "hermflow/lattice.hpp"

#include <string>
#include <vector>

namespace hermflow {

enum class FlowKind { Eta, KahlerRicci };
enum class TimeNorm { Unit, OneOverMMinus1 };
enum class Scheme { Rk4, Euler };
enum class HaltReason { Completed, PositivityLost, CflViolated, NotFinite };

const char* halt_reason_name(HaltReason r);

struct FlowConfig {
    FlowKind which = FlowKind::Eta;
    TimeNorm time_normalization = TimeNorm::Unit;
    double dt = 0.0;
    int steps = 0;
    Scheme scheme = Scheme::Rk4;
    int stride = 1;  // diagnostics/snapshot every `stride` steps
    HolVolForm omega{};
    double positivity_floor = 1e-6;
    double cfl_factor = 0.2;
    bool enforce_cfl = true;
};

// 1 or 1/(m-1); the latter throws for m < 2.
double flow_time_factor(TimeNorm tn, int m);

// d/dt g = -factor * (Rtilde + T.Tbar/2); Hermitian output, zero on flat
// fields, equals rhs_kr on Kahler fields up to O(h^4).  Needs m >= 2.
MetricField rhs_eta(const MetricField& f, TimeNorm tn);
// d/dt g = -factor * Ric; m = 1 is allowed here.
MetricField rhs_kr(const MetricField& f, TimeNorm tn);

// Largest stable step estimate: factor * h^2 * min-eig(g) / max-eig(g) over
// all sites (parabolic scaling; the eigenvalue ratio bounds the anisotropy of
// the diffusion coefficients).
double cfl_bound(const MetricField& f, double factor = 0.2);

struct DiagnosticsRow {
    double t = 0.0;
    double maxT2 = 0.0;        // max_site |T|^2
    double maxTau2 = 0.0;      // max_site |tau|^2
    double maxRm2 = 0.0;       // max_site |Rm|^2
    double maxRic = 0.0;       // max_site |Ric|   (metric-contracted norm)
    double maxRtilde = 0.0;    // max_site |Rtilde|
    double minEig = 0.0;       // min metric eigenvalue over sites
    double omegaNormMin = 0.0; // min/max of ||Omega||^2_eta
    double omegaNormMax = 0.0;
    double balancedRes = 0.0;  // ||d(||Omega||^2 eta^{m-1})||_inf
    double kahlerRes = 0.0;    // ||d eta||_inf
    double singEta = 0.0;      // max_site |Rm|^2 + |T|^2 + |nabla T|^2
    double singOmega = 0.0;    // omega-frame monitor (0 for m = 2: dictionary degenerate)
};

std::string diagnostics_header();
std::string csv_row(const DiagnosticsRow& r);  // %.17g fields

DiagnosticsRow diagnostics(const MetricField& f, const HolVolForm& om);

// Singularity monitors.  sing_eta works for any m >= 2; sing_omega rescales to
// the omega frame (eta = ||Omega||_omega omega) and needs m >= 3.
double sing_eta(const MetricField& f);
double sing_omega(const MetricField& f, const HolVolForm& om);

struct RunResult {
    FlowConfig config;
    std::vector<DiagnosticsRow> rows;      // strictly increasing in t
    std::vector<MetricField> snapshots;    // one per row (stride times)
    MetricField final_field;
    HaltReason halt = HaltReason::Completed;
};

// Integrates `steps` steps from `initial`, recording diagnostics and a
// snapshot every `stride` steps (always including t = 0 and the final time).
// Halts early on lost positivity, CFL violation or non-finite values, with
// the partial series returned.
RunResult run(const FlowConfig& cfg, const MetricField& initial);

// ---------------------------------------------------------------------------
// Residual harnesses over the stored snapshot series.  All use centered time
// differences at the interior snapshots, so they return rows.size() - 2
// values; all expect uniformly spaced snapshots.

// | d/dt (||Omega||^2 eta^{m-1}) - i del delbar (||Omega||^2 eta^{m-2}) |_inf.
// Requires m >= 3 (throws for m = 2: the rescaling is degenerate), the eta
// flow, and time normalization 1/(m-1).
std::vector<double> anomaly_equivalence_residual(const RunResult& r, const HolVolForm& om);

// balancedRes column of the run (convenience accessor).
std::vector<double> balanced_residual_series(const RunResult& r);

// | d/dt T - factor * (-del deldag T + del (taubar . T)) |_inf per interior
// snapshot; factor matches the run's time normalization.
std::vector<double> torsion_flow_residual(const RunResult& r);

// ((m-1) d/dt - Delta_c)|T|^2 against its expansion in nabla T, T.Tbar and
// curvature contractions, plus the maximum-principle bound
// ((m-1) d/dt - Delta_c)|T|^2 <= C |T|^2 (|T|^2 + |Rm|) with C fitted over
// all sites and interior snapshots.
struct TsqReport {
    std::vector<double> residual;  // sup-norm of the identity residual per snapshot
    double fitted_c = 0.0;         // smallest C making the bound hold everywhere
    bool inequality_ok = true;     // bound holds at every site with fitted_c
};
TsqReport tsq_evolution_residual(const RunResult& r);

// | (m-1) d/dt tau + Box tau - d(|tau|^2 + |T|^2/2) |_inf per interior
// snapshot (Box = del deldag + deldag del on (1,0)-forms); meaningful on
// conformally balanced runs.
std::vector<double> tau_flow_residual(const RunResult& r);

}  // namespace hermflow
