#include "hermflow/flows.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace hermflow {

namespace {

std::size_t idx3(int m, int k, int j, int mm) {
    return (static_cast<std::size_t>(k) * m + j) * m + mm;
}

Mat hermitize(const Mat& x) { return 0.5 * (x + Mat(x.adjoint())); }

bool all_finite(const MetricField& f) {
    for (const Mat& g : f.g)
        if (!g.allFinite()) return false;
    return true;
}

// Metric-contracted norm of a (1,1)-tensor X_{\bar kj}: sqrt of
// X_{\bar kj} conj(X_{\bar ab}) g^{a\bar k} g^{j\bar b}.
double mat_norm(const HermitianMetric& g, const Mat& x) {
    const int m = g.m();
    const Mat& gi = g.ginv();
    cd acc(0.0);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    acc += x(k, j) * std::conj(x(a, b)) * gi(a, k) * gi(j, b);
    return std::sqrt(std::max(0.0, acc.real()));
}

cd pair_one_one(const HermitianMetric& g, const Mat& x, const Mat& y) {
    const int m = g.m();
    const Mat& gi = g.ginv();
    cd acc(0.0);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    acc += x(k, j) * std::conj(y(a, b)) * gi(a, k) * gi(j, b);
    return acc;
}

// Covariant derivative tables of the lowered torsion at one jet:
//   nt[a][k,j,m]  = nabla_a T_{\bar kjm}
//   nbt[b][k,j,m] = nabla_{\bar b} T_{\bar kjm}
// Assembled from second metric derivatives and the Chern connection.
void torsion_covariant_tables(const MetricJet& j, std::vector<std::vector<cd>>& nt,
                              std::vector<std::vector<cd>>& nbt) {
    const int m = j.m;
    HermitianMetric gm = j.metric();
    const Mat& gi = gm.ginv();
    // T_{\bar kjm} and Gamma^s_{aj}
    std::vector<cd> tt(static_cast<std::size_t>(m) * m * m);
    for (int k = 0; k < m; ++k)
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) tt[idx3(m, k, a, b)] = j.dg[a](k, b) - j.dg[b](k, a);
    std::vector<cd> gam(static_cast<std::size_t>(m) * m * m);  // [s][a][j]
    for (int s = 0; s < m; ++s)
        for (int a = 0; a < m; ++a)
            for (int l = 0; l < m; ++l) {
                cd acc(0.0);
                for (int q = 0; q < m; ++q) acc += gi(s, q) * j.dg[a](q, l);
                gam[idx3(m, s, a, l)] = acc;
            }
    nt.assign(static_cast<std::size_t>(m), std::vector<cd>(tt.size()));
    nbt.assign(static_cast<std::size_t>(m), std::vector<cd>(tt.size()));
    for (int a = 0; a < m; ++a)
        for (int k = 0; k < m; ++k)
            for (int jj = 0; jj < m; ++jj)
                for (int mm = 0; mm < m; ++mm) {
                    cd h = j.ddg[a][jj](k, mm) - j.ddg[a][mm](k, jj);
                    for (int s = 0; s < m; ++s)
                        h -= gam[idx3(m, s, a, jj)] * tt[idx3(m, k, s, mm)] +
                             gam[idx3(m, s, a, mm)] * tt[idx3(m, k, jj, s)];
                    nt[static_cast<std::size_t>(a)][idx3(m, k, jj, mm)] = h;
                    cd ab = j.ddbg[jj][a](k, mm) - j.ddbg[mm][a](k, jj);
                    for (int s = 0; s < m; ++s)
                        ab -= std::conj(gam[idx3(m, s, a, k)]) * tt[idx3(m, s, jj, mm)];
                    nbt[static_cast<std::size_t>(a)][idx3(m, k, jj, mm)] = ab;
                }
}

// |nabla T|^2 (hol = true) or |nabla-bar T|^2 (hol = false) from the tables.
double nabla_t_norm_sq(const HermitianMetric& g, const std::vector<std::vector<cd>>& nd,
                       bool hol) {
    const int m = g.m();
    const Mat& gi = g.ginv();
    cd acc(0.0);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            // derivative slot: hol-down pairs gi(a, b), antihol-down pairs gi(b, a)
            cd wd = hol ? gi(a, b) : gi(b, a);
            if (wd == cd(0.0)) continue;
            for (int k = 0; k < m; ++k)
                for (int jj = 0; jj < m; ++jj)
                    for (int mm = 0; mm < m; ++mm) {
                        cd x = nd[static_cast<std::size_t>(a)][idx3(m, k, jj, mm)];
                        if (x == cd(0.0)) continue;
                        for (int c = 0; c < m; ++c)
                            for (int d = 0; d < m; ++d)
                                for (int e = 0; e < m; ++e)
                                    acc += wd * x *
                                           std::conj(nd[static_cast<std::size_t>(b)]
                                                       [idx3(m, c, d, e)]) *
                                           gi(c, k) * gi(jj, d) * gi(mm, e);
                    }
        }
    return std::max(0.0, acc.real());
}

FormField eta_field_of(const MetricField& f) {
    FormField out = FormField::zero(f.lat, 1, 1);
    for (std::size_t s = 0; s < f.lat.sites(); ++s) out.f[s] = eta_form(HermitianMetric(f.g[s]));
    return out;
}

// Per-site FormJet assembled from a FormField and its coefficient derivatives.
struct FieldFormJets {
    FormField value;
    std::vector<FormField> d, db;  // one per holomorphic coordinate

    explicit FieldFormJets(FormField v) : value(std::move(v)) {
        const int m = value.lat.m();
        for (int a = 0; a < m; ++a) {
            d.push_back(coefficient_derivative(value, a, false));
            db.push_back(coefficient_derivative(value, a, true));
        }
    }
    FormJet at(std::size_t s) const {
        FormJet fj{value.f[s], {}, {}};
        for (const auto& fa : d) fj.d.push_back(fa.f[s]);
        for (const auto& fa : db) fj.db.push_back(fa.f[s]);
        return fj;
    }
};

void check_uniform_spacing(const RunResult& r) {
    if (r.snapshots.size() < 3)
        throw std::invalid_argument("residual harness needs at least 3 snapshots");
    double dt = r.snapshots[1].time - r.snapshots[0].time;
    for (std::size_t i = 1; i + 1 < r.snapshots.size(); ++i)
        if (std::abs((r.snapshots[i + 1].time - r.snapshots[i].time) - dt) > 1e-12)
            throw std::invalid_argument("residual harness needs uniformly spaced snapshots");
}

double sup_diff(const FormField& a, const FormField& b) {
    double mx = 0.0;
    for (std::size_t s = 0; s < a.f.size(); ++s) mx = std::max(mx, (a.f[s] - b.f[s]).max_abs());
    return mx;
}

}  // namespace

const char* halt_reason_name(HaltReason r) {
    switch (r) {
        case HaltReason::Completed: return "completed";
        case HaltReason::PositivityLost: return "positivity lost";
        case HaltReason::CflViolated: return "CFL violated";
        case HaltReason::NotFinite: return "NaN";
    }
    return "unknown";
}

double flow_time_factor(TimeNorm tn, int m) {
    if (tn == TimeNorm::Unit) return 1.0;
    if (m < 2) throw std::invalid_argument("1/(m-1) normalization needs m >= 2");
    return 1.0 / (m - 1);
}

MetricField rhs_eta(const MetricField& f, TimeNorm tn) {
    const int m = f.lat.m();
    if (m < 2) throw std::invalid_argument("rhs_eta needs m >= 2");
    const double c = flow_time_factor(tn, m);
    FieldJet fj = jets(f, 2);
    MetricField out;
    out.lat = f.lat;
    out.time = f.time;
    out.tag = "rhs";
    out.g.reserve(f.lat.sites());
    for (std::size_t s = 0; s < f.lat.sites(); ++s) {
        CurvaturePack cp = curvature(fj.jets[s]);
        TorsionPack tp = torsion(fj.jets[s]);
        out.g.push_back(hermitize(-c * (cp.Rtilde + 0.5 * tp.TcT)));
    }
    return out;
}

MetricField rhs_kr(const MetricField& f, TimeNorm tn) {
    const double c = flow_time_factor(tn, f.lat.m());
    FieldJet fj = jets(f, 2);
    MetricField out;
    out.lat = f.lat;
    out.time = f.time;
    out.tag = "rhs";
    out.g.reserve(f.lat.sites());
    for (std::size_t s = 0; s < f.lat.sites(); ++s)
        out.g.push_back(hermitize(-c * curvature(fj.jets[s]).Ric));
    return out;
}

double cfl_bound(const MetricField& f, double factor) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const Mat& g : f.g) {
        Eigen::SelfAdjointEigenSolver<Mat> es(hermitize(g));
        lo = std::min(lo, es.eigenvalues().minCoeff());
        hi = std::max(hi, es.eigenvalues().maxCoeff());
    }
    if (!(lo > 0.0) || !std::isfinite(hi)) return 0.0;
    const double h = f.lat.h();
    return factor * h * h * lo / hi;
}

double sing_eta(const MetricField& f) {
    FieldJet fj = jets(f, 2);
    double mx = 0.0;
    for (std::size_t s = 0; s < f.lat.sites(); ++s) {
        const MetricJet& j = fj.jets[s];
        CurvaturePack cp = curvature(j);
        TorsionPack tp = torsion(j);
        std::vector<std::vector<cd>> nt, nbt;
        torsion_covariant_tables(j, nt, nbt);
        mx = std::max(mx, cp.RmNormSq + tp.normTsq + nabla_t_norm_sq(j.metric(), nt, true));
    }
    return mx;
}

double sing_omega(const MetricField& f, const HolVolForm& om) {
    const int m = f.lat.m();
    if (m < 3)
        throw std::invalid_argument("sing_omega needs m >= 3: the eta <-> omega rescaling "
                                    "is degenerate at m = 2");
    const double csq = std::norm(om.c);
    // eta = ||Omega||_omega omega with ||Omega||^2_eta = ||Omega||^{2-m}_omega,
    // so omega = eta * (||Omega||^2_eta)^{1/(m-2)}.
    MetricField w = f;
    w.tag = "omega-frame";
    for (std::size_t s = 0; s < f.lat.sites(); ++s) {
        double wsq = csq / f.g[s].determinant().real();
        w.g[s] = f.g[s] * std::pow(wsq, 1.0 / (m - 2));
    }
    FieldJet fj = jets(w, 2);
    double mx = 0.0;
    for (std::size_t s = 0; s < w.lat.sites(); ++s) {
        const MetricJet& j = fj.jets[s];
        CurvaturePack cp = curvature(j);
        TorsionPack tp = torsion(j);
        std::vector<std::vector<cd>> nt, nbt;
        torsion_covariant_tables(j, nt, nbt);
        double wsq = csq / w.g[s].determinant().real();  // ||Omega||^2_omega
        mx = std::max(mx, cp.RmNormSq / wsq + tp.normTsq / std::sqrt(wsq) +
                              nabla_t_norm_sq(j.metric(), nt, true) / wsq);
    }
    return mx;
}

std::string diagnostics_header() {
    return "t,maxT2,maxTau2,maxRm2,maxRic,maxRtilde,minEig,omegaNormMin,omegaNormMax,"
           "balancedRes,kahlerRes,singEta,singOmega";
}

std::string csv_row(const DiagnosticsRow& r) {
    const double v[13] = {r.t,       r.maxT2,        r.maxTau2,      r.maxRm2,
                          r.maxRic,  r.maxRtilde,    r.minEig,       r.omegaNormMin,
                          r.omegaNormMax, r.balancedRes, r.kahlerRes, r.singEta,
                          r.singOmega};
    std::string out;
    char buf[64];
    for (int i = 0; i < 13; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", v[i]);
        if (i) out += ',';
        out += buf;
    }
    return out;
}

DiagnosticsRow diagnostics(const MetricField& f, const HolVolForm& om) {
    const int m = f.lat.m();
    const double csq = std::norm(om.c);
    DiagnosticsRow r;
    r.t = f.time;
    r.minEig = f.min_eigenvalue();
    r.omegaNormMin = std::numeric_limits<double>::infinity();
    FieldJet fj = jets(f, 2);
    for (std::size_t s = 0; s < f.lat.sites(); ++s) {
        const MetricJet& j = fj.jets[s];
        HermitianMetric g = j.metric();
        CurvaturePack cp = curvature(j);
        TorsionPack tp = torsion(j);
        r.maxT2 = std::max(r.maxT2, tp.normTsq);
        r.maxTau2 = std::max(r.maxTau2, tp.normTauSq);
        r.maxRm2 = std::max(r.maxRm2, cp.RmNormSq);
        r.maxRic = std::max(r.maxRic, mat_norm(g, cp.Ric));
        r.maxRtilde = std::max(r.maxRtilde, mat_norm(g, cp.Rtilde));
        double wsq = csq / g.det();
        r.omegaNormMin = std::min(r.omegaNormMin, wsq);
        r.omegaNormMax = std::max(r.omegaNormMax, wsq);
        std::vector<std::vector<cd>> nt, nbt;
        torsion_covariant_tables(j, nt, nbt);
        r.singEta = std::max(r.singEta,
                             cp.RmNormSq + tp.normTsq + nabla_t_norm_sq(g, nt, true));
    }
    r.balancedRes = balanced_residual(f, om);
    r.kahlerRes = exterior_d(eta_field_of(f)).max_abs();
    r.singOmega = (m >= 3) ? sing_omega(f, om) : 0.0;
    return r;
}

RunResult run(const FlowConfig& cfg, const MetricField& initial) {
    if (!(cfg.dt > 0.0)) throw std::invalid_argument("run: dt must be positive");
    if (cfg.steps < 1) throw std::invalid_argument("run: steps must be >= 1");
    if (cfg.stride < 1) throw std::invalid_argument("run: stride must be >= 1");
    initial.validate();

    auto rhs = [&](const MetricField& f) {
        return cfg.which == FlowKind::Eta ? rhs_eta(f, cfg.time_normalization)
                                          : rhs_kr(f, cfg.time_normalization);
    };
    auto apply = [&](const MetricField& base, double w, const MetricField& dir) {
        MetricField out = base;
        for (std::size_t s = 0; s < out.g.size(); ++s) out.g[s] = hermitize(base.g[s] + w * dir.g[s]);
        return out;
    };

    RunResult res;
    res.config = cfg;
    MetricField cur = initial;
    auto record = [&]() {
        res.rows.push_back(diagnostics(cur, cfg.omega));
        res.snapshots.push_back(cur);
    };
    record();

    for (int step = 0; step < cfg.steps; ++step) {
        if (cfg.enforce_cfl && cfg.dt > cfl_bound(cur, cfg.cfl_factor)) {
            res.halt = HaltReason::CflViolated;
            break;
        }
        MetricField next = cur;
        if (cfg.scheme == Scheme::Euler) {
            MetricField k1 = rhs(cur);
            next = apply(cur, cfg.dt, k1);
        } else {
            MetricField k1 = rhs(cur);
            MetricField k2 = rhs(apply(cur, 0.5 * cfg.dt, k1));
            MetricField k3 = rhs(apply(cur, 0.5 * cfg.dt, k2));
            MetricField k4 = rhs(apply(cur, cfg.dt, k3));
            next = cur;
            for (std::size_t s = 0; s < next.g.size(); ++s)
                next.g[s] = hermitize(cur.g[s] + (cfg.dt / 6.0) * (k1.g[s] + 2.0 * k2.g[s] +
                                                                  2.0 * k3.g[s] + k4.g[s]));
        }
        if (!all_finite(next)) {
            res.halt = HaltReason::NotFinite;
            break;
        }
        if (next.min_eigenvalue() < cfg.positivity_floor) {
            res.halt = HaltReason::PositivityLost;
            break;
        }
        next.time = cur.time + cfg.dt;
        cur = std::move(next);
        if ((step + 1) % cfg.stride == 0 || step + 1 == cfg.steps) record();
    }
    res.final_field = cur;
    return res;
}

// ---------------------------------------------------------------------------
// Residual harnesses.

std::vector<double> anomaly_equivalence_residual(const RunResult& r, const HolVolForm& om) {
    check_uniform_spacing(r);
    const int m = r.snapshots[0].lat.m();
    if (m < 3)
        throw std::invalid_argument("anomaly equivalence needs m >= 3 (the rescaling is "
                                    "degenerate at m = 2)");
    if (r.config.which != FlowKind::Eta ||
        r.config.time_normalization != TimeNorm::OneOverMMinus1)
        throw std::invalid_argument(
            "anomaly equivalence needs the eta flow with 1/(m-1) time normalization");
    const double csq = std::norm(om.c);
    const TorusLattice& lat = r.snapshots[0].lat;

    auto weighted_power = [&](const MetricField& f, int pw) {
        FormField out = FormField::zero(lat, pw, pw);
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            HermitianMetric g(f.g[s]);
            out.f[s] = cd(csq / g.det()) * wedge_pow(eta_form(g), pw);
        }
        return out;
    };

    std::vector<double> res;
    const double dt = r.snapshots[1].time - r.snapshots[0].time;
    for (std::size_t i = 1; i + 1 < r.snapshots.size(); ++i) {
        FormField hi = weighted_power(r.snapshots[i + 1], m - 1);
        FormField lo = weighted_power(r.snapshots[i - 1], m - 1);
        FormField rhs = del_field(delbar_field(weighted_power(r.snapshots[i], m - 2)));
        double mx = 0.0;
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            Form lhs = (1.0 / (2.0 * dt)) * (hi.f[s] - lo.f[s]);
            mx = std::max(mx, (lhs - cd(0.0, 1.0) * rhs.f[s]).max_abs());
        }
        res.push_back(mx);
    }
    return res;
}

std::vector<double> balanced_residual_series(const RunResult& r) {
    std::vector<double> out;
    for (const auto& row : r.rows) out.push_back(row.balancedRes);
    return out;
}

std::vector<double> torsion_flow_residual(const RunResult& r) {
    check_uniform_spacing(r);
    const TorusLattice& lat = r.snapshots[0].lat;
    const int m = lat.m();
    const double c = flow_time_factor(r.config.time_normalization, m);
    const double dt = r.snapshots[1].time - r.snapshots[0].time;

    auto torsion_field = [&](const MetricField& f, const FieldJet& fj) {
        FormField out = FormField::zero(lat, 2, 1);
        for (std::size_t s = 0; s < lat.sites(); ++s) out.f[s] = torsion(fj.jets[s]).T;
        return out;
    };

    std::vector<double> res;
    for (std::size_t i = 1; i + 1 < r.snapshots.size(); ++i) {
        FieldJet jlo = jets(r.snapshots[i - 1], 1);
        FieldJet jmid = jets(r.snapshots[i], 2);
        FieldJet jhi = jets(r.snapshots[i + 1], 1);
        FormField tlo = torsion_field(r.snapshots[i - 1], jlo);
        FormField tmid = torsion_field(r.snapshots[i], jmid);
        FormField thi = torsion_field(r.snapshots[i + 1], jhi);

        FieldFormJets tfj(tmid);
        FormField ddag = FormField::zero(lat, 1, 1);
        FormField taut = FormField::zero(lat, 1, 1);
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            ddag.f[s] = del_dagger(jmid.jets[s], tfj.at(s));
            taut.f[s] = one_one_form(torsion(jmid.jets[s]).tauT);
        }
        FormField dddag = del_field(ddag);
        FormField dtaut = del_field(taut);
        double mx = 0.0;
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            Form lhs = (1.0 / (2.0 * dt)) * (thi.f[s] - tlo.f[s]);
            Form rhs = cd(c) * (dtaut.f[s] - dddag.f[s]);
            mx = std::max(mx, (lhs - rhs).max_abs());
        }
        res.push_back(mx);
    }
    return res;
}

TsqReport tsq_evolution_residual(const RunResult& r) {
    check_uniform_spacing(r);
    const TorusLattice& lat = r.snapshots[0].lat;
    const int m = lat.m();
    const double c = flow_time_factor(r.config.time_normalization, m);
    const double dt = r.snapshots[1].time - r.snapshots[0].time;

    auto tsq_field = [&](const FieldJet& fj) {
        ScalarField out = ScalarField::zero(lat);
        for (std::size_t s = 0; s < lat.sites(); ++s) out.v[s] = torsion(fj.jets[s]).normTsq;
        return out;
    };

    TsqReport rep;
    for (std::size_t i = 1; i + 1 < r.snapshots.size(); ++i) {
        FieldJet jlo = jets(r.snapshots[i - 1], 1);
        FieldJet jmid = jets(r.snapshots[i], 2);
        FieldJet jhi = jets(r.snapshots[i + 1], 1);
        ScalarField tlo = tsq_field(jlo), tmid = tsq_field(jmid), thi = tsq_field(jhi);

        double mx = 0.0;
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            const MetricJet& j = jmid.jets[s];
            HermitianMetric g = j.metric();
            const Mat& gi = g.ginv();
            TorsionPack tp = torsion(j);
            CurvaturePack cp = curvature(j);

            // Delta_c |T|^2 = g^{p \bar q} d_p dbar_q |T|^2 on scalars.
            cd lap(0.0);
            for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) {
                    if (gi(p, q) == cd(0.0)) continue;
                    CDeriv dv[2] = {{p, false}, {q, true}};
                    lap += gi(p, q) * complex_derivative(lat, tmid.v, s, dv);
                }
            double lhs = (thi.v[s].real() - tlo.v[s].real()) / (2.0 * dt) / c - lap.real();

            // Right-hand side of the |T|^2 evolution identity.
            std::vector<std::vector<cd>> nt, nbt;
            torsion_covariant_tables(j, nt, nbt);
            std::vector<cd> tt(static_cast<std::size_t>(m) * m * m);
            for (int k = 0; k < m; ++k)
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b)
                        tt[idx3(m, k, a, b)] = j.dg[a](k, b) - j.dg[b](k, a);

            double rhs = -nabla_t_norm_sq(g, nt, true) - nabla_t_norm_sq(g, nbt, false) -
                         0.5 * pair_one_one(g, tp.TcT, tp.TcT).real() +
                         pair_one_one(g, tp.TcT, tp.TT).real();

            // 2 Re < B, T > with
            // B_{\bar kjm} = g^{s\bar t} g^{p\bar q} conj(T_{\bar mtq}) nabla_j T_{\bar ksp}
            //              + 2 T^s_{~pj} R_{\bar km}{}^p{}_s
            //              + 2 T_{\bar ksp} g^{p\bar q} g^{s\bar t} R_{\bar qj\bar tm}.
            std::vector<cd> bt(tt.size(), cd(0.0));
            for (int k = 0; k < m; ++k)
                for (int jj = 0; jj < m; ++jj)
                    for (int mm = 0; mm < m; ++mm) {
                        cd b(0.0);
                        for (int ss = 0; ss < m; ++ss)
                            for (int t = 0; t < m; ++t) {
                                if (gi(ss, t) == cd(0.0)) continue;
                                for (int p = 0; p < m; ++p)
                                    for (int q = 0; q < m; ++q)
                                        b += gi(ss, t) * gi(p, q) *
                                             std::conj(tt[idx3(m, mm, t, q)]) *
                                             nt[static_cast<std::size_t>(jj)]
                                               [idx3(m, k, ss, p)];
                            }
                        for (int ss = 0; ss < m; ++ss)
                            for (int p = 0; p < m; ++p) {
                                cd traise(0.0);
                                for (int a = 0; a < m; ++a)
                                    traise += gi(ss, a) * tt[idx3(m, a, p, jj)];
                                // R^p_{~s \bar km}: first antihol slot of the
                                // lowered curvature raised, first pair (t, s),
                                // second pair (k, m).
                                cd rr(0.0);
                                for (int t = 0; t < m; ++t)
                                    rr += gi(p, t) * cp.rlow(m, t, ss, k, mm);
                                b += 2.0 * traise * rr;
                            }
                        for (int ss = 0; ss < m; ++ss)
                            for (int p = 0; p < m; ++p) {
                                cd x = tt[idx3(m, k, ss, p)];
                                if (x == cd(0.0)) continue;
                                for (int q = 0; q < m; ++q)
                                    for (int t = 0; t < m; ++t)
                                        b += 2.0 * x * gi(p, q) * gi(ss, t) *
                                             cp.rlow(m, q, jj, t, mm);
                            }
                        bt[idx3(m, k, jj, mm)] = b;
                    }
            cd pairing(0.0);
            for (int k = 0; k < m; ++k)
                for (int jj = 0; jj < m; ++jj)
                    for (int mm = 0; mm < m; ++mm) {
                        cd x = bt[idx3(m, k, jj, mm)];
                        if (x == cd(0.0)) continue;
                        for (int a = 0; a < m; ++a)
                            for (int bb = 0; bb < m; ++bb)
                                for (int cc = 0; cc < m; ++cc)
                                    pairing += x * std::conj(tt[idx3(m, a, bb, cc)]) *
                                               gi(a, k) * gi(jj, bb) * gi(mm, cc);
                    }
            rhs -= 2.0 * pairing.real();

            mx = std::max(mx, std::abs(lhs - rhs));

            // Maximum-principle bound: lhs <= C |T|^2 (|T|^2 + |Rm|).
            double den = tp.normTsq * (tp.normTsq + std::sqrt(cp.RmNormSq));
            if (lhs > 1e-12 && den <= 1e-30)
                rep.inequality_ok = false;
            else if (den > 1e-30)
                rep.fitted_c = std::max(rep.fitted_c, lhs / den);
        }
        rep.residual.push_back(mx);
    }
    return rep;
}

std::vector<double> tau_flow_residual(const RunResult& r) {
    check_uniform_spacing(r);
    const TorusLattice& lat = r.snapshots[0].lat;
    const int m = lat.m();
    const double c = flow_time_factor(r.config.time_normalization, m);
    const double dt = r.snapshots[1].time - r.snapshots[0].time;

    auto tau_field = [&](const FieldJet& fj) {
        FormField out = FormField::zero(lat, 1, 0);
        for (std::size_t s = 0; s < lat.sites(); ++s) out.f[s] = torsion(fj.jets[s]).tau;
        return out;
    };

    std::vector<double> res;
    for (std::size_t i = 1; i + 1 < r.snapshots.size(); ++i) {
        FieldJet jlo = jets(r.snapshots[i - 1], 1);
        FieldJet jmid = jets(r.snapshots[i], 2);
        FieldJet jhi = jets(r.snapshots[i + 1], 1);
        FormField taulo = tau_field(jlo), taumid = tau_field(jmid), tauhi = tau_field(jhi);

        // Box tau = del deldag tau + deldag del tau.
        FieldFormJets taujets(taumid);
        FormField s_field = FormField::zero(lat, 0, 0);
        for (std::size_t s = 0; s < lat.sites(); ++s)
            s_field.f[s] = del_dagger(jmid.jets[s], taujets.at(s));
        FormField dels = del_field(s_field);
        FieldFormJets deltau(del_field(taumid));
        FormField ddag_deltau = FormField::zero(lat, 1, 0);
        for (std::size_t s = 0; s < lat.sites(); ++s)
            ddag_deltau.f[s] = del_dagger(jmid.jets[s], deltau.at(s));

        // d_j (|tau|^2 + |T|^2 / 2).
        ScalarField q = ScalarField::zero(lat);
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            TorsionPack tp = torsion(jmid.jets[s]);
            q.v[s] = tp.normTauSq + 0.5 * tp.normTsq;
        }
        std::vector<ScalarField> dq;
        for (int a = 0; a < m; ++a) dq.push_back(derivative(q, a, false));
        FormField grad = FormField::zero(lat, 1, 0);
        for (std::size_t s = 0; s < lat.sites(); ++s)
            grad.f[s] = Form::from_increasing(lat.m(), 1, 0,
                                              [&](std::span<const int> h, std::span<const int>) {
                                                  return dq[static_cast<std::size_t>(h[0])].v[s];
                                              });

        double mx = 0.0;
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            Form lhs = (1.0 / (2.0 * dt)) * (tauhi.f[s] - taulo.f[s]);
            Form box = dels.f[s] + ddag_deltau.f[s];
            Form rhs = cd(c) * (grad.f[s] - box);
            mx = std::max(mx, (lhs - rhs).max_abs());
        }
        res.push_back(mx);
    }
    return res;
}

}  // namespace hermflow
