// End-to-end acceptance suite: one [PASS]/[FAIL] line per criterion, exit 0
// iff all pass.  Usage: acceptance --presets <dir with the shipped .cfg files>.

#include "hermflow/balanced.hpp"
#include "hermflow/config.hpp"
#include "hermflow/flows.hpp"
#include "hermflow/forms.hpp"
#include "hermflow/geometry.hpp"
#include "hermflow/identities.hpp"
#include "hermflow/lattice.hpp"
#include "hermflow/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

using namespace hermflow;

namespace {

int failures = 0;

void verdict(int num, const std::string& what, bool pass, const std::string& detail) {
    std::printf("[%s] %2d. %s (%s)\n", pass ? "PASS" : "FAIL", num, what.c_str(),
                detail.c_str());
    if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --------------------------------------------------------------------------
// Random data for the pointwise criteria.

HermitianMetric random_metric(int m, Rng& rng) {
    Mat a(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) a(i, j) = 0.15 * rng.complex_unit();
    Mat g = Mat::Identity(m, m) + 0.5 * (a + Mat(a.adjoint()));
    return HermitianMetric(g);
}

Form random_form(int m, int p, int q, Rng& rng) {
    return Form::from_increasing(m, p, q, [&](std::span<const int>, std::span<const int>) {
        return rng.complex_unit();
    });
}

std::vector<cd> random_t_table(int m, Rng& rng) {
    std::vector<cd> t(static_cast<std::size_t>(m) * m * m, cd(0.0));
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            for (int mm = j + 1; mm < m; ++mm) {
                cd v = rng.complex_unit();
                t[(static_cast<std::size_t>(k) * m + j) * m + mm] = v;
                t[(static_cast<std::size_t>(k) * m + mm) * m + j] = -v;
            }
    return t;
}

// --------------------------------------------------------------------------
// Criterion 1: the full identity catalogue on seeded random jets.

void criterion_identities() {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int skipped = 0, total = 0;
    for (int m : {2, 3, 4})
        for (std::uint64_t s = 1; s <= 100; ++s)
            for (const std::string& key : identity_keys()) {
                IdentityReport rep = check_identity(key, m, s);
                ++total;
                if (!rep.hypothesis_ok) {
                    ++skipped;
                    continue;
                }
                worst = std::max(worst, rep.residual_rel);
            }
    double secs = elapsed_s(t0);
    verdict(1, "identity catalogue, 100 seeds x m in {2,3,4}, relative residual <= 1e-9",
            worst <= 1e-9 && secs <= 120.0,
            fmt("worst rel %.3g over %d checks (%d hypothesis-skipped), %.1f s", worst,
                total, skipped, secs));
}

// Criterion 2: the assembled flow operator collapses to -(Rtilde + TcT/2).

void criterion_collapse() {
    double worst = 0.0;
    for (int m : {2, 3, 4})
        for (std::uint64_t s = 1; s <= 100; ++s)
            worst = std::max(worst, check_identity("a-b-collapse", m, s).residual_rel);
    verdict(2, "operator collapse A -> i Rtilde + (i/2) T.Tbar, B -> 0, rel <= 1e-10",
            worst <= 1e-10, fmt("worst rel %.3g", worst));
}

// Criterion 3: closed-form Hodge star against the brute-force pairing solve.

void criterion_star() {
    double worst = 0.0;
    const int m = 4;
    for (std::uint64_t s = 1; s <= 100; ++s) {
        Rng rng(9000 + s);
        HermitianMetric g = random_metric(m, rng);
        Form eta = eta_form(g);
        auto shape = [&](StarShape sh, const Form& payload, int etapow) {
            Form closed = hodge_star_closed(g, sh, payload);
            Form brute = hodge_star_brute(g, wedge(payload, wedge_pow(eta, etapow)));
            double scale = std::max(1e-30, brute.max_abs());
            worst = std::max(worst, (closed - brute).max_abs() / scale);
        };
        shape(StarShape::AlphaEta, random_form(m, 1, 1, rng), m - 2);
        shape(StarShape::TauEta, random_form(m, 1, 0, rng), m - 2);
        shape(StarShape::PhiEta, random_form(m, 2, 2, rng), m - 3);
        shape(StarShape::TEta, form_from_tkjm(m, random_t_table(m, rng)), m - 3);
        shape(StarShape::PsiEta, random_form(m, 3, 3, rng), m - 4);
    }
    verdict(3, "closed-form Hodge star vs brute force, 5 shapes x 100 seeds, rel <= 1e-12",
            worst <= 1e-12, fmt("worst rel %.3g", worst));
}

// --------------------------------------------------------------------------
// Criterion 4: lattice adjointness <del a, b> = <a, deldag b> at 4th order.

struct Wave {
    std::vector<int> k;
    double phase;
};

std::vector<Wave> make_waves(Rng& rng, const TorusLattice& proto, int count) {
    std::vector<Wave> ws;
    for (int r = 0; r < count; ++r) {
        Wave w{std::vector<int>(static_cast<std::size_t>(proto.dims()), 0),
               rng.integer(0, 3) * (std::numbers::pi / 2.0)};
        bool nz = false;
        for (int d = 0; d < proto.dims(); ++d)
            if (!proto.is_reduced(d)) {
                w.k[static_cast<std::size_t>(d)] = rng.integer(-1, 1);
                nz |= w.k[static_cast<std::size_t>(d)] != 0;
            }
        if (!nz) w.k[0] = 1;
        ws.push_back(std::move(w));
    }
    return ws;
}

double wave_value(const std::vector<Wave>& ws, std::span<const double> x) {
    double acc = 0.0;
    for (const Wave& w : ws) {
        double th = w.phase;
        for (std::size_t d = 0; d < x.size(); ++d)
            th += 2.0 * std::numbers::pi * w.k[d] * x[d];
        acc += std::cos(th);
    }
    return acc;
}

// Exact holomorphic derivative d_c of wave_value.
cd wave_dvalue(const std::vector<Wave>& ws, std::span<const double> x, int c) {
    cd acc(0.0);
    for (const Wave& w : ws) {
        double th = w.phase;
        for (std::size_t d = 0; d < x.size(); ++d)
            th += 2.0 * std::numbers::pi * w.k[d] * x[d];
        cd kc = 0.5 * cd(w.k[static_cast<std::size_t>(2 * c)],
                         -w.k[static_cast<std::size_t>(2 * c + 1)]);
        acc += -2.0 * std::numbers::pi * kc * std::sin(th);
    }
    return acc;
}

void criterion_adjointness() {
    // one analytic scene (metric, (1,1)-form a, (2,1)-form b), sampled at two
    // resolutions; the pairing defect is pure discretization error
    Rng scene(31);
    TorusLattice proto(2, 16, {3});
    auto gw = make_waves(scene, proto, 3);
    std::vector<std::vector<Wave>> aw, bw;
    for (int i = 0; i < 4; ++i) aw.push_back(make_waves(scene, proto, 2));
    for (int i = 0; i < 8; ++i) bw.push_back(make_waves(scene, proto, 2));

    auto defect = [&](int n) {
        TorusLattice lat(2, n, {3});
        MetricField f;
        f.lat = lat;
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            auto x = lat.point(s);
            Mat g = Mat::Identity(2, 2);
            g(0, 0) += 0.1 * wave_value(gw, x);
            g(1, 1) += 0.1 * wave_value({gw.begin() + 1, gw.end()}, x);
            cd off = 0.05 * wave_value(gw, x);
            g(0, 1) += off;
            g(1, 0) += std::conj(off);
            f.g.push_back(std::move(g));
        }
        f.validate();
        FieldJet fj = jets(f, 1);

        // a carries exact analytic coefficients so its del can be assembled in
        // closed form: the all-lattice pairing is adjoint to roundoff by
        // summation by parts, so the analytic side is what exposes the O(h^4)
        // stencil error of the del-dagger assembly.
        FormField a = FormField::zero(lat, 1, 1), da = FormField::zero(lat, 2, 1);
        FormField b = FormField::zero(lat, 2, 1);
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            auto x = lat.point(s);
            auto acoef = [&](int j, int k) -> const std::vector<Wave>& {
                return aw[static_cast<std::size_t>(j * 2 + k)];
            };
            a.f[s] = Form::from_table(2, 1, 1, [&](std::span<const int> h, std::span<const int> ah) {
                return cd(wave_value(acoef(h[0], ah[0]), x));
            });
            da.f[s] = Form::from_table(2, 2, 1, [&](std::span<const int> h, std::span<const int> ah) {
                return wave_dvalue(acoef(h[1], ah[0]), x, h[0]) -
                       wave_dvalue(acoef(h[0], ah[0]), x, h[1]);
            });
            std::vector<cd> t(8, cd(0.0));
            for (int k = 0; k < 2; ++k) {
                cd v(wave_value(bw[static_cast<std::size_t>(2 * k)], x),
                     wave_value(bw[static_cast<std::size_t>(2 * k + 1)], x));
                t[static_cast<std::size_t>((k * 2 + 0) * 2 + 1)] = v;
                t[static_cast<std::size_t>((k * 2 + 1) * 2 + 0)] = -v;
            }
            b.f[s] = form_from_tkjm(2, t);
        }

        std::vector<FormField> bd, bdb;
        for (int c = 0; c < 2; ++c) {
            bd.push_back(coefficient_derivative(b, c, false));
            bdb.push_back(coefficient_derivative(b, c, true));
        }
        ScalarField lhs = ScalarField::zero(lat), rhs = ScalarField::zero(lat);
        for (std::size_t s = 0; s < lat.sites(); ++s) {
            HermitianMetric g(f.g[s]);
            FormJet one{b.f[s], {}, {}};
            for (int c = 0; c < 2; ++c) {
                one.d.push_back(bd[static_cast<std::size_t>(c)].f[s]);
                one.db.push_back(bdb[static_cast<std::size_t>(c)].f[s]);
            }
            Form ddag = del_dagger(fj.jets[s], one);
            lhs.v[s] = inner(g, da.f[s], b.f[s]) * g.det();
            rhs.v[s] = inner(g, a.f[s], ddag) * g.det();
        }
        return std::abs(integrate(lhs) - integrate(rhs));
    };

    double e16 = defect(16), e32 = defect(32);
    double rate = std::log2(e16 / e32);
    verdict(4, "del-dagger adjointness defect converges at order 4 +/- 0.5",
            rate >= 3.5 && rate <= 4.5, fmt("defect %.3g -> %.3g, rate %.2f", e16, e32, rate));
}

// --------------------------------------------------------------------------
// Criterion 5: flow of eta vs the weighted (m-1,m-1)-form flow.

void criterion_anomaly(const std::string& presets) {
    RunConfig cfg = load_run_config(presets + "/anomaly_equiv_m3.cfg");
    MetricField f16 = build_initial(cfg);
    FlowConfig fc16 = flow_config(cfg, f16);
    auto t0 = std::chrono::steady_clock::now();
    RunResult r16 = run(fc16, f16);
    std::vector<double> res16 = anomaly_equivalence_residual(r16, fc16.omega);
    double m16 = *std::max_element(res16.begin(), res16.end());

    // halve dt and h; the snapshot data is regenerated at n = 32 from the
    // same construction parameters (eps 5e-5, seed 7) used for the shipped file
    TorusLattice lat32(3, 32, {2, 3, 4, 5});
    MetricField f32 = eta_root(build_psi(lat32, 5e-5, 7), fc16.omega);
    FlowConfig fc32 = fc16;
    fc32.dt = fc16.dt / 2.0;
    fc32.enforce_cfl = false;  // dt/2 sits exactly at the n = 32 bound
    RunResult r32 = run(fc32, f32);
    std::vector<double> res32 = anomaly_equivalence_residual(r32, fc32.omega);
    double m32 = *std::max_element(res32.begin(), res32.end());
    double secs = elapsed_s(t0);

    verdict(5, "eta flow matches the weighted form flow: residual <= 1e-5, >= 10x under refinement",
            r16.halt == HaltReason::Completed && r32.halt == HaltReason::Completed &&
                m16 <= 1e-5 && m16 / m32 >= 10.0 && secs <= 300.0,
            fmt("residual %.3g -> %.3g (ratio %.1f), %.1f s", m16, m32, m16 / m32, secs));
}

// Criterion 6: Kahler data stays Kahler and tracks the Kahler-Ricci flow.

void criterion_kahler(const std::string& presets) {
    RunConfig cfg = load_run_config(presets + "/kahler_preservation_m2.cfg");
    MetricField f = build_initial(cfg);
    FlowConfig fc = flow_config(cfg, f);
    RunResult re = run(fc, f);
    FlowConfig kc = fc;
    kc.which = FlowKind::KahlerRicci;
    RunResult rk = run(kc, f);

    double res0 = re.rows.front().kahlerRes, resmax = 0.0;
    for (const auto& row : re.rows) resmax = std::max(resmax, row.kahlerRes);
    double gap = 0.0;
    for (std::size_t i = 0; i < re.snapshots.size(); ++i)
        for (std::size_t s = 0; s < f.lat.sites(); ++s)
            gap = std::max(gap, (re.snapshots[i].g[s] - rk.snapshots[i].g[s])
                                    .cwiseAbs()
                                    .maxCoeff());
    verdict(6, "Kahler preservation over 200 RK4 steps; trajectories track within 1e-6",
            re.halt == HaltReason::Completed && rk.halt == HaltReason::Completed &&
                resmax <= 5.0 * res0 && gap <= 1e-6 && fc.steps == 200,
            fmt("||d eta|| %.3g -> max %.3g (%.2fx), trajectory gap %.3g", res0, resmax,
                resmax / res0, gap));
}

// Criterion 7: the conformally balanced condition shows no secular growth.

void criterion_balanced_preserved(const std::string& presets) {
    RunConfig cfg = load_run_config(presets + "/balanced_preservation_m3.cfg");
    MetricField f = build_initial(cfg);
    FlowConfig fc = flow_config(cfg, f);
    RunResult r = run(fc, f);
    double first = r.rows.front().balancedRes, last = r.rows.back().balancedRes;
    verdict(7, "balanced residual: final <= initial + 1e-6 over 100 steps",
            r.halt == HaltReason::Completed && last <= first + 1e-6 && fc.steps == 100,
            fmt("%.3g -> %.3g", first, last));
}

// Criterion 8: a perturbed flat metric relaxes to a Ricci-flat Kahler point.

void criterion_relaxation(const std::string& presets) {
    RunConfig cfg = load_run_config(presets + "/perturbed_flat_relax_m2.cfg");
    MetricField f = build_initial(cfg);
    FlowConfig fc = flow_config(cfg, f);
    RunResult r = run(fc, f);
    const DiagnosticsRow& last = r.rows.back();
    // plateau: the last two recorded rows agree to within the target scale
    const DiagnosticsRow& prev = r.rows[r.rows.size() - 2];
    bool plateau = std::abs(last.maxT2 - prev.maxT2) <= 1e-8;
    verdict(8, "perturbed flat relaxes: plateau with max|T|^2 <= 1e-8 and max||Ric|| <= 1e-8",
            r.halt == HaltReason::Completed && plateau && last.maxT2 <= 1e-8 &&
                last.maxRic <= 1e-8,
            fmt("max|T|^2 %.3g, max||Ric|| %.3g", last.maxT2, last.maxRic));
}

// Criterion 9: induced torsion evolution at 4th order + the |T|^2 bound.

void criterion_torsion(const std::string& presets) {
    RunConfig cfg = load_run_config(presets + "/torsion_flow_m2.cfg");
    auto residual_at = [&](int n) {
        RunConfig c = cfg;
        c.lattice_n = n;
        MetricField f = build_initial(c);
        FlowConfig fc = flow_config(c, f);
        fc.dt = 0.05 / (n * n);
        fc.steps = 2;
        fc.stride = 1;
        return std::make_pair(run(fc, f), fc);
    };
    auto [r16, fc16] = residual_at(16);
    auto [r32, fc32] = residual_at(32);
    std::vector<double> res16 = torsion_flow_residual(r16);
    std::vector<double> res32 = torsion_flow_residual(r32);
    double m16 = *std::max_element(res16.begin(), res16.end());
    double m32 = *std::max_element(res32.begin(), res32.end());
    double rate = std::log2(m16 / m32);
    TsqReport tsq = tsq_evolution_residual(r16);
    verdict(9, "torsion flow residual converges at 4th order; |T|^2 bound holds with fitted C",
            rate >= 3.3 && rate <= 4.7 && tsq.inequality_ok && std::isfinite(tsq.fitted_c),
            fmt("residual %.3g -> %.3g (rate %.2f), fitted C %.3g", m16, m32, rate,
                tsq.fitted_c));
}

// Criterion 10: balanced constructor round trip and the tau identity.

void criterion_constructor() {
    HolVolForm om{};
    TorusLattice lat16(3, 16, {2, 3, 4, 5});
    ClosedPsi psi = build_psi(lat16, 0.05, 7);
    MetricField f = eta_root(psi, om);
    ClosedPsi back = balanced_form(f, om);
    double round = 0.0;
    for (std::size_t s = 0; s < lat16.sites(); ++s)
        round = std::max(round, (back.M[s] - psi.M[s]).cwiseAbs().maxCoeff());

    auto tau_res = [&](int n) {
        TorusLattice lat(3, n, {2, 3, 4, 5});
        MetricField g = eta_root(build_psi(lat, 0.05, 7), om);
        return check_balanced_tau(g, om).residual_abs;
    };
    double t16 = tau_res(16), t32 = tau_res(32);
    double rate = std::log2(t16 / t32);
    verdict(10, "balanced constructor: round trip <= 1e-12; tau = d log ||Omega||^2 at O(h^4)",
            round <= 1e-12 && rate >= 3.3 && rate <= 4.7,
            fmt("round trip %.3g, tau residual %.3g -> %.3g (rate %.2f)", round, t16, t32,
                rate));
}

}  // namespace

int main(int argc, char** argv) {
    std::string presets = "presets";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--presets") presets = argv[i + 1];

    criterion_identities();
    criterion_collapse();
    criterion_star();
    criterion_adjointness();
    criterion_anomaly(presets);
    criterion_kahler(presets);
    criterion_balanced_preserved(presets);
    criterion_relaxation(presets);
    criterion_torsion(presets);
    criterion_constructor();

    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
