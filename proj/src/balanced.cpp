#include "hermflow/balanced.hpp"
#include "hermflow/identities.hpp"
#include "hermflow/rng.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace hermflow {

namespace {

double fact(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

std::vector<int> complement(int m, int skip) {
    std::vector<int> t;
    for (int i = 0; i < m; ++i)
        if (i != skip) t.push_back(i);
    return t;
}

// Calibration constants c(k,j): the canonical coefficient of
// eta^{m-1}/(m-1)! at (complement of j, complement of k) equals
// c(k,j) * det(g) g^{j \bar k}.  They depend only on (m, k, j); pin them once
// against a generic metric.
const Mat& psi_calibration(int m) {
    static std::map<int, Mat> cache;
    auto it = cache.find(m);
    if (it != cache.end()) return it->second;
    Mat g = Mat::Identity(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            g(a, b) += cd(0.03 * (1 + a + 2 * b), 0.02 * (a - b)) / double(m);
    g = Mat(0.5 * (g + Mat(g.adjoint())));
    HermitianMetric hm(g);
    Form psi = (1.0 / fact(m - 1)) * wedge_pow(eta_form(hm), m - 1);
    Mat c(m, m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) {
            cd target = hm.det() * hm.ginv()(j, k);
            c(k, j) = psi.at(complement(m, j), complement(m, k)) / target;
        }
    return cache.emplace(m, std::move(c)).first->second;
}

}  // namespace

Form psi_from_matrix(int m, const Mat& M) {
    const Mat& c = psi_calibration(m);
    return Form::from_increasing(m, m - 1, m - 1,
                                 [&](std::span<const int> h, std::span<const int> a) {
                                     int j = 0, k = 0;
                                     for (int i = 0; i < m - 1; ++i) {
                                         if (h[static_cast<std::size_t>(i)] == j) ++j;
                                         if (a[static_cast<std::size_t>(i)] == k) ++k;
                                     }
                                     return c(k, j) * M(k, j);
                                 });
}

Mat matrix_from_psi(const Form& psi) {
    const int m = psi.m();
    if (psi.p() != m - 1 || psi.q() != m - 1)
        throw std::invalid_argument("matrix_from_psi expects an (m-1,m-1)-form");
    const Mat& c = psi_calibration(m);
    Mat M(m, m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            M(k, j) = psi.at(complement(m, j), complement(m, k)) / c(k, j);
    return M;
}

FormField ClosedPsi::form() const {
    FormField out = FormField::zero(lat, lat.m() - 1, lat.m() - 1);
    for (std::size_t s = 0; s < lat.sites(); ++s) out.f[s] = psi_from_matrix(lat.m(), M[s]);
    return out;
}

double ClosedPsi::closedness_residual() const { return exterior_d(form()).max_abs(); }

double ClosedPsi::min_eigenvalue() const {
    double mn = std::numeric_limits<double>::infinity();
    for (const Mat& x : M) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (x + Mat(x.adjoint())));
        mn = std::min(mn, es.eigenvalues().minCoeff());
    }
    return mn;
}

ClosedPsi build_psi(const TorusLattice& lat, double eps, std::uint64_t seed) {
    const int m = lat.m();
    if (m < 2) throw std::invalid_argument("build_psi needs m >= 2");
    Form omega0 = eta_form(HermitianMetric::identity(m));

    // Seeded real trigonometric potential on the active coordinates.
    Rng rng(seed);
    std::vector<int> active;
    for (int d = 0; d < lat.dims(); ++d)
        if (!lat.is_reduced(d)) active.push_back(d);
    struct Term {
        double amp;
        std::vector<int> k;
        int quarter;
    };
    // Waves capped at |k| = 1 and small amplitudes: second derivatives pick up
    // a (2 pi)^2 factor, and eps = O(0.05) should stay inside the positive cone.
    std::vector<Term> phi;
    for (int r = 0; r < 3; ++r) {
        Term t{rng.uniform(0.05, 0.15), std::vector<int>(static_cast<std::size_t>(lat.dims()), 0),
               rng.integer(0, 3)};
        bool nz = false;
        for (int d : active) {
            t.k[static_cast<std::size_t>(d)] = rng.integer(-1, 1);
            nz |= t.k[static_cast<std::size_t>(d)] != 0;
        }
        if (!nz) t.k[static_cast<std::size_t>(active.front())] = 1;
        phi.push_back(std::move(t));
    }
    auto phival = [&](std::span<const double> x) {
        double v = 0.0;
        for (const Term& t : phi) {
            double th = t.quarter * (std::numbers::pi / 2.0);
            for (std::size_t d = 0; d < x.size(); ++d)
                th += 2.0 * std::numbers::pi * t.k[d] * x[d];
            v += t.amp * std::cos(th);
        }
        return v;
    };

    // chi = phi * omega0^{m-2}/(m-2)!, then psi = flat + eps * i del delbar chi.
    Form base = (1.0 / fact(m - 2)) * wedge_pow(omega0, m - 2);
    FormField chi = FormField::zero(lat, m - 2, m - 2);
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        auto p = lat.point(s);
        chi.f[s] = cd(phival(p)) * base;
    }
    FormField bump = del_field(delbar_field(chi));

    ClosedPsi out;
    out.lat = lat;
    out.M.reserve(lat.sites());
    Mat flat = Mat::Identity(m, m);  // dual matrix of omega0^{m-1}/(m-1)!
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        Mat M = flat + eps * matrix_from_psi(cd(0.0, 1.0) * bump.f[s]);
        M = Mat(0.5 * (M + Mat(M.adjoint())));  // discard differencing skew
        out.M.push_back(std::move(M));
    }
    if (out.min_eigenvalue() <= 0.0)
        throw std::runtime_error(
            "build_psi: amplitude too large, psi loses positivity; retry with eps/2");
    return out;
}

MetricField eta_root(const ClosedPsi& psi, const HolVolForm& om) {
    const int m = psi.lat.m();
    if (m < 3)
        throw std::invalid_argument(
            "eta_root needs m >= 3: at m = 2 the conformal normalization is degenerate");
    const double csq = std::norm(om.c);
    MetricField out;
    out.lat = psi.lat;
    out.tag = "balanced";
    out.g.reserve(psi.lat.sites());
    for (const Mat& Mx : psi.M) {
        Mat M = 0.5 * (Mx + Mat(Mx.adjoint()));
        Eigen::SelfAdjointEigenSolver<Mat> es(M);
        if (es.eigenvalues().minCoeff() <= 0.0)
            throw std::runtime_error("eta_root: dual matrix not positive definite");
        double detM = M.determinant().real();
        double detg0 = std::pow(detM, 1.0 / (m - 1));
        Mat g0 = detg0 * M.inverse();
        double u = std::log(csq / detg0);
        out.g.push_back(Mat(std::exp(u) * g0));
    }
    return out;
}

ClosedPsi balanced_form(const MetricField& f, const HolVolForm& om) {
    const int m = f.lat.m();
    const double csq = std::norm(om.c);
    ClosedPsi out;
    out.lat = f.lat;
    out.M.reserve(f.lat.sites());
    for (const Mat& gm : f.g) {
        HermitianMetric g(0.5 * (gm + Mat(gm.adjoint())));
        double w = csq / g.det();  // ||Omega||^2_eta
        Mat M(m, m);
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < m; ++j) M(k, j) = w * g.det() * g.ginv()(j, k);
        out.M.push_back(std::move(M));
    }
    return out;
}

double balanced_residual(const MetricField& f, const HolVolForm& om) {
    return balanced_form(f, om).closedness_residual();
}

// Field-level check of tau = d log ||Omega||^2_eta on conformally balanced
// data; flags the hypothesis instead of failing when the input is not
// balanced to lattice precision.
IdentityReport check_balanced_tau(const MetricField& field, const HolVolForm& om) {
    const int m = field.lat.m();
    const double csq = std::norm(om.c);
    IdentityReport r;
    r.id = "balanced-tau-field";
    r.dim = m;
    r.hypothesis_ok = balanced_residual(field, om) <= 1e-6;

    FieldJet fj = jets(field, 1);
    ScalarField logw = ScalarField::zero(field.lat);
    for (std::size_t s = 0; s < field.lat.sites(); ++s)
        logw.v[s] = std::log(csq / field.g[s].determinant().real());
    std::vector<ScalarField> dl;
    for (int l = 0; l < m; ++l) dl.push_back(derivative(logw, l, false));
    double diff = 0.0, scale = 1.0;
    for (std::size_t s = 0; s < field.lat.sites(); ++s) {
        TorsionPack tp = torsion(fj.jets[s]);
        for (int l = 0; l < m; ++l) {
            int idx[1] = {l};
            cd tau = tp.tau.at(idx, {});
            diff = std::max(diff, std::abs(tau - dl[static_cast<std::size_t>(l)].v[s]));
            scale = std::max({scale, std::abs(tau), std::abs(dl[static_cast<std::size_t>(l)].v[s])});
        }
    }
    r.residual_abs = diff;
    r.scale = scale;
    r.residual_rel = diff / std::max(scale, 1e-30);
    return r;
}

}  // namespace hermflow
