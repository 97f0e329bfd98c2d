#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hermflow/balanced.hpp"
#include "hermflow/geometry.hpp"
#include "hermflow/identities.hpp"
#include "hermflow/lattice.hpp"
#include "hermflow/rng.hpp"

#include <cmath>

using namespace hermflow;

namespace {

// m=3 desk-scale lattice: fields depend on x^1, y^1 only.
TorusLattice small3(int n) { return TorusLattice(3, n, {2, 3, 4, 5}); }

FormField eta_field(const MetricField& f) {
    FormField out = FormField::zero(f.lat, 1, 1);
    for (std::size_t s = 0; s < f.lat.sites(); ++s)
        out.f[s] = eta_form(HermitianMetric(f.g[s]));
    return out;
}

}  // namespace

TEST_CASE("dual-matrix correspondence pins eta^{m-1}/(m-1)! to det(g) g^{-1}") {
    for (int m : {2, 3, 4}) {
        Rng rng(40 + static_cast<std::uint64_t>(m));
        Mat h(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) h(a, b) = 0.2 * rng.complex_unit();
        Mat g = Mat::Identity(m, m) + Mat(0.5 * (h + Mat(h.adjoint())));
        HermitianMetric hm(g);
        double f = 1.0;
        for (int i = 2; i <= m - 1; ++i) f *= i;
        Form psi = (1.0 / f) * wedge_pow(eta_form(hm), m - 1);
        Mat M = matrix_from_psi(psi);
        Mat want(m, m);
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < m; ++j) want(k, j) = hm.det() * hm.ginv()(j, k);
        CHECK((M - want).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((M - Mat(M.adjoint())).cwiseAbs().maxCoeff() <= 1e-12);
        // linear round trip both ways
        Mat r(m, m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) r(a, b) = rng.complex_unit();
        r = 0.5 * (r + Mat(r.adjoint()));
        CHECK((matrix_from_psi(psi_from_matrix(m, r)) - r).cwiseAbs().maxCoeff() <= 1e-13);
        CHECK((psi_from_matrix(m, M) - psi).max_abs() <= 1e-12);
    }
}

TEST_CASE("flat psi round trips to the flat metric") {
    TorusLattice lat = small3(8);
    ClosedPsi psi = build_psi(lat, 0.0, 1);
    CHECK(psi.closedness_residual() == 0.0);
    MetricField f = eta_root(psi, HolVolForm{});
    for (const Mat& g : f.g)
        CHECK((g - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK(f.tag == "balanced");
}

TEST_CASE("seeded psi: closed, positive, and the root construction is exact") {
    TorusLattice lat = small3(16);
    HolVolForm om;
    ClosedPsi psi = build_psi(lat, 0.05, 7);
    CHECK(psi.min_eigenvalue() > 0.0);
    CHECK(psi.closedness_residual() <= 1e-11);

    MetricField f = eta_root(psi, om);
    f.validate();
    // round trip: ||Omega||^2_eta eta^{m-1} reproduces psi pointwise
    ClosedPsi back = balanced_form(f, om);
    double rt = 0.0;
    for (std::size_t s = 0; s < lat.sites(); ++s)
        rt = std::max(rt, (back.M[s] - psi.M[s]).cwiseAbs().maxCoeff());
    CHECK(rt <= 1e-12);
    // the balanced residual of the constructed field is inherited from d psi
    CHECK(balanced_residual(f, om) <= 1e-10);
    // and the data is genuinely non-Kahler
    CHECK(exterior_d(eta_field(f)).max_abs() >= 1e-3);
}

TEST_CASE("constructed data satisfies tau = d log ||Omega||^2 to 4th order") {
    HolVolForm om;
    auto residual = [&](int n, double eps) {
        MetricField f = eta_root(build_psi(small3(n), eps, 7), om);
        IdentityReport r = check_balanced_tau(f, om);
        CHECK(r.hypothesis_ok);
        return r.residual_abs;
    };
    // 4th-order convergence at desk-scale amplitude ...
    double r16 = residual(16, 0.05);
    double r32 = residual(32, 0.05);
    double rate = std::log2(r16 / r32);
    CHECK(rate >= 3.3);
    CHECK(rate <= 4.7);
    // ... and the absolute residual reaches 1e-6 at h = 1/16 once the
    // amplitude is gentle (the O(h^4) constant carries (2 pi |k|)^5 factors
    // and scales linearly with eps).
    CHECK(residual(16, 1e-5) <= 1e-6);
}

TEST_CASE("balanced-tau flags non-balanced input instead of failing") {
    // flat field: trivially balanced, zero residual
    TorusLattice lat = small3(8);
    MetricField flat = MetricField::flat(lat);
    IdentityReport rf = check_balanced_tau(flat, HolVolForm{});
    CHECK(rf.hypothesis_ok);
    CHECK(rf.residual_abs == 0.0);
    // Kahler-but-not-balanced field (nonconstant determinant): flagged
    MetricField f = MetricField::flat(lat);
    for (std::size_t s = 0; s < lat.sites(); ++s)
        f.g[s](0, 0) = 1.0 + 0.2 * std::cos(2.0 * std::acos(-1.0) * lat.point(s)[0]);
    IdentityReport rk = check_balanced_tau(f, HolVolForm{});
    CHECK_FALSE(rk.hypothesis_ok);
}

TEST_CASE("amplitude and dimension guards") {
    CHECK_THROWS_WITH_AS(static_cast<void>(build_psi(small3(8), 20.0, 3)),
                         doctest::Contains("amplitude too large"), std::runtime_error);
    // m = 2: psi construction is fine, the conformal root is degenerate
    TorusLattice lat2(2, 8, {2, 3});
    ClosedPsi psi2 = build_psi(lat2, 0.02, 3);
    CHECK(psi2.min_eigenvalue() > 0.0);
    CHECK_THROWS(static_cast<void>(eta_root(psi2, HolVolForm{})));
}
