#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hermflow/forms.hpp"
#include "hermflow/geometry.hpp"
#include "hermflow/rng.hpp"

#include <cmath>

using namespace hermflow;

namespace {

ScalarJet random_real_scalar_jet(int m, std::uint64_t seed, double scale = 0.1) {
    Rng rng(seed);
    ScalarJet s = ScalarJet::zero(m, 2);
    s.v = rng.uniform(-scale, scale);
    for (int a = 0; a < m; ++a) {
        s.d(a) = scale * rng.complex_unit();
        s.db(a) = std::conj(s.d(a));
    }
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
            s.dd(a, b) = scale * rng.complex_unit();
            s.dd(b, a) = s.dd(a, b);
        }
    s.dbdb = s.dd.conjugate();
    Mat h(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) h(a, b) = scale * rng.complex_unit();
    s.ddb = 0.5 * (h + Mat(h.adjoint()));
    return s;
}

// Coordinate-derivative tables of the lowered torsion from an order-2 jet.
std::vector<cd> torsion_tab(const MetricJet& j) {
    const int m = j.m;
    std::vector<cd> t(static_cast<std::size_t>(m) * m * m);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int mm = 0; mm < m; ++mm)
                t[(static_cast<std::size_t>(k) * m + jj) * m + mm] =
                    j.dg[jj](k, mm) - j.dg[mm](k, jj);
    return t;
}

std::vector<cd> torsion_tab_d(const MetricJet& j, int a, bool antihol) {
    const int m = j.m;
    std::vector<cd> t(static_cast<std::size_t>(m) * m * m);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int mm = 0; mm < m; ++mm) {
                cd v = antihol ? j.ddbg[jj][a](k, mm) - j.ddbg[mm][a](k, jj)
                               : j.ddg[a][jj](k, mm) - j.ddg[a][mm](k, jj);
                t[(static_cast<std::size_t>(k) * m + jj) * m + mm] = v;
            }
    return t;
}

double max_abs(const std::vector<cd>& v) {
    double r = 0.0;
    for (const cd& x : v) r = std::max(r, std::abs(x));
    return r;
}

}  // namespace

TEST_CASE("flat jet has no torsion or curvature") {
    for (int m : {2, 3}) {
        MetricJet j = flat_jet(m, 2);
        validate_jet(j);
        TorsionPack t = torsion(j);
        CHECK(t.T.max_abs() == doctest::Approx(0.0));
        CHECK(t.normTsq == doctest::Approx(0.0));
        CurvaturePack c = curvature(j);
        CHECK(max_abs(c.Rfull) == doctest::Approx(0.0));
        CHECK(c.Rscalar == doctest::Approx(0.0));
        CHECK(omega_norm_sq(j.metric(), HolVolForm{cd(1.5, -0.5)}) ==
              doctest::Approx(std::norm(cd(1.5, -0.5))));
    }
}

TEST_CASE("random jets validate and tampering is caught") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        MetricJet j = random_jet(3, 3, seed);
        validate_jet(j);
        MetricJet k = random_kahler_jet(3, 3, seed);
        validate_jet(k);
    }
    MetricJet bad = random_jet(2, 2, 7);
    bad.dbg[0](0, 1) += cd(0.0, 0.5);
    CHECK_THROWS(validate_jet(bad));
}

TEST_CASE("kahler jets: no torsion, all four Ricci traces coincide") {
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        MetricJet j = random_kahler_jet(3, 2, seed);
        TorsionPack t = torsion(j);
        CHECK(t.T.max_abs() <= 1e-13);
        CHECK(t.normTauSq <= 1e-26);
        CurvaturePack c = curvature(j);
        CHECK((c.Ric - c.Rtilde).cwiseAbs().maxCoeff() <= 1e-11);
        CHECK((c.Ric - c.Rprime).cwiseAbs().maxCoeff() <= 1e-11);
        CHECK((c.Ric - c.Rdprime).cwiseAbs().maxCoeff() <= 1e-11);
        CHECK((c.Ric - Mat(c.Ric.adjoint())).cwiseAbs().maxCoeff() <= 1e-12);
        // Kahler connection is symmetric in its lower indices
        Tensor g = chern_gamma(j);
        for (int mm = 0; mm < 3; ++mm)
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    int i1[3] = {mm, a, b}, i2[3] = {mm, b, a};
                    CHECK(std::abs(g.at(i1) - g.at(i2)) <= 1e-12);
                }
    }
}

TEST_CASE("Ricci trace equals the log-determinant Hessian") {
    for (std::uint64_t seed : {31u, 32u}) {
        MetricJet j = random_jet(3, 2, seed);
        CurvaturePack c = curvature(j);
        // log ||Omega||^2 = -log det g for c=1, so Ric_{\bar kj} = s_{j \bar k}
        ScalarJet s = log_omega_norm_sq_jet(j, HolVolForm{});
        for (int k = 0; k < 3; ++k)
            for (int jj = 0; jj < 3; ++jj)
                CHECK(std::abs(c.Ric(k, jj) - s.ddb(jj, k)) <= 1e-12);
    }
}

TEST_CASE("curvature conjugation symmetry and scalar trace") {
    MetricJet j = random_jet(3, 2, 41);
    CurvaturePack c = curvature(j);
    for (int k = 0; k < 3; ++k)
        for (int jj = 0; jj < 3; ++jj)
            for (int p = 0; p < 3; ++p)
                for (int q = 0; q < 3; ++q)
                    CHECK(std::abs(std::conj(c.rlow(3, k, jj, p, q)) -
                                   c.rlow(3, jj, k, q, p)) <= 1e-12);
    CHECK(c.RmNormSq >= 0.0);
    // scalar curvature is also the Ric trace computed with the raw inverse
    Mat gi = j.metric().ginv();
    cd rs(0.0);
    for (int jj = 0; jj < 3; ++jj)
        for (int k = 0; k < 3; ++k) rs += gi(jj, k) * c.Ric(k, jj);
    CHECK(std::abs(c.Rscalar - std::real(rs)) <= 1e-13);
    CHECK(std::abs(std::imag(rs)) <= 1e-12);
}

TEST_CASE("torsion pack agrees with the form algebra") {
    for (std::uint64_t seed : {51u, 52u, 53u}) {
        MetricJet j = random_jet(3, 1, seed);
        TorsionPack t = torsion(j);
        HermitianMetric g = j.metric();
        // tau = i Lambda T
        Form itau = cd(0.0, 1.0) * lambda(g, t.T);
        CHECK((itau - t.tau).max_abs() <= 1e-13);
        // tensor norms against form inner products (2,1) block factor 2!1! = 2
        CHECK(t.normTsq == doctest::Approx(2.0 * inner_norm_sq(g, t.T)).epsilon(1e-11));
        CHECK(t.normTauSq == doctest::Approx(inner_norm_sq(g, t.tau)).epsilon(1e-11));
        CHECK(t.normTsq >= 0.0);
        // T o Tbar and T Tbar are Hermitian pairs in the appropriate sense
        CHECK((t.TcT - Mat(t.TcT.adjoint())).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((t.TT - Mat(t.TT.adjoint())).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("covariant derivative annihilates the metric") {
    MetricJet j = random_jet(3, 2, 61);
    TensorJet x{Tensor(3, {Slot::AhDown, Slot::HolDown}), {}, {}};
    for (int k = 0; k < 3; ++k)
        for (int jj = 0; jj < 3; ++jj) {
            int idx[2] = {k, jj};
            x.value.at(idx) = j.g(k, jj);
        }
    for (int a = 0; a < 3; ++a) {
        Tensor d(3, {Slot::AhDown, Slot::HolDown}), db(3, {Slot::AhDown, Slot::HolDown});
        for (int k = 0; k < 3; ++k)
            for (int jj = 0; jj < 3; ++jj) {
                int idx[2] = {k, jj};
                d.at(idx) = j.dg[a](k, jj);
                db.at(idx) = j.dbg[a](k, jj);
            }
        x.d.push_back(d);
        x.db.push_back(db);
    }
    CHECK(covariant_derivative(j, x, false).max_abs() <= 1e-13);
    CHECK(covariant_derivative(j, x, true).max_abs() <= 1e-13);
}

TEST_CASE("covariant derivative satisfies the Leibniz rule on contractions") {
    const int m = 3;
    MetricJet j = random_jet(m, 2, 71);
    Rng rng(72);
    auto rnd_jet = [&](Slot s) {
        TensorJet t{Tensor(m, {s}), {}, {}};
        for (int i = 0; i < m; ++i) {
            int idx[1] = {i};
            t.value.at(idx) = rng.complex_unit();
        }
        for (int a = 0; a < m; ++a) {
            Tensor d(m, {s}), db(m, {s});
            for (int i = 0; i < m; ++i) {
                int idx[1] = {i};
                d.at(idx) = rng.complex_unit();
                db.at(idx) = rng.complex_unit();
            }
            t.d.push_back(d);
            t.db.push_back(db);
        }
        return t;
    };
    TensorJet v = rnd_jet(Slot::HolUp), w = rnd_jet(Slot::HolDown);
    Tensor nv = covariant_derivative(j, v, false);
    Tensor nw = covariant_derivative(j, w, false);
    for (int a = 0; a < m; ++a) {
        cd lhs(0.0), rhs(0.0);
        for (int s = 0; s < m; ++s) {
            int i1[1] = {s};
            lhs += v.d[a].at(i1) * w.value.at(i1) + v.value.at(i1) * w.d[a].at(i1);
            int i2[2] = {a, s};
            rhs += nv.at(i2) * w.value.at(i1) + v.value.at(i1) * nw.at(i2);
        }
        CHECK(std::abs(lhs - rhs) <= 1e-12);
    }
}

TEST_CASE("chern laplacian: scalar route matches rank-0 tensor route") {
    const int m = 3;
    MetricJet j = random_jet(m, 2, 81);
    ScalarJet f = random_real_scalar_jet(m, 82);
    cd a = chern_laplacian(j, f);
    TensorJet2 x{Tensor(m, {}), {}, {}, {}, {}};
    x.value.data()[0] = f.v;
    for (int p = 0; p < m; ++p) {
        Tensor d(m, {}), db(m, {});
        d.data()[0] = f.d(p);
        db.data()[0] = f.db(p);
        x.d.push_back(d);
        x.db.push_back(db);
    }
    x.dd.assign(m, std::vector<Tensor>(m, Tensor(m, {})));
    x.ddb = x.dd;
    for (int p = 0; p < m; ++p)
        for (int q = 0; q < m; ++q) {
            x.dd[p][q].data()[0] = f.dd(p, q);
            x.ddb[p][q].data()[0] = f.ddb(p, q);
        }
    Tensor b = chern_laplacian(j, x);
    CHECK(std::abs(a - b.data()[0]) <= 1e-13);
}

TEST_CASE("chern laplacian of the metric itself vanishes") {
    const int m = 3;
    MetricJet j = random_jet(m, 2, 91);
    TensorJet2 x{Tensor(m, {Slot::AhDown, Slot::HolDown}), {}, {}, {}, {}};
    auto fill = [&](Tensor& t, const Mat& src) {
        for (int k = 0; k < m; ++k)
            for (int jj = 0; jj < m; ++jj) {
                int idx[2] = {k, jj};
                t.at(idx) = src(k, jj);
            }
    };
    fill(x.value, j.g);
    for (int a = 0; a < m; ++a) {
        Tensor d(m, {Slot::AhDown, Slot::HolDown}), db = d;
        fill(d, j.dg[a]);
        fill(db, j.dbg[a]);
        x.d.push_back(d);
        x.db.push_back(db);
    }
    x.dd.assign(m, std::vector<Tensor>(m, Tensor(m, {Slot::AhDown, Slot::HolDown})));
    x.ddb = x.dd;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            fill(x.dd[a][b], j.ddg[a][b]);
            fill(x.ddb[a][b], j.ddbg[a][b]);
        }
    CHECK(chern_laplacian(j, x).max_abs() <= 1e-11);
}

TEST_CASE("del-dagger on (2,1): matches the covariant assembly") {
    const int m = 3;
    for (std::uint64_t seed : {101u, 102u}) {
        MetricJet j = random_jet(m, 2, seed);
        HermitianMetric g = j.metric();
        const Mat& gi = g.ginv();
        TorsionPack tp = torsion(j);

        FormJet fj{tp.T, {}, {}};
        TensorJet tx{Tensor(m, {Slot::AhDown, Slot::HolDown, Slot::HolDown}), {}, {}};
        auto tt = torsion_tab(j);
        for (int k = 0; k < m; ++k)
            for (int jj = 0; jj < m; ++jj)
                for (int mm = 0; mm < m; ++mm) {
                    int idx[3] = {k, jj, mm};
                    tx.value.at(idx) = tt[(static_cast<std::size_t>(k) * m + jj) * m + mm];
                }
        for (int a = 0; a < m; ++a) {
            auto td = torsion_tab_d(j, a, false);
            auto tdb = torsion_tab_d(j, a, true);
            fj.d.push_back(form_from_tkjm(m, td));
            fj.db.push_back(form_from_tkjm(m, tdb));
            Tensor d(m, tx.value.slots()), db = d;
            for (int k = 0; k < m; ++k)
                for (int jj = 0; jj < m; ++jj)
                    for (int mm = 0; mm < m; ++mm) {
                        int idx[3] = {k, jj, mm};
                        std::size_t f = (static_cast<std::size_t>(k) * m + jj) * m + mm;
                        d.at(idx) = td[f];
                        db.at(idx) = tdb[f];
                    }
            tx.d.push_back(d);
            tx.db.push_back(db);
        }

        Form lhs = del_dagger(j, fj);

        // oracle: -nabla^m T_{\bar kjm} + taubar^m T_{\bar kjm} - 1/2 (T o Tbar)_{\bar kj}
        Tensor nbT = covariant_derivative(j, tx, true);  // [\bar a, \bar k, j, m]
        Eigen::VectorXcd tau(m);
        for (int l = 0; l < m; ++l) {
            cd v(0.0);
            for (int jj = 0; jj < m; ++jj)
                for (int k = 0; k < m; ++k)
                    v += gi(jj, k) * tt[(static_cast<std::size_t>(k) * m + jj) * m + l];
            tau(l) = v;
        }
        Mat rhs = Mat::Zero(m, m);
        for (int k = 0; k < m; ++k)
            for (int jj = 0; jj < m; ++jj) {
                cd v(0.0);
                for (int mm = 0; mm < m; ++mm)
                    for (int a = 0; a < m; ++a) {
                        int idx[4] = {a, k, jj, mm};
                        std::size_t f = (static_cast<std::size_t>(k) * m + jj) * m + mm;
                        v += gi(mm, a) * (-nbT.at(idx) + std::conj(tau(a)) * tt[f]);
                    }
                v -= 0.5 * tp.TcT(k, jj);
                rhs(k, jj) = v;
            }
        CHECK((lhs - one_one_form(rhs)).max_abs() <= 1e-12);
    }
}

TEST_CASE("del-dagger shapes and errors") {
    const int m = 3;
    MetricJet j = random_jet(m, 2, 111);
    Rng rng(112);
    // (1,0) payload with random derivatives
    FormJet a{Form::from_table(m, 1, 0,
                               [&](std::span<const int>, std::span<const int>) {
                                   return rng.complex_unit();
                               }),
              {}, {}};
    for (int k = 0; k < m; ++k) {
        a.d.push_back(Form::from_table(m, 1, 0, [&](std::span<const int>, std::span<const int>) {
            return rng.complex_unit();
        }));
        a.db.push_back(Form::from_table(m, 1, 0, [&](std::span<const int>, std::span<const int>) {
            return rng.complex_unit();
        }));
    }
    Form da = del_dagger(j, a);
    CHECK(da.p() == 0);
    CHECK(da.q() == 0);

    FormJet bad{Form(m, 1, 1), {}, {}};
    CHECK_THROWS(del_dagger(j, bad));

    // flat metric, constant (2,0) payload: del-dagger vanishes
    MetricJet fl = flat_jet(m, 2);
    Rng rng2(113);
    Form b0 = Form::from_increasing(m, 2, 0, [&](std::span<const int>, std::span<const int>) {
        return rng2.complex_unit();
    });
    FormJet b{b0, std::vector<Form>(m, Form(m, 2, 0)), std::vector<Form>(m, Form(m, 2, 0))};
    CHECK(del_dagger(fl, b).max_abs() <= 1e-15);
}

TEST_CASE("rescaling: round trip and norm relation") {
    const HolVolForm om{cd(1.3, 0.4)};
    for (std::uint64_t seed : {121u, 122u}) {
        MetricJet j = random_jet(3, 2, seed);
        MetricJet eta = rescale_to_eta(j, om);
        validate_jet(eta, 1e-10);
        double no = omega_norm_sq(j.metric(), om);
        double ne = omega_norm_sq(eta.metric(), om);
        CHECK(ne == doctest::Approx(std::pow(no, (2.0 - 3.0) / 2.0)).epsilon(1e-12));
        MetricJet back = rescale_to_omega(eta, om);
        CHECK((back.g - j.g).cwiseAbs().maxCoeff() <= 1e-12);
        for (int a = 0; a < 3; ++a)
            CHECK((back.dg[a] - j.dg[a]).cwiseAbs().maxCoeff() <= 1e-11);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                CHECK((back.ddg[a][b] - j.ddg[a][b]).cwiseAbs().maxCoeff() <= 1e-11);
                CHECK((back.ddbg[a][b] - j.ddbg[a][b]).cwiseAbs().maxCoeff() <= 1e-11);
            }
    }
    MetricJet j2 = random_jet(2, 2, 123);
    CHECK_THROWS_WITH(static_cast<void>(rescale_to_omega(j2, om)),
                      doctest::Contains("degenerate at m=2"));
}

TEST_CASE("conformal change: closed-form torsion and curvature transforms") {
    const int m = 3;
    for (std::uint64_t seed : {131u, 132u}) {
        MetricJet j = random_jet(m, 2, seed);
        ScalarJet f = random_real_scalar_jet(m, seed + 1000);
        MetricJet jf = conformal_metric(j, f);
        validate_jet(jf, 1e-10);

        Form t_direct = torsion(jf).T;
        Form t_closed = conformal_torsion(j, f);
        CHECK((t_direct - t_closed).max_abs() <= 1e-11);

        CurvaturePack c_direct = curvature(jf);
        auto r_closed = conformal_curvature_low(j, f);
        double err = 0.0;
        for (std::size_t i = 0; i < r_closed.size(); ++i)
            err = std::max(err, std::abs(c_direct.Rlow[i] - r_closed[i]));
        CHECK(err <= 1e-11);
    }
}

TEST_CASE("scalar jet algebra: exp and product") {
    const int m = 2;
    ScalarJet a = random_real_scalar_jet(m, 141);
    ScalarJet b = random_real_scalar_jet(m, 142);
    CHECK(a.is_real());
    ScalarJet s = a + b;
    // exp(a+b) = exp(a) exp(b) at jet level
    ScalarJet lhs = exp_jet(s);
    ScalarJet rhs = exp_jet(a) * exp_jet(b);
    CHECK(std::abs(lhs.v - rhs.v) <= 1e-14);
    CHECK((lhs.d - rhs.d).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((lhs.dd - rhs.dd).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((lhs.ddb - rhs.ddb).cwiseAbs().maxCoeff() <= 1e-13);
    CHECK((lhs.dbdb - rhs.dbdb).cwiseAbs().maxCoeff() <= 1e-13);
}
