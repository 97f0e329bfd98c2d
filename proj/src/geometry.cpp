#include "hermflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hermflow {

namespace {

std::size_t idx3(int m, int a, int b, int c) {
    return (static_cast<std::size_t>(a) * m + b) * m + c;
}

std::size_t idx4(int m, int a, int b, int c, int d) {
    return ((static_cast<std::size_t>(a) * m + b) * m + c) * m + d;
}

std::vector<Mat> zero_mats(int m, std::size_t n) {
    return std::vector<Mat>(n, Mat::Zero(m, m));
}

std::vector<std::vector<Mat>> zero_mats2(int m) {
    return std::vector<std::vector<Mat>>(m, zero_mats(m, m));
}

}  // namespace

// ---------------------------------------------------------------------------
// ScalarJet.

ScalarJet ScalarJet::zero(int m, int order) {
    ScalarJet s;
    s.m = m;
    s.order = order;
    s.d = Eigen::VectorXcd::Zero(m);
    s.db = Eigen::VectorXcd::Zero(m);
    if (order >= 2) {
        s.dd = Mat::Zero(m, m);
        s.ddb = Mat::Zero(m, m);
        s.dbdb = Mat::Zero(m, m);
    }
    if (order >= 3) {
        std::size_t n = static_cast<std::size_t>(m) * m * m;
        s.ddd.assign(n, cd(0.0));
        s.dddb.assign(n, cd(0.0));
        s.ddbdb.assign(n, cd(0.0));
        s.dbdbdb.assign(n, cd(0.0));
    }
    return s;
}

bool ScalarJet::is_real() const {
    const double tol = 1e-12;
    if (std::abs(std::imag(v)) > tol) return false;
    for (int a = 0; a < m; ++a)
        if (std::abs(db(a) - std::conj(d(a))) > tol) return false;
    if (order >= 2) {
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                if (std::abs(dbdb(a, b) - std::conj(dd(a, b))) > tol) return false;
                if (std::abs(ddb(a, b) - std::conj(ddb(b, a))) > tol) return false;
            }
    }
    return true;
}

ScalarJet operator*(const ScalarJet& a, const ScalarJet& b) {
    int ord = std::min({a.order, b.order, 2});
    ScalarJet c = ScalarJet::zero(a.m, ord);
    c.v = a.v * b.v;
    c.d = a.d * b.v + a.v * b.d;
    c.db = a.db * b.v + a.v * b.db;
    if (ord >= 2) {
        for (int i = 0; i < a.m; ++i)
            for (int j = 0; j < a.m; ++j) {
                c.dd(i, j) = a.dd(i, j) * b.v + a.d(i) * b.d(j) + a.d(j) * b.d(i) +
                             a.v * b.dd(i, j);
                c.ddb(i, j) = a.ddb(i, j) * b.v + a.d(i) * b.db(j) + a.db(j) * b.d(i) +
                              a.v * b.ddb(i, j);
                c.dbdb(i, j) = a.dbdb(i, j) * b.v + a.db(i) * b.db(j) + a.db(j) * b.db(i) +
                               a.v * b.dbdb(i, j);
            }
    }
    return c;
}

ScalarJet operator+(const ScalarJet& a, const ScalarJet& b) {
    int ord = std::min(a.order, b.order);
    ScalarJet c = ScalarJet::zero(a.m, ord);
    c.v = a.v + b.v;
    c.d = a.d + b.d;
    c.db = a.db + b.db;
    if (ord >= 2) {
        c.dd = a.dd + b.dd;
        c.ddb = a.ddb + b.ddb;
        c.dbdb = a.dbdb + b.dbdb;
    }
    if (ord >= 3) {
        for (std::size_t i = 0; i < a.ddd.size(); ++i) {
            c.ddd[i] = a.ddd[i] + b.ddd[i];
            c.dddb[i] = a.dddb[i] + b.dddb[i];
            c.ddbdb[i] = a.ddbdb[i] + b.ddbdb[i];
            c.dbdbdb[i] = a.dbdbdb[i] + b.dbdbdb[i];
        }
    }
    return c;
}

ScalarJet operator*(cd s, ScalarJet a) {
    a.v *= s;
    a.d *= s;
    a.db *= s;
    if (a.order >= 2) {
        a.dd *= s;
        a.ddb *= s;
        a.dbdb *= s;
    }
    if (a.order >= 3) {
        for (auto* t : {&a.ddd, &a.dddb, &a.ddbdb, &a.dbdbdb})
            for (auto& x : *t) x *= s;
    }
    return a;
}

ScalarJet exp_jet(const ScalarJet& s) {
    int ord = std::min(s.order, 2);
    ScalarJet e = ScalarJet::zero(s.m, ord);
    cd E = std::exp(s.v);
    e.v = E;
    e.d = E * s.d;
    e.db = E * s.db;
    if (ord >= 2) {
        for (int i = 0; i < s.m; ++i)
            for (int j = 0; j < s.m; ++j) {
                e.dd(i, j) = E * (s.dd(i, j) + s.d(i) * s.d(j));
                e.ddb(i, j) = E * (s.ddb(i, j) + s.d(i) * s.db(j));
                e.dbdb(i, j) = E * (s.dbdb(i, j) + s.db(i) * s.db(j));
            }
    }
    return e;
}

// ---------------------------------------------------------------------------
// MetricJet construction and validation.

MetricJet MetricJet::from_holomorphic(int m, int order, Mat g, std::vector<Mat> dg,
                                      std::vector<std::vector<Mat>> ddg,
                                      std::vector<std::vector<Mat>> ddbg,
                                      std::vector<Mat> d3g_hhh, std::vector<Mat> d3g_hhb) {
    MetricJet j;
    j.m = m;
    j.order = order;
    j.g = std::move(g);
    j.dg = std::move(dg);
    j.dbg.resize(m);
    for (int a = 0; a < m; ++a) j.dbg[a] = j.dg[a].adjoint();
    if (order >= 2) {
        j.ddg = std::move(ddg);
        j.ddbg = std::move(ddbg);
        j.dbdbg = zero_mats2(m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) j.dbdbg[a][b] = j.ddg[a][b].adjoint();
    }
    if (order >= 3) {
        j.d3g_hhh = std::move(d3g_hhh);
        j.d3g_hhb = std::move(d3g_hhb);
        std::size_t n = static_cast<std::size_t>(m) * m * m;
        j.d3g_hbb = zero_mats(m, n);
        j.d3g_bbb = zero_mats(m, n);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                for (int c = 0; c < m; ++c) {
                    // d_a dbar_b dbar_c g = (d_b d_c dbar_a g)^H
                    j.d3g_hbb[idx3(m, a, b, c)] = j.d3g_hhb[idx3(m, b, c, a)].adjoint();
                    j.d3g_bbb[idx3(m, a, b, c)] = j.d3g_hhh[idx3(m, a, b, c)].adjoint();
                }
    }
    return j;
}

void validate_jet(const MetricJet& j, double tol) {
    auto check = [&](double r, const char* what) {
        if (!(r <= tol)) throw std::runtime_error(std::string("jet validation failed: ") + what);
    };
    const int m = j.m;
    check((j.g - Mat(j.g.adjoint())).cwiseAbs().maxCoeff(), "metric not Hermitian");
    for (int a = 0; a < m; ++a)
        check((j.dbg[a] - Mat(j.dg[a].adjoint())).cwiseAbs().maxCoeff(),
              "dbar derivative not conjugate of d derivative");
    if (j.order >= 2) {
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                check((j.ddg[a][b] - j.ddg[b][a]).cwiseAbs().maxCoeff(),
                      "mixed holomorphic partials not symmetric");
                check((j.dbdbg[a][b] - Mat(j.ddg[a][b].adjoint())).cwiseAbs().maxCoeff(),
                      "second dbar block not conjugate");
                check((j.ddbg[a][b] - Mat(j.ddbg[b][a].adjoint())).cwiseAbs().maxCoeff(),
                      "mixed block not Hermitian-paired");
            }
    }
    if (j.order >= 3) {
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                for (int c = 0; c < m; ++c) {
                    check((j.d3g_hhh[idx3(m, a, b, c)] - j.d3g_hhh[idx3(m, b, a, c)])
                              .cwiseAbs()
                              .maxCoeff(),
                          "third holomorphic partials not symmetric");
                    check((j.d3g_hhh[idx3(m, a, b, c)] - j.d3g_hhh[idx3(m, a, c, b)])
                              .cwiseAbs()
                              .maxCoeff(),
                          "third holomorphic partials not symmetric");
                    check((j.d3g_hhb[idx3(m, a, b, c)] - j.d3g_hhb[idx3(m, b, a, c)])
                              .cwiseAbs()
                              .maxCoeff(),
                          "hhb partials not symmetric in holomorphic pair");
                    check((j.d3g_hbb[idx3(m, a, b, c)] -
                           Mat(j.d3g_hhb[idx3(m, b, c, a)].adjoint()))
                              .cwiseAbs()
                              .maxCoeff(),
                          "hbb block not conjugate of hhb block");
                    check((j.d3g_bbb[idx3(m, a, b, c)] -
                           Mat(j.d3g_hhh[idx3(m, a, b, c)].adjoint()))
                              .cwiseAbs()
                              .maxCoeff(),
                          "bbb block not conjugate of hhh block");
                }
    }
    j.metric();  // positivity
}

MetricJet flat_jet(int m, int order) {
    std::size_t n3 = static_cast<std::size_t>(m) * m * m;
    return MetricJet::from_holomorphic(
        m, order, Mat::Identity(m, m), zero_mats(m, m),
        order >= 2 ? zero_mats2(m) : std::vector<std::vector<Mat>>{},
        order >= 2 ? zero_mats2(m) : std::vector<std::vector<Mat>>{},
        order >= 3 ? zero_mats(m, n3) : std::vector<Mat>{},
        order >= 3 ? zero_mats(m, n3) : std::vector<Mat>{});
}

namespace {

Mat random_mat(int m, Rng& rng, double scale) {
    Mat x(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) x(a, b) = scale * rng.complex_unit();
    return x;
}

}  // namespace

MetricJet random_jet(int m, int order, std::uint64_t seed, double scale) {
    Rng rng(seed);
    Mat h = random_mat(m, rng, scale);
    Mat g = Mat::Identity(m, m) + 0.5 * (h + Mat(h.adjoint()));

    auto dg = zero_mats(m, m);
    for (int a = 0; a < m; ++a) dg[a] = random_mat(m, rng, scale);

    std::vector<std::vector<Mat>> ddg, ddbg;
    if (order >= 2) {
        ddg = zero_mats2(m);
        ddbg = zero_mats2(m);
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) {
                ddg[a][b] = random_mat(m, rng, scale);
                ddg[b][a] = ddg[a][b];
            }
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) {
                Mat x = random_mat(m, rng, scale);
                if (a == b) x = 0.5 * (x + Mat(x.adjoint()));
                ddbg[a][b] = x;
                if (a != b) ddbg[b][a] = x.adjoint();
            }
    }

    std::size_t n3 = static_cast<std::size_t>(m) * m * m;
    std::vector<Mat> hhh, hhb;
    if (order >= 3) {
        hhh = zero_mats(m, n3);
        hhb = zero_mats(m, n3);
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b)
                for (int c = b; c < m; ++c) {
                    Mat x = random_mat(m, rng, scale);
                    hhh[idx3(m, a, b, c)] = x;
                    hhh[idx3(m, a, c, b)] = x;
                    hhh[idx3(m, b, a, c)] = x;
                    hhh[idx3(m, b, c, a)] = x;
                    hhh[idx3(m, c, a, b)] = x;
                    hhh[idx3(m, c, b, a)] = x;
                }
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b)
                for (int c = 0; c < m; ++c) {
                    Mat x = random_mat(m, rng, scale);
                    hhb[idx3(m, a, b, c)] = x;
                    hhb[idx3(m, b, a, c)] = x;
                }
    }
    return MetricJet::from_holomorphic(m, order, std::move(g), std::move(dg), std::move(ddg),
                                       std::move(ddbg), std::move(hhh), std::move(hhb));
}

namespace {

// Symmetric derivative tables of a scalar potential: one table per (r,s)
// pattern (r holomorphic, s antiholomorphic indices), with the reality
// constraint conj(D^{(r,s)}_{H,A}) = D^{(s,r)}_{A,H}.
class PotentialJet {
public:
    PotentialJet(int m, int max_total, Rng& rng, double scale) : m_(m) {
        for (int r = 1; r <= max_total - 1; ++r)
            for (int s = 1; r + s <= max_total; ++s) {
                if (s > r) continue;
                auto& tab = table(r, s);
                tab.assign(pow_size(r + s), cd(0.0));
                auto hs = increasing_or_equal(r);
                auto as = increasing_or_equal(s);
                for (const auto& H : hs)
                    for (const auto& A : as) {
                        cd v = scale * rng.complex_unit();
                        fill_sym(tab, H, A, v);
                    }
                if (r == s) {
                    // enforce conj(D_{H,A}) = D_{A,H}
                    auto copy = tab;
                    std::vector<int> idx(2 * r, 0);
                    for (std::size_t fi = 0; fi < tab.size(); ++fi) {
                        std::vector<int> sw(idx.begin() + r, idx.end());
                        sw.insert(sw.end(), idx.begin(), idx.begin() + r);
                        tab[fi] = 0.5 * (copy[fi] + std::conj(copy[flat(sw)]));
                        bump(idx);
                    }
                }
            }
    }

    cd get(std::span<const int> H, std::span<const int> A) const {
        int r = static_cast<int>(H.size()), s = static_cast<int>(A.size());
        std::vector<int> idx;
        if (s <= r) {
            idx.assign(H.begin(), H.end());
            idx.insert(idx.end(), A.begin(), A.end());
            return table_c(r, s)[flat(idx)];
        }
        idx.assign(A.begin(), A.end());
        idx.insert(idx.end(), H.begin(), H.end());
        return std::conj(table_c(s, r)[flat(idx)]);
    }

private:
    std::size_t pow_size(int k) const {
        std::size_t n = 1;
        for (int i = 0; i < k; ++i) n *= m_;
        return n;
    }
    std::size_t flat(std::span<const int> idx) const {
        std::size_t f = 0;
        for (int v : idx) f = f * m_ + v;
        return f;
    }
    void bump(std::vector<int>& idx) const {
        for (int d = static_cast<int>(idx.size()) - 1; d >= 0; --d) {
            if (++idx[d] < m_) break;
            idx[d] = 0;
        }
    }
    std::vector<std::vector<int>> increasing_or_equal(int k) const {
        std::vector<std::vector<int>> out;
        std::vector<int> cur(k, 0);
        while (true) {
            out.push_back(cur);
            int d = k - 1;
            while (d >= 0) {
                if (cur[d] + 1 < m_) {
                    ++cur[d];
                    for (int e = d + 1; e < k; ++e) cur[e] = cur[d];
                    break;
                }
                --d;
            }
            if (d < 0) break;
        }
        return out;
    }
    void fill_sym(std::vector<cd>& tab, const std::vector<int>& H,
                  const std::vector<int>& A, cd v) {
        std::vector<int> h = H, a = A;
        std::sort(h.begin(), h.end());
        std::sort(a.begin(), a.end());
        // write v into every permutation of each block
        std::vector<std::vector<int>> hp = perms(h), ap = perms(a);
        for (const auto& hh : hp)
            for (const auto& aa : ap) {
                std::vector<int> idx = hh;
                idx.insert(idx.end(), aa.begin(), aa.end());
                tab[flat(idx)] = v;
            }
    }
    static std::vector<std::vector<int>> perms(std::vector<int> v) {
        std::vector<std::vector<int>> out;
        std::sort(v.begin(), v.end());
        do out.push_back(v);
        while (std::next_permutation(v.begin(), v.end()));
        return out;
    }
    std::vector<cd>& table(int r, int s) { return tables_[r * 8 + s]; }
    const std::vector<cd>& table_c(int r, int s) const { return tables_.at(r * 8 + s); }

    int m_;
    std::map<int, std::vector<cd>> tables_;
};

}  // namespace

MetricJet random_kahler_jet(int m, int order, std::uint64_t seed, double scale) {
    Rng rng(seed);
    PotentialJet phi(m, order + 2, rng, scale);

    auto D = [&](std::initializer_list<int> H, std::initializer_list<int> A) {
        return phi.get(std::vector<int>(H), std::vector<int>(A));
    };

    Mat g(m, m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) g(k, j) = (k == j ? 1.0 : 0.0) + D({j}, {k});

    auto dg = zero_mats(m, m);
    for (int a = 0; a < m; ++a)
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < m; ++j) dg[a](k, j) = D({a, j}, {k});

    std::vector<std::vector<Mat>> ddg, ddbg;
    if (order >= 2) {
        ddg = zero_mats2(m);
        ddbg = zero_mats2(m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                for (int k = 0; k < m; ++k)
                    for (int j = 0; j < m; ++j) {
                        ddg[a][b](k, j) = D({a, b, j}, {k});
                        ddbg[a][b](k, j) = D({a, j}, {b, k});
                    }
    }
    std::size_t n3 = static_cast<std::size_t>(m) * m * m;
    std::vector<Mat> hhh, hhb;
    if (order >= 3) {
        hhh = zero_mats(m, n3);
        hhb = zero_mats(m, n3);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b)
                for (int c = 0; c < m; ++c)
                    for (int k = 0; k < m; ++k)
                        for (int j = 0; j < m; ++j) {
                            hhh[idx3(m, a, b, c)](k, j) = D({a, b, c, j}, {k});
                            hhb[idx3(m, a, b, c)](k, j) = D({a, b, j}, {c, k});
                        }
    }
    return MetricJet::from_holomorphic(m, order, std::move(g), std::move(dg), std::move(ddg),
                                       std::move(ddbg), std::move(hhh), std::move(hhb));
}

namespace {

// Residual tables of the pointwise balanced constraints:
// v_l = g^{j\bar k} d_j g_{\bar kl}    (wants 0; equivalent to tau = d log||Omega||^2)
// D_{pl} = dbar_p v_l                  (wants 0; forces dbar tau = Ric, i.e. R' = R'' = 0)
Eigen::VectorXcd balanced_c1(const MetricJet& j, const Mat& gi) {
    const int m = j.m;
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(m);
    for (int l = 0; l < m; ++l)
        for (int jj = 0; jj < m; ++jj)
            for (int k = 0; k < m; ++k) v(l) += gi(jj, k) * j.dg[jj](k, l);
    return v;
}

Mat balanced_c2(const MetricJet& j, const Mat& gi) {
    const int m = j.m;
    Mat D = Mat::Zero(m, m);  // (p, l)
    for (int p = 0; p < m; ++p) {
        Mat dgi = -gi * j.dbg[p] * gi;
        for (int l = 0; l < m; ++l)
            for (int jj = 0; jj < m; ++jj)
                for (int k = 0; k < m; ++k)
                    D(p, l) += dgi(jj, k) * j.dg[jj](k, l) + gi(jj, k) * j.ddbg[jj][p](k, l);
    }
    return D;
}

}  // namespace

std::pair<double, double> balanced_constraint_residual(const MetricJet& j) {
    const Mat gi = j.metric().ginv();
    double c1 = balanced_c1(j, gi).cwiseAbs().maxCoeff();
    double c2 = j.order >= 2 ? balanced_c2(j, gi).cwiseAbs().maxCoeff() : 0.0;
    return {c1, c2};
}

MetricJet random_balanced_jet(int m, int order, std::uint64_t seed, double scale) {
    MetricJet j = random_jet(m, order, seed, scale);
    const Mat gi = j.metric().ginv();

    // First-order constraint: one linear projection is exact.
    Eigen::VectorXcd v = balanced_c1(j, gi);
    for (int jj = 0; jj < m; ++jj)
        for (int k = 0; k < m; ++k)
            for (int l = 0; l < m; ++l) j.dg[jj](k, l) -= j.g(k, jj) * v(l) / double(m);
    for (int a = 0; a < m; ++a) j.dbg[a] = j.dg[a].adjoint();

    if (order < 2) return j;

    // Second-order constraint: alternate a linear correction of ddbg with the
    // Hermitian pairing symmetrization until both hold.
    for (int iter = 0; iter < 200; ++iter) {
        Mat D = balanced_c2(j, gi);
        if (D.cwiseAbs().maxCoeff() < 1e-14) {
            validate_jet(j);
            return j;
        }
        for (int jj = 0; jj < m; ++jj)
            for (int p = 0; p < m; ++p)
                for (int k = 0; k < m; ++k)
                    for (int l = 0; l < m; ++l)
                        j.ddbg[jj][p](k, l) -= j.g(k, jj) * D(p, l) / double(m);
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) {
                Mat s = 0.5 * (j.ddbg[a][b] + Mat(j.ddbg[b][a].adjoint()));
                j.ddbg[a][b] = s;
                j.ddbg[b][a] = s.adjoint();
            }
    }
    throw std::runtime_error("random_balanced_jet: constraint projection did not converge");
}

MetricJet scale_jet(const ScalarJet& s, const MetricJet& j) {
    ScalarJet e = exp_jet(s);
    int ord = std::min({j.order, e.order, 2});
    const int m = j.m;
    MetricJet out;
    out.m = m;
    out.order = ord;
    out.g = e.v * j.g;
    out.dg = zero_mats(m, m);
    out.dbg = zero_mats(m, m);
    for (int a = 0; a < m; ++a) {
        out.dg[a] = e.d(a) * j.g + e.v * j.dg[a];
        out.dbg[a] = e.db(a) * j.g + e.v * j.dbg[a];
    }
    if (ord >= 2) {
        out.ddg = zero_mats2(m);
        out.ddbg = zero_mats2(m);
        out.dbdbg = zero_mats2(m);
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                out.ddg[a][b] = e.dd(a, b) * j.g + e.d(a) * j.dg[b] + e.d(b) * j.dg[a] +
                                e.v * j.ddg[a][b];
                out.ddbg[a][b] = e.ddb(a, b) * j.g + e.d(a) * j.dbg[b] + e.db(b) * j.dg[a] +
                                 e.v * j.ddbg[a][b];
                out.dbdbg[a][b] = e.dbdb(a, b) * j.g + e.db(a) * j.dbg[b] + e.db(b) * j.dbg[a] +
                                  e.v * j.dbdbg[a][b];
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Holomorphic volume form.

double omega_norm_sq(const HermitianMetric& g, const HolVolForm& om) {
    return std::norm(om.c) / g.det();
}

ScalarJet log_omega_norm_sq_jet(const MetricJet& j, const HolVolForm& om) {
    const int m = j.m;
    int ord = std::min(j.order, 2);
    HermitianMetric gm = j.metric();
    const Mat& gi = gm.ginv();
    ScalarJet s = ScalarJet::zero(m, ord);
    s.v = std::log(std::norm(om.c) / gm.det());
    for (int a = 0; a < m; ++a) {
        s.d(a) = -(gi * j.dg[a]).trace();
        s.db(a) = -(gi * j.dbg[a]).trace();
    }
    if (ord >= 2) {
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                s.dd(a, b) = -(-gi * j.dg[b] * gi * j.dg[a] + gi * j.ddg[a][b]).trace();
                s.ddb(a, b) = -(-gi * j.dbg[b] * gi * j.dg[a] + gi * j.ddbg[a][b]).trace();
                s.dbdb(a, b) = -(-gi * j.dbg[b] * gi * j.dbg[a] + gi * j.dbdbg[a][b]).trace();
            }
    }
    return s;
}

MetricJet rescale_to_eta(const MetricJet& j_omega, const HolVolForm& om) {
    // eta = ||Omega||_omega omega = exp(1/2 log ||Omega||^2_omega) omega
    return scale_jet(0.5 * log_omega_norm_sq_jet(j_omega, om), j_omega);
}

MetricJet rescale_to_omega(const MetricJet& j_eta, const HolVolForm& om) {
    if (j_eta.m == 2)
        throw std::runtime_error(
            "rescaling degenerate at m=2: ||Omega||^2_eta is identically 1");
    // ||Omega||^2_omega = (||Omega||^2_eta)^{2/(2-m)}, omega = ||Omega||_omega^{-1} eta
    double c = -1.0 / (2.0 - j_eta.m);
    return scale_jet(cd(c) * log_omega_norm_sq_jet(j_eta, om), j_eta);
}

// ---------------------------------------------------------------------------
// Torsion.

namespace {

// T_{\bar kjm} = d_j g_{\bar km} - d_m g_{\bar kj}, flat [(k*m+j)*m+mm].
std::vector<cd> torsion_table(const MetricJet& j) {
    const int m = j.m;
    std::vector<cd> t(static_cast<std::size_t>(m) * m * m);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int mm = 0; mm < m; ++mm)
                t[idx3(m, k, jj, mm)] = j.dg[jj](k, mm) - j.dg[mm](k, jj);
    return t;
}

}  // namespace

TorsionPack torsion(const MetricJet& j) {
    const int m = j.m;
    HermitianMetric gm = j.metric();
    const Mat& gi = gm.ginv();
    auto tt = torsion_table(j);

    TorsionPack p{Form(m, 2, 1), Form(m, 1, 0), Mat::Zero(m, m), Mat::Zero(m, m),
                  Mat::Zero(m, m)};
    p.T = form_from_tkjm(m, tt);

    Eigen::VectorXcd tau = Eigen::VectorXcd::Zero(m);
    for (int l = 0; l < m; ++l)
        for (int jj = 0; jj < m; ++jj)
            for (int k = 0; k < m; ++k) tau(l) += gi(jj, k) * tt[idx3(m, k, jj, l)];
    p.tau = Form::from_table(m, 1, 0, [&](std::span<const int> h, std::span<const int>) {
        return tau(h[0]);
    });

    for (int b = 0; b < m; ++b)
        for (int a = 0; a < m; ++a) {
            cd tct(0.0), ttv(0.0);
            for (int l = 0; l < m; ++l)
                for (int gam = 0; gam < m; ++gam)
                    for (int jj = 0; jj < m; ++jj)
                        for (int k = 0; k < m; ++k) {
                            cd w = gi(l, gam) * gi(jj, k);
                            // (T o Tbar)_{\bar ba} = g^{l \bar gam} g^{j \bar k}
                            //                        T_{\bar bjl} conj(T_{\bar akgam})
                            tct += w * tt[idx3(m, b, jj, l)] * std::conj(tt[idx3(m, a, k, gam)]);
                            // (T Tbar)_{\bar ba} = g^{l \bar gam} g^{j \bar k}
                            //                      T_{\bar gam ja} conj(T_{\bar lkb})
                            ttv += w * tt[idx3(m, gam, jj, a)] * std::conj(tt[idx3(m, l, k, b)]);
                        }
            p.TcT(b, a) = tct;
            p.TT(b, a) = ttv;
        }

    // taubar^m = g^{m \bar k} conj(tau_k)
    Eigen::VectorXcd taubar_up = Eigen::VectorXcd::Zero(m);
    for (int mm = 0; mm < m; ++mm)
        for (int k = 0; k < m; ++k) taubar_up(mm) += gi(mm, k) * std::conj(tau(k));
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            cd v(0.0);
            for (int mm = 0; mm < m; ++mm) v += taubar_up(mm) * tt[idx3(m, a, b, mm)];
            p.tauT(a, b) = v;
        }

    cd tsq(0.0);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int mm = 0; mm < m; ++mm)
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b)
                        for (int c = 0; c < m; ++c)
                            tsq += tt[idx3(m, k, jj, mm)] * std::conj(tt[idx3(m, a, b, c)]) *
                                   gi(a, k) * gi(jj, b) * gi(mm, c);
    p.normTsq = std::real(tsq);
    cd tausq(0.0);
    for (int l = 0; l < m; ++l)
        for (int k = 0; k < m; ++k) tausq += gi(l, k) * tau(l) * std::conj(tau(k));
    p.normTauSq = std::real(tausq);
    return p;
}

// ---------------------------------------------------------------------------
// Curvature.

CurvaturePack curvature(const MetricJet& j) {
    if (j.order < 2) throw std::runtime_error("curvature needs a jet of order >= 2");
    const int m = j.m;
    HermitianMetric gm = j.metric();
    const Mat& gi = gm.ginv();

    std::vector<Mat> dgi_b(m);  // dbar_k g^{-1}
    for (int k = 0; k < m; ++k) dgi_b[k] = -gi * j.dbg[k] * gi;

    CurvaturePack c;
    std::size_t n4 = static_cast<std::size_t>(m) * m * m * m;
    c.Rfull.assign(n4, cd(0.0));
    c.Rlow.assign(n4, cd(0.0));
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj) {
            // d_j dbar_k g = ddbg[j][k]
            Mat blk = -(dgi_b[k] * j.dg[jj] + gi * j.ddbg[jj][k]);
            for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) c.Rfull[idx4(m, k, jj, p, q)] = blk(p, q);
            Mat low = j.g * blk;  // g_{\bar ps} R^s_q: (p,s) entry of g is g(p,s)
            for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) c.Rlow[idx4(m, k, jj, p, q)] = low(p, q);
        }

    c.Ric = Mat::Zero(m, m);
    c.Rtilde = Mat::Zero(m, m);
    c.Rprime = Mat::Zero(m, m);
    c.Rdprime = Mat::Zero(m, m);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj) {
            cd ric(0.0), rt(0.0), rp(0.0), rd(0.0);
            for (int p = 0; p < m; ++p) ric += c.Rfull[idx4(m, k, jj, p, p)];
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) {
                    cd w = gi(a, b);
                    rt += w * c.Rlow[idx4(m, b, a, k, jj)];
                    rp += w * c.Rlow[idx4(m, k, a, b, jj)];
                    rd += w * c.Rlow[idx4(m, b, jj, k, a)];
                }
            c.Ric(k, jj) = ric;
            c.Rtilde(k, jj) = rt;
            c.Rprime(k, jj) = rp;
            c.Rdprime(k, jj) = rd;
        }
    cd rs(0.0);
    for (int jj = 0; jj < m; ++jj)
        for (int k = 0; k < m; ++k) rs += gi(jj, k) * c.Ric(k, jj);
    c.Rscalar = std::real(rs);

    cd rm(0.0);
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q) {
                    cd x = c.Rlow[idx4(m, k, jj, p, q)];
                    if (x == cd(0.0)) continue;
                    for (int b = 0; b < m; ++b)
                        for (int a = 0; a < m; ++a)
                            for (int d = 0; d < m; ++d)
                                for (int cc = 0; cc < m; ++cc)
                                    rm += x * std::conj(c.Rlow[idx4(m, b, a, d, cc)]) *
                                          gi(a, k) * gi(jj, b) * gi(cc, p) * gi(q, d);
                }
    c.RmNormSq = std::real(rm);
    return c;
}

// ---------------------------------------------------------------------------
// Tensors.

Tensor::Tensor(int m, std::vector<Slot> slots) : m_(m), slots_(std::move(slots)) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < slots_.size(); ++i) n *= m_;
    data_.assign(n, cd(0.0));
}

std::size_t Tensor::flat(std::span<const int> idx) const {
    std::size_t f = 0;
    for (int v : idx) f = f * m_ + v;
    return f;
}

double Tensor::max_abs() const {
    double r = 0.0;
    for (const cd& v : data_) r = std::max(r, std::abs(v));
    return r;
}

Tensor& Tensor::operator-=(const Tensor& o) {
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Tensor chern_gamma(const MetricJet& j) {
    const int m = j.m;
    const Mat gi = j.metric().ginv();
    Tensor G(m, {Slot::HolUp, Slot::HolDown, Slot::HolDown});
    for (int mm = 0; mm < m; ++mm)
        for (int jj = 0; jj < m; ++jj)
            for (int p = 0; p < m; ++p) {
                cd v(0.0);
                for (int q = 0; q < m; ++q) v += gi(mm, q) * j.dg[jj](q, p);
                int idx[3] = {mm, jj, p};
                G.at(idx) = v;
            }
    return G;
}

Tensor chern_gamma_d(const MetricJet& j) {
    if (j.order < 2) throw std::runtime_error("chern_gamma_d needs a jet of order >= 2");
    const int m = j.m;
    const Mat gi = j.metric().ginv();
    Tensor G(m, {Slot::HolDown, Slot::HolUp, Slot::HolDown, Slot::HolDown});
    for (int c = 0; c < m; ++c) {
        Mat dgi = -gi * j.dg[c] * gi;
        for (int mm = 0; mm < m; ++mm)
            for (int jj = 0; jj < m; ++jj)
                for (int p = 0; p < m; ++p) {
                    cd v(0.0);
                    for (int q = 0; q < m; ++q)
                        v += dgi(mm, q) * j.dg[jj](q, p) + gi(mm, q) * j.ddg[c][jj](q, p);
                    int idx[4] = {c, mm, jj, p};
                    G.at(idx) = v;
                }
    }
    return G;
}

namespace {

// Connection correction for nabla in direction a applied to X:
//   hol:     +Gamma^i_{as} on HolUp, -Gamma^s_{ai} on HolDown
//   antihol: +conj(Gamma^i_{as}) on AhUp, -conj(Gamma^s_{ai}) on AhDown
Tensor gamma_correction(const Tensor& gamma, const Tensor& x, int a, bool antihol) {
    const int m = x.m();
    Tensor out(m, x.slots());
    const int rank = static_cast<int>(x.slots().size());
    std::vector<int> idx(rank, 0), idx2(rank, 0);
    std::size_t n = out.data().size();
    for (std::size_t fi = 0; fi < n; ++fi) {
        cd acc(0.0);
        for (int s = 0; s < rank; ++s) {
            Slot sl = x.slots()[s];
            bool up = (sl == Slot::HolUp || sl == Slot::AhUp);
            bool hol = (sl == Slot::HolUp || sl == Slot::HolDown);
            if (hol == antihol) continue;
            idx2 = idx;
            for (int r = 0; r < m; ++r) {
                idx2[s] = r;
                cd gv;
                if (up) {
                    int gidx[3] = {idx[s], a, r};
                    gv = gamma.at(gidx);
                } else {
                    int gidx[3] = {r, a, idx[s]};
                    gv = -gamma.at(gidx);
                }
                if (antihol) gv = std::conj(gv);
                acc += gv * x.data()[x.flat(idx2)];
            }
        }
        out.data()[fi] = acc;
        for (int d = rank - 1; d >= 0; --d) {
            if (++idx[d] < m) break;
            idx[d] = 0;
        }
    }
    return out;
}

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    Tensor c = a;
    for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
    return c;
}

}  // namespace

Tensor covariant_derivative(const MetricJet& j, const TensorJet& x, bool antihol) {
    const int m = j.m;
    Tensor gamma = chern_gamma(j);
    std::vector<Slot> slots = x.value.slots();
    slots.insert(slots.begin(), antihol ? Slot::AhDown : Slot::HolDown);
    Tensor out(m, slots);
    const std::size_t blk = x.value.data().size();
    for (int a = 0; a < m; ++a) {
        Tensor term = add_tensors(antihol ? x.db[a] : x.d[a],
                                  gamma_correction(gamma, x.value, a, antihol));
        for (std::size_t i = 0; i < blk; ++i)
            out.data()[static_cast<std::size_t>(a) * blk + i] = term.data()[i];
    }
    return out;
}

cd chern_laplacian(const MetricJet& j, const ScalarJet& f) {
    if (f.order < 2) throw std::runtime_error("chern_laplacian needs a scalar jet of order >= 2");
    const Mat gi = j.metric().ginv();
    cd v(0.0);
    for (int p = 0; p < j.m; ++p)
        for (int q = 0; q < j.m; ++q) v += gi(p, q) * f.ddb(p, q);
    return v;
}

Tensor chern_laplacian(const MetricJet& j, const TensorJet2& x) {
    const int m = j.m;
    const Mat gi = j.metric().ginv();
    Tensor gamma = chern_gamma(j);
    CurvaturePack cp = curvature(j);

    // dbar_q Gamma^i_{ps} = -R_{\bar qp}{}^i{}_s, packaged as a Gamma-shaped tensor
    std::vector<Tensor> dbgamma(m, Tensor(m, {Slot::HolUp, Slot::HolDown, Slot::HolDown}));
    for (int q = 0; q < m; ++q)
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < m; ++p)
                for (int s = 0; s < m; ++s) {
                    int idx[3] = {i, p, s};
                    dbgamma[q].at(idx) = -cp.rfull(m, q, p, i, s);
                }

    Tensor out(m, x.value.slots());
    for (int p = 0; p < m; ++p) {
        // Np = nabla_p X and its value-only pieces
        Tensor np = add_tensors(x.d[p], gamma_correction(gamma, x.value, p, false));
        for (int q = 0; q < m; ++q) {
            // dbar_q Np = d_p dbar_q X + (dbar_q Gamma) X + Gamma dbar_q X
            Tensor dnp = add_tensors(x.ddb[p][q],
                                     add_tensors(gamma_correction(dbgamma[q], x.value, p, false),
                                                 gamma_correction(gamma, x.db[q], p, false)));
            // nabla_{\bar q} Np = dbar_q Np + antihol corrections on Np's slots
            Tensor z = add_tensors(dnp, gamma_correction(gamma, np, q, true));
            cd w = gi(p, q);
            for (std::size_t i = 0; i < out.data().size(); ++i)
                out.data()[i] += w * z.data()[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// del-dagger.

Form del_dagger(const MetricJet& j, const FormJet& f) {
    const int m = j.m;
    const Mat gi = j.metric().ginv();
    auto tt = torsion_table(j);

    Eigen::VectorXcd tau = Eigen::VectorXcd::Zero(m);
    for (int l = 0; l < m; ++l)
        for (int jj = 0; jj < m; ++jj)
            for (int k = 0; k < m; ++k) tau(l) += gi(jj, k) * tt[idx3(m, k, jj, l)];

    const int p = f.value.p(), q = f.value.q();
    if (p == 1 && q == 0) {
        cd v(0.0);
        for (int pp = 0; pp < m; ++pp)
            for (int k = 0; k < m; ++k) {
                int hol[1] = {pp};
                v += gi(pp, k) *
                     (-f.db[k].at(hol, {}) + std::conj(tau(k)) * f.value.at(hol, {}));
            }
        return Form::from_table(m, 0, 0,
                                [&](std::span<const int>, std::span<const int>) { return v; });
    }
    if (p == 2 && q == 0) {
        return Form::from_table(m, 1, 0, [&](std::span<const int> h, std::span<const int>) {
            int l = h[0];
            cd v(0.0);
            for (int pp = 0; pp < m; ++pp)
                for (int k = 0; k < m; ++k) {
                    int hol[2] = {l, pp};
                    v += gi(pp, k) *
                         (-f.db[k].at(hol, {}) + std::conj(tau(k)) * f.value.at(hol, {}));
                }
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b)
                    for (int c = 0; c < m; ++c)
                        for (int d = 0; d < m; ++d) {
                            int hol[2] = {c, d};
                            v += -0.5 * std::conj(tt[idx3(m, l, a, b)]) *
                                 f.value.at(hol, {}) * gi(c, a) * gi(d, b);
                        }
            return v;
        });
    }
    if (p == 2 && q == 1) {
        Tensor gamma = chern_gamma(j);
        Mat out = Mat::Zero(m, m);  // out(alpha, beta) = (del-dagger psi)_{\bar alpha beta}
        for (int al = 0; al < m; ++al)
            for (int be = 0; be < m; ++be) {
                cd v(0.0);
                for (int gm2 = 0; gm2 < m; ++gm2)
                    for (int jj = 0; jj < m; ++jj) {
                        // nabla_{\bar j} psi_{\bar alpha beta gamma}
                        cd nab = t_component(f.db[jj], al, be, gm2);
                        for (int s = 0; s < m; ++s) {
                            int gidx[3] = {s, jj, al};
                            nab -= std::conj(gamma.at(gidx)) * t_component(f.value, s, be, gm2);
                        }
                        v += gi(gm2, jj) *
                             (-nab + std::conj(tau(jj)) * t_component(f.value, al, be, gm2));
                    }
                for (int jj = 0; jj < m; ++jj)
                    for (int mm = 0; mm < m; ++mm)
                        for (int gm2 = 0; gm2 < m; ++gm2)
                            for (int dl = 0; dl < m; ++dl)
                                v += -0.5 * std::conj(tt[idx3(m, be, jj, mm)]) *
                                     t_component(f.value, al, gm2, dl) * gi(gm2, jj) *
                                     gi(dl, mm);
                out(al, be) = v;
            }
        return one_one_form(out);
    }
    throw std::runtime_error("del_dagger supports bidegrees (1,0), (2,0), (2,1) only");
}

// ---------------------------------------------------------------------------
// Conformal change.

MetricJet conformal_metric(const MetricJet& j, const ScalarJet& f) { return scale_jet(f, j); }

Form conformal_torsion(const MetricJet& j, const ScalarJet& f) {
    const int m = j.m;
    auto tt = torsion_table(j);
    cd ef = std::exp(f.v);
    std::vector<cd> out(tt.size());
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int mm = 0; mm < m; ++mm)
                out[idx3(m, k, jj, mm)] =
                    ef * (tt[idx3(m, k, jj, mm)] + f.d(jj) * j.g(k, mm) - f.d(mm) * j.g(k, jj));
    return form_from_tkjm(m, out);
}

std::vector<cd> conformal_curvature_low(const MetricJet& j, const ScalarJet& f) {
    const int m = j.m;
    CurvaturePack c = curvature(j);
    cd ef = std::exp(f.v);
    std::vector<cd> out(c.Rlow.size());
    for (int k = 0; k < m; ++k)
        for (int jj = 0; jj < m; ++jj)
            for (int p = 0; p < m; ++p)
                for (int q = 0; q < m; ++q)
                    out[idx4(m, k, jj, p, q)] =
                        ef * (c.Rlow[idx4(m, k, jj, p, q)] - f.ddb(jj, k) * j.g(p, q));
    return out;
}

}  // namespace hermflow
