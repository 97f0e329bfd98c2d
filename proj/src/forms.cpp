#include "hermflow/forms.hpp"

#include <algorithm>
#include <cmath>

namespace hermflow {

namespace {

double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

std::size_t pow_size(int m, int k) {
    std::size_t s = 1;
    for (int i = 0; i < k; ++i) s *= static_cast<std::size_t>(m);
    return s;
}

// sign of picking subset positions `pos` (increasing) out of an n-tuple,
// i.e. parity of the shuffle (pos, complement).
int shuffle_sign(const std::vector<int>& pos) {
    int s = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) s += pos[i] - static_cast<int>(i);
    return (s % 2 == 0) ? 1 : -1;
}

}  // namespace

HermitianMetric::HermitianMetric(const Mat& g) : g_(g) {
    const int m = static_cast<int>(g.rows());
    if (g.cols() != m || m < 1 || m > kMaxDim)
        throw std::invalid_argument("metric must be square, dimension 1..6");
    if ((g - g.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("metric not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(g);
    min_eig_ = es.eigenvalues().minCoeff();
    if (min_eig_ <= 0.0) throw std::invalid_argument("metric not invertible");
    ginv_ = g.inverse();
    det_ = g.determinant().real();
}

HermitianMetric HermitianMetric::identity(int m) {
    return HermitianMetric(Mat::Identity(m, m));
}

int sort_sign(std::span<int> idx) {
    int sign = 1;
    for (std::size_t i = 1; i < idx.size(); ++i) {
        int v = idx[i];
        std::size_t j = i;
        while (j > 0 && idx[j - 1] > v) {
            idx[j] = idx[j - 1];
            --j;
            sign = -sign;
        }
        idx[j] = v;
    }
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (idx[i] == idx[i - 1]) return 0;
    return sign;
}

std::vector<std::vector<int>> increasing_tuples(int m, int k) {
    std::vector<std::vector<int>> out;
    if (k < 0 || k > m) return out;
    std::vector<int> t(k);
    for (int i = 0; i < k; ++i) t[i] = i;
    while (true) {
        out.push_back(t);
        int d = k - 1;
        while (d >= 0 && t[d] == m - k + d) --d;
        if (d < 0) break;
        ++t[d];
        for (int i = d + 1; i < k; ++i) t[i] = t[i - 1] + 1;
    }
    if (k == 0) out = {std::vector<int>{}};
    return out;
}

Form::Form(int m, int p, int q) : m_(m), p_(p), q_(q) {
    if (m < 1 || m > kMaxDim) throw std::invalid_argument("form dimension out of range");
    if (p < 0 || q < 0) throw std::invalid_argument("negative bidegree");
    if (p <= m && q <= m) data_.assign(pow_size(m, p + q), cd(0.0));
}

std::size_t Form::flat(std::span<const int> hol, std::span<const int> ah) const {
    std::size_t f = 0;
    for (int v : hol) f = f * m_ + static_cast<std::size_t>(v);
    for (int v : ah) f = f * m_ + static_cast<std::size_t>(v);
    return f;
}

cd Form::at(std::span<const int> hol, std::span<const int> ah) const {
    if (identically_zero()) return cd(0.0);
    return data_[flat(hol, ah)];
}

Form& Form::operator+=(const Form& o) {
    if (!same_shape(o)) throw std::invalid_argument("form shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
}

Form& Form::operator-=(const Form& o) {
    if (!same_shape(o)) throw std::invalid_argument("form shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
}

Form& Form::operator*=(cd s) {
    for (auto& v : data_) v *= s;
    return *this;
}

double Form::max_abs() const {
    double r = 0.0;
    for (const auto& v : data_) r = std::max(r, std::abs(v));
    return r;
}

Form eta_form(const HermitianMetric& g) {
    const int m = g.m();
    return Form::from_table(m, 1, 1, [&](std::span<const int> h, std::span<const int> a) {
        return cd(0.0, 1.0) * g.g()(a[0], h[0]);
    });
}

Form one_one_form(const Mat& x) {
    const int m = static_cast<int>(x.rows());
    return Form::from_table(m, 1, 1, [&](std::span<const int> h, std::span<const int> a) {
        return x(a[0], h[0]);
    });
}

cd pp_component(const Form& f, std::span<const int> jbars, std::span<const int> ks) {
    const int p = f.p();
    if (f.q() != p || static_cast<int>(jbars.size()) != p || static_cast<int>(ks.size()) != p)
        throw std::invalid_argument("pp_component needs a (p,p)-form and p indices per block");
    // interleaved layout dz^{k_p}^dzbar^{j_p}^...^dz^{k_1}^dzbar^{j_1} vs the
    // canonical block layout differ by the parity of p(p-1)/2
    const int sp = ((p * (p - 1) / 2) % 2 == 0) ? 1 : -1;
    return static_cast<double>(sp) * f.at(ks, jbars);
}

Form form_from_tkjm(int m, const std::vector<cd>& t) {
    if (t.size() != pow_size(m, 3)) throw std::invalid_argument("bad T table size");
    return Form::from_table(m, 2, 1, [&](std::span<const int> h, std::span<const int> a) {
        // canonical A[a,b,kbar] = T_{\bar k b a}
        return t[(static_cast<std::size_t>(a[0]) * m + h[1]) * m + h[0]];
    });
}

cd t_component(const Form& T, int kbar, int j, int mm) {
    const int idxh[2] = {mm, j};
    const int idxa[1] = {kbar};
    return T.at(idxh, idxa);
}

Form conjugate(const Form& f) {
    Form out(f.m(), f.q(), f.p());
    if (f.identically_zero() || out.identically_zero()) return out;
    const double sign = ((f.p() * f.q()) % 2 == 0) ? 1.0 : -1.0;
    // B[K,Jbar] = (-1)^{pq} conj(A[J,Kbar])
    std::vector<int> idx(f.p() + f.q(), 0);
    const int p = f.p(), q = f.q(), m = f.m();
    for (std::size_t fi = 0; fi < f.data().size(); ++fi) {
        std::span<const int> J(idx.data(), p), K(idx.data() + p, q);
        out.data()[out.flat(K, J)] = sign * std::conj(f.data()[fi]);
        for (int d = p + q - 1; d >= 0; --d) {
            if (++idx[d] < m) break;
            idx[d] = 0;
        }
    }
    return out;
}

Form wedge(const Form& a, const Form& b) {
    if (a.m() != b.m()) throw std::invalid_argument("dimension mismatch in wedge");
    const int m = a.m();
    const int p = a.p() + b.p(), q = a.q() + b.q();
    if (p > m || q > m || a.identically_zero() || b.identically_zero())
        return Form(m, p, q);

    const double blocksign = ((b.p() * a.q()) % 2 == 0) ? 1.0 : -1.0;
    const int pa = a.p(), qa = a.q();
    auto holsplits = increasing_tuples(p, pa);
    auto ahsplits = increasing_tuples(q, qa);

    return Form::from_increasing(m, p, q, [&](std::span<const int> J, std::span<const int> K) {
        cd acc(0.0);
        std::vector<int> SJ(pa), CJ(p - pa), SK(qa), CK(q - qa);
        for (const auto& hs : holsplits) {
            int sh = shuffle_sign(hs);
            {
                std::size_t si = 0, ci = 0, hi = 0;
                for (int pos = 0; pos < p; ++pos) {
                    if (hi < hs.size() && hs[hi] == pos) { SJ[si++] = J[pos]; ++hi; }
                    else CJ[ci++] = J[pos];
                }
            }
            for (const auto& as : ahsplits) {
                int sa = shuffle_sign(as);
                std::size_t si = 0, ci = 0, ai = 0;
                for (int pos = 0; pos < q; ++pos) {
                    if (ai < as.size() && as[ai] == pos) { SK[si++] = K[pos]; ++ai; }
                    else CK[ci++] = K[pos];
                }
                acc += static_cast<double>(sh * sa) * a.at(SJ, SK) * b.at(CJ, CK);
            }
        }
        return blocksign * acc;
    });
}

Form wedge_pow(const Form& a, int k) {
    if (k < 0) throw std::invalid_argument("negative wedge power");
    Form out(a.m(), 0, 0);
    out.data()[0] = cd(1.0);
    for (int i = 0; i < k; ++i) out = wedge(out, a);
    return out;
}

Form lambda(const HermitianMetric& g, const Form& f) {
    if (f.p() < 1 || f.q() < 1) throw std::invalid_argument("contraction exceeds degree");
    const int m = f.m(), p = f.p(), q = f.q();
    if (f.identically_zero()) return Form(m, p - 1, q - 1);
    // adjoint of wedging with eta on canonical tables: contract the leading
    // slot of each block; see docs/conventions.md
    const cd c = cd(0.0, -1.0) * ((p % 2 == 1) ? 1.0 : -1.0);
    std::vector<int> hol(p), ah(q);
    return Form::from_table(m, p - 1, q - 1, [&](std::span<const int> J, std::span<const int> K) {
        for (int r = 0; r < p - 1; ++r) hol[r + 1] = J[r];
        for (int r = 0; r < q - 1; ++r) ah[r + 1] = K[r];
        cd acc(0.0);
        for (int j = 0; j < m; ++j) {
            hol[0] = j;
            for (int k = 0; k < m; ++k) {
                ah[0] = k;
                acc += g.ginv()(j, k) * f.at(hol, ah);
            }
        }
        return c * acc;
    });
}

Form lambda_pow(const HermitianMetric& g, const Form& f, int q) {
    if (q > std::min(f.p(), f.q())) throw std::invalid_argument("contraction exceeds degree");
    Form out = f;
    for (int i = 0; i < q; ++i) out = lambda(g, out);
    return out;
}

cd inner(const HermitianMetric& g, const Form& a, const Form& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("form shape mismatch in inner product");
    if (a.identically_zero()) return cd(0.0);
    const int m = a.m(), p = a.p(), q = a.q();
    auto hols = increasing_tuples(m, p);
    auto ahs = increasing_tuples(m, q);
    Mat dh(p, p), da(q, q);
    cd acc(0.0);
    for (const auto& J : hols) {
        for (const auto& A : ahs) {
            cd av = a.at(J, A);
            if (av == cd(0.0)) continue;
            for (const auto& Jb : hols) {
                for (const auto& Ab : ahs) {
                    cd bv = b.at(Jb, Ab);
                    if (bv == cd(0.0)) continue;
                    for (int r = 0; r < p; ++r)
                        for (int s = 0; s < p; ++s) dh(r, s) = g.ginv()(J[r], Jb[s]);
                    for (int r = 0; r < q; ++r)
                        for (int s = 0; s < q; ++s) da(r, s) = g.ginv()(Ab[r], A[s]);
                    cd w = (p > 0 ? dh.determinant() : cd(1.0)) * (q > 0 ? da.determinant() : cd(1.0));
                    acc += av * std::conj(bv) * w;
                }
            }
        }
    }
    return acc;
}

double inner_norm_sq(const HermitianMetric& g, const Form& a) {
    return inner(g, a, a).real();
}

Form vol_form(const HermitianMetric& g) {
    Form v = wedge_pow(eta_form(g), g.m());
    v *= cd(1.0 / factorial(g.m()));
    return v;
}

namespace {

// coefficient of the canonical top tuple (0..m-1 | 0..m-1) in e ^ f, where e
// is the basis monomial dz^A ^ dzbar^B.
cd top_wedge_coeff(int m, const std::vector<int>& A, const std::vector<int>& B, const Form& f) {
    std::vector<int> Ac, Bc;
    Ac.reserve(m - A.size());
    Bc.reserve(m - B.size());
    {
        std::size_t ai = 0;
        for (int i = 0; i < m; ++i) {
            if (ai < A.size() && A[ai] == i) ++ai;
            else Ac.push_back(i);
        }
    }
    {
        std::size_t bi = 0;
        for (int i = 0; i < m; ++i) {
            if (bi < B.size() && B[bi] == i) ++bi;
            else Bc.push_back(i);
        }
    }
    const int pf = f.p(), qe = static_cast<int>(B.size());
    double sign = ((pf * qe) % 2 == 0) ? 1.0 : -1.0;
    sign *= shuffle_sign(A) * shuffle_sign(B);
    return sign * f.at(Ac, Bc);
}

}  // namespace

Form hodge_star_brute(const HermitianMetric& g, const Form& f) {
    const int m = g.m();
    if (f.m() != m) throw std::invalid_argument("dimension mismatch in star");
    const int p = f.p(), q = f.q();
    Form out(m, m - q, m - p);
    if (f.identically_zero()) return out;

    // test-form space (m-p, m-q)
    auto As = increasing_tuples(m, m - p);
    auto Bs = increasing_tuples(m, m - q);
    const int n = static_cast<int>(As.size() * Bs.size());

    Form vol = vol_form(g);
    std::vector<int> full(m);
    for (int i = 0; i < m; ++i) full[i] = i;
    cd volc = vol.at(full, full);

    // basis forms e_i = dz^{A} ^ dzbar^{B} in canonical storage
    std::vector<Form> basis;
    basis.reserve(n);
    Eigen::VectorXcd rhs(n);
    {
        int i = 0;
        for (const auto& A : As) {
            for (const auto& B : Bs) {
                Form e(m, m - p, m - q);
                e = Form::from_increasing(m, m - p, m - q,
                    [&](std::span<const int> J, std::span<const int> K) {
                        return (std::equal(J.begin(), J.end(), A.begin(), A.end()) &&
                                std::equal(K.begin(), K.end(), B.begin(), B.end()))
                                   ? cd(1.0) : cd(0.0);
                    });
                basis.push_back(e);
                // defining pairing is <alpha, conj-star(f)> vol = f ^ alpha;
                // commuting f past alpha costs (-1)^{deg f} at complementary degree
                double degsign = ((p + q) % 2 == 0) ? 1.0 : -1.0;
                rhs(i) = degsign * top_wedge_coeff(m, A, B, f) / volc;
                ++i;
            }
        }
    }

    Eigen::MatrixXcd gram(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) gram(i, j) = inner(g, basis[i], basis[j]);
    Eigen::VectorXcd xbar = gram.fullPivLu().solve(rhs);

    Form X(m, m - p, m - q);
    for (int i = 0; i < n; ++i) {
        Form t = basis[i];
        t *= std::conj(xbar(i));
        X += t;
    }
    return conjugate(X);
}

Form hodge_star_closed(const HermitianMetric& g, StarShape shape, const Form& payload) {
    const int m = g.m();
    if (payload.m() != m) throw std::invalid_argument("dimension mismatch in star");
    Form eta = eta_form(g);
    auto need = [&](int pp, int qq, int mmin) {
        if (payload.p() != pp || payload.q() != qq)
            throw std::invalid_argument("payload bidegree does not match shape");
        if (m < mmin) throw std::invalid_argument("dimension too small for shape");
    };
    switch (shape) {
        case StarShape::AlphaEta: {
            need(1, 1, 2);
            // (m-2)! (-alpha + (Lambda alpha) eta)
            cd tr = lambda(g, payload).data()[0];
            Form out = eta;
            out *= tr;
            out -= payload;
            out *= cd(factorial(m - 2));
            return out;
        }
        case StarShape::PhiEta: {
            need(2, 2, 3);
            // (m-3)! (-Lambda Phi + 1/2 (Lambda^2 Phi) eta)
            Form l1 = lambda(g, payload);
            cd tr2 = lambda(g, l1).data()[0];
            Form out = eta;
            out *= 0.5 * tr2;
            out -= l1;
            out *= cd(factorial(m - 3));
            return out;
        }
        case StarShape::PsiEta: {
            need(3, 3, 4);
            // (m-4)! (-1/2 Lambda^2 Psi + 1/6 (Lambda^3 Psi) eta)
            Form l2 = lambda_pow(g, payload, 2);
            cd tr3 = lambda(g, l2).data()[0];
            Form out = eta;
            out *= tr3 / 6.0;
            Form half = l2;
            half *= cd(0.5);
            out -= half;
            out *= cd(factorial(m - 4));
            return out;
        }
        case StarShape::TauEta: {
            need(1, 0, 2);
            // -i (m-2)! tau ^ eta
            Form out = wedge(payload, eta);
            out *= cd(0.0, -1.0) * factorial(m - 2);
            return out;
        }
        case StarShape::TEta: {
            need(2, 1, 3);
            // i (m-3)! (-Lambda T ^ eta + T)
            Form out = payload;
            out -= wedge(lambda(g, payload), eta);
            out *= cd(0.0, 1.0) * factorial(m - 3);
            return out;
        }
    }
    throw std::logic_error("unreachable");
}

}  // namespace hermflow
