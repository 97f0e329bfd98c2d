#pragma once

// Pointwise exterior algebra of (p,q)-forms on C^m with a fixed Hermitian
// metric: wedge products, the trace operator Lambda, Hodge star (brute-force
// pairing solve and closed-form eta-wedge shapes), and pointwise inner
// products.  See docs/conventions.md for the normalization choices.

#include <complex>
#include <vector>
#include <span>
#include <stdexcept>
#include <Eigen/Dense>

namespace hermflow {

using cd = std::complex<double>;
using Mat = Eigen::MatrixXcd;

inline constexpr int kMaxDim = 6;

// Complex dimension with the implementation cap enforced.
struct Dimension {
    int m;
    explicit Dimension(int m_) : m(m_) {
        if (m < 1 || m > kMaxDim)
            throw std::invalid_argument("dimension out of range [1,6]");
    }
};

// Positive-definite Hermitian metric g_{\bar k j}.  Row index is the
// antiholomorphic slot, column index the holomorphic one, so g(k,j) = g_{\bar kj}.
class HermitianMetric {
public:
    explicit HermitianMetric(const Mat& g);
    int m() const { return static_cast<int>(g_.rows()); }
    const Mat& g() const { return g_; }
    // ginv()(j,k) = g^{j \bar k}, i.e. g^{j\bar k} g_{\bar k l} = delta^j_l.
    const Mat& ginv() const { return ginv_; }
    double det() const { return det_; }
    double min_eigenvalue() const { return min_eig_; }

    static HermitianMetric identity(int m);

private:
    Mat g_, ginv_;
    double det_ = 0.0, min_eig_ = 0.0;
};

// -------------------------------------------------------------------------
// Multi-index helpers (indices 0-based internally).

// Sorts idx in place; returns +1/-1 for the permutation parity, 0 on repeats.
int sort_sign(std::span<int> idx);

// All strictly increasing k-tuples out of {0,...,m-1}.
std::vector<std::vector<int>> increasing_tuples(int m, int k);

// -------------------------------------------------------------------------
// Dense (p,q)-form.
//
// Canonical storage: Phi = 1/(p! q!) A_{j_1..j_p, \bar k_1..\bar k_q}
//   dz^{j_1}^..^dz^{j_p}^dzbar^{k_1}^..^dzbar^{k_q},
// with A antisymmetric separately in the holomorphic and antiholomorphic
// blocks.  The dense table holds every index tuple (size m^(p+q)); writes go
// through antisymmetrizing constructors.  Degrees beyond m in either block
// collapse to the zero form.
class Form {
public:
    Form(int m, int p, int q);  // zero form

    int m() const { return m_; }
    int p() const { return p_; }
    int q() const { return q_; }
    bool identically_zero() const { return data_.empty(); }

    // Raw canonical coefficient A_{J,Kbar}; hol.size()==p, ah.size()==q.
    cd at(std::span<const int> hol, std::span<const int> ah) const;

    // Builds the full table from values on strictly increasing representatives.
    // rep(hol, ah) is only called with increasing tuples.
    template <typename F>
    static Form from_increasing(int m, int p, int q, F&& rep);

    // Builds from an arbitrary (already antisymmetric) coefficient function.
    template <typename F>
    static Form from_table(int m, int p, int q, F&& fn);

    Form& operator+=(const Form& o);
    Form& operator-=(const Form& o);
    Form& operator*=(cd s);
    friend Form operator+(Form a, const Form& b) { return a += b; }
    friend Form operator-(Form a, const Form& b) { return a -= b; }
    friend Form operator*(cd s, Form a) { return a *= s; }

    double max_abs() const;
    bool same_shape(const Form& o) const {
        return m_ == o.m_ && p_ == o.p_ && q_ == o.q_;
    }

    // Direct data access for site-loops; layout is odometer order over
    // (j_1..j_p,k_1..k_q), last index fastest.
    std::span<const cd> data() const { return data_; }
    std::span<cd> data() { return data_; }
    std::size_t flat(std::span<const int> hol, std::span<const int> ah) const;

private:
    int m_, p_, q_;
    std::vector<cd> data_;
};

// -------------------------------------------------------------------------
// Constructors for the forms the identities use.

// eta = i g_{\bar kj} dz^j ^ dzbar^k.
Form eta_form(const HermitianMetric& g);

// Named-(1,1)-tensor to form, without the i: X = X_{\bar kj} dz^j ^ dzbar^k
// (the convention used for Ric, Rtilde, T.Tbar, TTbar in the identities).
Form one_one_form(const Mat& x);

// Stored-component accessor for (p,p)-forms in the interleaved index layout
// Phi_{\bar j_1 k_1 ... \bar j_p k_p}.
cd pp_component(const Form& f, std::span<const int> jbars, std::span<const int> ks);

// Torsion-style (2,1)-form from the table T_{\bar k j m} (antisymmetric in
// j,m), stored as T = 1/2 T_{\bar kjm} dz^m ^ dz^j ^ dzbar^k.
Form form_from_tkjm(int m, const std::vector<cd>& t);  // t[(k*m+j)*m+mm]
cd t_component(const Form& T, int kbar, int j, int mm); // reads T_{\bar kjm}

// -------------------------------------------------------------------------
// Operations.

Form conjugate(const Form& f);
Form wedge(const Form& a, const Form& b);
Form wedge_pow(const Form& a, int k);  // a^^k, with ^^0 = 1

// One metric trace: (p,q) -> (p-1,q-1); the adjoint of wedging with eta.
Form lambda(const HermitianMetric& g, const Form& f);
// q-fold trace on (p,p)-forms; throws "contraction exceeds degree" if q > p.
Form lambda_pow(const HermitianMetric& g, const Form& f, int q);

// Pointwise Hermitian inner product; linear in a, antilinear in b.
cd inner(const HermitianMetric& g, const Form& a, const Form& b);
double inner_norm_sq(const HermitianMetric& g, const Form& a);

Form vol_form(const HermitianMetric& g);  // eta^m / m!

// Hodge star via the defining pairing <alpha, conj-star(Phi)> vol = Phi ^ alpha,
// solved over a complete basis of test forms; maps (p,q) -> (m-q,m-p).
Form hodge_star_brute(const HermitianMetric& g, const Form& f);

enum class StarShape {
    AlphaEta,  // (1,1) payload alpha:      *(alpha ^ eta^{m-2})
    PhiEta,    // (2,2) payload Phi:        *(Phi ^ eta^{m-3})
    PsiEta,    // (3,3) payload Psi:        *(Psi ^ eta^{m-4})
    TauEta,    // (1,0) payload tau:        *(tau ^ eta^{m-2})
    TEta,      // (2,1) payload T:          *(T ^ eta^{m-3})
};

// Closed-form star of payload ^ eta^{m-k} for the five shapes above.
Form hodge_star_closed(const HermitianMetric& g, StarShape shape, const Form& payload);

// -------------------------------------------------------------------------
// Template bodies.

template <typename F>
Form Form::from_increasing(int m, int p, int q, F&& rep) {
    Form f(m, p, q);
    if (f.identically_zero()) return f;
    auto hols = increasing_tuples(m, p);
    auto ahs = increasing_tuples(m, q);
    // cache representative values by their flat index
    std::vector<cd> repval(f.data_.size(), cd(0.0));
    for (const auto& h : hols)
        for (const auto& a : ahs)
            repval[f.flat(h, a)] = rep(std::span<const int>(h), std::span<const int>(a));
    std::vector<int> hbuf(p), abuf(q);
    std::vector<int> idx(p + q, 0);
    for (std::size_t fi = 0; fi < f.data_.size(); ++fi) {
        for (int r = 0; r < p; ++r) hbuf[r] = idx[r];
        for (int r = 0; r < q; ++r) abuf[r] = idx[p + r];
        int sh = sort_sign(std::span<int>(hbuf));
        int sa = sort_sign(std::span<int>(abuf));
        if (sh != 0 && sa != 0)
            f.data_[fi] = static_cast<double>(sh * sa) * repval[f.flat(hbuf, abuf)];
        for (int d = p + q - 1; d >= 0; --d) {
            if (++idx[d] < m) break;
            idx[d] = 0;
        }
    }
    return f;
}

template <typename F>
Form Form::from_table(int m, int p, int q, F&& fn) {
    Form f(m, p, q);
    if (f.identically_zero()) return f;
    std::vector<int> idx(p + q, 0);
    for (std::size_t fi = 0; fi < f.data_.size(); ++fi) {
        f.data_[fi] = fn(std::span<const int>(idx.data(), p),
                         std::span<const int>(idx.data() + p, q));
        for (int d = p + q - 1; d >= 0; --d) {
            if (++idx[d] < m) break;
            idx[d] = 0;
        }
    }
    return f;
}

}  // namespace hermflow
