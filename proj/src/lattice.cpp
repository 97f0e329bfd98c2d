#include "hermflow/lattice.hpp"

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace hermflow {

namespace {

// 4th-order central stencils: {offset, coefficient} pairs; divide by h^order.
struct Stencil {
    int width;
    std::array<int, 7> off;
    std::array<double, 7> c;
};

const Stencil& stencil(int order) {
    static const Stencil s1{4, {-2, -1, 1, 2, 0, 0, 0},
                            {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0, 0, 0, 0}};
    static const Stencil s2{
        5,
        {-2, -1, 0, 1, 2, 0, 0},
        {-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0, 0, 0}};
    static const Stencil s3{7,
                            {-3, -2, -1, 0, 1, 2, 3},
                            {1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0}};
    switch (order) {
        case 1: return s1;
        case 2: return s2;
        case 3: return s3;
        default: throw std::invalid_argument("stencil order must be 1..3");
    }
}

int stencil_points(int order) { return order == 3 ? 7 : 5; }

}  // namespace

TorusLattice::TorusLattice(int m, int n, std::vector<int> reduced_dims) : m_(m), n_(n) {
    Dimension dcheck(m);
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("lattice n must be even and >= 8");
    reduced_.assign(static_cast<std::size_t>(2 * m), 0);
    for (int d : reduced_dims) {
        if (d < 0 || d >= 2 * m) throw std::invalid_argument("reduced coordinate out of range");
        reduced_[static_cast<std::size_t>(d)] = 1;
    }
    stride_.assign(static_cast<std::size_t>(2 * m), 0);
    std::size_t s = 1;
    for (int d = 2 * m - 1; d >= 0; --d) {
        stride_[static_cast<std::size_t>(d)] = s;
        s *= static_cast<std::size_t>(extent(d));
    }
    sites_ = s;
}

std::size_t TorusLattice::site_index(std::span<const int> c) const {
    if (static_cast<int>(c.size()) != dims()) throw std::invalid_argument("bad coordinate count");
    std::size_t s = 0;
    for (int d = 0; d < dims(); ++d) {
        int e = extent(d);
        int x = ((c[static_cast<std::size_t>(d)] % e) + e) % e;
        s += static_cast<std::size_t>(x) * stride_[static_cast<std::size_t>(d)];
    }
    return s;
}

std::vector<int> TorusLattice::site_coords(std::size_t s) const {
    std::vector<int> c(static_cast<std::size_t>(dims()));
    for (int d = 0; d < dims(); ++d)
        c[static_cast<std::size_t>(d)] =
            static_cast<int>((s / stride_[static_cast<std::size_t>(d)]) %
                             static_cast<std::size_t>(extent(d)));
    return c;
}

std::size_t TorusLattice::shifted(std::size_t s, int d, int delta) const {
    if (is_reduced(d)) return s;
    std::size_t str = stride_[static_cast<std::size_t>(d)];
    int x = static_cast<int>((s / str) % static_cast<std::size_t>(n_));
    int y = ((x + delta) % n_ + n_) % n_;
    return s + (static_cast<std::size_t>(y) - static_cast<std::size_t>(x)) * str;
}

std::vector<double> TorusLattice::point(std::size_t s) const {
    auto c = site_coords(s);
    std::vector<double> p(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) p[i] = c[i] * h();
    return p;
}

// ---------------------------------------------------------------------------
// Fields.

ScalarField ScalarField::sample(const TorusLattice& lat,
                                const std::function<cd(std::span<const double>)>& fn) {
    ScalarField f = ScalarField::zero(lat);
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        auto p = lat.point(s);
        f.v[s] = fn(p);
    }
    return f;
}

MetricField MetricField::flat(const TorusLattice& lat) {
    MetricField f;
    f.lat = lat;
    f.g.assign(lat.sites(), Mat::Identity(lat.m(), lat.m()));
    return f;
}

void MetricField::validate(double tol) const {
    if (g.size() != lat.sites()) throw std::runtime_error("metric field size mismatch");
    for (const Mat& x : g) {
        if ((x - Mat(x.adjoint())).cwiseAbs().maxCoeff() > tol)
            throw std::runtime_error("metric field not Hermitian at a site");
        static_cast<void>(HermitianMetric(0.5 * (x + Mat(x.adjoint()))));  // throws unless positive
    }
}

double MetricField::min_eigenvalue() const {
    double mn = std::numeric_limits<double>::infinity();
    for (const Mat& x : g) {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (x + Mat(x.adjoint())));
        mn = std::min(mn, es.eigenvalues().minCoeff());
    }
    return mn;
}

FormField FormField::zero(const TorusLattice& lat, int p, int q) {
    FormField f;
    f.lat = lat;
    f.p = p;
    f.q = q;
    f.f.assign(lat.sites(), Form(lat.m(), p, q));
    return f;
}

double FormField::max_abs() const {
    double mx = 0.0;
    for (const Form& x : f) mx = std::max(mx, x.max_abs());
    return mx;
}

// ---------------------------------------------------------------------------
// Differencing.

cd real_derivative(const TorusLattice& lat, std::span<const cd> table, std::size_t site,
                   std::span<const int> ord) {
    int d = -1;
    for (int k = 0; k < lat.dims(); ++k)
        if (ord[static_cast<std::size_t>(k)] > 0) {
            d = k;
            break;
        }
    if (d < 0) return table[site];
    if (lat.is_reduced(d)) return cd(0.0);  // field constant along this axis
    int o = ord[static_cast<std::size_t>(d)];
    std::vector<int> rest(ord.begin(), ord.end());
    rest[static_cast<std::size_t>(d)] = 0;
    const Stencil& st = stencil(o);
    // Stencil weights sum to zero, so accumulate differences against the
    // center value: constant fields then difference to exactly zero.
    cd center = real_derivative(lat, table, site, rest);
    cd acc(0.0);
    for (int i = 0; i < st.width; ++i) {
        if (st.c[static_cast<std::size_t>(i)] == 0.0 || st.off[static_cast<std::size_t>(i)] == 0)
            continue;
        std::size_t ns = lat.shifted(site, d, st.off[static_cast<std::size_t>(i)]);
        acc += st.c[static_cast<std::size_t>(i)] *
               (real_derivative(lat, table, ns, rest) - center);
    }
    return acc / std::pow(lat.h(), o);
}

cd complex_derivative(const TorusLattice& lat, std::span<const cd> table, std::size_t site,
                      std::span<const CDeriv> derivs) {
    // Expand the product of d_a = (D_x - iD_y)/2 factors into real-derivative
    // terms, then difference each term.
    struct Term {
        cd coeff;
        std::vector<int> ord;
    };
    std::vector<Term> terms{{cd(1.0), std::vector<int>(static_cast<std::size_t>(lat.dims()), 0)}};
    for (const CDeriv& dv : derivs) {
        std::vector<Term> next;
        next.reserve(terms.size() * 2);
        cd iy = dv.bar ? cd(0.0, 0.5) : cd(0.0, -0.5);
        for (const Term& t : terms) {
            Term tx = t;
            tx.coeff *= 0.5;
            tx.ord[static_cast<std::size_t>(2 * dv.a)] += 1;
            next.push_back(std::move(tx));
            Term ty = t;
            ty.coeff *= iy;
            ty.ord[static_cast<std::size_t>(2 * dv.a + 1)] += 1;
            next.push_back(std::move(ty));
        }
        terms = std::move(next);
    }
    cd acc(0.0);
    for (const Term& t : terms) acc += t.coeff * real_derivative(lat, table, site, t.ord);
    return acc;
}

FieldJet jets(const MetricField& f, int order) {
    const TorusLattice& lat = f.lat;
    const int m = lat.m();
    if (order < 1 || order > 3) throw std::invalid_argument("jet order must be 1..3");
    if (lat.n() < stencil_points(order))
        throw std::invalid_argument("grid too small for the requested stencil");
    if (f.g.size() != lat.sites()) throw std::invalid_argument("metric field size mismatch");

    // Per-entry site tables for differencing.
    std::vector<std::vector<cd>> tab(static_cast<std::size_t>(m) * m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j) {
            auto& t = tab[static_cast<std::size_t>(k) * m + j];
            t.resize(lat.sites());
            for (std::size_t s = 0; s < lat.sites(); ++s) t[s] = f.g[s](k, j);
        }
    auto entry = [&](int k, int j) -> std::span<const cd> {
        return tab[static_cast<std::size_t>(k) * m + j];
    };

    FieldJet out;
    out.lat = lat;
    out.order = order;
    out.jets.reserve(lat.sites());
    const std::size_t n3 = static_cast<std::size_t>(m) * m * m;
    auto idx3 = [m](int a, int b, int c) {
        return (static_cast<std::size_t>(a) * m + b) * m + c;
    };

    for (std::size_t s = 0; s < lat.sites(); ++s) {
        Mat g = f.g[s];
        std::vector<Mat> dg(static_cast<std::size_t>(m), Mat::Zero(m, m));
        std::vector<std::vector<Mat>> ddg, ddbg;
        std::vector<Mat> hhh, hhb;
        auto dmat = [&](std::span<const CDeriv> dv) {
            Mat x(m, m);
            for (int k = 0; k < m; ++k)
                for (int j = 0; j < m; ++j) x(k, j) = complex_derivative(lat, entry(k, j), s, dv);
            return x;
        };
        for (int a = 0; a < m; ++a) {
            CDeriv dv[1] = {{a, false}};
            dg[static_cast<std::size_t>(a)] = dmat(dv);
        }
        if (order >= 2) {
            ddg.assign(static_cast<std::size_t>(m),
                       std::vector<Mat>(static_cast<std::size_t>(m), Mat::Zero(m, m)));
            ddbg = ddg;
            for (int a = 0; a < m; ++a)
                for (int b = a; b < m; ++b) {
                    CDeriv dv[2] = {{a, false}, {b, false}};
                    Mat x = dmat(dv);
                    ddg[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = x;
                    ddg[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = x;
                }
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) {
                    CDeriv dv[2] = {{a, false}, {b, true}};
                    ddbg[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = dmat(dv);
                }
        }
        if (order >= 3) {
            hhh.assign(n3, Mat::Zero(m, m));
            hhb.assign(n3, Mat::Zero(m, m));
            for (int a = 0; a < m; ++a)
                for (int b = a; b < m; ++b)
                    for (int c = b; c < m; ++c) {
                        CDeriv dv[3] = {{a, false}, {b, false}, {c, false}};
                        Mat x = dmat(dv);
                        int p[3] = {a, b, c};
                        int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                           {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
                        for (auto& pr : perms) hhh[idx3(p[pr[0]], p[pr[1]], p[pr[2]])] = x;
                    }
            for (int a = 0; a < m; ++a)
                for (int b = a; b < m; ++b)
                    for (int c = 0; c < m; ++c) {
                        CDeriv dv[3] = {{a, false}, {b, false}, {c, true}};
                        Mat x = dmat(dv);
                        hhb[idx3(a, b, c)] = x;
                        hhb[idx3(b, a, c)] = x;
                    }
        }
        out.jets.push_back(MetricJet::from_holomorphic(m, order, std::move(g), std::move(dg),
                                                       std::move(ddg), std::move(ddbg),
                                                       std::move(hhh), std::move(hhb)));
    }
    return out;
}

ScalarField derivative(const ScalarField& f, int a, bool antihol) {
    if (f.v.size() != f.lat.sites()) throw std::invalid_argument("scalar field size mismatch");
    ScalarField out = ScalarField::zero(f.lat);
    CDeriv dv[1] = {{a, antihol}};
    for (std::size_t s = 0; s < f.lat.sites(); ++s)
        out.v[s] = complex_derivative(f.lat, f.v, s, dv);
    return out;
}

namespace {

// Exterior derivative core: per-site alternated first derivatives of the
// canonical coefficient table.
FormField d_field(const FormField& f, bool antihol) {
    const TorusLattice& lat = f.lat;
    const int m = lat.m();
    const int p = f.p, q = f.q;
    const int rp = antihol ? p : p + 1;
    const int rq = antihol ? q + 1 : q;
    FormField out = FormField::zero(lat, rp, rq);
    if (out.f.empty() || out.f[0].identically_zero()) return out;

    // One site table per canonical coefficient of f.
    Form probe(m, p, q);
    const std::size_t ncoef = probe.data().size();
    std::vector<std::vector<cd>> tab(ncoef, std::vector<cd>(lat.sites()));
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        auto d = f.f[s].data();
        for (std::size_t i = 0; i < ncoef; ++i) tab[i][s] = d[i];
    }

    double sgn = antihol ? ((p % 2 == 0) ? 1.0 : -1.0) : 1.0;  // move dzbar past dz^p
    for (std::size_t s = 0; s < lat.sites(); ++s) {
        out.f[s] = Form::from_table(m, rp, rq, [&](std::span<const int> h,
                                                   std::span<const int> ab) {
            // Alternate the new derivative index through its block:
            // B_{i0..ip,K} = sum_r (-1)^r d_{i_r} A_{i_0..^i_r..i_p,K}   (hol)
            // and the mirrored formula on the antiholomorphic block.
            cd acc(0.0);
            std::vector<int> hol(h.begin(), h.end());
            std::vector<int> ah(ab.begin(), ab.end());
            const int blk = antihol ? rq : rp;
            std::vector<int> sub(static_cast<std::size_t>(blk - 1));
            for (int r = 0; r < blk; ++r) {
                const std::vector<int>& full = antihol ? ah : hol;
                int a = full[static_cast<std::size_t>(r)];
                for (int t = 0, w = 0; t < blk; ++t)
                    if (t != r) sub[static_cast<std::size_t>(w++)] = full[static_cast<std::size_t>(t)];
                std::size_t flat =
                    antihol ? probe.flat(hol, sub)
                            : probe.flat(sub, ah);
                CDeriv dv[1] = {{a, antihol}};
                cd dval = complex_derivative(lat, tab[flat], s, dv);
                acc += ((r % 2 == 0) ? 1.0 : -1.0) * dval;
            }
            return sgn * acc;
        });
    }
    return out;
}

}  // namespace

FormField del_field(const FormField& f) { return d_field(f, false); }
FormField delbar_field(const FormField& f) { return d_field(f, true); }

ExteriorD exterior_d(const FormField& f) { return {del_field(f), delbar_field(f)}; }

FormField coefficient_derivative(const FormField& f, int a, bool antihol) {
    const TorusLattice& lat = f.lat;
    FormField out = FormField::zero(lat, f.p, f.q);
    if (out.f.empty() || out.f[0].identically_zero()) return out;
    const std::size_t ncoef = out.f[0].data().size();
    std::vector<cd> tab(lat.sites());
    const CDeriv dv[1] = {{a, antihol}};
    for (std::size_t i = 0; i < ncoef; ++i) {
        for (std::size_t s = 0; s < lat.sites(); ++s) tab[s] = f.f[s].data()[i];
        for (std::size_t s = 0; s < lat.sites(); ++s)
            out.f[s].data()[i] = complex_derivative(lat, tab, s, dv);
    }
    return out;
}

cd integrate(const ScalarField& f) {
    // Trapezoidal rule on a periodic grid = site average (unit-volume torus).
    cd acc(0.0);
    for (std::size_t s = 0; s < f.lat.sites(); ++s) acc += f.v[s];
    return acc / static_cast<double>(f.lat.sites());
}

double max_abs(const ScalarField& f) {
    double mx = 0.0;
    for (const cd& x : f.v) mx = std::max(mx, std::abs(x));
    return mx;
}

// ---------------------------------------------------------------------------
// Snapshot IO.

void write_snapshot(const std::string& path, const MetricField& f) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open snapshot file for writing: " + path);
    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    const int m = f.lat.m();
    os << "hermflow-snapshot 1\n" << m << " " << f.lat.n() << "\n";
    for (int d = 0; d < f.lat.dims(); ++d)
        os << (f.lat.is_reduced(d) ? 1 : 0) << (d + 1 < f.lat.dims() ? ' ' : '\n');
    os << num(f.time) << "\n" << f.tag << "\n";
    for (std::size_t s = 0; s < f.lat.sites(); ++s) {
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < m; ++j) {
                if (k + j > 0) os << ' ';
                os << num(f.g[s](k, j).real()) << ' ' << num(f.g[s](k, j).imag());
            }
        os << '\n';
    }
    if (!os) throw std::runtime_error("snapshot write failed: " + path);
}

MetricField read_snapshot(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open snapshot file: " + path);
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "hermflow-snapshot" || version != 1)
        throw std::runtime_error("unrecognized snapshot header: " + path);
    int m = 0, n = 0;
    is >> m >> n;
    std::vector<int> reduced;
    for (int d = 0; d < 2 * m; ++d) {
        int bit = 0;
        is >> bit;
        if (bit) reduced.push_back(d);
    }
    double time = 0.0;
    is >> time;
    std::string tag;
    is >> std::ws;
    std::getline(is, tag);
    MetricField f;
    f.lat = TorusLattice(m, n, reduced);
    f.time = time;
    f.tag = tag;
    f.g.assign(f.lat.sites(), Mat(m, m));
    for (std::size_t s = 0; s < f.lat.sites(); ++s)
        for (int k = 0; k < m; ++k)
            for (int j = 0; j < m; ++j) {
                double re = 0.0, im = 0.0;
                is >> re >> im;
                f.g[s](k, j) = cd(re, im);
            }
    if (!is) throw std::runtime_error("snapshot truncated: " + path);
    return f;
}

}  // namespace hermflow
