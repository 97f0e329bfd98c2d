#pragma once

// Periodic fields on the flat torus C^m / (Z + iZ)^m with 4th-order
// finite-difference jet extraction, exterior derivatives and quadrature.
// Real coordinates are interleaved: coordinate 2a is Re z^a, coordinate 2a+1
// is Im z^a, each with period 1.  A reduction mask marks real coordinates the
// fields do not depend on; reduced directions have storage extent 1 and all
// derivatives along them vanish exactly.

#include "hermflow/forms.hpp"
#include "hermflow/geometry.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hermflow {

class TorusLattice {
public:
    TorusLattice() = default;
    // reduced_dims lists real coordinates (0..2m-1) the fields ignore.
    TorusLattice(int m, int n, std::vector<int> reduced_dims = {});

    int m() const { return m_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    int dims() const { return 2 * m_; }
    bool is_reduced(int d) const { return reduced_[static_cast<std::size_t>(d)] != 0; }
    int extent(int d) const { return is_reduced(d) ? 1 : n_; }
    std::size_t sites() const { return sites_; }

    // Flat site index <-> per-coordinate integer positions (reduced dims 0).
    std::size_t site_index(std::span<const int> c) const;  // wraps periodically
    std::vector<int> site_coords(std::size_t s) const;
    // Periodic neighbor along real coordinate d; identity on reduced dims.
    std::size_t shifted(std::size_t s, int d, int delta) const;
    // Real coordinates of a site in [0,1)^{2m}.
    std::vector<double> point(std::size_t s) const;

    bool same_grid(const TorusLattice& o) const {
        return m_ == o.m_ && n_ == o.n_ && reduced_ == o.reduced_;
    }
    const std::vector<std::uint8_t>& reduction_mask() const { return reduced_; }

private:
    int m_ = 0, n_ = 0;
    std::vector<std::uint8_t> reduced_;
    std::vector<std::size_t> stride_;
    std::size_t sites_ = 0;
};

// ---------------------------------------------------------------------------
// Fields.

struct ScalarField {
    TorusLattice lat;
    std::vector<cd> v;  // one per site

    static ScalarField zero(const TorusLattice& lat) {
        return {lat, std::vector<cd>(lat.sites(), cd(0.0))};
    }
    // Samples fn(point) at every site.
    static ScalarField sample(const TorusLattice& lat,
                              const std::function<cd(std::span<const double>)>& fn);
};

struct MetricField {
    TorusLattice lat;
    std::vector<Mat> g;  // m x m Hermitian positive matrix per site
    double time = 0.0;
    std::string tag = "metric";

    static MetricField flat(const TorusLattice& lat);
    // Throws unless every site is Hermitian positive definite.
    void validate(double tol = 1e-12) const;
    double min_eigenvalue() const;  // over all sites
};

struct FormField {
    TorusLattice lat;
    int p = 0, q = 0;
    std::vector<Form> f;  // one per site

    static FormField zero(const TorusLattice& lat, int p, int q);
    double max_abs() const;
};

// Per-site metric jets produced by differencing.
struct FieldJet {
    TorusLattice lat;
    int order = 0;
    std::vector<MetricJet> jets;
};

// ---------------------------------------------------------------------------
// Differencing.  All stencils are 4th-order central differences; first and
// second derivatives use 5 points, third derivatives 7 points.  Complex
// derivatives are d_a = (D_{2a} - i D_{2a+1})/2, dbar_a = (D_{2a} + i D_{2a+1})/2.

// Derivative of a per-site table along real coordinates, with per-coordinate
// orders ord[d] (sum of orders <= 3).  Exact zero along reduced coordinates.
cd real_derivative(const TorusLattice& lat, std::span<const cd> table, std::size_t site,
                   std::span<const int> ord);

// One complex derivative spec: coordinate index and whether it is conjugated.
struct CDeriv {
    int a = 0;
    bool bar = false;
};

// Iterated complex derivative of a per-site table at one site.
cd complex_derivative(const TorusLattice& lat, std::span<const cd> table, std::size_t site,
                      std::span<const CDeriv> derivs);

// Full jet extraction from a metric field.  order in {1,2,3}; throws if the
// grid cannot host the widest stencil (order-3 jets need >= 7 points).
FieldJet jets(const MetricField& f, int order);

// d_a or dbar_a of a scalar field (4th-order).
ScalarField derivative(const ScalarField& f, int a, bool antihol);

// del: (p,q) -> (p+1,q) and delbar: (p,q) -> (p,q+1), per site.
FormField del_field(const FormField& f);
FormField delbar_field(const FormField& f);

// Plain coordinate derivative d_a (or dbar_a) of every canonical coefficient;
// the bidegree is unchanged (used to assemble per-site FormJets).
FormField coefficient_derivative(const FormField& f, int a, bool antihol);

// d = del + delbar, kept as its two pure-bidegree components.
struct ExteriorD {
    FormField hol;      // del f
    FormField antihol;  // delbar f
    double max_abs() const { return std::max(hol.max_abs(), antihol.max_abs()); }
};
ExteriorD exterior_d(const FormField& f);

// ---------------------------------------------------------------------------
// Quadrature: trapezoidal rule on the periodic grid (the site average, since
// the torus has unit volume); exact for trigonometric polynomials below the
// Nyquist degree.  Accumulation order is fixed, so results are reproducible.
cd integrate(const ScalarField& f);

double max_abs(const ScalarField& f);

// ---------------------------------------------------------------------------
// Snapshot file IO.  Textual format, stable across versions:
//   line 1: "hermflow-snapshot 1"
//   line 2: m n
//   line 3: 2m reduction bits (1 = reduced)
//   line 4: time
//   line 5: tag
//   then one line per site in site-index order: 2*m*m numbers (%.17g),
//   the real and imaginary part of each metric entry in row-major order.
void write_snapshot(const std::string& path, const MetricField& f);
MetricField read_snapshot(const std::string& path);

}  // namespace hermflow
