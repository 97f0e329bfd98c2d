#pragma once

// Conformally balanced, non-Kahler initial data on the torus: closed positive
// (m-1,m-1)-forms built from a flat Kahler background, and metric extraction
// by pointwise root solving so that ||Omega||^2_eta eta^{m-1} equals the given
// form exactly.

#include "hermflow/geometry.hpp"
#include "hermflow/identities.hpp"
#include "hermflow/lattice.hpp"

#include <cstdint>

namespace hermflow {

// Dual-matrix correspondence for (m-1,m-1)-forms: psi <-> Hermitian M with
// psi = eta^{m-1}/(m-1)!  <->  M = det(g) * g^{-1}  (M(k,j) rows/columns match
// the metric's (antiholomorphic, holomorphic) layout).  Linear and bijective.
Form psi_from_matrix(int m, const Mat& M);
Mat matrix_from_psi(const Form& psi);

// Per-site positive (m-1,m-1)-form, stored through its dual matrix.
struct ClosedPsi {
    TorusLattice lat;
    std::vector<Mat> M;  // Hermitian positive definite per site

    FormField form() const;  // materialized (m-1,m-1) field
    // max |d psi| under lattice differencing (should be roundoff-of-differencing).
    double closedness_residual() const;
    double min_eigenvalue() const;
};

// psi = omega0^{m-1}/(m-1)! + eps * i ddbar(phi * omega0^{m-2}/(m-2)!), with
// omega0 the flat Kahler form and phi a seeded trigonometric real scalar.
// Closed by construction; positivity is checked and an "amplitude too large"
// error (suggesting eps/2) is raised if eps exceeds the positive range.
ClosedPsi build_psi(const TorusLattice& lat, double eps, std::uint64_t seed);

// Metric extraction: solve det(g0) g0^{-1} = M pointwise via
// det(g0) = (det M)^{1/(m-1)}, then conformally fix eta = e^u eta0 with
// u = log ||Omega||^2_{eta0}, so that ||Omega||^2_eta eta^{m-1} = psi exactly.
// Requires m >= 3 (the conformal fix is degenerate at m = 2).
MetricField eta_root(const ClosedPsi& psi, const HolVolForm& om);

// ||Omega||^2_eta eta^{m-1} of a metric field, as a dual-matrix field (for
// balanced residuals and round-trip checks).
ClosedPsi balanced_form(const MetricField& f, const HolVolForm& om);

// sup over sites of |d(||Omega||^2_eta eta^{m-1})| via lattice differencing.
double balanced_residual(const MetricField& f, const HolVolForm& om);

// Field-level check of tau_l = d_l log ||Omega||^2_eta: tau from differenced
// jets, the gradient from differencing the scalar log-norm field.  Inputs that
// are not balanced to lattice precision are flagged (hypothesis_ok = false)
// rather than treated as errors.
IdentityReport check_balanced_tau(const MetricField& field, const HolVolForm& om);

}  // namespace hermflow
