#pragma once

// Machine-checkable catalogue of the pointwise algebraic identities relating
// wedge/trace/star expressions of eta, T and the curvature tensors.  Each
// entry computes its left- and right-hand sides through disjoint code paths
// (form algebra vs component formulas) and reports a residual.

#include "hermflow/geometry.hpp"

#include <string>
#include <vector>

namespace hermflow {

struct IdentityReport {
    std::string id;
    double residual_abs = 0.0;
    double residual_rel = 0.0;
    double scale = 0.0;  // magnitude of the largest term
    int dim = 0;
    std::uint64_t seed = 0;
    bool hypothesis_ok = true;  // false when a check's precondition failed
};

// Catalogue keys, in a fixed order.
std::vector<std::string> identity_keys();

// Runs one catalogue entry on seeded random data of complex dimension m.
// metric_scale multiplies every table of the generated jet (homogeneity guard).
IdentityReport check_identity(const std::string& key, int m, std::uint64_t seed,
                              double metric_scale = 1.0);

// Same, but on caller-supplied jet data (flat / Kahler / crafted examples).
IdentityReport check_identity_on(const std::string& key, const MetricJet& jet);

// Runs the whole catalogue over dims x seeds.
std::vector<IdentityReport> run_catalogue(std::span<const int> dims,
                                          std::span<const std::uint64_t> seeds);

// i ddbar eta as a (2,2)-form assembled directly from second derivatives of
// eta's coefficient table (the curvature-free route).
Form ddbar_eta_direct(const MetricJet& j);

// Multiplies every table of the jet by s.
MetricJet scale_metric_jet(const MetricJet& j, double s);

}  // namespace hermflow
