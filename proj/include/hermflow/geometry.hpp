#pragma once

// Pointwise Chern-connection geometry of a Hermitian metric jet: torsion,
// curvature and its four Ricci traces, quadratic torsion tensors, covariant
// derivatives, del-dagger, Laplacians, holomorphic-volume norms, rescalings
// and conformal changes.

#include "hermflow/forms.hpp"
#include "hermflow/rng.hpp"

#include <cstdint>
#include <optional>

namespace hermflow {

// ---------------------------------------------------------------------------
// Jets.

// Scalar jet at a point: complex value and derivatives up to `order` (max 3).
// ddb(a,b) = d_a dbar_b; third-order tables are flat [a*m*m+b*m+c].
struct ScalarJet {
    int m = 0;
    int order = 1;
    cd v{};
    Eigen::VectorXcd d, db;
    Mat dd, ddb, dbdb;
    std::vector<cd> ddd, dddb, ddbdb, dbdbdb;  // hhh, hhb, hbb, bbb patterns

    static ScalarJet zero(int m, int order);
    bool is_real() const;  // conjugation symmetry of all tables
};

ScalarJet operator*(const ScalarJet& a, const ScalarJet& b);  // Leibniz, min order
ScalarJet operator+(const ScalarJet& a, const ScalarJet& b);
ScalarJet operator*(cd s, ScalarJet a);
ScalarJet exp_jet(const ScalarJet& s);

// Metric jet: g_{\bar kj} with holomorphic/antiholomorphic derivatives up to
// order 3.  All matrices are indexed (k, j) = (antiholomorphic row,
// holomorphic column).  Third-order tables are flat over the first indices:
// d3g_hhb[(a*m+b)*m+c] = d_a d_b dbar_c g, etc.
struct MetricJet {
    int m = 0;
    int order = 1;
    Mat g;
    std::vector<Mat> dg, dbg;                        // [a]
    std::vector<std::vector<Mat>> ddg, ddbg, dbdbg;  // [a][b]; ddbg = d_a dbar_b
    std::vector<Mat> d3g_hhh, d3g_hhb, d3g_hbb, d3g_bbb;

    HermitianMetric metric() const { return HermitianMetric(g); }

    // Builds the antiholomorphic tables from the holomorphic ones by
    // Hermitian conjugation; ddbg and the hhb table are passed whole.
    static MetricJet from_holomorphic(int m, int order, Mat g, std::vector<Mat> dg,
                                      std::vector<std::vector<Mat>> ddg,
                                      std::vector<std::vector<Mat>> ddbg,
                                      std::vector<Mat> d3g_hhh, std::vector<Mat> d3g_hhb);
};

// Throws if Hermitian-symmetry propagation or mixed-partial symmetry fails.
void validate_jet(const MetricJet& j, double tol = 1e-12);

MetricJet flat_jet(int m, int order);
// Generic valid jet: derivatives drawn uniformly at scale `scale` around g = I.
MetricJet random_jet(int m, int order, std::uint64_t seed, double scale = 0.1);
// Kahler jet g = I + ddbar(phi) from a random potential jet.
MetricJet random_kahler_jet(int m, int order, std::uint64_t seed, double scale = 0.05);

// Random jet satisfying the pointwise conformally-balanced constraint
// tau_l = d_l log ||Omega||^2 (equivalently g^{j\bar k} d_j g_{\bar kl} = 0)
// together with its dbar-derivative.  These force the two cross Ricci traces
// R' and R'' to vanish at the point.
MetricJet random_balanced_jet(int m, int order, std::uint64_t seed, double scale = 0.1);

// Residual of the two pointwise balanced constraints above (max abs entry);
// first component is the first-order constraint, second its dbar-derivative.
std::pair<double, double> balanced_constraint_residual(const MetricJet& j);

// e^s * j, capped at order min(j.order, s.order, 2).
MetricJet scale_jet(const ScalarJet& s, const MetricJet& j);

// ---------------------------------------------------------------------------
// Holomorphic volume form on the torus and rescalings.

struct HolVolForm {
    cd c{1.0};  // Omega = c dz^1 ^ ... ^ dz^m
};

// ||Omega||^2_g = |c|^2 / det g.
double omega_norm_sq(const HermitianMetric& g, const HolVolForm& om);
// log ||Omega||^2 as a scalar jet (order capped at 2).
ScalarJet log_omega_norm_sq_jet(const MetricJet& j, const HolVolForm& om);

// eta = ||Omega||_omega * omega and its inverse; order capped at 2.
MetricJet rescale_to_eta(const MetricJet& j_omega, const HolVolForm& om);
MetricJet rescale_to_omega(const MetricJet& j_eta, const HolVolForm& om);

// ---------------------------------------------------------------------------
// Derived tensor packs.

struct TorsionPack {
    Form T;         // (2,1), T = i del eta
    Form tau;       // (1,0), tau_l = g^{j \bar k} T_{\bar kjl}
    Mat TcT;        // (T o Tbar)_{\bar beta alpha}, indexed (beta, alpha)
    Mat TT;         // (T Tbar)_{\bar l m}, indexed (l, m)
    Mat tauT;       // (taubar . T)_{\bar alpha beta}, indexed (alpha, beta)
    double normTsq = 0.0, normTauSq = 0.0;
};

struct CurvaturePack {
    // R_{\bar kj}{}^p{}_q, flat index ((k*m+j)*m+p)*m+q
    std::vector<cd> Rfull;
    // fully lowered R_{\bar kj \bar p q} = g_{\bar ps} R_{\bar kj}{}^s{}_q
    std::vector<cd> Rlow;
    Mat Ric, Rtilde, Rprime, Rdprime;  // indexed (k, j) for X_{\bar kj}
    double Rscalar = 0.0;
    double RmNormSq = 0.0;

    cd rfull(int m, int k, int j, int p, int q) const {
        return Rfull[(((static_cast<std::size_t>(k) * m + j) * m + p) * m) + q];
    }
    cd rlow(int m, int k, int j, int p, int q) const {
        return Rlow[(((static_cast<std::size_t>(k) * m + j) * m + p) * m) + q];
    }
};

TorsionPack torsion(const MetricJet& j);     // order >= 1
CurvaturePack curvature(const MetricJet& j); // order >= 2

// ---------------------------------------------------------------------------
// Generic tensors and the Chern covariant derivative.

enum class Slot { HolUp, HolDown, AhUp, AhDown };

class Tensor {
public:
    Tensor(int m, std::vector<Slot> slots);
    int m() const { return m_; }
    const std::vector<Slot>& slots() const { return slots_; }
    cd at(std::span<const int> idx) const { return data_[flat(idx)]; }
    cd& at(std::span<const int> idx) { return data_[flat(idx)]; }
    std::span<const cd> data() const { return data_; }
    std::span<cd> data() { return data_; }
    double max_abs() const;
    Tensor& operator-=(const Tensor& o);
    std::size_t flat(std::span<const int> idx) const;

private:
    int m_;
    std::vector<Slot> slots_;
    std::vector<cd> data_;
};

// Tensor with coordinate derivatives at the point: d[a] = d_a X, db[a] = dbar_a X.
struct TensorJet {
    Tensor value;
    std::vector<Tensor> d, db;
};

// Chern connection coefficients Gamma^m_{jp} = g^{m \bar q} d_j g_{\bar qp};
// slots (HolUp, HolDown, HolDown).
Tensor chern_gamma(const MetricJet& j);
// d_c Gamma^m_{jp}, prepended slot c (HolDown); needs order >= 2.
Tensor chern_gamma_d(const MetricJet& j);

// nabla_a X (antihol=false) or nabla_{\bar a} X (antihol=true); the derivative
// slot is prepended.  Throws if the jet order cannot supply Gamma.
Tensor covariant_derivative(const MetricJet& j, const TensorJet& x, bool antihol);

// Chern Laplacian g^{p\bar q} nabla_{\bar q} nabla_p on scalars.
cd chern_laplacian(const MetricJet& j, const ScalarJet& f);

// Chern Laplacian on tensors; xx must carry second coordinate derivatives:
// dd[a][b], ddb[a][b] (= d_a dbar_b).  Needs jet order >= 2.
struct TensorJet2 {
    Tensor value;
    std::vector<Tensor> d, db;
    std::vector<std::vector<Tensor>> dd, ddb;
};
Tensor chern_laplacian(const MetricJet& j, const TensorJet2& x);

// ---------------------------------------------------------------------------
// del-dagger on (1,0), (2,0) and (2,1)-forms (Bochner-Kodaira special cases).

struct FormJet {
    Form value;
    std::vector<Form> d, db;  // coordinate derivatives of the canonical table
};

// (1,0) -> scalar (0,0); (2,0) -> (1,0); (2,1) -> (1,1); other bidegrees throw.
Form del_dagger(const MetricJet& j, const FormJet& f);

// ---------------------------------------------------------------------------
// Conformal change omega_f = e^f omega.

// Direct jet of e^f g (order capped at 2).
MetricJet conformal_metric(const MetricJet& j, const ScalarJet& f);
// Closed-form transform of the lowered torsion:
//   T_{\bar kjm}(e^f g) = e^f (T_{\bar kjm} + f_j g_{\bar km} - f_m g_{\bar kj}).
Form conformal_torsion(const MetricJet& j, const ScalarJet& f);
// Closed-form transform of the lowered curvature:
//   R_{\bar kj\bar pq}(e^f g) = e^f (R_{\bar kj\bar pq} - (d_j dbar_k f) g_{\bar pq}).
std::vector<cd> conformal_curvature_low(const MetricJet& j, const ScalarJet& f);

}  // namespace hermflow
