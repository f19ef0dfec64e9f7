#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "nvlimit/core.hpp"
#include "nvlimit/quadrature.hpp"

namespace nvlimit {

// Abbreviations used by the kernel formulas, for unit omega and momentum p:
//   p_hat = p / sqrt(1 + |p|^2/c^2)
//   op    = 1 + omega . p_hat / c
//   oap   = omega + p_hat / c
//   owp   = omega x p_hat
//   sqcp  = sqrt(1 + |p|^2/c^2),  cp = 1 + |p|^2/c^2
struct KernelSet {
    double op = 1.0;
    double sqcp = 1.0;
    double a_t = 0.0;
    double b_t = 0.0;
    Vec3 c_t;
    Vec3 a_x;       // (c oap_i - (p_hat x (omega x p_hat))_i / c) / (op^2 sqcp)
    Vec3 a_x_split; // a_x without its c omega_i / (op^2 sqcp) part
    Vec3 b_x;       // omega_i b_t
    std::array<Vec3, 3> c_x; // row i: omega_i c_t
};

/// Throws rejected_input unless |omega| = 1 to 1e-12 and c >= 1.
KernelSet eval_kernels(const Vec3& omega, const Vec3& p, double c);

/// b_x from its own expression omega_i |oap|^2 / (op^2 sqcp), for the identity audit.
Vec3 b_x_direct(const Vec3& omega, const Vec3& p, double c);

/// Analytic field with value, gradient and Hessian (data of the homogeneous part).
struct DataField {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
    std::function<std::array<Vec3, 3>(const Vec3&)> hessian;

    double laplacian(const Vec3& x) const;
};

DataField zero_data();
/// -mass / sqrt(|x - center|^2 + a^2).
DataField plummer_data(double mass, double a, const Vec3& center);

/// Manufactured distribution
///   f(t,x,p) = A(t) (1 + tilt . (x - x0)/rx) (1 - |x - x0|^2/rx^2)_+^4 (1 - |p - p0|^2/rp^2)_+^4
/// with A(t) = amplitude (1 + alpha sin(freq t)). Nonnegative whenever |tilt| < 1.
struct ManufacturedF {
    Vec3 x0;
    double rx = 1.0;
    Vec3 p0;
    double rp = 1.0;
    double amplitude = 1.0;
    double alpha = 0.0;
    double freq = 0.0;
    Vec3 tilt;

    void validate() const;
    double value(double t, const Vec3& x, const Vec3& p) const;
    double dt(double t, const Vec3& x, const Vec3& p) const;
    Vec3 grad_x(double t, const Vec3& x, const Vec3& p) const;
    Vec3 grad_p(double t, const Vec3& x, const Vec3& p) const;
    /// int f dp in closed form.
    double density(double t, const Vec3& x) const;
};

/// Any smooth field used for S(phi) and grad phi under the light-cone integrals.
/// The representation is exact for whatever closure is chosen, because the
/// transport residual of the manufactured f is integrated with the same closure.
struct ClosureField {
    std::function<double(double, const Vec3&)> dt;
    std::function<Vec3(double, const Vec3&)> grad;
};

ClosureField zero_closure();
/// eps (1 + kappa t) * (-1 / sqrt(|x - center|^2 + b^2)).
ClosureField plummer_closure(double eps, double kappa, double b, const Vec3& center);

struct HomogeneousData {
    DataField g0; // phi(0, x)
    DataField g1; // d/dt phi(0, x)
};

struct QuadSpec {
    int n_r = 16;       // Gauss-Legendre nodes per radial segment
    int n_theta = 16;   // polar nodes of the spatial sphere
    int n_phi = 20;     // azimuthal nodes of the spatial sphere
    int n_pr = 8;       // radial momentum nodes
    int n_ptheta = 8;   // polar nodes of the momentum sphere
    int n_pphi = 12;    // azimuthal nodes of the momentum sphere
    int sphere_order = 59; // Lebedev order for the homogeneous part
    double tol = 1e-8;  // relative tolerance for the refinement check
    bool check = false; // repeat with every count doubled and compare

    void validate() const;
    QuadSpec doubled() const;
};

/// phi_hom from Kirchhoff with data (g0, g1).
double phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order);
double dt_phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order);
Vec3 grad_phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order);

/// phi(t,x) = phi_hom - c^-2 int_{|y-x|<ct} int f(t - |y-x|/c, y, p) / (sqcp |y-x|) dp dy.
double retarded_phi_oracle(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x,
                           const QuadSpec& q);
/// Only the retarded part psi.
double retarded_psi(const ManufacturedF& mf, double c, double t, const Vec3& x, const QuadSpec& q);

/// Term-by-term value of a derivative representation.
struct RepresentationTerms {
    double hom = 0.0;
    double data = 0.0;      // sphere |y - x| = ct, f_in term
    double a_term = 0.0;
    double b_term = 0.0;    // S(phi) term
    double c_term = 0.0;    // grad phi term
    double residual = 0.0;  // transport residual of the manufactured f (zero for true solutions)
    double total() const { return hom + data + a_term + b_term + c_term + residual; }
};

RepresentationTerms representation_dtphi_oracle(const ManufacturedF& mf, const HomogeneousData& data,
                                                const ClosureField& closure, double c, double t, const Vec3& x,
                                                const QuadSpec& q);
/// Component `i` of grad phi.
RepresentationTerms representation_dxphi_oracle(const ManufacturedF& mf, const HomogeneousData& data,
                                                const ClosureField& closure, double c, double t, const Vec3& x,
                                                int i, const QuadSpec& q);

/// Fourth-order central differences of retarded_phi_oracle in t and in x_i.
double fd_dtphi(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x,
                const QuadSpec& q, double step);
double fd_dxphi(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x, int i,
                const QuadSpec& q, double step);

/// Closure obtained by differencing retarded_phi_oracle itself (expensive; meant
/// for coarse inner rules).
ClosureField retarded_closure(const ManufacturedF& mf, const HomogeneousData& data, double c, const QuadSpec& inner,
                              double step);

/// Mean of g over the sphere |y - x| = r.
double spherical_mean(const std::function<double(const Vec3&)>& g, const Vec3& x, double r, const SphereRule& rule);

/// Radially symmetric test function h(y) = (1 - |y - center|^2 / a^2)_+^5 with closed-form Laplacian.
struct PolyBump {
    Vec3 center;
    double a = 1.0;
    double value(const Vec3& y) const;
    Vec3 gradient(const Vec3& y) const;
    double laplacian(const Vec3& y) const;
};

struct Lemma2Result {
    double lhs = 0.0; // d/dt (t int h(x + ct omega) d omega)
    double rhs = 0.0; // -int_{|y-x|>ct} Lap h(y) / |y - x| dy
    double rel_diff() const;
};

/// Both sides of the exterior identity for the spherical mean, by independent quadratures.
Lemma2Result lemma2_check(const PolyBump& h, double c, double t, const Vec3& x, int n_radial = 48, int n_theta = 48,
                          int n_phi = 32);

struct Lemma1Scan {
    double max_value = 0.0;   // max over xi of xi int |g(x + xi omega)| d omega
    double argmax = 0.0;
    double bound = 0.0;       // 4 pi sup|g| a for g supported in a ball of radius a
    std::vector<double> xi;
    std::vector<double> value;
};

/// Dense scan of xi in [0, xi_max] for a compactly supported g (ball of radius a about g_center).
Lemma1Scan lemma1_scan(const std::function<double(const Vec3&)>& g, const Vec3& g_center, double a, double g_sup,
                       const Vec3& x, double xi_max, int samples, int n_theta = 64, int n_phi = 32);

/// Bounds audited over random samples.
struct KernelAudit {
    std::size_t samples = 0;
    double max_ratio_a = 0.0;  // |a_t| / P^5
    double max_ratio_b = 0.0;  // |b_t| / P^4
    double max_ratio_c = 0.0;  // |c_t| / P^4
    double max_lemma3 = 0.0;   // op^-1 / (2 (c^2 + |p|^2) / c^2)
    double max_diff_ratio = 0.0; // c |1 - 1/(op sqcp)| / P^3
    double max_split_ratio = 0.0; // |a_x_split| / P^5
    double max_bx_identity = 0.0; // max |b_x - b_x_direct| / |b_x_direct|
    double min_op = 1.0;
};

/// Envelope constants that follow from op^-1 <= 2 P^2 and |oap| <= 2.
inline constexpr double envelope_a = 8.0;
inline constexpr double envelope_b = 16.0;
inline constexpr double envelope_c = 8.0;
inline constexpr double envelope_diff = 2.0;
inline constexpr double envelope_split = 8.0;

/// Random (omega, p, c) samples; |p| drawn log-uniformly up to p_max.
KernelAudit audit_kernels(std::size_t samples, const std::vector<double>& c_values, double p_max, std::uint64_t seed);

} // namespace nvlimit
