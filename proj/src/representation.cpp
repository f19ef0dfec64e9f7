#include "nvlimit/representation.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nvlimit/field_wave.hpp"

namespace nvlimit {

namespace {

// Kernel evaluation without input validation, for the inner quadrature loops.
KernelSet kernels_unchecked(const Vec3& om, const Vec3& p, double c)
{
    KernelSet k;
    const double cp = 1.0 + dot(p, p) / (c * c);
    const double g = std::sqrt(cp);
    const Vec3 ph = p / g;
    const double op = 1.0 + dot(om, ph) / c;
    const Vec3 oap = om + ph / c;
    const Vec3 owp = cross(om, ph);
    const double den = op * op * g;
    k.op = op;
    k.sqcp = g;
    k.a_t = -dot(ph, oap) / den;
    k.b_t = dot(oap, oap) / den;
    k.c_t = oap / (op * op * cp * g);
    const Vec3 tri = cross(ph, owp);
    k.a_x = (c * oap - tri / c) / den;
    k.a_x_split = (ph - tri / c) / den;
    k.b_x = k.b_t * om;
    for (int i = 0; i < 3; ++i) k.c_x[i] = om[i] * k.c_t;
    return k;
}

// Orthonormal frame with e3 along `pole`.
void frame(const Vec3& pole, Vec3& e1, Vec3& e2, Vec3& e3)
{
    const double n = norm(pole);
    e3 = n > 0.0 ? pole / n : Vec3{0, 0, 1};
    const Vec3 trial = std::abs(e3.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    e1 = cross(trial, e3);
    e1 = e1 / norm(e1);
    e2 = cross(e3, e1);
}

struct MomentumNode {
    Vec3 p;
    double w;
};

std::vector<MomentumNode> momentum_rule(const Vec3& p0, double rp, const QuadSpec& q)
{
    const GaussLegendre gl = GaussLegendre::on_interval(q.n_pr, 0.0, 1.0);
    const SphereRule dirs = SphereRule::product(q.n_ptheta, q.n_pphi);
    std::vector<MomentumNode> out;
    out.reserve(gl.size() * dirs.size());
    const double rp3 = rp * rp * rp;
    for (std::size_t a = 0; a < gl.size(); ++a) {
        const double s = gl.nodes[a];
        for (std::size_t b = 0; b < dirs.size(); ++b)
            out.push_back({p0 + (rp * s) * dirs.directions[b], rp3 * s * s * gl.weights[a] * dirs.weights[b]});
    }
    return out;
}

/// Visits a product rule over the part of the sphere |y - x| = r that meets the
/// ball |y - x0| <= R: Gauss-Legendre in cos(theta) about the axis toward x0 and
/// the trapezoid rule in azimuth.
template <class Visit>
void sphere_cap(const Vec3& x, double r, const Vec3& x0, double R, int n_theta, int n_phi, Visit&& visit)
{
    const Vec3 axis = x0 - x;
    const double d = norm(axis);
    double cos_min = -1.0;
    if (r > 0.0 && d > 0.0) {
        if (r + d <= R) cos_min = -1.0;           // sphere inside the ball
        else if (r >= d + R || r <= d - R) return; // no intersection
        else cos_min = std::clamp((r * r + d * d - R * R) / (2.0 * r * d), -1.0, 1.0);
    } else if (r > R) {
        return;
    }
    Vec3 e1, e2, e3;
    frame(axis, e1, e2, e3);
    const GaussLegendre gl = GaussLegendre::on_interval(n_theta, cos_min, 1.0);
    const double dphi = 2.0 * pi / n_phi;
    for (std::size_t a = 0; a < gl.size(); ++a) {
        const double ct = gl.nodes[a], st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        for (int b = 0; b < n_phi; ++b) {
            const double ph = (b + 0.5) * dphi;
            const Vec3 om = ct * e3 + (st * std::cos(ph)) * e1 + (st * std::sin(ph)) * e2;
            visit(om, x + r * om, gl.weights[a] * dphi);
        }
    }
}

/// Visits r in [0, r_max] intersected with the radii whose sphere meets the
/// ball, splitting where the sphere leaves the ball, with the cap rule for each r.
template <class Visit>
void cone_quadrature(const Vec3& x, double r_max, const Vec3& x0, double R, const QuadSpec& q, Visit&& visit)
{
    const double d = norm(x - x0);
    std::vector<std::pair<double, double>> segs;
    if (d < R) {
        const double inner = R - d;
        segs.push_back({0.0, std::min(inner, r_max)});
        if (r_max > inner) segs.push_back({inner, std::min(d + R, r_max)});
    } else {
        const double lo = d - R, hi = std::min(d + R, r_max);
        if (hi > lo) segs.push_back({lo, hi});
    }
    for (const auto& [lo, hi] : segs) {
        if (!(hi > lo)) continue;
        const GaussLegendre gr = GaussLegendre::on_interval(q.n_r, lo, hi);
        for (std::size_t a = 0; a < gr.size(); ++a) {
            const double r = gr.nodes[a];
            sphere_cap(x, r, x0, R, q.n_theta, q.n_phi,
                       [&](const Vec3& om, const Vec3& y, double w) { visit(r, om, y, w * gr.weights[a]); });
        }
    }
}

void check_accuracy(double a, double b, double tol, const char* who)
{
    const double scale = std::max(std::abs(a), std::abs(b));
    if (std::abs(a - b) > tol * scale)
        throw Error(ErrorCode::accuracy, std::string(who) + ": quadrature not converged (" + std::to_string(a) +
                                             " vs " + std::to_string(b) + " under doubling)");
}

SmoothField smooth(const std::function<double(const Vec3&)>& v, const std::function<Vec3(const Vec3&)>& g)
{
    return {v, g};
}

constexpr double poly4_momentum_integral = 128.0 / 3465.0; // int_0^1 (1 - s^2)^4 s^2 ds

} // namespace

KernelSet eval_kernels(const Vec3& omega, const Vec3& p, double c)
{
    if (!all_finite(omega) || std::abs(norm(omega) - 1.0) > 1e-12)
        throw Error(ErrorCode::rejected_input, "eval_kernels: omega must be a unit vector");
    if (!all_finite(p)) throw Error(ErrorCode::rejected_input, "eval_kernels: non-finite momentum");
    if (!(c >= 1.0) || !std::isfinite(c)) throw Error(ErrorCode::rejected_input, "eval_kernels: need c >= 1");
    return kernels_unchecked(omega, p, c);
}

Vec3 b_x_direct(const Vec3& omega, const Vec3& p, double c)
{
    const double g = gamma_factor(p, c);
    const Vec3 ph = p / g;
    const double op = 1.0 + dot(omega, ph) / c;
    const Vec3 oap = omega + ph / c;
    const double scale = dot(oap, oap) / (op * op * g);
    return {omega.x * scale, omega.y * scale, omega.z * scale};
}

double DataField::laplacian(const Vec3& x) const
{
    const auto h = hessian(x);
    return h[0].x + h[1].y + h[2].z;
}

DataField zero_data()
{
    DataField d;
    d.value = [](const Vec3&) { return 0.0; };
    d.gradient = [](const Vec3&) { return Vec3{}; };
    d.hessian = [](const Vec3&) { return std::array<Vec3, 3>{}; };
    return d;
}

DataField plummer_data(double mass, double a, const Vec3& center)
{
    DataField d;
    d.value = [=](const Vec3& x) {
        const Vec3 u = x - center;
        return -mass / std::sqrt(dot(u, u) + a * a);
    };
    d.gradient = [=](const Vec3& x) {
        const Vec3 u = x - center;
        const double s2 = dot(u, u) + a * a;
        return (mass / (s2 * std::sqrt(s2))) * u;
    };
    d.hessian = [=](const Vec3& x) {
        const Vec3 u = x - center;
        const double s2 = dot(u, u) + a * a, s = std::sqrt(s2);
        const double k1 = mass / (s2 * s), k2 = 3.0 * mass / (s2 * s2 * s);
        std::array<Vec3, 3> h;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) h[i][j] = (i == j ? k1 : 0.0) - k2 * u[i] * u[j];
        return h;
    };
    return d;
}

void ManufacturedF::validate() const
{
    if (!(rx > 0.0) || !(rp > 0.0)) throw Error(ErrorCode::configuration, "ManufacturedF: radii must be positive");
    if (!(amplitude >= 0.0)) throw Error(ErrorCode::configuration, "ManufacturedF: amplitude must be non-negative");
    if (!(std::abs(alpha) < 1.0)) throw Error(ErrorCode::configuration, "ManufacturedF: |alpha| must be < 1");
    if (!(norm(tilt) < 1.0)) throw Error(ErrorCode::configuration, "ManufacturedF: |tilt| must be < 1");
}

double ManufacturedF::value(double t, const Vec3& x, const Vec3& p) const
{
    const Vec3 u = x - x0, v = p - p0;
    const double qx = dot(u, u) / (rx * rx), qp = dot(v, v) / (rp * rp);
    if (qx >= 1.0 || qp >= 1.0) return 0.0;
    const double A = amplitude * (1.0 + alpha * std::sin(freq * t));
    const double tl = 1.0 + dot(tilt, u) / rx;
    return A * tl * std::pow(1.0 - qx, 4) * std::pow(1.0 - qp, 4);
}

double ManufacturedF::dt(double t, const Vec3& x, const Vec3& p) const
{
    const Vec3 u = x - x0, v = p - p0;
    const double qx = dot(u, u) / (rx * rx), qp = dot(v, v) / (rp * rp);
    if (qx >= 1.0 || qp >= 1.0) return 0.0;
    const double dA = amplitude * alpha * freq * std::cos(freq * t);
    const double tl = 1.0 + dot(tilt, u) / rx;
    return dA * tl * std::pow(1.0 - qx, 4) * std::pow(1.0 - qp, 4);
}

Vec3 ManufacturedF::grad_x(double t, const Vec3& x, const Vec3& p) const
{
    const Vec3 u = x - x0, v = p - p0;
    const double qx = dot(u, u) / (rx * rx), qp = dot(v, v) / (rp * rp);
    if (qx >= 1.0 || qp >= 1.0) return {};
    const double A = amplitude * (1.0 + alpha * std::sin(freq * t));
    const double tl = 1.0 + dot(tilt, u) / rx;
    const double X = std::pow(1.0 - qx, 4), dX = -8.0 * std::pow(1.0 - qx, 3) / (rx * rx);
    const double P = std::pow(1.0 - qp, 4);
    return (A * P) * ((X / rx) * tilt + (tl * dX) * u);
}

Vec3 ManufacturedF::grad_p(double t, const Vec3& x, const Vec3& p) const
{
    const Vec3 u = x - x0, v = p - p0;
    const double qx = dot(u, u) / (rx * rx), qp = dot(v, v) / (rp * rp);
    if (qx >= 1.0 || qp >= 1.0) return {};
    const double A = amplitude * (1.0 + alpha * std::sin(freq * t));
    const double tl = 1.0 + dot(tilt, u) / rx;
    const double dP = -8.0 * std::pow(1.0 - qp, 3) / (rp * rp);
    return (A * tl * std::pow(1.0 - qx, 4) * dP) * v;
}

double ManufacturedF::density(double t, const Vec3& x) const
{
    const Vec3 u = x - x0;
    const double qx = dot(u, u) / (rx * rx);
    if (qx >= 1.0) return 0.0;
    const double A = amplitude * (1.0 + alpha * std::sin(freq * t));
    const double tl = 1.0 + dot(tilt, u) / rx;
    return A * tl * std::pow(1.0 - qx, 4) * four_pi * rp * rp * rp * poly4_momentum_integral;
}

ClosureField zero_closure()
{
    return {[](double, const Vec3&) { return 0.0; }, [](double, const Vec3&) { return Vec3{}; }};
}

ClosureField plummer_closure(double eps, double kappa, double b, const Vec3& center)
{
    ClosureField cf;
    cf.dt = [=](double, const Vec3& x) {
        const Vec3 u = x - center;
        return -eps * kappa / std::sqrt(dot(u, u) + b * b);
    };
    cf.grad = [=](double t, const Vec3& x) {
        const Vec3 u = x - center;
        const double s2 = dot(u, u) + b * b;
        return (eps * (1.0 + kappa * t) / (s2 * std::sqrt(s2))) * u;
    };
    return cf;
}

void QuadSpec::validate() const
{
    if (n_r < 2 || n_theta < 2 || n_phi < 3 || n_pr < 2 || n_ptheta < 2 || n_pphi < 3)
        throw Error(ErrorCode::configuration, "QuadSpec: node counts too small");
    if (sphere_order < min_sphere_order)
        throw Error(ErrorCode::configuration, "QuadSpec: sphere order below " + std::to_string(min_sphere_order));
    if (!(tol > 0.0)) throw Error(ErrorCode::configuration, "QuadSpec: tolerance must be positive");
}

QuadSpec QuadSpec::doubled() const
{
    QuadSpec d = *this;
    d.n_r *= 2;
    d.n_theta *= 2;
    d.n_phi *= 2;
    d.n_pr *= 2;
    d.n_ptheta *= 2;
    d.n_pphi *= 2;
    d.check = false;
    return d;
}

double phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order)
{
    const SmoothField g0 = smooth(data.g0.value, data.g0.gradient);
    const SmoothField g1 = smooth(data.g1.value, data.g1.gradient);
    return kirchhoff_eval(g0, g1, c, t, x, sphere_order);
}

double dt_phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order)
{
    // d/dt phi_hom solves the same wave equation with data (g1, c^2 Lap g0).
    const SmoothField a = smooth(data.g1.value, data.g1.gradient);
    const DataField& g0 = data.g0;
    const double c2 = c * c;
    const SmoothField b = smooth([&g0, c2](const Vec3& y) { return c2 * g0.laplacian(y); },
                                 [](const Vec3&) { return Vec3{}; });
    return kirchhoff_eval(a, b, c, t, x, sphere_order);
}

Vec3 grad_phi_hom(const HomogeneousData& data, double c, double t, const Vec3& x, int sphere_order)
{
    const SphereRule rule = SphereRule::lebedev(sphere_order);
    Vec3 out;
    for (int i = 0; i < 3; ++i) {
        const SmoothField a = smooth([&data, i](const Vec3& y) { return data.g0.gradient(y)[i]; },
                                     [&data, i](const Vec3& y) { return data.g0.hessian(y)[i]; });
        const SmoothField b = smooth([&data, i](const Vec3& y) { return data.g1.gradient(y)[i]; },
                                     [](const Vec3&) { return Vec3{}; });
        out[i] = kirchhoff_eval(a, b, c, t, x, rule);
    }
    return out;
}

namespace {

double psi_raw(const ManufacturedF& mf, double c, double t, const Vec3& x, const QuadSpec& q)
{
    const std::vector<MomentumNode> mom = momentum_rule(mf.p0, mf.rp, q);
    double sum = 0.0;
    cone_quadrature(x, c * t, mf.x0, mf.rx, q, [&](double r, const Vec3&, const Vec3& y, double w) {
        const double s = t - r / c;
        double inner = 0.0;
        for (const MomentumNode& m : mom) inner += m.w * mf.value(s, y, m.p) / gamma_factor(m.p, c);
        sum += w * r * inner;
    });
    return -sum / (c * c);
}

/// Shared body of the two representations. `comp` < 0 selects d/dt, else d/dx_comp.
RepresentationTerms representation_raw(const ManufacturedF& mf, const HomogeneousData& data,
                                       const ClosureField& closure, double c, double t, const Vec3& x, int comp,
                                       const QuadSpec& q)
{
    RepresentationTerms T;
    if (comp < 0) T.hom = dt_phi_hom(data, c, t, x, q.sphere_order);
    else T.hom = grad_phi_hom(data, c, t, x, q.sphere_order)[comp];
    if (t == 0.0) return T;

    const std::vector<MomentumNode> mom = momentum_rule(mf.p0, mf.rp, q);
    const double ct = c * t;

    // sphere |y - x| = ct carrying f_in
    double data_sum = 0.0;
    sphere_cap(x, ct, mf.x0, mf.rx, q.n_theta, q.n_phi, [&](const Vec3& om, const Vec3& y, double w) {
        const double wi = comp < 0 ? 1.0 : om[comp];
        double inner = 0.0;
        for (const MomentumNode& m : mom) {
            const double f = mf.value(0.0, y, m.p);
            if (f == 0.0) continue;
            const KernelSet k = kernels_unchecked(om, m.p, c);
            inner += m.w * f / (k.op * k.sqcp);
        }
        data_sum += w * wi * inner;
    });

    double sa = 0.0, sb = 0.0, sc = 0.0, sr = 0.0;
    cone_quadrature(x, ct, mf.x0, mf.rx, q, [&](double r, const Vec3& om, const Vec3& y, double w) {
        const double s = t - r / c;
        const double phit = closure.dt(s, y);
        const Vec3 gphi = closure.grad(s, y);
        const double wi = comp < 0 ? 1.0 : om[comp];
        double ia = 0.0, ib = 0.0, ic = 0.0, ir = 0.0;
        for (const MomentumNode& m : mom) {
            const double f = mf.value(s, y, m.p);
            if (f == 0.0) continue;
            const KernelSet k = kernels_unchecked(om, m.p, c);
            const Vec3 ph = m.p / k.sqcp;
            const double S = phit + dot(ph, gphi);
            const Vec3 force = S * m.p + (c * c / k.sqcp) * gphi;
            const double res = mf.dt(s, y, m.p) + dot(ph, mf.grad_x(s, y, m.p)) - dot(force, mf.grad_p(s, y, m.p)) -
                               4.0 * S * f;
            ia += m.w * (comp < 0 ? k.a_t : k.a_x[comp]) * f;
            ib += m.w * k.b_t * S * f;
            ic += m.w * dot(k.c_t, gphi) * f;
            ir += m.w * res / (k.op * k.sqcp);
        }
        sa += w * ia;
        sb += w * r * wi * ib;
        sc += w * r * wi * ic;
        sr += w * r * wi * ir;
    });

    const double c1 = 1.0 / c, c2 = c1 * c1, c3 = c2 * c1;
    if (comp < 0) {
        T.data = -t * data_sum;
        T.a_term = -c2 * sa;
        T.b_term = -c2 * sb;
        T.c_term = -c1 * sc;
        T.residual = -c2 * sr;
    } else {
        T.data = -c1 * t * data_sum;
        T.a_term = -c3 * sa;
        T.b_term = -c3 * sb;
        T.c_term = -c2 * sc;
        T.residual = -c3 * sr;
    }
    return T;
}

} // namespace

double retarded_psi(const ManufacturedF& mf, double c, double t, const Vec3& x, const QuadSpec& q)
{
    mf.validate();
    q.validate();
    if (!(t >= 0.0)) throw Error(ErrorCode::rejected_input, "retarded_psi: t must be non-negative");
    const double v = psi_raw(mf, c, t, x, q);
    if (q.check) check_accuracy(v, psi_raw(mf, c, t, x, q.doubled()), q.tol, "retarded_psi");
    return v;
}

double retarded_phi_oracle(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x,
                           const QuadSpec& q)
{
    return phi_hom(data, c, t, x, q.sphere_order) + retarded_psi(mf, c, t, x, q);
}

RepresentationTerms representation_dtphi_oracle(const ManufacturedF& mf, const HomogeneousData& data,
                                                const ClosureField& closure, double c, double t, const Vec3& x,
                                                const QuadSpec& q)
{
    mf.validate();
    q.validate();
    if (!(t >= 0.0)) throw Error(ErrorCode::rejected_input, "representation: t must be non-negative");
    RepresentationTerms T = representation_raw(mf, data, closure, c, t, x, -1, q);
    if (q.check)
        check_accuracy(T.total(), representation_raw(mf, data, closure, c, t, x, -1, q.doubled()).total(), q.tol,
                       "representation_dtphi_oracle");
    return T;
}

RepresentationTerms representation_dxphi_oracle(const ManufacturedF& mf, const HomogeneousData& data,
                                                const ClosureField& closure, double c, double t, const Vec3& x,
                                                int i, const QuadSpec& q)
{
    mf.validate();
    q.validate();
    if (i < 0 || i > 2) throw Error(ErrorCode::rejected_input, "representation_dxphi_oracle: component out of range");
    if (!(t >= 0.0)) throw Error(ErrorCode::rejected_input, "representation: t must be non-negative");
    RepresentationTerms T = representation_raw(mf, data, closure, c, t, x, i, q);
    if (q.check)
        check_accuracy(T.total(), representation_raw(mf, data, closure, c, t, x, i, q.doubled()).total(), q.tol,
                       "representation_dxphi_oracle");
    return T;
}

double fd_dtphi(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x,
                const QuadSpec& q, double step)
{
    if (!(t - 2.0 * step >= 0.0)) throw Error(ErrorCode::rejected_input, "fd_dtphi: stencil reaches t < 0");
    auto phi = [&](double tt) { return retarded_phi_oracle(mf, data, c, tt, x, q); };
    return (-phi(t + 2 * step) + 8 * phi(t + step) - 8 * phi(t - step) + phi(t - 2 * step)) / (12 * step);
}

double fd_dxphi(const ManufacturedF& mf, const HomogeneousData& data, double c, double t, const Vec3& x, int i,
                const QuadSpec& q, double step)
{
    Vec3 e;
    e[i] = step;
    auto phi = [&](const Vec3& xx) { return retarded_phi_oracle(mf, data, c, t, xx, q); };
    return (-phi(x + 2.0 * e) + 8 * phi(x + e) - 8 * phi(x - e) + phi(x - 2.0 * e)) / (12 * step);
}

ClosureField retarded_closure(const ManufacturedF& mf, const HomogeneousData& data, double c, const QuadSpec& inner,
                              double step)
{
    ClosureField cf;
    cf.dt = [=](double s, const Vec3& y) {
        auto phi = [&](double tt) { return retarded_phi_oracle(mf, data, c, tt, y, inner); };
        if (s >= 2.0 * step)
            return (-phi(s + 2 * step) + 8 * phi(s + step) - 8 * phi(s - step) + phi(s - 2 * step)) / (12 * step);
        return (-25 * phi(s) + 48 * phi(s + step) - 36 * phi(s + 2 * step) + 16 * phi(s + 3 * step) -
                3 * phi(s + 4 * step)) /
               (12 * step);
    };
    cf.grad = [=](double s, const Vec3& y) {
        Vec3 g;
        for (int i = 0; i < 3; ++i) {
            Vec3 e;
            e[i] = step;
            auto phi = [&](const Vec3& yy) { return retarded_phi_oracle(mf, data, c, s, yy, inner); };
            g[i] = (-phi(y + 2.0 * e) + 8 * phi(y + e) - 8 * phi(y - e) + phi(y - 2.0 * e)) / (12 * step);
        }
        return g;
    };
    return cf;
}

double spherical_mean(const std::function<double(const Vec3&)>& g, const Vec3& x, double r, const SphereRule& rule)
{
    double s = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) s += rule.weights[q] * g(x + r * rule.directions[q]);
    return s / four_pi;
}

double PolyBump::value(const Vec3& y) const
{
    const Vec3 u = y - center;
    const double q = dot(u, u) / (a * a);
    return q >= 1.0 ? 0.0 : std::pow(1.0 - q, 5);
}

Vec3 PolyBump::gradient(const Vec3& y) const
{
    const Vec3 u = y - center;
    const double q = dot(u, u) / (a * a);
    if (q >= 1.0) return {};
    return (-10.0 * std::pow(1.0 - q, 4) / (a * a)) * u;
}

double PolyBump::laplacian(const Vec3& y) const
{
    const Vec3 u = y - center;
    const double q = dot(u, u) / (a * a);
    if (q >= 1.0) return 0.0;
    return (-30.0 * std::pow(1.0 - q, 4) + 80.0 * q * std::pow(1.0 - q, 3)) / (a * a);
}

double Lemma2Result::rel_diff() const
{
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

Lemma2Result lemma2_check(const PolyBump& h, double c, double t, const Vec3& x, int n_radial, int n_theta, int n_phi)
{
    if (!(t >= 0.0) || !(c > 0.0)) throw Error(ErrorCode::rejected_input, "lemma2_check: need t >= 0, c > 0");
    Lemma2Result res;
    const double ct = c * t;
    double m0 = 0.0, m1 = 0.0;
    sphere_cap(x, ct, h.center, h.a, n_theta, n_phi, [&](const Vec3& om, const Vec3& y, double w) {
        m0 += w * h.value(y);
        m1 += w * dot(om, h.gradient(y));
    });
    res.lhs = m0 + ct * m1;

    // exterior integral: radii beyond ct, split where the sphere leaves the ball
    const double d = norm(x - h.center);
    std::vector<std::pair<double, double>> segs;
    if (d < h.a) {
        segs.push_back({0.0, h.a - d});
        segs.push_back({h.a - d, h.a + d});
    } else {
        segs.push_back({d - h.a, d + h.a});
    }
    double ext = 0.0;
    for (auto [lo, hi] : segs) {
        lo = std::max(lo, ct);
        if (!(hi > lo)) continue;
        const GaussLegendre gr = GaussLegendre::on_interval(n_radial, lo, hi);
        for (std::size_t a = 0; a < gr.size(); ++a) {
            const double r = gr.nodes[a];
            double s = 0.0;
            sphere_cap(x, r, h.center, h.a, n_theta, n_phi,
                       [&](const Vec3&, const Vec3& y, double w) { s += w * h.laplacian(y); });
            ext += gr.weights[a] * r * s;
        }
    }
    res.rhs = -ext;
    return res;
}

Lemma1Scan lemma1_scan(const std::function<double(const Vec3&)>& g, const Vec3& g_center, double a, double g_sup,
                       const Vec3& x, double xi_max, int samples, int n_theta, int n_phi)
{
    if (samples < 2 || !(xi_max > 0.0)) throw Error(ErrorCode::configuration, "lemma1_scan: bad scan range");
    Lemma1Scan out;
    out.bound = four_pi * g_sup * a;
    for (int k = 0; k < samples; ++k) {
        const double xi = xi_max * k / (samples - 1);
        double s = 0.0;
        sphere_cap(x, xi, g_center, a, n_theta, n_phi,
                   [&](const Vec3&, const Vec3& y, double w) { s += w * std::abs(g(y)); });
        const double v = xi * s;
        out.xi.push_back(xi);
        out.value.push_back(v);
        if (v > out.max_value) {
            out.max_value = v;
            out.argmax = xi;
        }
    }
    return out;
}

KernelAudit audit_kernels(std::size_t samples, const std::vector<double>& c_values, double p_max, std::uint64_t seed)
{
    if (c_values.empty() || !(p_max > 1e-3)) throw Error(ErrorCode::configuration, "audit_kernels: bad parameters");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(std::log(1e-3), std::log(p_max));
    auto unit = [&] {
        Vec3 v{normal(rng), normal(rng), normal(rng)};
        return v / norm(v);
    };
    KernelAudit A;
    A.samples = samples;
    for (std::size_t s = 0; s < samples; ++s) {
        const double c = c_values[s % c_values.size()];
        Vec3 om = unit();
        const Vec3 p = std::exp(uni(rng)) * unit();
        // Every fourth sample points omega nearly against p, where op is smallest.
        if (s % 4 == 3) {
            const Vec3 v = -(p / norm(p)) + 0.01 * om;
            om = v / norm(v);
        }
        const KernelSet k = eval_kernels(om, p, c);
        const double P = norm(p) + 1.0;
        const double P2 = P * P, P3 = P2 * P, P4 = P2 * P2, P5 = P4 * P;
        A.max_ratio_a = std::max(A.max_ratio_a, std::abs(k.a_t) / P5);
        A.max_ratio_b = std::max(A.max_ratio_b, std::abs(k.b_t) / P4);
        A.max_ratio_c = std::max(A.max_ratio_c, norm(k.c_t) / P4);
        A.max_split_ratio = std::max(A.max_split_ratio, norm(k.a_x_split) / P5);
        A.max_lemma3 = std::max(A.max_lemma3, (1.0 / k.op) / (2.0 * (c * c + dot(p, p)) / (c * c)));
        A.max_diff_ratio = std::max(A.max_diff_ratio, c * std::abs(1.0 - 1.0 / (k.op * k.sqcp)) / P3);
        A.min_op = std::min(A.min_op, k.op);
        const Vec3 bd = b_x_direct(om, p, c);
        const double nb = norm(bd);
        if (nb > 0.0) A.max_bx_identity = std::max(A.max_bx_identity, norm(k.b_x - bd) / nb);
    }
    return A;
}

} // namespace nvlimit
