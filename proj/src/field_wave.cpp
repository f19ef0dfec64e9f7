#include "nvlimit/field_wave.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "nvlimit/parallel.hpp"

namespace nvlimit {

double marker_mass(const ParticleEnsemble& ens, std::size_t i)
{
    const double ratio = ens.f0[i] > 0.0 ? ens.f[i] / ens.f0[i] : 0.0;
    return ens.w[i] * ratio * ens.jac[i];
}

SourceGrid deposit_source(const ParticleEnsemble& ens, const GridSpec& spec, double c, int margin, int workers)
{
    spec.validate();
    if (!(c > 0.0)) throw Error(ErrorCode::configuration, "deposit_source: c must be positive");
    std::vector<Grid3> partial(std::max(1, workers), Grid3(spec));
    parallel_blocks(ens.size(), workers, [&](std::size_t b, std::size_t e, int w) {
        Grid3& g = partial[w];
        for (std::size_t i = b; i < e; ++i) {
            const CicStencil st = cic_stencil_or_throw(spec, ens.x[i], margin, "deposit_source");
            deposit(g, st, marker_mass(ens, i) / gamma_factor(ens.p[i], c));
        }
    });
    SourceGrid src{std::move(partial[0])};
    for (std::size_t w = 1; w < partial.size(); ++w)
        for (std::size_t q = 0; q < src.mu.data.size(); ++q) src.mu.data[q] += partial[w].data[q];
    const double inv_vol = 1.0 / (spec.h * spec.h * spec.h);
    for (double& v : src.mu.data) v *= inv_vol;
    return src;
}

double cfl_time_step(double c, double h, double cfl_safety)
{
    return cfl_safety * h / (std::sqrt(3.0) * c);
}

void check_cfl(double c, double dt, double h, double cfl_safety)
{
    if (!(cfl_safety > 0.0 && cfl_safety < 1.0))
        throw Error(ErrorCode::configuration, "cfl_safety must lie in (0, 1)");
    if (!(c > 0.0) || !(dt > 0.0) || !(h > 0.0))
        throw Error(ErrorCode::configuration, "c, dt and h must be positive");
    const double courant = c * dt * std::sqrt(3.0) / h;
    if (courant > cfl_safety * (1.0 + 1e-12))
        throw Error(ErrorCode::configuration, "time step violates the wave CFL condition: c*dt*sqrt(3)/h = " +
                                                  std::to_string(courant) + " > " + std::to_string(cfl_safety));
}

namespace {

int wrap(int i, int n) { return i < 0 ? i + n : (i >= n ? i - n : i); }

/// c^2 Lap(phi) - 4 pi mu at a node; periodic wraps, absorbing is only called on interior nodes.
double wave_rhs(const Grid3& phi, const Grid3& mu, double c2, double inv_h2, bool periodic, int i, int j, int k)
{
    const int n = phi.spec.n;
    double lap;
    if (periodic) {
        lap = phi.at(wrap(i + 1, n), j, k) + phi.at(wrap(i - 1, n), j, k) + phi.at(i, wrap(j + 1, n), k) +
              phi.at(i, wrap(j - 1, n), k) + phi.at(i, j, wrap(k + 1, n)) + phi.at(i, j, wrap(k - 1, n)) -
              6.0 * phi.at(i, j, k);
    } else {
        lap = phi.at(i + 1, j, k) + phi.at(i - 1, j, k) + phi.at(i, j + 1, k) + phi.at(i, j - 1, k) + phi.at(i, j, k + 1) +
              phi.at(i, j, k - 1) - 6.0 * phi.at(i, j, k);
    }
    return c2 * lap * inv_h2 - four_pi * mu.at(i, j, k);
}

bool on_face(int i, int j, int k, int n)
{
    return i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
}

/// First-order Mur condition on r*phi along the inward (possibly diagonal)
/// neighbour, so that a static 1/r tail passes the boundary unchanged.
void apply_mur(const Grid3& cur, Grid3& next, double c, double dt)
{
    const GridSpec& s = cur.spec;
    const int n = s.n;
    const Vec3 ctr = s.center();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (!on_face(i, j, k, n)) continue;
                const int idx[3] = {i, j, k};
                int nb[3];
                int axes = 0;
                for (int a = 0; a < 3; ++a) {
                    nb[a] = idx[a];
                    if (idx[a] == 0) { nb[a] = 1; ++axes; }
                    else if (idx[a] == n - 1) { nb[a] = n - 2; ++axes; }
                }
                const double d = s.h * std::sqrt(double(axes));
                const double kk = (c * dt - d) / (c * dt + d);
                const double rb = norm(s.node(i, j, k) - ctr);
                const double rn = norm(s.node(nb[0], nb[1], nb[2]) - ctr);
                const double u_nb_old = rn * cur.at(nb[0], nb[1], nb[2]);
                const double u_nb_new = rn * next.at(nb[0], nb[1], nb[2]);
                const double u_b_old = rb * cur.at(i, j, k);
                next.at(i, j, k) = (u_nb_old + kk * (u_nb_new - u_b_old)) / rb;
            }
}

void apply_sponge(const Grid3& cur, Grid3& next, const WaveOptions& opt)
{
    if (opt.sponge_width <= 0 || opt.sponge_strength <= 0.0) return;
    const GridSpec& s = cur.spec;
    const int n = s.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const double sig = sponge_sigma(s, opt, i, j, k);
                if (sig == 0.0) continue;
                const std::size_t q = s.index(i, j, k);
                next.data[q] = cur.data[q] + (1.0 - sig) * (next.data[q] - cur.data[q]);
            }
}

void check_finite(const Grid3& g, double t)
{
    if (!g.finite())
        throw Error(ErrorCode::numerical_instability, "wave field became non-finite at t = " + std::to_string(t));
}

} // namespace

double sponge_sigma(const GridSpec& spec, const WaveOptions& opt, int i, int j, int k)
{
    if (opt.boundary == WaveBoundary::periodic || opt.sponge_width <= 0) return 0.0;
    const int n = spec.n;
    const int depth = std::min({i, j, k, n - 1 - i, n - 1 - j, n - 1 - k});
    if (depth >= opt.sponge_width) return 0.0;
    const double x = double(opt.sponge_width - depth) / opt.sponge_width;
    return opt.sponge_strength * x * x;
}

bool in_interior(const GridSpec& spec, int sponge_width, int i, int j, int k)
{
    const int n = spec.n;
    return std::min({i, j, k, n - 1 - i, n - 1 - j, n - 1 - k}) >= std::max(1, sponge_width);
}

FieldState init_field(const Grid3& g_sharp, const Grid3& h_sharp, double c, double dt, const SourceGrid& src0,
                      const WaveOptions& options)
{
    const GridSpec& s = g_sharp.spec;
    s.validate();
    if (!s.same_shape(h_sharp.spec) || !s.same_shape(src0.mu.spec))
        throw Error(ErrorCode::configuration, "init_field: grid shapes differ");
    check_cfl(c, dt, s.h, options.cfl_safety);
    if (options.sponge_width < 0 || options.sponge_strength < 0.0 || options.sponge_strength >= 1.0)
        throw Error(ErrorCode::configuration, "sponge parameters out of range");

    FieldState fs;
    fs.c = c;
    fs.dt = dt;
    fs.options = options;
    const double inv_c2 = 1.0 / (c * c);
    Grid3 phi0(s), dphi0(s);
    for (std::size_t q = 0; q < s.size(); ++q) {
        phi0.data[q] = g_sharp.data[q] * inv_c2;
        dphi0.data[q] = h_sharp.data[q] * inv_c2;
    }
    check_finite(phi0, 0.0);

    const bool periodic = options.boundary == WaveBoundary::periodic;
    const int n = s.n;
    const double c2 = c * c, inv_h2 = 1.0 / (s.h * s.h);
    Grid3 phi1(s);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const std::size_t q = s.index(i, j, k);
                double v = phi0.data[q] + dt * dphi0.data[q];
                if (periodic || !on_face(i, j, k, n))
                    v += 0.5 * dt * dt * wave_rhs(phi0, src0.mu, c2, inv_h2, periodic, i, j, k);
                phi1.data[q] = v;
            }
    if (!periodic) {
        apply_mur(phi0, phi1, c, dt);
        apply_sponge(phi0, phi1, options);
    }
    check_finite(phi1, dt);

    fs.phi_prev = std::move(phi0);
    fs.phi = std::move(phi1);
    fs.dphi_dt = std::move(dphi0);
    fs.t = dt;
    return fs;
}

void wave_step(FieldState& fs, const SourceGrid& src)
{
    const GridSpec& s = fs.phi.spec;
    if (!s.same_shape(src.mu.spec)) throw Error(ErrorCode::configuration, "wave_step: source grid shape differs");
    const bool periodic = fs.options.boundary == WaveBoundary::periodic;
    const int n = s.n;
    const double dt = fs.dt, c2 = fs.c * fs.c, inv_h2 = 1.0 / (s.h * s.h);
    Grid3 next(s);
    const int lo = periodic ? 0 : 1, hi = periodic ? n : n - 1;
    for (int i = lo; i < hi; ++i)
        for (int j = lo; j < hi; ++j)
            for (int k = lo; k < hi; ++k) {
                const std::size_t q = s.index(i, j, k);
                next.data[q] = 2.0 * fs.phi.data[q] - fs.phi_prev.data[q] +
                               dt * dt * wave_rhs(fs.phi, src.mu, c2, inv_h2, periodic, i, j, k);
            }
    if (!periodic) {
        apply_mur(fs.phi, next, fs.c, dt);
        apply_sponge(fs.phi, next, fs.options);
    }
    check_finite(next, fs.t + dt);
    const double inv_2dt = 0.5 / dt;
    for (std::size_t q = 0; q < s.size(); ++q) fs.dphi_dt.data[q] = (next.data[q] - fs.phi_prev.data[q]) * inv_2dt;
    fs.phi_prev = std::move(fs.phi);
    fs.phi = std::move(next);
    fs.t += dt;
}

double wave_energy(const FieldState& fs)
{
    const GridSpec& s = fs.phi.spec;
    const int n = s.n;
    const bool periodic = fs.options.boundary == WaveBoundary::periodic;
    const double inv_dt = 1.0 / fs.dt, inv_h = 1.0 / s.h;
    double kinetic = 0.0, potential = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const std::size_t q = s.index(i, j, k);
                const double v = (fs.phi.data[q] - fs.phi_prev.data[q]) * inv_dt;
                kinetic += v * v;
                const int idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    int nb[3] = {i, j, k};
                    nb[a] = idx[a] + 1;
                    if (nb[a] == n) {
                        if (!periodic) continue;
                        nb[a] = 0;
                    }
                    const std::size_t r = s.index(nb[0], nb[1], nb[2]);
                    const double d_new = (fs.phi.data[r] - fs.phi.data[q]) * inv_h;
                    const double d_old = (fs.phi_prev.data[r] - fs.phi_prev.data[q]) * inv_h;
                    potential += d_new * d_old;
                }
            }
    const double vol = s.h * s.h * s.h;
    return 0.5 * vol * (kinetic + fs.c * fs.c * potential);
}

SmoothField zero_field()
{
    return {[](const Vec3&) { return 0.0; }, [](const Vec3&) { return Vec3{}; }};
}

SmoothField constant_field(double k)
{
    return {[k](const Vec3&) { return k; }, [](const Vec3&) { return Vec3{}; }};
}

SmoothField grid_field(const Grid3& g, double monopole, Vec3 center)
{
    auto values = std::make_shared<Grid3>(g);
    auto grads = std::make_shared<std::array<Grid3, 3>>(gradient(g));
    SmoothField sf;
    sf.value = [values, monopole, center](const Vec3& x) {
        CicStencil st;
        if (cic_stencil(values->spec, x, 0, st)) return interpolate(*values, st);
        return monopole == 0.0 ? 0.0 : monopole / norm(x - center);
    };
    sf.gradient = [grads, monopole, center](const Vec3& x) {
        CicStencil st;
        if (cic_stencil((*grads)[0].spec, x, 0, st))
            return Vec3{interpolate((*grads)[0], st), interpolate((*grads)[1], st), interpolate((*grads)[2], st)};
        if (monopole == 0.0) return Vec3{};
        const Vec3 d = x - center;
        const double r = norm(d);
        return (-monopole / (r * r * r)) * d;
    };
    return sf;
}

double kirchhoff_eval(const SmoothField& g0, const SmoothField& g1, double c, double t, const Vec3& x,
                      const SphereRule& rule)
{
    if (rule.size() == 0) throw Error(ErrorCode::configuration, "kirchhoff_eval: empty sphere rule");
    if (!(t >= 0.0) || !(c > 0.0)) throw Error(ErrorCode::rejected_input, "kirchhoff_eval: need t >= 0 and c > 0");
    const double rad = c * t;
    double m0 = 0.0, m_grad = 0.0, m1 = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const Vec3& om = rule.directions[q];
        const Vec3 y = x + rad * om;
        const double w = rule.weights[q];
        m0 += w * g0.value(y);
        m_grad += w * dot(om, g0.gradient(y));
        m1 += w * g1.value(y);
    }
    return (m0 + rad * m_grad + t * m1) / four_pi;
}

double kirchhoff_eval(const SmoothField& g0, const SmoothField& g1, double c, double t, const Vec3& x, int order)
{
    return kirchhoff_eval(g0, g1, c, t, x, SphereRule::lebedev(order));
}

double psi_positivity_audit(const Grid3& phi, const Grid3& phi_hom)
{
    if (!phi.spec.same_shape(phi_hom.spec))
        throw Error(ErrorCode::configuration, "psi_positivity_audit: grid shapes differ");
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < phi.data.size(); ++q) worst = std::max(worst, phi.data[q] - phi_hom.data[q]);
    return worst;
}

} // namespace nvlimit
