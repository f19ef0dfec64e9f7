#include "nvlimit/phase_space.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "nvlimit/quadrature.hpp"

namespace nvlimit {

double bump(double s)
{
    const double s2 = s * s;
    if (s2 >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - s2));
}

double bump_derivative(double s)
{
    const double s2 = s * s;
    if (s2 >= 1.0) return 0.0;
    const double d = 1.0 - s2;
    return bump(s) * (-2.0 * s / (d * d));
}

void Profile::validate() const
{
    if (!(radius_x > 0.0) || !(radius_p > 0.0) || !std::isfinite(radius_x) || !std::isfinite(radius_p))
        throw Error(ErrorCode::configuration, "profile radii must be positive and finite");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
        throw Error(ErrorCode::configuration, "profile amplitude must be non-negative and finite");
    if (!all_finite(center_x) || !all_finite(center_p))
        throw Error(ErrorCode::configuration, "profile centres must be finite");
}

namespace {

double box_sup_norm(const Vec3& center, double r, bool ball)
{
    if (ball) return norm(center) + r;
    double best = 0.0;
    for (int sx = -1; sx <= 1; sx += 2)
        for (int sy = -1; sy <= 1; sy += 2)
            for (int sz = -1; sz <= 1; sz += 2)
                best = std::max(best, norm(center + r * Vec3{double(sx), double(sy), double(sz)}));
    return best;
}

} // namespace

double Profile::support_radius_x() const
{
    return box_sup_norm(center_x, radius_x, kind == ProfileKind::radial_bump);
}

double Profile::support_radius_p() const
{
    return box_sup_norm(center_p, radius_p, kind == ProfileKind::radial_bump);
}

double eval_profile(const Profile& prof, const Vec3& x, const Vec3& p)
{
    if (!all_finite(x) || !all_finite(p))
        throw Error(ErrorCode::rejected_input, "eval_profile: non-finite phase-space point");
    const Vec3 dx = (x - prof.center_x) / prof.radius_x;
    const Vec3 dp = (p - prof.center_p) / prof.radius_p;
    if (prof.kind == ProfileKind::radial_bump) {
        const double sx = norm(dx), sp = norm(dp);
        if (sx >= 1.0 || sp >= 1.0) return 0.0;
        return prof.amplitude * bump(sx) * bump(sp);
    }
    double v = prof.amplitude;
    for (int a = 0; a < 3; ++a) {
        v *= bump(dx[a]) * bump(dp[a]);
        if (v == 0.0) return 0.0;
    }
    return v;
}

double ParticleEnsemble::total_mass() const
{
    double m = 0.0;
    for (double wi : w) m += wi;
    return m;
}

void ParticleEnsemble::reserve(std::size_t n)
{
    x.reserve(n); p.reserve(n); w.reserve(n); f0.reserve(n); f.reserve(n); phi0.reserve(n); jac.reserve(n);
}

void ParticleEnsemble::push_back(const Vec3& xi, const Vec3& pi, double wi, double fi)
{
    x.push_back(xi); p.push_back(pi); w.push_back(wi); f0.push_back(fi); f.push_back(fi); phi0.push_back(0.0); jac.push_back(1.0);
}

double reference_mass(const Profile& prof, int points_per_axis)
{
    if (prof.amplitude == 0.0) return 0.0;
    const GaussLegendre gl = GaussLegendre::on_interval(points_per_axis, 0.0, 1.0);
    if (prof.kind == ProfileKind::radial_bump) {
        // amplitude * (4 pi int_0^1 bump(s) s^2 ds)^2 * rx^3 * rp^3
        double radial = 0.0;
        for (std::size_t q = 0; q < gl.size(); ++q) radial += gl.weights[q] * bump(gl.nodes[q]) * gl.nodes[q] * gl.nodes[q];
        radial *= four_pi;
        return prof.amplitude * radial * radial * std::pow(prof.radius_x * prof.radius_p, 3);
    }
    double line = 0.0; // int_{-1}^{1} bump = 2 int_0^1 bump
    for (std::size_t q = 0; q < gl.size(); ++q) line += gl.weights[q] * bump(gl.nodes[q]);
    line *= 2.0;
    return prof.amplitude * std::pow(line, 6) * std::pow(prof.radius_x * prof.radius_p, 3);
}

ParticleEnsemble sample_ensemble(const Profile& prof, LatticeCounts counts, std::uint64_t seed, double jitter)
{
    prof.validate();
    if (counts.nx < 2 || counts.np < 2)
        throw Error(ErrorCode::configuration, "sample_ensemble: need at least 2 lattice points per axis");
    if (!(jitter >= 0.0 && jitter <= 1.0))
        throw Error(ErrorCode::configuration, "sample_ensemble: jitter must lie in [0, 1]");

    ParticleEnsemble ens;
    ens.R = prof.support_radius_x();
    const double hx = 2.0 * prof.radius_x / counts.nx;
    const double hp = 2.0 * prof.radius_p / counts.np;
    ens.cell_volume = std::pow(hx, 3) * std::pow(hp, 3);
    if (prof.amplitude == 0.0) return ens;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    auto axis = [](double center, double radius, int, int idx, double hcell) {
        return center - radius + (idx + 0.5) * hcell;
    };

    const std::size_t nsp = static_cast<std::size_t>(counts.nx) * counts.nx * counts.nx;
    const std::size_t nmo = static_cast<std::size_t>(counts.np) * counts.np * counts.np;
    ens.reserve(nsp * nmo);
    for (int i = 0; i < counts.nx; ++i)
        for (int j = 0; j < counts.nx; ++j)
            for (int k = 0; k < counts.nx; ++k)
                for (int a = 0; a < counts.np; ++a)
                    for (int b = 0; b < counts.np; ++b)
                        for (int c = 0; c < counts.np; ++c) {
                            Vec3 x{axis(prof.center_x.x, prof.radius_x, counts.nx, i, hx),
                                   axis(prof.center_x.y, prof.radius_x, counts.nx, j, hx),
                                   axis(prof.center_x.z, prof.radius_x, counts.nx, k, hx)};
                            Vec3 p{axis(prof.center_p.x, prof.radius_p, counts.np, a, hp),
                                   axis(prof.center_p.y, prof.radius_p, counts.np, b, hp),
                                   axis(prof.center_p.z, prof.radius_p, counts.np, c, hp)};
                            if (jitter > 0.0) {
                                for (int d = 0; d < 3; ++d) x[d] += jitter * hx * uni(rng);
                                for (int d = 0; d < 3; ++d) p[d] += jitter * hp * uni(rng);
                            }
                            const double fv = eval_profile(prof, x, p);
                            if (fv > 0.0) ens.push_back(x, p, ens.cell_volume * fv, fv);
                        }
    if (ens.empty())
        throw Error(ErrorCode::configuration, "sample_ensemble: lattice too coarse to resolve the profile support");

    const double ref = reference_mass(prof);
    ens.mass_error_estimate = std::abs(ens.total_mass() - ref) / ref;
    return ens;
}

ParticleEnsemble sample_ensemble(const Profile& prof, int n_per_axis, std::uint64_t seed, double jitter)
{
    return sample_ensemble(prof, LatticeCounts{n_per_axis, n_per_axis}, seed, jitter);
}

double max_abs_position(const ParticleEnsemble& ens)
{
    double m = 0.0;
    for (const Vec3& xi : ens.x) m = std::max(m, norm(xi));
    return m;
}

SupportStats initial_support(const ParticleEnsemble& ens)
{
    SupportStats s;
    s.R = ens.R;
    s.Pc = 1.0;
    for (const Vec3& pi : ens.p) s.Pc = std::max(s.Pc, norm(pi) + 1.0);
    return s;
}

SupportStats support_update(const SupportStats& stats, const ParticleEnsemble& ens, std::span<const double> phi_at_particles)
{
    if (ens.empty()) throw Error(ErrorCode::rejected_input, "support_update: empty ensemble");
    SupportStats out = stats;
    for (const Vec3& pi : ens.p) out.Pc = std::max(out.Pc, norm(pi) + 1.0);
    for (double v : phi_at_particles) out.Q = std::max(out.Q, std::abs(v));
    return out;
}

} // namespace nvlimit
