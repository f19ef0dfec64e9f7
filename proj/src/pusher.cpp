#include "nvlimit/pusher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nvlimit/parallel.hpp"

namespace nvlimit {

namespace {

Vec3 node_gradient(const Grid3& g, int i, int j, int k)
{
    const int n = g.spec.n;
    const double inv_2h = 0.5 / g.spec.h, inv_h = 1.0 / g.spec.h;
    const int idx[3] = {i, j, k};
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        int lo[3] = {i, j, k}, hi[3] = {i, j, k};
        double scale = inv_2h;
        if (idx[a] == 0) { hi[a] += 1; scale = inv_h; }
        else if (idx[a] == n - 1) { lo[a] -= 1; scale = inv_h; }
        else { lo[a] -= 1; hi[a] += 1; }
        out[a] = (g.at(hi[0], hi[1], hi[2]) - g.at(lo[0], lo[1], lo[2])) * scale;
    }
    return out;
}

void check_force(const ForceSample& s, const Vec3& x)
{
    if (!std::isfinite(s.phi) || !std::isfinite(s.dphi_dt) || !all_finite(s.grad_phi))
        throw Error(ErrorCode::numerical_instability, "non-finite force at (" + std::to_string(x.x) + ", " +
                                                          std::to_string(x.y) + ", " + std::to_string(x.z) + ")");
}

/// S(phi) of the smooth space-time field used by the conservation track: cubic
/// B-spline in space (so S is continuous across cells), linear in time.
double smooth_s(const Grid3& phi_a, const Grid3& phi_b, double theta, double span, const Vec3& x, const Vec3& p,
                double c)
{
    Vec3 ga, gb;
    const double va = spline_with_gradient(phi_a, x, ga);
    const double vb = spline_with_gradient(phi_b, x, gb);
    const Vec3 grad = (1.0 - theta) * ga + theta * gb;
    return (vb - va) / span + dot(rel_velocity(p, c), grad);
}

} // namespace

Vec3 interpolate_gradient(const Grid3& g, const CicStencil& st)
{
    Vec3 out;
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk)
                out += st.weight(di, dj, dk) * node_gradient(g, st.i + di, st.j + dj, st.k + dk);
    return out;
}

ForceSample interp_fields(const NvFieldView& v, const Vec3& x, const Vec3& p, double c)
{
    const CicStencil st = cic_stencil_or_throw(v.phi_a->spec, x, 0, "interp_fields");
    ForceSample s;
    const double th = v.theta;
    if (th == 0.0) {
        s.phi = interpolate(*v.phi_a, st);
        s.grad_phi = interpolate_gradient(*v.phi_a, st);
    } else {
        s.phi = (1.0 - th) * interpolate(*v.phi_a, st) + th * interpolate(*v.phi_b, st);
        s.grad_phi = (1.0 - th) * interpolate_gradient(*v.phi_a, st) + th * interpolate_gradient(*v.phi_b, st);
    }
    if (v.dphi_a) {
        s.dphi_dt = interpolate(*v.dphi_a, st);
        if (th != 0.0) s.dphi_dt = (1.0 - th) * s.dphi_dt + th * interpolate(*v.dphi_b, st);
    } else {
        s.dphi_dt = (interpolate(*v.phi_b, st) - interpolate(*v.phi_a, st)) / v.span;
    }
    s.s_phi = s.dphi_dt + dot(rel_velocity(p, c), s.grad_phi);
    check_force(s, x);
    return s;
}

ForceSample interp_fields(const FieldState& fs, const Vec3& x, const Vec3& p)
{
    NvFieldView v;
    v.phi_a = &fs.phi_prev;
    v.dphi_a = &fs.dphi_dt;
    return interp_fields(v, x, p, fs.c);
}

Vec3 interp_grad_u(const NewtonianField& nf, const Vec3& x)
{
    const CicStencil st = cic_stencil_or_throw(nf.U.spec, x, 0, "interp_grad_u");
    return interpolate_gradient(nf.U, st);
}

void nv_rhs(const ForceSample& fsm, const Vec3& p, double c, Vec3& dx, Vec3& dp)
{
    const double g = gamma_factor(p, c);
    dx = p / g;
    dp = -fsm.s_phi * p - (c * c / g) * fsm.grad_phi;
}

void ConservationTrack::init(const ParticleEnsemble& ens, std::vector<std::size_t> which, const Grid3& phi_start)
{
    index = std::move(which);
    ln_f.clear();
    phi_begin.clear();
    for (std::size_t i : index) {
        if (i >= ens.size()) throw Error(ErrorCode::configuration, "ConservationTrack: marker index out of range");
        Vec3 g;
        ln_f.push_back(std::log(ens.f[i]));
        phi_begin.push_back(spline_with_gradient(phi_start, ens.x[i], g));
    }
}

double ConservationTrack::max_drift(const ParticleEnsemble& ens, const Grid3& phi_now) const
{
    double worst = 0.0;
    for (std::size_t q = 0; q < index.size(); ++q) {
        const std::size_t i = index[q];
        Vec3 g;
        const double phi = spline_with_gradient(phi_now, ens.x[i], g);
        const double ratio = std::exp(ln_f[q] - 4.0 * phi - std::log(ens.f0[i]) + 4.0 * phi_begin[q]);
        worst = std::max(worst, std::abs(ratio - 1.0));
    }
    return worst;
}

void push_nv(ParticleEnsemble& ens, const FieldState& fs, int workers, ConservationTrack* track)
{
    const double dt = fs.dt, c = fs.c;
    NvFieldView v0;
    v0.phi_a = &fs.phi_prev;
    v0.dphi_a = &fs.dphi_dt;
    NvFieldView vh;
    vh.phi_a = &fs.phi_prev;
    vh.phi_b = &fs.phi;
    vh.theta = 0.5;
    vh.span = dt;

    // Tracked markers need their stage states, so record per-marker slots.
    std::vector<int> slot(track ? ens.size() : 0, -1);
    if (track)
        for (std::size_t q = 0; q < track->index.size(); ++q) slot[track->index[q]] = static_cast<int>(q);

    parallel_blocks(ens.size(), workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 x = ens.x[i], p = ens.p[i];
            Vec3 k1x, k1p, k2x, k2p;
            nv_rhs(interp_fields(v0, x, p, c), p, c, k1x, k1p);
            const Vec3 xm = x + (0.5 * dt) * k1x, pm = p + (0.5 * dt) * k1p;
            nv_rhs(interp_fields(vh, xm, pm, c), pm, c, k2x, k2p);
            ens.x[i] = x + dt * k2x;
            ens.p[i] = p + dt * k2p;
            if (track && slot[i] >= 0) {
                const double s2 = smooth_s(fs.phi_prev, fs.phi, 0.5, dt, xm, pm, c);
                track->ln_f[slot[i]] += 4.0 * dt * s2;
            }
            const CicStencil st = cic_stencil_or_throw(fs.phi.spec, ens.x[i], 0, "push_nv");
            const double dphi = interpolate(fs.phi, st) - ens.phi0[i];
            ens.f[i] = ens.f0[i] * std::exp(4.0 * dphi);
            ens.jac[i] = std::exp(-3.0 * dphi);
            if (!all_finite(ens.x[i]) || !all_finite(ens.p[i]) || !std::isfinite(ens.f[i]))
                throw Error(ErrorCode::numerical_instability, "push_nv: non-finite marker state");
        }
    });
}

void push_vp(ParticleEnsemble& ens, const NewtonianField& nf_n, const PoissonSolver& solver, double dt, int margin,
             int workers)
{
    const std::size_t n = ens.size();
    std::vector<Vec3> x0 = ens.x, p0 = ens.p;
    parallel_blocks(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 g = interp_grad_u(nf_n, x0[i]);
            ens.x[i] = x0[i] + (0.5 * dt) * p0[i];
            ens.p[i] = p0[i] - (0.5 * dt) * g;
        }
    });
    const SourceGrid rho = deposit_source(ens, solver.spec(), std::numeric_limits<double>::infinity(), margin, workers);
    const NewtonianField nf_half = solver.solve(rho.mu, nf_n.t + 0.5 * dt);
    parallel_blocks(n, workers, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            const Vec3 g = interp_grad_u(nf_half, ens.x[i]);
            const Vec3 pm = ens.p[i];
            ens.x[i] = x0[i] + dt * pm;
            ens.p[i] = p0[i] - dt * g;
            if (!all_finite(ens.x[i]) || !all_finite(ens.p[i]))
                throw Error(ErrorCode::numerical_instability, "push_vp: non-finite marker state");
        }
    });
}

void push_vp_external(ParticleEnsemble& ens, const std::function<Vec3(const Vec3&)>& grad_u, double dt)
{
    for (std::size_t i = 0; i < ens.size(); ++i) {
        const Vec3 x = ens.x[i], p = ens.p[i];
        const Vec3 xm = x + (0.5 * dt) * p;
        const Vec3 pm = p - (0.5 * dt) * grad_u(x);
        ens.x[i] = x + dt * pm;
        ens.p[i] = p - dt * grad_u(xm);
    }
}

void FieldHistory::append(double t, const Grid3& field, const Grid3* dfield)
{
    if (!times_.empty() && !(t > times_.back()))
        throw Error(ErrorCode::configuration, "FieldHistory: frame times must increase strictly");
    if (!times_.empty() && !field.spec.same_shape(fields_.front().spec))
        throw Error(ErrorCode::configuration, "FieldHistory: frame grid shape differs");
    if (system_ == System::nv && !dfield)
        throw Error(ErrorCode::configuration, "FieldHistory: Nordstrom frames need dphi/dt");
    times_.push_back(t);
    fields_.push_back(field);
    if (dfield) dfields_.push_back(*dfield);
}

std::size_t FieldHistory::locate(double t, double& theta) const
{
    if (times_.empty()) throw Error(ErrorCode::configuration, "FieldHistory: empty history");
    const double tol = 1e-12 * std::max(1.0, std::abs(times_.back()));
    if (t < times_.front() - tol || t > times_.back() + tol)
        throw Error(ErrorCode::configuration, "FieldHistory: time " + std::to_string(t) + " outside stored range [" +
                                                  std::to_string(times_.front()) + ", " +
                                                  std::to_string(times_.back()) + "]");
    if (times_.size() == 1) {
        theta = 0.0;
        return 0;
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    k = std::min(k, times_.size() - 2);
    theta = std::clamp((t - times_[k]) / (times_[k + 1] - times_[k]), 0.0, 1.0);
    return k;
}

NvFieldView FieldHistory::nv_view(double t) const
{
    if (system_ != System::nv) throw Error(ErrorCode::configuration, "FieldHistory: not a Nordstrom history");
    double th;
    const std::size_t k = locate(t, th);
    NvFieldView v;
    const std::size_t k1 = std::min(k + 1, times_.size() - 1);
    v.phi_a = &fields_[k];
    v.phi_b = &fields_[k1];
    v.dphi_a = &dfields_[k];
    v.dphi_b = &dfields_[k1];
    v.theta = th;
    return v;
}

Vec3 FieldHistory::grad_u(double t, const Vec3& x) const
{
    double th;
    const std::size_t k = locate(t, th);
    const std::size_t k1 = std::min(k + 1, times_.size() - 1);
    const CicStencil st = cic_stencil_or_throw(fields_[k].spec, x, 0, "FieldHistory::grad_u");
    const Vec3 ga = interpolate_gradient(fields_[k], st);
    if (th == 0.0) return ga;
    return (1.0 - th) * ga + th * interpolate_gradient(fields_[k1], st);
}

double FieldHistory::value(double t, const Vec3& x) const
{
    double th;
    const std::size_t k = locate(t, th);
    const std::size_t k1 = std::min(k + 1, times_.size() - 1);
    const CicStencil st = cic_stencil_or_throw(fields_[k].spec, x, 0, "FieldHistory::value");
    const double a = interpolate(fields_[k], st);
    if (th == 0.0) return a;
    return (1.0 - th) * a + th * interpolate(fields_[k1], st);
}

void transport_point(const FieldHistory& hist, double t0, double t1, Vec3& x, Vec3& p, const PointwiseOptions& opt)
{
    if (t0 == t1) return;
    if (hist.size() < 2) throw Error(ErrorCode::configuration, "transport_point: history has fewer than two frames");
    const double frame_dt = (hist.t_end() - hist.t_begin()) / double(hist.size() - 1);
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(t1 - t0) / frame_dt * opt.steps_per_frame - 1e-9)));
    const double h = (t1 - t0) / steps;
    const double c = hist.c();
    auto rhs = [&](double t, const Vec3& xx, const Vec3& pp, Vec3& dx, Vec3& dp) {
        if (hist.system() == System::nv) {
            nv_rhs(interp_fields(hist.nv_view(t), xx, pp, c), pp, c, dx, dp);
        } else {
            dx = pp;
            dp = -hist.grad_u(t, xx);
        }
    };
    double t = t0;
    for (int s = 0; s < steps; ++s) {
        Vec3 k1x, k1p, k2x, k2p;
        rhs(t, x, p, k1x, k1p);
        rhs(t + 0.5 * h, x + (0.5 * h) * k1x, p + (0.5 * h) * k1p, k2x, k2p);
        x += h * k2x;
        p += h * k2p;
        t = t0 + (s + 1) * h;
    }
}

double eval_f_pointwise(const FieldHistory& hist, const Profile& prof, double t, const Vec3& x, const Vec3& p,
                        const PointwiseOptions& opt)
{
    if (hist.empty()) throw Error(ErrorCode::configuration, "eval_f_pointwise: empty history");
    if (hist.t_begin() > 1e-12) throw Error(ErrorCode::configuration, "eval_f_pointwise: history does not start at 0");
    if (t == 0.0) return eval_profile(prof, x, p);
    Vec3 X = x, P = p;
    transport_point(hist, t, 0.0, X, P, opt);
    const double fin = eval_profile(prof, X, P);
    if (hist.system() == System::vp || fin == 0.0) return fin;
    return fin * std::exp(4.0 * hist.value(t, x) - 4.0 * hist.value(0.0, X));
}

} // namespace nvlimit
