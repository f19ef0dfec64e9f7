#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "nvlimit/field_poisson.hpp"
#include "nvlimit/field_wave.hpp"
#include "nvlimit/grid.hpp"
#include "nvlimit/phase_space.hpp"

namespace nvlimit {

struct ForceSample {
    double phi = 0.0;
    double dphi_dt = 0.0;
    Vec3 grad_phi;
    double s_phi = 0.0; // dphi/dt + p_hat . grad phi
    Vec3 grad_U;
};

/// Value of a node field at `st` and its gradient, obtained by trilinear
/// interpolation of centred node differences (one-sided on the faces). This is
/// the same result as interpolating the grids returned by gradient().
Vec3 interpolate_gradient(const Grid3& g, const CicStencil& st);

/// A time slice of the Nordstrom field: phi = (1 - theta) phi_a + theta phi_b,
/// and dphi/dt either from stored derivative grids (interpolated with the same
/// theta) or, when dphi_a is null, the difference (phi_b - phi_a) / span.
struct NvFieldView {
    const Grid3* phi_a = nullptr;
    const Grid3* phi_b = nullptr;
    double theta = 0.0;
    const Grid3* dphi_a = nullptr;
    const Grid3* dphi_b = nullptr;
    double span = 0.0;
};

ForceSample interp_fields(const NvFieldView& view, const Vec3& x, const Vec3& p, double c);

/// Fields of a leapfrog state at its older level t - dt, where both phi and the
/// centred dphi/dt are available.
ForceSample interp_fields(const FieldState& fs, const Vec3& x, const Vec3& p);

/// grad U interpolated from a Newtonian field.
Vec3 interp_grad_u(const NewtonianField& nf, const Vec3& x);

/// dX/ds = p_hat, dP/ds = -S(phi) P - c^2 grad phi / gamma.
void nv_rhs(const ForceSample& fsm, const Vec3& p, double c, Vec3& dx, Vec3& dp);

/// ln f integrated along tracked markers with d ln f / ds = 4 S(phi) by the
/// pusher's midpoint rule. S comes from a C2 field (cubic B-spline in space,
/// linear in time across a step), so e^{-4 phi} f is conserved by the exact flow
/// and the measured drift is the integration error of the scheme.
struct ConservationTrack {
    std::vector<std::size_t> index;
    std::vector<double> ln_f;
    std::vector<double> phi_begin; // smooth field at the marker's initial point

    void init(const ParticleEnsemble& ens, std::vector<std::size_t> which, const Grid3& phi_start);
    /// max_i |exp(ln_f_i - 4 phi(X_i)) / (f0_i exp(-4 phi_begin_i)) - 1|, phi the smooth field of `phi_now`.
    double max_drift(const ParticleEnsemble& ens, const Grid3& phi_now) const;
};

/// One explicit midpoint step of the Nordstrom characteristics from fs.t - dt to
/// fs.t, called right after wave_step so that fs holds phi^n (phi_prev), the
/// centred dphi^n (dphi_dt) and phi^{n+1} (phi). Carried values are set from the
/// representation f = f0 exp(4 phi(t,X) - 4 phi0(X(0))) and the phase-volume
/// ratio from J = exp(-3 (phi(t,X) - phi0(X(0)))).
void push_nv(ParticleEnsemble& ens, const FieldState& fs, int workers = 1, ConservationTrack* track = nullptr);

/// One explicit midpoint step of dX/ds = p, dP/ds = -grad U(X) for the
/// self-consistent Vlasov-Poisson system: the half-step field is re-solved from
/// the half-advanced markers. Returns nothing; nf_n is the field at the current
/// marker positions.
void push_vp(ParticleEnsemble& ens, const NewtonianField& nf_n, const PoissonSolver& solver, double dt, int margin = 1,
             int workers = 1);

/// Push in a prescribed (external) Newtonian field, constant over the step.
void push_vp_external(ParticleEnsemble& ens, const std::function<Vec3(const Vec3&)>& grad_u, double dt);

enum class System { nv, vp };

/// Stored field frames for backward characteristics: (t, phi, dphi/dt) for the
/// Nordstrom run or (t, U) for the Newtonian one. Between frames the fields are
/// interpolated linearly in time.
class FieldHistory {
public:
    FieldHistory() = default;
    FieldHistory(System system, double c) : system_(system), c_(c) {}

    System system() const { return system_; }
    double c() const { return c_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }
    double t_begin() const { return times_.front(); }
    double t_end() const { return times_.back(); }
    double time(std::size_t k) const { return times_[k]; }
    const Grid3& field(std::size_t k) const { return fields_[k]; }
    const Grid3& dfield(std::size_t k) const { return dfields_[k]; }
    const GridSpec& spec() const { return fields_.front().spec; }

    /// Frames must arrive with strictly increasing times.
    void append(double t, const Grid3& field, const Grid3* dfield = nullptr);

    /// Nordstrom field slice at time t (configuration error outside [t_begin, t_end]).
    NvFieldView nv_view(double t) const;
    /// grad U at (t, x).
    Vec3 grad_u(double t, const Vec3& x) const;
    double value(double t, const Vec3& x) const;

private:
    std::size_t locate(double t, double& theta) const;

    System system_ = System::vp;
    double c_ = 0.0;
    std::vector<double> times_;
    std::vector<Grid3> fields_;
    std::vector<Grid3> dfields_;
};

/// Inputs shared by all pointwise evaluations.
struct PointwiseOptions {
    int steps_per_frame = 4; // backward midpoint steps per history interval
};

/// f(t, x, p) by integrating the characteristic backwards to s = 0 through the
/// history and applying the representation (Nordstrom) or plain transport
/// (Newtonian). Throws configuration error when the history does not cover
/// [0, t], support_violation when the characteristic leaves the grid.
double eval_f_pointwise(const FieldHistory& hist, const Profile& prof, double t, const Vec3& x, const Vec3& p,
                        const PointwiseOptions& opt = {});

/// Backward (dt < 0) or forward characteristic transport of a single point
/// through a history between t0 and t1.
void transport_point(const FieldHistory& hist, double t0, double t1, Vec3& x, Vec3& p, const PointwiseOptions& opt = {});

} // namespace nvlimit
