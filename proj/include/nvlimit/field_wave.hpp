#pragma once

#include <functional>
#include <vector>

#include "nvlimit/grid.hpp"
#include "nvlimit/phase_space.hpp"
#include "nvlimit/quadrature.hpp"

namespace nvlimit {

/// mu(t,x) = int f dp / sqrt(1 + |p|^2/c^2) on the nodes (density units).
struct SourceGrid {
    Grid3 mu;
};

/// Current quadrature mass of marker i: w_i * (f_i / f0_i) * J_i. The phase-space
/// volume ratio J_i is carried in the ensemble (1 for Vlasov-Poisson markers).
double marker_mass(const ParticleEnsemble& ens, std::size_t i);

/// CIC deposition of marker_mass / sqrt(1 + |p|^2/c^2). Pass c = infinity for
/// the plain mass density. Markers whose stencil leaves the node range shrunk
/// by `margin` raise support_violation. Per-worker private grids are summed in
/// worker order.
SourceGrid deposit_source(const ParticleEnsemble& ens, const GridSpec& spec, double c, int margin = 1, int workers = 1);

enum class WaveBoundary { absorbing, periodic };

struct WaveOptions {
    double cfl_safety = 0.9;
    WaveBoundary boundary = WaveBoundary::absorbing;
    int sponge_width = 4;
    double sponge_strength = 0.25; // per-step damping of the increment at the outer face
};

/// Leapfrog state. `phi` is the newest level (time t), `phi_prev` the level at
/// t - dt, and `dphi_dt` the centred time derivative at t - dt.
struct FieldState {
    Grid3 phi;
    Grid3 phi_prev;
    Grid3 dphi_dt;
    double c = 1.0;
    double t = 0.0;
    double dt = 0.0;
    WaveOptions options;

    double time_prev() const { return t - dt; }
};

/// Largest time step allowed by the configured safety factor.
double cfl_time_step(double c, double h, double cfl_safety);

/// Throws configuration error if c*dt*sqrt(3)/h exceeds cfl_safety or cfl_safety >= 1.
void check_cfl(double c, double dt, double h, double cfl_safety);

/// phi^0 = g_sharp / c^2 and a second-order Taylor start
/// phi^1 = phi^0 + dt h_sharp / c^2 + dt^2/2 (c^2 Lap phi^0 - 4 pi mu^0).
FieldState init_field(const Grid3& g_sharp, const Grid3& h_sharp, double c, double dt, const SourceGrid& src0,
                      const WaveOptions& options = {});

/// phi^{n+1} = 2 phi^n - phi^{n-1} + dt^2 (c^2 Lap phi^n - 4 pi mu^n), followed by
/// the boundary treatment; advances t by dt.
void wave_step(FieldState& fs, const SourceGrid& src);

/// Discrete energy of the leapfrog pair (phi_prev, phi), exactly conserved by
/// the periodic source-free scheme.
double wave_energy(const FieldState& fs);

/// Sponge damping factor at a node (0 in the interior).
double sponge_sigma(const GridSpec& spec, const WaveOptions& opt, int i, int j, int k);

/// Nodes at least `sponge_width` layers away from every face.
bool in_interior(const GridSpec& spec, int sponge_width, int i, int j, int k);

/// A field with value and gradient callables (Kirchhoff data, oracle inputs).
struct SmoothField {
    std::function<double(const Vec3&)> value;
    std::function<Vec3(const Vec3&)> gradient;
};

SmoothField zero_field();
SmoothField constant_field(double k);

/// Trilinear interpolation of a grid and of its centred-difference gradient;
/// outside the grid it continues as monopole / |x - center|.
SmoothField grid_field(const Grid3& g, double monopole, Vec3 center);

/// Homogeneous wave solution with data (g0, g1):
/// d/dt( t M[g0](ct) ) + t M[g1](ct), M the spherical mean about x, with the
/// time derivative expanded as M[g0] + c t M[omega . grad g0].
double kirchhoff_eval(const SmoothField& g0, const SmoothField& g1, double c, double t, const Vec3& x,
                      const SphereRule& rule);
double kirchhoff_eval(const SmoothField& g0, const SmoothField& g1, double c, double t, const Vec3& x, int order);

/// Worst positive excursion max_nodes (phi - phi_hom) of the retarded part.
double psi_positivity_audit(const Grid3& phi, const Grid3& phi_hom);

} // namespace nvlimit
