#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nvlimit/core.hpp"

namespace nvlimit {

/// exp(1 - 1/(1 - s^2)) on |s| < 1, exactly 0 elsewhere. C-infinity, peak 1 at s = 0.
double bump(double s);
/// d/ds of bump(s).
double bump_derivative(double s);

enum class ProfileKind { product_bump, radial_bump };

/// Compactly supported initial distribution f_in(x, p).
///
/// product_bump tensorises the 1D bump over the six phase-space axes, so its
/// spatial support is the cube |x_j - cx_j| < radius_x. radial_bump uses
/// bump(|x - cx| / radius_x) * bump(|p - cp| / radius_p), a ball in each space.
struct Profile {
    ProfileKind kind = ProfileKind::radial_bump;
    Vec3 center_x;
    Vec3 center_p;
    double radius_x = 1.0;
    double radius_p = 1.0;
    double amplitude = 1.0;

    void validate() const;
    /// sup |x| over the spatial support.
    double support_radius_x() const;
    /// sup |p| over the momentum support.
    double support_radius_p() const;
};

double eval_profile(const Profile& prof, const Vec3& x, const Vec3& p);

/// Markers carrying the distribution. Positions and momenta evolve; w and f0
/// are fixed at sampling; f is the current carried value.
struct ParticleEnsemble {
    std::vector<Vec3> x;
    std::vector<Vec3> p;
    std::vector<double> w;    // phase-space cell volume * f_in(x_i, p_i)
    std::vector<double> f0;   // f_in at the marker's initial point
    std::vector<double> f;    // current carried value
    std::vector<double> phi0; // initial field at the marker's initial position
    std::vector<double> jac;  // phase-space volume of the marker cell relative to t = 0
    double R = 0.0;           // spatial support radius of f_in
    double cell_volume = 0.0;
    double mass_error_estimate = 0.0; // |sum w - reference mass| / reference mass

    std::size_t size() const { return x.size(); }
    bool empty() const { return x.empty(); }
    double total_mass() const;
    void reserve(std::size_t n);
    void push_back(const Vec3& xi, const Vec3& pi, double wi, double fi);
};

struct LatticeCounts {
    int nx = 4; // lattice points per spatial axis
    int np = 4; // lattice points per momentum axis
};

/// Deterministic tensor-lattice quadrature of f_in over its support box.
/// Points sit at cell midpoints; jitter > 0 moves each marker uniformly within
/// `jitter` times its cell (seeded, so still reproducible). Zero-valued markers
/// are dropped.
ParticleEnsemble sample_ensemble(const Profile& prof, LatticeCounts counts, std::uint64_t seed, double jitter = 0.0);
ParticleEnsemble sample_ensemble(const Profile& prof, int n_per_axis, std::uint64_t seed, double jitter = 0.0);

/// High-resolution tensor quadrature of the total mass of f_in (reference for
/// the sampling error).
double reference_mass(const Profile& prof, int points_per_axis = 64);

struct SupportStats {
    double R = 0.0;
    double Pc = 1.0;
    double Q = 0.0;
};

SupportStats initial_support(const ParticleEnsemble& ens);

/// Running-max update: Pc' = max(Pc, max|p_i| + 1), Q' = max(Q, max|phi_i|).
SupportStats support_update(const SupportStats& stats, const ParticleEnsemble& ens, std::span<const double> phi_at_particles);

double max_abs_position(const ParticleEnsemble& ens);

} // namespace nvlimit
