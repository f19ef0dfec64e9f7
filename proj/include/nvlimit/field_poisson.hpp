#pragma once

#include <array>
#include <memory>

#include "nvlimit/grid.hpp"
#include "nvlimit/phase_space.hpp"

namespace nvlimit {

/// Cell average of 1/r over a cube of side h is self_cell_coefficient / h.
inline constexpr double self_cell_coefficient = 2.3800772510164599;

enum class GreenKernel {
    /// Zero-padded convolution with the tabulated 1/r kernel on every node.
    continuum,
    /// Boundary values from the continuum convolution, interior from an exact
    /// Dirichlet solve of the 7-point Laplacian, so that Lap_h U = 4 pi rho holds
    /// to roundoff (the discrete statics of the wave solver).
    lattice_consistent,
};

struct NewtonianField {
    Grid3 U;
    std::array<Grid3, 3> gradU;
    double t = 0.0;
};

/// Free-space Poisson solver for U = -int rho(y)/|x - y| dy. FFTW plans and the
/// kernel transform are built once per grid; solve() allocates its own work
/// arrays, so independent solves may run concurrently.
class PoissonSolver {
public:
    explicit PoissonSolver(const GridSpec& spec, GreenKernel kernel = GreenKernel::continuum);
    ~PoissonSolver();
    PoissonSolver(const PoissonSolver&) = delete;
    PoissonSolver& operator=(const PoissonSolver&) = delete;

    const GridSpec& spec() const { return spec_; }
    GreenKernel kernel() const { return kernel_; }

    /// Potential only. rho must vanish on the outer node layer.
    Grid3 potential(const Grid3& rho) const;
    NewtonianField solve(const Grid3& rho, double t = 0.0) const;

private:
    struct Plans;
    Grid3 convolve(const Grid3& rho) const;
    void dirichlet_interior(const Grid3& rho, Grid3& U) const;

    GridSpec spec_;
    GreenKernel kernel_;
    std::unique_ptr<Plans> plans_;
};

NewtonianField poisson_solve(const Grid3& rho, GreenKernel kernel = GreenKernel::continuum);

/// g_sharp(x) = -int int f_in(y,p) / |y - x| dp dy from the t = 0 ensemble (plain weights).
Grid3 gsharp_from_fin(const ParticleEnsemble& ens, const GridSpec& spec, GreenKernel kernel = GreenKernel::continuum,
                      int margin = 1);
Grid3 gsharp_from_fin(const ParticleEnsemble& ens, const PoissonSolver& solver, int margin = 1);

} // namespace nvlimit
