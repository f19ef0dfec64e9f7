#include "nvlimit/field_poisson.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>

#include "nvlimit/field_wave.hpp"

namespace nvlimit {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

template <class T>
struct FftwBuffer {
    T* ptr = nullptr;
    explicit FftwBuffer(std::size_t n) : ptr(static_cast<T*>(fftw_malloc(sizeof(T) * n)))
    {
        if (!ptr) throw std::bad_alloc();
    }
    ~FftwBuffer() { fftw_free(ptr); }
    FftwBuffer(const FftwBuffer&) = delete;
    FftwBuffer& operator=(const FftwBuffer&) = delete;
};

void check_support(const Grid3& rho)
{
    const GridSpec& s = rho.spec;
    const int n = s.n;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const bool face = i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1;
                const double v = rho.at(i, j, k);
                if (!std::isfinite(v)) throw Error(ErrorCode::rejected_input, "poisson_solve: non-finite density");
                if (face && v != 0.0)
                    throw Error(ErrorCode::support_violation,
                                "poisson_solve: source mass touches the domain boundary; enlarge the domain");
            }
}

} // namespace

struct PoissonSolver::Plans {
    int n = 0;
    int N = 0;      // padded size
    int m = 0;      // interior size for the Dirichlet solve
    std::size_t real_size = 0, complex_size = 0;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    fftw_plan dst = nullptr;
    std::vector<std::complex<double>> kernel_hat;
    std::vector<double> eigen; // 1D Dirichlet eigenvalues of the second difference

    ~Plans()
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
        if (dst) fftw_destroy_plan(dst);
    }
};

PoissonSolver::PoissonSolver(const GridSpec& spec, GreenKernel kernel) : spec_(spec), kernel_(kernel)
{
    spec_.validate();
    auto pl = std::make_unique<Plans>();
    const int n = spec.n, N = 2 * n;
    pl->n = n;
    pl->N = N;
    pl->m = n - 2;
    pl->real_size = static_cast<std::size_t>(N) * N * N;
    pl->complex_size = static_cast<std::size_t>(N) * N * (N / 2 + 1);

    FftwBuffer<double> real(pl->real_size);
    FftwBuffer<fftw_complex> cplx(pl->complex_size);
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        pl->forward = fftw_plan_dft_r2c_3d(N, N, N, real.ptr, cplx.ptr, FFTW_ESTIMATE);
        pl->backward = fftw_plan_dft_c2r_3d(N, N, N, cplx.ptr, real.ptr, FFTW_ESTIMATE);
        if (kernel == GreenKernel::lattice_consistent) {
            const int m = pl->m;
            FftwBuffer<double> a(static_cast<std::size_t>(m) * m * m), b(static_cast<std::size_t>(m) * m * m);
            pl->dst = fftw_plan_r2r_3d(m, m, m, a.ptr, b.ptr, FFTW_RODFT00, FFTW_RODFT00, FFTW_RODFT00, FFTW_ESTIMATE);
        }
    }
    if (!pl->forward || !pl->backward || (kernel == GreenKernel::lattice_consistent && !pl->dst))
        throw Error(ErrorCode::configuration, "PoissonSolver: FFTW planning failed");

    // Green kernel on the padded torus, distance measured with wrap-around.
    const double h = spec.h;
    for (int i = 0; i < N; ++i) {
        const int mi = i < n ? i : i - N;
        for (int j = 0; j < N; ++j) {
            const int mj = j < n ? j : j - N;
            for (int k = 0; k < N; ++k) {
                const int mk = k < n ? k : k - N;
                const double r = std::sqrt(double(mi) * mi + double(mj) * mj + double(mk) * mk);
                real.ptr[(static_cast<std::size_t>(i) * N + j) * N + k] =
                    r == 0.0 ? self_cell_coefficient / h : 1.0 / (h * r);
            }
        }
    }
    fftw_execute_dft_r2c(pl->forward, real.ptr, cplx.ptr);
    pl->kernel_hat.resize(pl->complex_size);
    for (std::size_t q = 0; q < pl->complex_size; ++q) pl->kernel_hat[q] = {cplx.ptr[q][0], cplx.ptr[q][1]};

    if (kernel == GreenKernel::lattice_consistent) {
        const int m = pl->m;
        pl->eigen.resize(m);
        for (int k = 0; k < m; ++k) pl->eigen[k] = (2.0 * std::cos(pi * (k + 1) / (m + 1)) - 2.0) / (h * h);
    }
    plans_ = std::move(pl);
}

PoissonSolver::~PoissonSolver() = default;

Grid3 PoissonSolver::convolve(const Grid3& rho) const
{
    const Plans& pl = *plans_;
    const int n = pl.n, N = pl.N;
    FftwBuffer<double> real(pl.real_size);
    FftwBuffer<fftw_complex> cplx(pl.complex_size);
    std::fill(real.ptr, real.ptr + pl.real_size, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) real.ptr[(static_cast<std::size_t>(i) * N + j) * N + k] = rho.at(i, j, k);
    fftw_execute_dft_r2c(pl.forward, real.ptr, cplx.ptr);
    for (std::size_t q = 0; q < pl.complex_size; ++q) {
        const std::complex<double> v = std::complex<double>(cplx.ptr[q][0], cplx.ptr[q][1]) * pl.kernel_hat[q];
        cplx.ptr[q][0] = v.real();
        cplx.ptr[q][1] = v.imag();
    }
    fftw_execute_dft_c2r(pl.backward, cplx.ptr, real.ptr);
    const double h = spec_.h;
    const double scale = -h * h * h / static_cast<double>(pl.real_size);
    Grid3 U(spec_);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) U.at(i, j, k) = scale * real.ptr[(static_cast<std::size_t>(i) * N + j) * N + k];
    return U;
}

void PoissonSolver::dirichlet_interior(const Grid3& rho, Grid3& U) const
{
    // Lap_h V = 4 pi rho on interior nodes with V = U on the faces.
    const Plans& pl = *plans_;
    const int n = pl.n, m = pl.m;
    const double inv_h2 = 1.0 / (spec_.h * spec_.h);
    const std::size_t msize = static_cast<std::size_t>(m) * m * m;
    FftwBuffer<double> a(msize), b(msize);
    auto mi = [m](int i, int j, int k) { return (static_cast<std::size_t>(i) * m + j) * m + k; };
    for (int i = 1; i < n - 1; ++i)
        for (int j = 1; j < n - 1; ++j)
            for (int k = 1; k < n - 1; ++k) {
                double r = four_pi * rho.at(i, j, k);
                if (i == 1) r -= U.at(0, j, k) * inv_h2;
                if (i == n - 2) r -= U.at(n - 1, j, k) * inv_h2;
                if (j == 1) r -= U.at(i, 0, k) * inv_h2;
                if (j == n - 2) r -= U.at(i, n - 1, k) * inv_h2;
                if (k == 1) r -= U.at(i, j, 0) * inv_h2;
                if (k == n - 2) r -= U.at(i, j, n - 1) * inv_h2;
                a.ptr[mi(i - 1, j - 1, k - 1)] = r;
            }
    fftw_execute_r2r(pl.dst, a.ptr, b.ptr);
    const double norm_factor = 1.0 / std::pow(2.0 * (m + 1), 3);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) b.ptr[mi(i, j, k)] *= norm_factor / (pl.eigen[i] + pl.eigen[j] + pl.eigen[k]);
    fftw_execute_r2r(pl.dst, b.ptr, a.ptr);
    for (int i = 1; i < n - 1; ++i)
        for (int j = 1; j < n - 1; ++j)
            for (int k = 1; k < n - 1; ++k) U.at(i, j, k) = a.ptr[mi(i - 1, j - 1, k - 1)];
}

Grid3 PoissonSolver::potential(const Grid3& rho) const
{
    if (!rho.spec.same_shape(spec_)) throw Error(ErrorCode::configuration, "PoissonSolver: grid shape differs");
    check_support(rho);
    Grid3 U = convolve(rho);
    if (kernel_ == GreenKernel::lattice_consistent) dirichlet_interior(rho, U);
    return U;
}

NewtonianField PoissonSolver::solve(const Grid3& rho, double t) const
{
    NewtonianField nf;
    nf.U = potential(rho);
    nf.gradU = gradient(nf.U);
    nf.t = t;
    return nf;
}

NewtonianField poisson_solve(const Grid3& rho, GreenKernel kernel)
{
    return PoissonSolver(rho.spec, kernel).solve(rho);
}

Grid3 gsharp_from_fin(const ParticleEnsemble& ens, const PoissonSolver& solver, int margin)
{
    if (ens.empty()) return Grid3(solver.spec());
    const SourceGrid rho = deposit_source(ens, solver.spec(), std::numeric_limits<double>::infinity(), margin);
    return solver.potential(rho.mu);
}

Grid3 gsharp_from_fin(const ParticleEnsemble& ens, const GridSpec& spec, GreenKernel kernel, int margin)
{
    if (ens.empty()) return Grid3(spec);
    return gsharp_from_fin(ens, PoissonSolver(spec, kernel), margin);
}

} // namespace nvlimit
