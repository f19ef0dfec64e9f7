#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "nvlimit/field_poisson.hpp"
#include "nvlimit/field_wave.hpp"
#include "util.hpp"

using namespace nvlimit;
using testutil::fill;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

WaveOptions periodic_options()
{
    WaveOptions o;
    o.boundary = WaveBoundary::periodic;
    o.sponge_width = 0;
    return o;
}

/// Plane wave sin(k (x - c t)) on a periodic grid of n nodes; max nodal error at T = L / (2c).
double plane_wave_error(int n, double c, double* bound)
{
    const GridSpec s = GridSpec::centered(n, 1.0);
    const double L = n * s.h, k = 2.0 * pi / L, T = 0.5 * L / c;
    const int steps = static_cast<int>(std::ceil(T / cfl_time_step(c, s.h, 0.9)));
    const double dt = T / steps;
    const Grid3 g = fill(s, [&](const Vec3& y) { return c * c * std::sin(k * y.x); });
    const Grid3 hs = fill(s, [&](const Vec3& y) { return c * c * (-c * k * std::cos(k * y.x)); });
    WaveOptions o = periodic_options();
    FieldState fs = init_field(g, hs, c, dt, SourceGrid{Grid3(s)}, o);
    const SourceGrid none{Grid3(s)};
    for (int q = 1; q < steps; ++q) wave_step(fs, none);
    CHECK(fs.t == doctest::Approx(T));
    double err = 0.0;
    for (int i = 0; i < n; ++i)
        err = std::max(err, std::abs(fs.phi.at(i, n / 2, n / 2) - std::sin(k * (s.node(i, 0, 0).x - c * T))));
    // Leading phase error of the leapfrog scheme along an axis: k c T (k h)^2 (1 - nu^2) / 24.
    const double nu = c * dt / s.h, kh = k * s.h;
    *bound = k * c * T * kh * kh * (1.0 - nu * nu) / 24.0;
    return err;
}

SmoothField radial_bump_field(double radius)
{
    return {[radius](const Vec3& y) { return bump(norm(y) / radius); },
            [radius](const Vec3& y) {
                const double r = norm(y);
                if (r == 0.0) return Vec3{};
                return (bump_derivative(r / radius) / (radius * r)) * y;
            }};
}

} // namespace

TEST_SUITE("field_wave")
{
    TEST_CASE("a marker on a node deposits its whole mass there")
    {
        const GridSpec s = GridSpec::centered(9, 1.0);
        const ParticleEnsemble ens = testutil::single_marker(s.node(4, 3, 5), {}, 0.7);
        const SourceGrid src = deposit_source(ens, s, 2.0);
        CHECK(src.mu.at(4, 3, 5) * s.h * s.h * s.h == doctest::Approx(0.7).epsilon(1e-15));
        double rest = 0.0;
        for (double v : src.mu.data) rest += v;
        CHECK(rest * s.h * s.h * s.h == doctest::Approx(0.7).epsilon(1e-15));
    }

    TEST_CASE("relativistic weight of the deposit")
    {
        const GridSpec s = GridSpec::centered(9, 1.0);
        const Vec3 p{3.0, 0.0, 4.0};
        const double c = 2.0, w = 0.7;
        const ParticleEnsemble ens = testutil::single_marker({0.05, -0.1, 0.2}, p, w);
        double total = 0.0;
        for (double v : deposit_source(ens, s, c).mu.data) total += v;
        // 1 + |p|^2/c^2 = 1 + 25/4
        CHECK(total * s.h * s.h * s.h == doctest::Approx(w / std::sqrt(7.25)).epsilon(1e-14));
        double plain = 0.0;
        for (double v : deposit_source(ens, s, inf).mu.data) plain += v;
        CHECK(plain * s.h * s.h * s.h == doctest::Approx(w).epsilon(1e-14));
    }

    TEST_CASE("deposition conserves the weighted mass and is deterministic across workers")
    {
        const GridSpec s = GridSpec::centered(20, 2.0);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> ux(-1.2, 1.2), up(-3.0, 3.0), uw(0.1, 1.0);
        ParticleEnsemble ens;
        for (int q = 0; q < 2000; ++q) {
            ens.push_back({ux(rng), ux(rng), ux(rng)}, {up(rng), up(rng), up(rng)}, uw(rng), 1.0);
            ens.f.back() = 1.3;
            ens.jac.back() = 0.9;
        }
        const double c = 3.0;
        double expect = 0.0;
        for (std::size_t i = 0; i < ens.size(); ++i) expect += ens.w[i] * 1.3 * 0.9 / gamma_factor(ens.p[i], c);
        const SourceGrid one = deposit_source(ens, s, c, 1, 1);
        const SourceGrid three = deposit_source(ens, s, c, 1, 3);
        const SourceGrid again = deposit_source(ens, s, c, 1, 3);
        double total = 0.0;
        for (double v : three.mu.data) total += v;
        CHECK(std::abs(total * s.h * s.h * s.h - expect) <= 1e-12 * expect);
        CHECK(again.mu.data == three.mu.data);
        double diff = 0.0;
        for (std::size_t q = 0; q < one.mu.data.size(); ++q) diff = std::max(diff, std::abs(one.mu.data[q] - three.mu.data[q]));
        CHECK(diff <= 1e-12 * one.mu.max_abs());
        for (double v : one.mu.data) CHECK(v >= 0.0);
    }

    TEST_CASE("a marker outside the deposition region is a support violation")
    {
        const GridSpec s = GridSpec::centered(9, 1.0);
        const ParticleEnsemble ens = testutil::single_marker({0.99, 0.0, 0.0}, {}, 1.0);
        try {
            deposit_source(ens, s, 1.0, 1);
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::support_violation);
        }
    }

    TEST_CASE("CFL violation is a configuration error")
    {
        const GridSpec s = GridSpec::centered(9, 1.0);
        const Grid3 z(s);
        const double dt = 1.1 * cfl_time_step(2.0, s.h, 0.9);
        CHECK_THROWS_AS(init_field(z, z, 2.0, dt, SourceGrid{z}), Error);
        CHECK_NOTHROW(init_field(z, z, 2.0, cfl_time_step(2.0, s.h, 0.9), SourceGrid{z}));
        CHECK_THROWS_AS(check_cfl(1.0, 0.01, s.h, 1.0), Error);
    }

    TEST_CASE("mismatched grid shapes are rejected")
    {
        const Grid3 a(GridSpec::centered(9, 1.0)), b(GridSpec::centered(10, 1.0));
        CHECK_THROWS_AS(init_field(a, b, 1.0, 0.01, SourceGrid{a}), Error);
    }

    TEST_CASE("a constant field without source stays constant")
    {
        const GridSpec s = GridSpec::centered(16, 1.0);
        const double c = 2.0, dt = cfl_time_step(c, s.h, 0.9);
        const Grid3 g(s, 0.3 * c * c), z(s);
        FieldState per = init_field(g, z, c, dt, SourceGrid{z}, periodic_options());
        for (int q = 0; q < 20; ++q) wave_step(per, SourceGrid{z});
        for (double v : per.phi.data) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
        // With the absorbing boundary the interior is untouched until the boundary signal arrives.
        FieldState abs = init_field(g, z, c, dt, SourceGrid{z});
        for (int q = 0; q < 3; ++q) wave_step(abs, SourceGrid{z});
        for (int i = 6; i < 10; ++i)
            for (int j = 6; j < 10; ++j)
                for (int k = 6; k < 10; ++k) CHECK(abs.phi.at(i, j, k) == doctest::Approx(0.3).epsilon(1e-14));
    }

    TEST_CASE("axis plane wave follows the d'Alembert translation at second order")
    {
        double b16 = 0, b32 = 0;
        const double e16 = plane_wave_error(16, 1.5, &b16);
        const double e32 = plane_wave_error(32, 1.5, &b32);
        CHECK(std::log2(e16 / e32) >= 1.8);
        CHECK(e16 <= 1.25 * b16);
        CHECK(e32 <= 1.25 * b32);
    }

    TEST_CASE("f_in = 0 and h_sharp = 0 give an identically zero field")
    {
        const GridSpec s = GridSpec::centered(12, 1.0);
        const Grid3 z(s);
        FieldState fs = init_field(z, z, 4.0, cfl_time_step(4.0, s.h, 0.9), SourceGrid{z});
        for (int q = 0; q < 30; ++q) {
            wave_step(fs, SourceGrid{z});
            CHECK(fs.phi.max_abs() == 0.0);
            CHECK(fs.dphi_dt.max_abs() == 0.0);
        }
    }

    TEST_CASE("initial field of a uniform ball matches the closed-form potential")
    {
        const GridSpec s = GridSpec::centered(33, 4.0);
        const double radius = 1.0, mass = 1.5, c = 2.0;
        const ParticleEnsemble ens = testutil::uniform_ball({}, radius, mass, 0.25 * s.h);
        const Grid3 g = gsharp_from_fin(ens, s, GreenKernel::continuum);
        const Grid3 z(s);
        const FieldState fs = init_field(g, z, c, cfl_time_step(c, s.h, 0.9), deposit_source(ens, s, c));
        double worst = 0.0;
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.n; ++j)
                for (int k = 0; k < s.n; ++k) {
                    const double r = norm(s.node(i, j, k));
                    if (r < 1.5 * radius) continue;
                    const double expect = testutil::ball_potential(mass, radius, r) / (c * c);
                    worst = std::max(worst, std::abs(fs.phi_prev.at(i, j, k) - expect) / std::abs(expect));
                }
        CHECK(worst <= 1e-2);
    }

    TEST_CASE("doubling c quarters the initial field")
    {
        const GridSpec s = GridSpec::centered(12, 1.0);
        const Grid3 g = fill(s, [](const Vec3& y) { return -1.0 / std::sqrt(dot(y, y) + 0.3); }), z(s);
        const FieldState a = init_field(g, z, 2.0, cfl_time_step(4.0, s.h, 0.9), SourceGrid{z});
        const FieldState b = init_field(g, z, 4.0, cfl_time_step(4.0, s.h, 0.9), SourceGrid{z});
        for (std::size_t q = 0; q < g.data.size(); ++q) CHECK(b.phi_prev.data[q] == 0.25 * a.phi_prev.data[q]);
    }

    TEST_CASE("static source settles to the Newtonian potential over c^2")
    {
        const GridSpec s = GridSpec::centered(32, 4.0);
        const double c = 4.0;
        const ParticleEnsemble ens = testutil::uniform_ball({}, 1.0, 1.0, 0.25 * s.h);
        const SourceGrid src = deposit_source(ens, s, inf);
        const NewtonianField nf = poisson_solve(src.mu, GreenKernel::continuum);
        const Grid3 z(s);
        const double T = 20.0;
        const int steps = static_cast<int>(std::ceil(T / cfl_time_step(c, s.h, 0.9)));
        FieldState fs = init_field(z, z, c, T / steps, src);
        for (int q = 1; q < steps; ++q) wave_step(fs, src);
        double worst = 0.0, scale = 0.0;
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.n; ++j)
                for (int k = 0; k < s.n; ++k) {
                    if (norm(s.node(i, j, k)) > 2.0) continue;
                    worst = std::max(worst, std::abs(c * c * fs.phi.at(i, j, k) - nf.U.at(i, j, k)));
                    scale = std::max(scale, std::abs(nf.U.at(i, j, k)));
                }
        CHECK(worst <= 2e-2 * scale);
    }

    TEST_CASE("Kirchhoff evaluation of constants and of a quadratic")
    {
        const Vec3 x{0.3, -0.4, 1.1};
        CHECK(kirchhoff_eval(constant_field(2.5), zero_field(), 3.0, 0.7, x, 17) == doctest::Approx(2.5).epsilon(1e-14));
        CHECK(kirchhoff_eval(zero_field(), constant_field(2.5), 3.0, 0.7, x, 17) == doctest::Approx(2.5 * 0.7).epsilon(1e-14));
        // |x|^2 + 3 c^2 t^2 solves the wave equation with data (|x|^2, 0).
        const SmoothField quad{[](const Vec3& y) { return dot(y, y); }, [](const Vec3& y) { return 2.0 * y; }};
        const double c = 2.0, t = 0.6;
        CHECK(kirchhoff_eval(quad, zero_field(), c, t, x, 17) ==
              doctest::Approx(dot(x, x) + 3.0 * c * c * t * t).epsilon(1e-13));
        CHECK_THROWS_AS(kirchhoff_eval(quad, zero_field(), c, t, x, 11), Error);
    }

    TEST_CASE("strong Huygens principle for compactly supported data")
    {
        const SmoothField b = radial_bump_field(1.0);
        // Sphere of radius 1 about (5, 0, 0) stays at distance >= 4 from the support.
        CHECK(kirchhoff_eval(b, b, 1.0, 1.0, {5.0, 0.0, 0.0}, 59) == 0.0);
        // Inside the light cone once the sphere has swept past the support.
        CHECK(kirchhoff_eval(b, b, 1.0, 3.0, {0.0, 0.0, 0.0}, 59) == 0.0);
        CHECK(kirchhoff_eval(b, zero_field(), 1.0, 0.0, {}, 17) == doctest::Approx(1.0));
    }

    TEST_CASE("psi audit vanishes without matter")
    {
        const GridSpec s = GridSpec::centered(10, 1.0);
        const Grid3 g = fill(s, [](const Vec3& y) { return std::cos(y.x) * y.y; });
        CHECK(psi_positivity_audit(g, g) == 0.0);
        CHECK_THROWS_AS(psi_positivity_audit(g, Grid3(GridSpec::centered(11, 1.0))), Error);
    }

    TEST_CASE("retarded part stays nonpositive for a nonnegative source")
    {
        // Worst positive excursion relative to max |phi| before the front reaches the
        // absorbing layer, at h and h/2; the same source markers feed both grids.
        const ParticleEnsemble ens = testutil::uniform_ball({}, 0.8, 1.0, 0.06);
        auto audit = [&](int n) {
            const GridSpec s = GridSpec::centered(n, 3.0);
            const double c = 2.0, T = 1.0;
            const SourceGrid src = deposit_source(ens, s, c);
            const Grid3 z(s);
            const int steps = static_cast<int>(std::ceil(T / cfl_time_step(c, s.h, 0.9)));
            FieldState fs = init_field(z, z, c, T / steps, src), hom = init_field(z, z, c, T / steps, SourceGrid{z});
            double worst = -inf, scale = 0.0;
            for (int q = 1; q < steps; ++q) {
                wave_step(fs, src);
                wave_step(hom, SourceGrid{z});
                worst = std::max(worst, psi_positivity_audit(fs.phi, hom.phi));
                scale = std::max(scale, fs.phi.max_abs());
            }
            return worst / scale;
        };
        const double coarse = audit(24), fine = audit(47);
        CHECK(coarse <= 1e-3);
        CHECK(fine < 0.25 * coarse);
    }

    TEST_CASE("periodic source-free energy is conserved")
    {
        const GridSpec s = GridSpec::centered(16, 1.0);
        const double L = s.n * s.h, k = 2.0 * pi / L, c = 1.0;
        const Grid3 g = fill(s, [&](const Vec3& y) {
            return std::sin(k * y.x) * std::cos(2 * k * y.y) + 0.5 * std::sin(k * (y.x + y.z));
        });
        const Grid3 hs = fill(s, [&](const Vec3& y) { return 0.3 * std::cos(k * y.y); });
        FieldState fs = init_field(g, hs, c, cfl_time_step(c, s.h, 0.9), SourceGrid{Grid3(s)}, periodic_options());
        const double e0 = wave_energy(fs);
        double worst = 0.0;
        for (int q = 0; q < 300; ++q) {
            wave_step(fs, SourceGrid{Grid3(s)});
            worst = std::max(worst, std::abs(wave_energy(fs) - e0));
        }
        CHECK(e0 > 0.0);
        CHECK(worst <= 1e-10 * e0);
    }

    TEST_CASE("absorbing boundary does not create energy")
    {
        const GridSpec s = GridSpec::centered(24, 2.0);
        const double c = 1.0;
        const Grid3 g = fill(s, [](const Vec3& y) { return bump(norm(y) / 0.8); }), z(s);
        FieldState fs = init_field(g, z, c, cfl_time_step(c, s.h, 0.9), SourceGrid{z});
        double prev = wave_energy(fs);
        const double e0 = prev;
        bool monotone = true;
        for (int q = 0; q < 200; ++q) {
            wave_step(fs, SourceGrid{z});
            const double e = wave_energy(fs);
            monotone = monotone && e <= prev + 1e-12 * e0;
            prev = e;
        }
        CHECK(monotone);
        CHECK(prev < 0.05 * e0);
    }

    TEST_CASE("homogeneous field from Newtonian data decays like 1/c")
    {
        // max_x |phi_hom(t)| c / (1 + t) measured at two light speeds.
        const GridSpec s = GridSpec::centered(24, 3.0);
        const ParticleEnsemble ens = testutil::uniform_ball({}, 0.8, 1.0, 0.25 * s.h);
        const Grid3 g = gsharp_from_fin(ens, s, GreenKernel::continuum), z(s);
        auto constant = [&](double c) {
            const double T = 1.0;
            const int steps = static_cast<int>(std::ceil(T / cfl_time_step(c, s.h, 0.9)));
            const double dt = T / steps;
            FieldState fs = init_field(g, z, c, dt, SourceGrid{z});
            double C = c * fs.phi_prev.max_abs();
            for (int q = 1; q < steps; ++q) {
                wave_step(fs, SourceGrid{z});
                C = std::max(C, c * fs.phi_prev.max_abs() / (1.0 + fs.time_prev()));
            }
            return C;
        };
        const double c4 = constant(4.0), c8 = constant(8.0);
        CHECK(c4 > 0.0);
        CHECK(c8 <= 1.05 * c4);
    }

    TEST_CASE("sponge profile")
    {
        const GridSpec s = GridSpec::centered(16, 1.0);
        WaveOptions o;
        CHECK(sponge_sigma(s, o, 8, 8, 8) == 0.0);
        CHECK(sponge_sigma(s, o, 0, 8, 8) == doctest::Approx(o.sponge_strength));
        CHECK(sponge_sigma(s, o, 1, 8, 8) < sponge_sigma(s, o, 0, 8, 8));
        CHECK(in_interior(s, 4, 4, 8, 11));
        CHECK_FALSE(in_interior(s, 4, 3, 8, 8));
        CHECK(sponge_sigma(s, periodic_options(), 0, 0, 0) == 0.0);
    }
}
