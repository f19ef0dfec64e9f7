#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "nvlimit/phase_space.hpp"
#include "nvlimit/pusher.hpp"

using namespace nvlimit;

namespace {

// Reference bump written as exp(-s^2 / (1 - s^2)), algebraically equal to the library form.
double ref_bump(double s)
{
    if (std::abs(s) >= 1.0) return 0.0;
    return std::exp(-s * s / (1.0 - s * s));
}

Profile product_profile()
{
    Profile p;
    p.kind = ProfileKind::product_bump;
    p.center_x = {0.2, -0.1, 0.3};
    p.center_p = {0.1, 0.0, -0.2};
    p.radius_x = 0.8;
    p.radius_p = 0.5;
    p.amplitude = 2.5;
    return p;
}

} // namespace

TEST_SUITE("phase_space")
{
    TEST_CASE("profile peaks at the centre")
    {
        Profile p = product_profile();
        CHECK(eval_profile(p, p.center_x, p.center_p) == doctest::Approx(2.5).epsilon(1e-15));
        p.kind = ProfileKind::radial_bump;
        CHECK(eval_profile(p, p.center_x, p.center_p) == doctest::Approx(2.5).epsilon(1e-15));
    }

    TEST_CASE("profile is exactly zero outside its support")
    {
        for (ProfileKind kind : {ProfileKind::product_bump, ProfileKind::radial_bump}) {
            Profile p = product_profile();
            p.kind = kind;
            const Vec3 far_x = p.center_x + Vec3{2.0 * p.radius_x, 0.0, 0.0};
            CHECK(eval_profile(p, far_x, p.center_p) == 0.0);
            const Vec3 edge_x = p.center_x + Vec3{0.0, p.radius_x, 0.0};
            CHECK(eval_profile(p, edge_x, p.center_p) == 0.0);
            const Vec3 edge_p = p.center_p + Vec3{0.0, 0.0, -p.radius_p};
            CHECK(eval_profile(p, p.center_x, edge_p) == 0.0);
        }
        // Dense sweep: nothing leaks past the radii.
        Profile p = product_profile();
        p.kind = ProfileKind::radial_bump;
        for (int q = 0; q < 200; ++q) {
            const double s = 1.0 + 0.01 * q;
            const Vec3 x = p.center_x + (s * p.radius_x / std::sqrt(3.0)) * Vec3{1, 1, 1};
            CHECK(eval_profile(p, x, p.center_p) == 0.0);
        }
    }

    TEST_CASE("product profile matches a per-axis reference bump")
    {
        const Profile p = product_profile();
        const Vec3 x = p.center_x + Vec3{0.3, -0.2, 0.1};
        const Vec3 mp = p.center_p + Vec3{-0.1, 0.25, 0.05};
        double expect = p.amplitude;
        for (int a = 0; a < 3; ++a)
            expect *= ref_bump((x[a] - p.center_x[a]) / p.radius_x) * ref_bump((mp[a] - p.center_p[a]) / p.radius_p);
        CHECK(eval_profile(p, x, mp) == doctest::Approx(expect).epsilon(1e-13));
    }

    TEST_CASE("radial profile matches the reference bump of the radii")
    {
        Profile p = product_profile();
        p.kind = ProfileKind::radial_bump;
        const Vec3 dx{0.3, -0.2, 0.1}, dp{-0.1, 0.25, 0.05};
        const double expect = p.amplitude * ref_bump(norm(dx) / p.radius_x) * ref_bump(norm(dp) / p.radius_p);
        CHECK(eval_profile(p, p.center_x + dx, p.center_p + dp) == doctest::Approx(expect).epsilon(1e-13));
    }

    TEST_CASE("non-finite phase-space points are rejected")
    {
        const Profile p = product_profile();
        try {
            eval_profile(p, {std::nan(""), 0, 0}, {});
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::rejected_input);
        }
        CHECK_THROWS_AS(eval_profile(p, {}, {0, INFINITY, 0}), Error);
    }

    TEST_CASE("bump derivative matches a centred difference")
    {
        for (double s : {-0.7, -0.2, 0.0, 0.4, 0.85}) {
            const double h = 1e-6;
            const double fd = (bump(s + h) - bump(s - h)) / (2 * h);
            CHECK(bump_derivative(s) == doctest::Approx(fd).epsilon(1e-6));
        }
        CHECK(bump_derivative(1.2) == 0.0);
    }

    TEST_CASE("zero amplitude gives an empty ensemble")
    {
        Profile p = product_profile();
        p.amplitude = 0.0;
        const ParticleEnsemble ens = sample_ensemble(p, 6, 1);
        CHECK(ens.empty());
        CHECK(ens.total_mass() == 0.0);
    }

    TEST_CASE("lattice needs at least two points per axis")
    {
        CHECK_THROWS_AS(sample_ensemble(product_profile(), 1, 1), Error);
        CHECK_THROWS_AS(sample_ensemble(product_profile(), LatticeCounts{4, 1}, 1), Error);
    }

    TEST_CASE("sampled mass converges at least at second order")
    {
        // Least-squares slope of ln(error) against ln(n); the lattice only enters the
        // asymptotic range once the peaked bump is resolved, hence the counts.
        struct Case {
            ProfileKind kind;
            std::vector<int> counts;
        };
        for (const Case& cs : {Case{ProfileKind::product_bump, {6, 9, 12}}, Case{ProfileKind::radial_bump, {4, 6, 8, 10}}}) {
            Profile p = product_profile();
            p.kind = cs.kind;
            const double ref = reference_mass(p, 128);
            double sx = 0, sy = 0, sxx = 0, sxy = 0, last = 0;
            for (int n : cs.counts) {
                last = std::abs(sample_ensemble(p, n, 3).total_mass() - ref) / ref;
                const double lx = std::log(double(n)), ly = std::log(last);
                sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
            }
            const double m = double(cs.counts.size());
            const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
            CHECK(slope <= -2.0);
            CHECK(last < 5e-3);
        }
    }

    TEST_CASE("reference mass agrees with a dense tensor quadrature")
    {
        // Independent route: composite midpoint in 1D of the reference bump, raised to the sixth power.
        const Profile p = product_profile();
        double line = 0.0;
        const int m = 20000;
        for (int q = 0; q < m; ++q) line += ref_bump(-1.0 + (q + 0.5) * 2.0 / m) * 2.0 / m;
        const double expect = p.amplitude * std::pow(line, 6) * std::pow(p.radius_x * p.radius_p, 3);
        CHECK(reference_mass(p) == doctest::Approx(expect).epsilon(1e-10));
    }

    TEST_CASE("sampling is deterministic for a fixed seed")
    {
        const Profile p = product_profile();
        const ParticleEnsemble a = sample_ensemble(p, 5, 42, 0.3);
        const ParticleEnsemble b = sample_ensemble(p, 5, 42, 0.3);
        REQUIRE(a.size() == b.size());
        bool same = true;
        for (std::size_t i = 0; i < a.size(); ++i) same = same && a.x[i] == b.x[i] && a.p[i] == b.p[i] && a.w[i] == b.w[i];
        CHECK(same);
        const ParticleEnsemble c = sample_ensemble(p, 5, 43, 0.3);
        bool differs = c.size() != a.size();
        for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = !(a.x[i] == c.x[i]);
        CHECK(differs);
    }

    TEST_CASE("ensemble records support radius and carried values")
    {
        Profile p = product_profile();
        p.kind = ProfileKind::radial_bump;
        const ParticleEnsemble ens = sample_ensemble(p, 5, 1);
        CHECK(ens.R == doctest::Approx(norm(p.center_x) + p.radius_x));
        for (std::size_t i = 0; i < ens.size(); ++i) {
            CHECK(ens.f[i] == ens.f0[i]);
            CHECK(ens.w[i] == doctest::Approx(ens.cell_volume * ens.f0[i]));
            CHECK(norm(ens.x[i] - p.center_x) < p.radius_x);
        }
        CHECK(max_abs_position(ens) <= ens.R);
    }

    TEST_CASE("profile is nonnegative and markers carry nonnegative values")
    {
        for (ProfileKind kind : {ProfileKind::product_bump, ProfileKind::radial_bump}) {
            Profile p = product_profile();
            p.kind = kind;
            std::mt19937_64 rng(5);
            std::uniform_real_distribution<double> u(-1.5, 1.5);
            for (int q = 0; q < 5000; ++q) {
                const Vec3 x = p.center_x + p.radius_x * Vec3{u(rng), u(rng), u(rng)};
                const Vec3 mp = p.center_p + p.radius_p * Vec3{u(rng), u(rng), u(rng)};
                CHECK(eval_profile(p, x, mp) >= 0.0);
            }
            const ParticleEnsemble ens = sample_ensemble(p, 6, 2, 0.5);
            for (std::size_t i = 0; i < ens.size(); ++i) {
                CHECK(ens.f0[i] >= 0.0);
                CHECK(ens.w[i] >= 0.0);
                CHECK(norm(ens.x[i]) <= ens.R);
            }
        }
    }

    TEST_CASE("bump derivatives of every order vanish at the edge of the support")
    {
        // Third differences decay to zero as s -> 1, so the bump joins the zero extension in C^3.
        const double h = 1e-4;
        double prev = INFINITY;
        for (double s : {0.98, 0.99, 0.995, 0.999}) {
            const double d3 = std::abs(bump(s + 2 * h) - 2 * bump(s + h) + 2 * bump(s - h) - bump(s - 2 * h)) / (2 * h * h * h);
            CHECK(d3 < prev);
            prev = d3;
        }
        CHECK(prev <= 1e-100);
        CHECK(bump_derivative(0.999) == doctest::Approx(0.0).epsilon(1e-12));
    }

    TEST_CASE("support_update is a running maximum")
    {
        ParticleEnsemble ens;
        ens.push_back({0, 0, 0}, {0.5, 0, 0}, 1.0, 1.0);
        ens.push_back({1, 0, 0}, {0, -1.5, 0}, 1.0, 1.0);
        SupportStats s = initial_support(ens);
        CHECK(s.Pc == doctest::Approx(2.5));
        // All momenta inside Pc - 1 and no field values: nothing changes.
        const SupportStats same = support_update(s, ens, {});
        CHECK(same.Pc == s.Pc);
        CHECK(same.Q == s.Q);
        const std::vector<double> phi = {-0.2, 0.1};
        s = support_update(s, ens, phi);
        CHECK(s.Q == doctest::Approx(0.2));
        ens.p[0] = {0, 0, 0};
        const std::vector<double> small = {0.01, 0.01};
        const SupportStats later = support_update(s, ens, small);
        CHECK(later.Pc == s.Pc);
        CHECK(later.Q == s.Q);
        ens.p[1] = {3, 0, 0};
        CHECK(support_update(s, ens, small).Pc == doctest::Approx(4.0));
        CHECK_THROWS_AS(support_update(s, ParticleEnsemble{}, {}), Error);
    }

    TEST_CASE("free streaming keeps Pc constant")
    {
        Profile p = product_profile();
        p.kind = ProfileKind::radial_bump;
        ParticleEnsemble ens = sample_ensemble(p, 4, 1);
        SupportStats s = initial_support(ens);
        const double pc0 = s.Pc;
        for (int step = 0; step < 20; ++step) {
            push_vp_external(ens, [](const Vec3&) { return Vec3{}; }, 0.05);
            s = support_update(s, ens, {});
            CHECK(s.Pc == pc0);
        }
    }

    TEST_CASE("spatial support grows no faster than R + Pc t under free streaming")
    {
        Profile p = product_profile();
        p.kind = ProfileKind::radial_bump;
        ParticleEnsemble ens = sample_ensemble(p, 4, 1);
        const SupportStats s = initial_support(ens);
        const double dt = 0.1;
        for (int step = 1; step <= 30; ++step) {
            push_vp_external(ens, [](const Vec3&) { return Vec3{}; }, dt);
            CHECK(max_abs_position(ens) <= s.R + s.Pc * step * dt + 1e-12);
        }
    }
}
