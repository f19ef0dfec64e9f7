#include <doctest.h>

#include <cmath>
#include <vector>

#include "nvlimit/field_poisson.hpp"
#include "nvlimit/grid.hpp"
#include "nvlimit/quadrature.hpp"
#include "nvlimit/representation.hpp"

using namespace nvlimit;

namespace {

// int_0^1 s^2 (1 - s^2)^4 ds, expanded by hand.
const double shell_moment = 1.0 / 3 - 4.0 / 5 + 6.0 / 7 - 4.0 / 9 + 1.0 / 11;

ManufacturedF static_blob()
{
    ManufacturedF mf;
    mf.x0 = {};
    mf.rx = 0.8;
    mf.p0 = {};
    mf.rp = 0.6;
    mf.amplitude = 1.5;
    return mf;
}

ManufacturedF moving_blob()
{
    ManufacturedF mf;
    mf.x0 = {0.1, -0.05, 0.0};
    mf.rx = 0.7;
    mf.p0 = {0.2, 0.0, -0.1};
    mf.rp = 0.5;
    mf.amplitude = 0.8;
    mf.alpha = 0.3;
    mf.freq = 2.0;
    mf.tilt = {0.2, -0.1, 0.3};
    return mf;
}

QuadSpec coarse()
{
    QuadSpec q;
    q.n_r = 8;
    q.n_theta = 8;
    q.n_phi = 10;
    q.n_pr = 4;
    q.n_ptheta = 4;
    q.n_pphi = 6;
    q.sphere_order = 23;
    return q;
}

Vec3 unit(const Vec3& v) { return v / norm(v); }

void check_vec(const Vec3& a, const Vec3& b, double tol)
{
    CHECK(norm(a - b) <= tol * std::max(1.0, norm(b)));
}

} // namespace

TEST_SUITE("representation")
{
    TEST_CASE("kernels at p = 0")
    {
        const Vec3 om = unit({1.0, -2.0, 0.5});
        for (double c : {1.0, 3.0, 100.0}) {
            const KernelSet k = eval_kernels(om, {}, c);
            CHECK(k.op == 1.0);
            CHECK(k.a_t == 0.0);
            CHECK(k.b_t == doctest::Approx(1.0).epsilon(1e-15));
            check_vec(k.c_t, om, 1e-15);
            check_vec(k.a_x, c * om, 1e-15);
        }
    }

    TEST_CASE("kernels with omega orthogonal to p")
    {
        const Vec3 p{0.6, 1.2, -0.4};
        const Vec3 om = unit(cross(p, {0.3, 0.1, 2.0}));
        for (double c : {1.0, 2.5, 40.0}) {
            const double cp = 1.0 + dot(p, p) / (c * c), g = std::sqrt(cp);
            const Vec3 ph = p / g;
            const double ph2 = dot(ph, ph);
            const KernelSet k = eval_kernels(om, p, c);
            CHECK(k.op == doctest::Approx(1.0).epsilon(1e-15));
            CHECK(k.a_t == doctest::Approx(-ph2 / (c * g)).epsilon(1e-13));
            CHECK(k.b_t == doctest::Approx((1.0 + ph2 / (c * c)) / g).epsilon(1e-13));
            check_vec(k.c_t, (om + ph / c) / (cp * g), 1e-13);
            check_vec(k.a_x, (c * (om + ph / c) - (ph2 / c) * om) / g, 1e-13);
        }
    }

    TEST_CASE("kernels with omega along p")
    {
        const Vec3 p{0.6, 1.2, -0.4};
        for (double sign : {1.0, -1.0}) {
            const Vec3 om = sign * unit(p);
            for (double c : {1.0, 2.5, 40.0}) {
                const double cp = 1.0 + dot(p, p) / (c * c), g = std::sqrt(cp);
                const double v = sign * norm(p) / g; // omega . p_hat
                const double op = 1.0 + v / c;
                const KernelSet k = eval_kernels(om, p, c);
                CHECK(k.op == doctest::Approx(op).epsilon(1e-14));
                CHECK(k.a_t == doctest::Approx(-v / (op * g)).epsilon(1e-13));
                CHECK(k.b_t == doctest::Approx(1.0 / g).epsilon(1e-13));
                check_vec(k.c_t, om / (op * cp * g), 1e-13);
                check_vec(k.a_x, (c / (op * g)) * om, 1e-13);
            }
        }
    }

    TEST_CASE("spatial kernels are omega times the time kernels")
    {
        const Vec3 om = unit({0.3, -0.7, 0.2}), p{-1.1, 0.4, 2.0};
        for (double c : {1.0, 5.0}) {
            const KernelSet k = eval_kernels(om, p, c);
            const Vec3 bd = b_x_direct(om, p, c);
            check_vec(k.b_x, bd, 1e-13);
            check_vec(k.b_x, k.b_t * om, 1e-15);
            for (int i = 0; i < 3; ++i) check_vec(k.c_x[i], om[i] * k.c_t, 1e-15);
            check_vec(k.a_x - k.a_x_split, (c / (k.op * k.op * k.sqcp)) * om, 1e-13);
        }
    }

    TEST_CASE("kernel inputs are validated")
    {
        for (auto bad : {std::pair<Vec3, double>{{1.1, 0, 0}, 2.0}, {{1, 0, 0}, 0.5}, {{0, 0, 0}, 2.0}}) {
            try {
                eval_kernels(bad.first, {0.1, 0.2, 0.3}, bad.second);
                FAIL("expected an error");
            } catch (const Error& e) {
                CHECK(e.code() == ErrorCode::rejected_input);
            }
        }
    }

    TEST_CASE("kernel bounds hold on random samples")
    {
        const KernelAudit a = audit_kernels(100000, {1.0, 4.0, 16.0, 64.0}, 1e3, 11);
        CHECK(a.samples == 100000);
        CHECK(a.min_op > 0.0);
        CHECK(a.max_ratio_a <= envelope_a);
        CHECK(a.max_ratio_b <= envelope_b);
        CHECK(a.max_ratio_c <= envelope_c);
        CHECK(a.max_diff_ratio <= envelope_diff);
        CHECK(a.max_split_ratio <= envelope_split);
        CHECK(a.max_lemma3 <= 1.0);
        CHECK(a.max_bx_identity <= 1e-13);
    }

    TEST_CASE("manufactured derivatives match finite differences")
    {
        const ManufacturedF mf = moving_blob();
        const double t = 0.4, h = 1e-5;
        const Vec3 x{0.3, 0.1, -0.2}, p{0.25, 0.15, -0.2};
        CHECK(mf.dt(t, x, p) == doctest::Approx((mf.value(t + h, x, p) - mf.value(t - h, x, p)) / (2 * h)).epsilon(1e-7));
        for (int a = 0; a < 3; ++a) {
            Vec3 e;
            e[a] = h;
            CHECK(mf.grad_x(t, x, p)[a] ==
                  doctest::Approx((mf.value(t, x + e, p) - mf.value(t, x - e, p)) / (2 * h)).epsilon(1e-7));
            CHECK(mf.grad_p(t, x, p)[a] ==
                  doctest::Approx((mf.value(t, x, p + e) - mf.value(t, x, p - e)) / (2 * h)).epsilon(1e-7));
        }
    }

    TEST_CASE("manufactured density is the momentum integral")
    {
        const ManufacturedF mf = moving_blob();
        const double t = 0.7;
        const Vec3 x{0.2, -0.2, 0.1};
        const double u2 = dot(x - mf.x0, x - mf.x0) / (mf.rx * mf.rx);
        const double expect = mf.amplitude * (1.0 + mf.alpha * std::sin(mf.freq * t)) *
                              (1.0 + dot(mf.tilt, x - mf.x0) / mf.rx) * std::pow(1.0 - u2, 4) * four_pi *
                              std::pow(mf.rp, 3) * shell_moment;
        CHECK(mf.density(t, x) == doctest::Approx(expect).epsilon(1e-13));
        CHECK(mf.density(t, mf.x0 + Vec3{mf.rx, 0, 0}) == 0.0);
        ManufacturedF bad = mf;
        bad.tilt = {1.0, 0.0, 0.0};
        CHECK_THROWS_AS(bad.validate(), Error);
    }

    TEST_CASE("homogeneous part reproduces simple data")
    {
        HomogeneousData d;
        d.g0 = zero_data();
        d.g1 = zero_data();
        d.g0.value = [](const Vec3& y) { return dot(y, y); };
        d.g0.gradient = [](const Vec3& y) { return 2.0 * y; };
        d.g0.hessian = [](const Vec3&) { return std::array<Vec3, 3>{Vec3{2, 0, 0}, Vec3{0, 2, 0}, Vec3{0, 0, 2}}; };
        d.g1.value = [](const Vec3&) { return 0.5; };
        const double c = 1.7;
        const Vec3 x{0.3, -0.4, 1.1};
        for (double t : {0.0, 0.4, 1.3}) {
            CHECK(phi_hom(d, c, t, x, 23) == doctest::Approx(dot(x, x) + 3 * c * c * t * t + 0.5 * t).epsilon(1e-12));
            CHECK(dt_phi_hom(d, c, t, x, 23) == doctest::Approx(6 * c * c * t + 0.5).epsilon(1e-12));
            check_vec(grad_phi_hom(d, c, t, x, 23), 2.0 * x, 1e-12);
        }
    }

    TEST_CASE("homogeneous gradient matches differences of the value")
    {
        HomogeneousData d;
        d.g0 = plummer_data(1.0, 0.5, {0.1, 0.0, 0.0});
        d.g1 = plummer_data(-0.3, 0.7, {0.0, 0.2, 0.0});
        const double c = 2.0, t = 0.3, h = 1e-4;
        const Vec3 x{0.4, -0.2, 0.3};
        const Vec3 g = grad_phi_hom(d, c, t, x, 59);
        for (int a = 0; a < 3; ++a) {
            Vec3 e;
            e[a] = h;
            CHECK(g[a] == doctest::Approx((phi_hom(d, c, t, x + e, 59) - phi_hom(d, c, t, x - e, 59)) / (2 * h)).epsilon(1e-6));
        }
        CHECK(dt_phi_hom(d, c, t, x, 59) ==
              doctest::Approx((phi_hom(d, c, t + h, x, 59) - phi_hom(d, c, t - h, x, 59)) / (2 * h)).epsilon(1e-6));
        CHECK(phi_hom(d, c, 0.0, x, 59) == doctest::Approx(d.g0.value(x)).epsilon(1e-14));
        CHECK(dt_phi_hom(d, c, 0.0, x, 59) == doctest::Approx(d.g1.value(x)).epsilon(1e-12));
    }

    TEST_CASE("zero amplitude leaves only the homogeneous part")
    {
        ManufacturedF mf = moving_blob();
        mf.amplitude = 0.0;
        HomogeneousData d{plummer_data(1.0, 0.5, {}), zero_data()};
        const double c = 2.0, t = 0.5;
        const Vec3 x{0.3, 0.1, -0.2};
        const QuadSpec q = coarse();
        CHECK(retarded_phi_oracle(mf, d, c, t, x, q) == doctest::Approx(phi_hom(d, c, t, x, q.sphere_order)).epsilon(1e-14));
        const RepresentationTerms T = representation_dtphi_oracle(mf, d, plummer_closure(0.1, 0.5, 0.6, {}), c, t, x, q);
        CHECK(T.data == 0.0);
        CHECK(T.a_term == 0.0);
        CHECK(T.b_term == 0.0);
        CHECK(T.c_term == 0.0);
        CHECK(T.residual == 0.0);
        CHECK(T.total() == doctest::Approx(dt_phi_hom(d, c, t, x, q.sphere_order)).epsilon(1e-14));
    }

    TEST_CASE("retarded part is negative for a nonnegative distribution")
    {
        const ManufacturedF mf = moving_blob();
        const QuadSpec q = coarse();
        for (const Vec3& x : {Vec3{0, 0, 0}, Vec3{0.5, 0.2, -0.1}, Vec3{1.5, 0.0, 0.3}})
            for (double t : {0.2, 0.8}) {
                const double psi = retarded_psi(mf, 2.0, t, x, q);
                CHECK(psi <= 0.0);
                if (2.0 * t > norm(x - mf.x0) - mf.rx) CHECK(psi < 0.0);
            }
        // Outside the light cone of the support the retarded part vanishes.
        CHECK(retarded_psi(mf, 2.0, 0.2, {3.0, 0.0, 0.0}, q) == 0.0);
    }

    TEST_CASE("static source far inside the light cone is a shell-theorem potential")
    {
        // Independent route: Newton's shell theorem with the momentum weight 1/sqrt(1+|p|^2/c^2)
        // integrated by a 1D midpoint rule.
        const ManufacturedF mf = static_blob();
        const Vec3 x{1.6, 0.3, -0.2};
        for (double c : {1.0, 2.0, 8.0}) {
            double wp = 0.0;
            const int m = 20000;
            for (int q = 0; q < m; ++q) {
                const double s = (q + 0.5) / m;
                wp += s * s * std::pow(1.0 - s * s, 4) / std::sqrt(1.0 + s * s * mf.rp * mf.rp / (c * c)) / m;
            }
            const double M = mf.amplitude * four_pi * std::pow(mf.rx, 3) * shell_moment * four_pi * std::pow(mf.rp, 3) * wp;
            const double t = 4.0 / c; // ct = 4 > |x - x0| + rx
            const double psi = retarded_psi(mf, c, t, x, QuadSpec{});
            CHECK(c * c * psi == doctest::Approx(-M / norm(x)).epsilon(1e-6));
        }
    }

    TEST_CASE("static source at large c against the Poisson solver")
    {
        const ManufacturedF mf = static_blob();
        const double c = 16.0, t = 4.0 / c;
        const GridSpec s = GridSpec::centered(64, 2.5);
        Grid3 rho(s);
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.n; ++j)
                for (int k = 0; k < s.n; ++k) rho.at(i, j, k) = mf.density(0.0, s.node(i, j, k));
        const Grid3 U = PoissonSolver(s, GreenKernel::continuum).potential(rho);
        for (const Vec3& x : {s.node(32, 32, 32), s.node(40, 30, 28), s.node(50, 32, 20)}) {
            const double u = interpolate(U, cic_stencil_or_throw(s, x, 0, "test"));
            CHECK(c * c * retarded_psi(mf, c, t, x, QuadSpec{}) == doctest::Approx(u).epsilon(1e-2));
        }
    }

    TEST_CASE("representation terms are linear in the distribution for a fixed closure")
    {
        ManufacturedF a = moving_blob();
        ManufacturedF b = a;
        b.amplitude *= 2.0;
        const HomogeneousData d{zero_data(), zero_data()};
        const ClosureField cl = plummer_closure(0.1, 0.5, 0.6, {});
        const QuadSpec q = coarse();
        const double c = 2.0, t = 0.6;
        const Vec3 x{0.2, 0.1, 0.0};
        const RepresentationTerms A = representation_dtphi_oracle(a, d, cl, c, t, x, q);
        const RepresentationTerms B = representation_dtphi_oracle(b, d, cl, c, t, x, q);
        CHECK(A.a_term != 0.0);
        CHECK(A.b_term != 0.0);
        CHECK(A.c_term != 0.0);
        CHECK(B.a_term == doctest::Approx(2.0 * A.a_term).epsilon(1e-13));
        CHECK(B.b_term == doctest::Approx(2.0 * A.b_term).epsilon(1e-13));
        CHECK(B.c_term == doctest::Approx(2.0 * A.c_term).epsilon(1e-13));
        CHECK(B.data == doctest::Approx(2.0 * A.data).epsilon(1e-13));
        CHECK(B.residual == doctest::Approx(2.0 * A.residual).epsilon(1e-13));
        // A zero closure leaves the b and c terms empty.
        const RepresentationTerms Z = representation_dtphi_oracle(a, d, zero_closure(), c, t, x, q);
        CHECK(Z.b_term == 0.0);
        CHECK(Z.c_term == 0.0);
    }

    TEST_CASE("representation of dt phi agrees with differences of phi")
    {
        const ManufacturedF mf = moving_blob();
        const HomogeneousData d{plummer_data(0.5, 0.6, {}), zero_data()};
        const QuadSpec q = coarse();
        const double c = 2.0, t = 0.5;
        const Vec3 x{0.2, -0.1, 0.1};
        const double rep = representation_dtphi_oracle(mf, d, plummer_closure(0.2, 0.3, 0.5, {}), c, t, x, q).total();
        const double fd = fd_dtphi(mf, d, c, t, x, q, 1e-2);
        CHECK(rep == doctest::Approx(fd).epsilon(1e-2));
        const double rep_x = representation_dxphi_oracle(mf, d, zero_closure(), c, t, x, 1, q).total();
        const double fd_x = fd_dxphi(mf, d, c, t, x, 1, q, 1e-2);
        CHECK(rep_x == doctest::Approx(fd_x).epsilon(1e-2));
    }

    TEST_CASE("quadrature rules")
    {
        const SphereRule leb = SphereRule::lebedev(17);
        double wsum = 0.0;
        for (double w : leb.weights) wsum += w;
        CHECK(wsum == doctest::Approx(four_pi).epsilon(1e-13));
        auto integrate = [&](const SphereRule& r, int a, int b, int cc) {
            double s = 0.0;
            for (std::size_t q = 0; q < r.size(); ++q) {
                const Vec3& d = r.directions[q];
                s += r.weights[q] * std::pow(d.x, a) * std::pow(d.y, b) * std::pow(d.z, cc);
            }
            return s;
        };
        // Closed forms on the unit sphere.
        CHECK(sphere_monomial_integral(2, 0, 0) == doctest::Approx(four_pi / 3));
        CHECK(sphere_monomial_integral(4, 0, 0) == doctest::Approx(four_pi / 5));
        CHECK(sphere_monomial_integral(2, 2, 0) == doctest::Approx(four_pi / 15));
        CHECK(sphere_monomial_integral(2, 2, 2) == doctest::Approx(four_pi / 105));
        CHECK(sphere_monomial_integral(3, 2, 0) == 0.0);
        for (int order : SphereRule::lebedev_orders()) {
            const SphereRule r = SphereRule::lebedev(order);
            for (auto [a, b, cc] : {std::array<int, 3>{order - 1, 0, 0}, {6, 4, 2}, {8, 0, 6}, {1, 3, 5}})
                if (a + b + cc <= order)
                    CHECK(integrate(r, a, b, cc) == doctest::Approx(sphere_monomial_integral(a, b, cc)).epsilon(1e-12));
            for (const Vec3& d : r.directions) CHECK(norm(d) == doctest::Approx(1.0).epsilon(1e-14));
        }
        CHECK_THROWS_AS(SphereRule::lebedev(11), Error);
        CHECK(SphereRule::lebedev(18).size() == SphereRule::lebedev(23).size());
        const SphereRule prod = SphereRule::product(8, 16, unit({1, 1, 0}));
        CHECK(integrate(prod, 4, 2, 6) == doctest::Approx(sphere_monomial_integral(4, 2, 6)).epsilon(1e-12));
        const GaussLegendre gl = GaussLegendre::on_interval(5, -1.0, 2.0);
        double s = 0.0;
        for (std::size_t q = 0; q < gl.size(); ++q) s += gl.weights[q] * std::pow(gl.nodes[q], 9);
        CHECK(s == doctest::Approx((std::pow(2.0, 10) - 1.0) / 10.0).epsilon(1e-13));
    }

    TEST_CASE("spherical means")
    {
        const SphereRule r = SphereRule::lebedev(17);
        const Vec3 x{0.3, -0.2, 0.5};
        CHECK(spherical_mean([](const Vec3&) { return 1.0; }, x, 0.7, r) == doctest::Approx(1.0).epsilon(1e-14));
        // Harmonic functions have the mean-value property; |y|^2 gains r^2.
        CHECK(spherical_mean([](const Vec3& y) { return y.x * y.y - 2 * y.z + y.x * y.x - y.z * y.z; }, x, 0.9, r) ==
              doctest::Approx(x.x * x.y - 2 * x.z + x.x * x.x - x.z * x.z).epsilon(1e-13));
        CHECK(spherical_mean([](const Vec3& y) { return dot(y, y); }, x, 0.9, r) ==
              doctest::Approx(dot(x, x) + 0.81).epsilon(1e-13));
    }

    TEST_CASE("polynomial bump calculus and the exterior identity")
    {
        const PolyBump hb{{0.1, 0.2, -0.1}, 0.9};
        const Vec3 y{0.3, -0.1, 0.2};
        const double h = 1e-4;
        double lap = 0.0;
        for (int a = 0; a < 3; ++a) {
            Vec3 e;
            e[a] = h;
            CHECK(hb.gradient(y)[a] == doctest::Approx((hb.value(y + e) - hb.value(y - e)) / (2 * h)).epsilon(1e-7));
            lap += (hb.value(y + e) - 2 * hb.value(y) + hb.value(y - e)) / (h * h);
        }
        CHECK(hb.laplacian(y) == doctest::Approx(lap).epsilon(1e-5));
        CHECK(hb.value({2.0, 0.0, 0.0}) == 0.0);
        CHECK(lemma2_check(hb, 1.5, 0.3, {0.2, 0.0, 0.1}).rel_diff() <= 1e-6);
    }

    TEST_CASE("weighted spherical integral stays below its bound")
    {
        const PolyBump hb{{0.2, 0.0, 0.0}, 0.6};
        const Lemma1Scan s = lemma1_scan([&](const Vec3& y) { return hb.value(y); }, hb.center, hb.a, 1.0,
                                         {-0.5, 0.3, 0.0}, 100.0, 2000);
        CHECK(s.max_value > 0.0);
        CHECK(s.max_value <= s.bound);
        CHECK(s.bound == doctest::Approx(four_pi * 0.6));
        CHECK(s.xi.size() == s.value.size());
    }
}
