#include "nvlimit/quadrature.hpp"

#include <cmath>
#include <string>

#include "lebedev_tables.hpp"

namespace nvlimit {

GaussLegendre GaussLegendre::on_interval(int n, double a, double b)
{
    if (n < 1) throw Error(ErrorCode::configuration, "Gauss-Legendre rule needs at least one node");
    GaussLegendre gl;
    gl.nodes.resize(n);
    gl.weights.resize(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        gl.nodes[i] = mid - half * z;
        gl.nodes[n - 1 - i] = mid + half * z;
        gl.weights[i] = gl.weights[n - 1 - i] = half * w;
    }
    return gl;
}

const std::vector<int>& SphereRule::lebedev_orders()
{
    static const std::vector<int> orders = [] {
        std::vector<int> o;
        for (int t = 0; t < detail::lebedev_table_count; ++t) o.push_back(detail::lebedev_tables[t].order);
        return o;
    }();
    return orders;
}

SphereRule SphereRule::lebedev(int order)
{
    if (order < min_sphere_order)
        throw Error(ErrorCode::configuration,
                    "sphere quadrature order " + std::to_string(order) + " below minimum " + std::to_string(min_sphere_order));
    for (int t = 0; t < detail::lebedev_table_count; ++t) {
        const auto& tab = detail::lebedev_tables[t];
        if (tab.order < order) continue;
        SphereRule r;
        r.directions.reserve(tab.points);
        r.weights.reserve(tab.points);
        for (int q = 0; q < tab.points; ++q) {
            const double* row = tab.data + 4 * q;
            r.directions.push_back({row[0], row[1], row[2]});
            r.weights.push_back(row[3]);
        }
        return r;
    }
    throw Error(ErrorCode::configuration, "no Lebedev rule of order >= " + std::to_string(order));
}

SphereRule SphereRule::product(int n_theta, int n_phi, Vec3 pole)
{
    if (n_theta < 2 || n_phi < 3) throw Error(ErrorCode::configuration, "product sphere rule too small");
    const double pn = norm(pole);
    if (!(pn > 0.0)) throw Error(ErrorCode::rejected_input, "product sphere rule: zero pole");
    const Vec3 e3 = pole / pn;
    // any unit vector orthogonal to e3
    const Vec3 trial = std::abs(e3.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 e1 = cross(trial, e3);
    e1 = e1 / norm(e1);
    const Vec3 e2 = cross(e3, e1);

    const GaussLegendre gl = GaussLegendre::on_interval(n_theta, -1.0, 1.0);
    SphereRule r;
    r.directions.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    r.weights.reserve(static_cast<std::size_t>(n_theta) * n_phi);
    const double dphi = 2.0 * pi / n_phi;
    for (int a = 0; a < n_theta; ++a) {
        const double ct = gl.nodes[a], st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
        for (int b = 0; b < n_phi; ++b) {
            const double ph = (b + 0.5) * dphi;
            r.directions.push_back(ct * e3 + (st * std::cos(ph)) * e1 + (st * std::sin(ph)) * e2);
            r.weights.push_back(gl.weights[a] * dphi);
        }
    }
    return r;
}

double sphere_monomial_integral(int a, int b, int c)
{
    if (a % 2 || b % 2 || c % 2) return 0.0;
    // 2 Gamma(alpha) Gamma(beta) Gamma(gamma) / Gamma(alpha + beta + gamma), alpha = (a+1)/2 ...
    const double al = 0.5 * (a + 1), be = 0.5 * (b + 1), ga = 0.5 * (c + 1);
    return 2.0 * std::exp(std::lgamma(al) + std::lgamma(be) + std::lgamma(ga) - std::lgamma(al + be + ga));
}

} // namespace nvlimit
