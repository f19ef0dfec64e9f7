#pragma once

#include <cstddef>
#include <vector>

#include "nvlimit/core.hpp"

namespace nvlimit {

/// Gauss-Legendre rule, nodes by Newton iteration on P_n.
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;

    static GaussLegendre on_interval(int n, double a, double b);
    std::size_t size() const { return nodes.size(); }
};

/// Quadrature on the unit sphere; weights sum to 4 pi.
struct SphereRule {
    std::vector<Vec3> directions;
    std::vector<double> weights;

    /// Tabulated Lebedev rules; `order` is rounded up to the next available
    /// degree (17, 23, 31, 41, 59). Below 17 is a configuration error.
    static SphereRule lebedev(int order);
    static const std::vector<int>& lebedev_orders();

    /// Gauss-Legendre in cos(theta) times the periodic trapezoid rule in the
    /// azimuth, with theta measured from `pole`.
    static SphereRule product(int n_theta, int n_phi, Vec3 pole = {0, 0, 1});

    std::size_t size() const { return directions.size(); }
};

inline constexpr int min_sphere_order = 17;

/// Exact integral over S^2 of x^a y^b z^c (zero unless all exponents even).
double sphere_monomial_integral(int a, int b, int c);

} // namespace nvlimit
