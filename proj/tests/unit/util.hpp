#pragma once

#include <cmath>
#include <functional>

#include "nvlimit/grid.hpp"
#include "nvlimit/phase_space.hpp"

namespace testutil {

using namespace nvlimit;

inline Grid3 fill(const GridSpec& s, const std::function<double(const Vec3&)>& fn)
{
    Grid3 g(s);
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            for (int k = 0; k < s.n; ++k) g.at(i, j, k) = fn(s.node(i, j, k));
    return g;
}

inline ParticleEnsemble single_marker(const Vec3& x, const Vec3& p, double w)
{
    ParticleEnsemble ens;
    ens.push_back(x, p, w, 1.0);
    return ens;
}

/// Markers of weight density * volume on a sub-lattice of spacing `d` filling a ball.
inline ParticleEnsemble uniform_ball(const Vec3& center, double radius, double mass, double d)
{
    ParticleEnsemble ens;
    const int m = static_cast<int>(std::ceil(radius / d));
    for (int i = -m; i <= m; ++i)
        for (int j = -m; j <= m; ++j)
            for (int k = -m; k <= m; ++k) {
                const Vec3 off{(i + 0.5) * d, (j + 0.5) * d, (k + 0.5) * d};
                if (norm(off) < radius) ens.push_back(center + off, {}, 1.0, 1.0);
            }
    const double w = mass / double(ens.size());
    for (double& wi : ens.w) wi = w;
    return ens;
}

/// Closed-form potential -int rho / |x - y| of a uniform ball.
inline double ball_potential(double mass, double radius, double r)
{
    if (r >= radius) return -mass / r;
    return -mass * (3.0 * radius * radius - r * r) / (2.0 * radius * radius * radius);
}

/// Interior max |a - b| over nodes at least `margin` layers from the faces.
inline double interior_diff(const Grid3& a, const Grid3& b, int margin)
{
    const int n = a.spec.n;
    double m = 0.0;
    for (int i = margin; i < n - margin; ++i)
        for (int j = margin; j < n - margin; ++j)
            for (int k = margin; k < n - margin; ++k) m = std::max(m, std::abs(a.at(i, j, k) - b.at(i, j, k)));
    return m;
}

} // namespace testutil
