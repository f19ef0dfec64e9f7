#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "nvlimit/core.hpp"

namespace nvlimit {

/// Node-centred cubic lattice: node (i,j,k) sits at origin + h*(i,j,k),
/// i,j,k in [0,n). Storage is row-major with k fastest.
struct GridSpec {
    int n = 0;
    double h = 0.0;
    Vec3 origin;

    /// n nodes spanning [-half_width, half_width] on every axis.
    static GridSpec centered(int n, double half_width);

    std::size_t size() const { return static_cast<std::size_t>(n) * n * n; }
    std::size_t index(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * n + j) * n + k;
    }
    Vec3 node(int i, int j, int k) const { return origin + h * Vec3{double(i), double(j), double(k)}; }
    Vec3 center() const { return origin + 0.5 * h * (n - 1) * Vec3{1, 1, 1}; }
    double half_width() const { return 0.5 * h * (n - 1); }

    void validate() const;
    bool same_shape(const GridSpec& o) const { return n == o.n && h == o.h && origin == o.origin; }
};

struct Grid3 {
    GridSpec spec;
    std::vector<double> data;

    Grid3() = default;
    explicit Grid3(const GridSpec& s, double fill = 0.0) : spec(s), data(s.size(), fill) {}

    double& at(int i, int j, int k) { return data[spec.index(i, j, k)]; }
    double at(int i, int j, int k) const { return data[spec.index(i, j, k)]; }

    double max_abs() const;
    double max() const;
    bool finite() const;
};

/// 7-point Laplacian on interior nodes; boundary nodes are left at zero.
Grid3 laplacian(const Grid3& g);

/// Second-order centred differences in the interior, first-order one-sided on the faces.
std::array<Grid3, 3> gradient(const Grid3& g);

/// Trilinear (cloud-in-cell) stencil of a point. The same weights are used for
/// particle-to-grid deposition and grid-to-particle interpolation.
struct CicStencil {
    int i = 0, j = 0, k = 0; // lower corner
    double fx = 0, fy = 0, fz = 0; // fractional offsets in [0,1)

    double weight(int di, int dj, int dk) const
    {
        return (di ? fx : 1.0 - fx) * (dj ? fy : 1.0 - fy) * (dk ? fz : 1.0 - fz);
    }
};

/// Stencil of x, or nullopt-equivalent `false` when the cell [i,i+1]^3 would
/// leave the node range shrunk by `margin` nodes on each side.
bool cic_stencil(const GridSpec& s, const Vec3& x, int margin, CicStencil& out);

/// Throws support_violation when x is outside the interpolable region.
CicStencil cic_stencil_or_throw(const GridSpec& s, const Vec3& x, int margin, const char* who);

double interpolate(const Grid3& g, const CicStencil& st);

/// Value and exact gradient of the trilinear interpolant inside the cell.
double interpolate_with_gradient(const Grid3& g, const CicStencil& st, Vec3& grad);

void deposit(Grid3& g, const CicStencil& st, double amount);

/// Tensor cubic B-spline smoothing of the node values (C2, second-order accurate,
/// not interpolating) and its exact gradient. Needs the 4^3 stencil inside the grid;
/// otherwise support_violation.
double spline_with_gradient(const Grid3& g, const Vec3& x, Vec3& grad);

} // namespace nvlimit
