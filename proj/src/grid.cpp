#include "nvlimit/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nvlimit {

const char* error_code_name(ErrorCode code)
{
    switch (code) {
    case ErrorCode::rejected_input: return "rejected_input";
    case ErrorCode::configuration: return "configuration";
    case ErrorCode::support_violation: return "support_violation";
    case ErrorCode::numerical_instability: return "numerical_instability";
    case ErrorCode::accuracy: return "accuracy";
    case ErrorCode::io: return "io";
    }
    return "unknown";
}

GridSpec GridSpec::centered(int n, double half_width)
{
    GridSpec s;
    s.n = n;
    s.h = 2.0 * half_width / (n - 1);
    s.origin = {-half_width, -half_width, -half_width};
    s.validate();
    return s;
}

void GridSpec::validate() const
{
    if (n < 8)
        throw Error(ErrorCode::configuration, "grid needs at least 8 nodes per axis, got " + std::to_string(n));
    if (!(h > 0.0) || !std::isfinite(h))
        throw Error(ErrorCode::configuration, "grid spacing must be positive");
    if (!all_finite(origin))
        throw Error(ErrorCode::configuration, "grid origin must be finite");
}

double Grid3::max_abs() const
{
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
}

double Grid3::max() const
{
    return data.empty() ? 0.0 : *std::max_element(data.begin(), data.end());
}

bool Grid3::finite() const
{
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

Grid3 laplacian(const Grid3& g)
{
    const GridSpec& s = g.spec;
    Grid3 out(s);
    const int n = s.n;
    const double inv_h2 = 1.0 / (s.h * s.h);
    const std::size_t si = static_cast<std::size_t>(n) * n, sj = n;
    for (int i = 1; i < n - 1; ++i)
        for (int j = 1; j < n - 1; ++j) {
            const std::size_t row = s.index(i, j, 0);
            for (int k = 1; k < n - 1; ++k) {
                const std::size_t c = row + k;
                const double* d = g.data.data();
                out.data[c] = (d[c + si] + d[c - si] + d[c + sj] + d[c - sj] + d[c + 1] + d[c - 1] - 6.0 * d[c]) * inv_h2;
            }
        }
    return out;
}

std::array<Grid3, 3> gradient(const Grid3& g)
{
    const GridSpec& s = g.spec;
    std::array<Grid3, 3> out{Grid3(s), Grid3(s), Grid3(s)};
    const int n = s.n;
    const double inv_2h = 0.5 / s.h, inv_h = 1.0 / s.h;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                const std::size_t c = s.index(i, j, k);
                const int idx[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    int lo[3] = {i, j, k}, hi[3] = {i, j, k};
                    double scale = inv_2h;
                    if (idx[a] == 0) { hi[a] += 1; scale = inv_h; }
                    else if (idx[a] == n - 1) { lo[a] -= 1; scale = inv_h; }
                    else { lo[a] -= 1; hi[a] += 1; }
                    out[a].data[c] = (g.at(hi[0], hi[1], hi[2]) - g.at(lo[0], lo[1], lo[2])) * scale;
                }
            }
    return out;
}

bool cic_stencil(const GridSpec& s, const Vec3& x, int margin, CicStencil& out)
{
    if (!all_finite(x)) return false;
    const double inv_h = 1.0 / s.h;
    double u[3];
    int c[3];
    for (int a = 0; a < 3; ++a) {
        u[a] = (x[a] - s.origin[a]) * inv_h;
        const double fl = std::floor(u[a]);
        if (fl < margin || fl > s.n - 2 - margin) return false;
        c[a] = static_cast<int>(fl);
        u[a] -= fl;
    }
    out = {c[0], c[1], c[2], u[0], u[1], u[2]};
    return true;
}

CicStencil cic_stencil_or_throw(const GridSpec& s, const Vec3& x, int margin, const char* who)
{
    CicStencil st;
    if (!cic_stencil(s, x, margin, st))
        throw Error(ErrorCode::support_violation,
                    std::string(who) + ": point (" + std::to_string(x.x) + ", " + std::to_string(x.y) + ", " +
                        std::to_string(x.z) + ") is outside the interpolable region; enlarge the domain");
    return st;
}

double interpolate(const Grid3& g, const CicStencil& st)
{
    double v = 0.0;
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk)
                v += st.weight(di, dj, dk) * g.at(st.i + di, st.j + dj, st.k + dk);
    return v;
}

double interpolate_with_gradient(const Grid3& g, const CicStencil& st, Vec3& grad)
{
    double c[2][2][2];
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk) c[di][dj][dk] = g.at(st.i + di, st.j + dj, st.k + dk);
    const double fx = st.fx, fy = st.fy, fz = st.fz;
    // collapse along z, then y, then x
    double cz[2][2];
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) cz[di][dj] = c[di][dj][0] * (1 - fz) + c[di][dj][1] * fz;
    const double cy0 = cz[0][0] * (1 - fy) + cz[0][1] * fy;
    const double cy1 = cz[1][0] * (1 - fy) + cz[1][1] * fy;
    const double value = cy0 * (1 - fx) + cy1 * fx;

    const double inv_h = 1.0 / g.spec.h;
    grad.x = (cy1 - cy0) * inv_h;
    const double dy0 = cz[0][1] - cz[0][0], dy1 = cz[1][1] - cz[1][0];
    grad.y = (dy0 * (1 - fx) + dy1 * fx) * inv_h;
    double dz[2][2];
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj) dz[di][dj] = c[di][dj][1] - c[di][dj][0];
    grad.z = ((dz[0][0] * (1 - fy) + dz[0][1] * fy) * (1 - fx) + (dz[1][0] * (1 - fy) + dz[1][1] * fy) * fx) * inv_h;
    return value;
}

void deposit(Grid3& g, const CicStencil& st, double amount)
{
    for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
            for (int dk = 0; dk < 2; ++dk) g.at(st.i + di, st.j + dj, st.k + dk) += st.weight(di, dj, dk) * amount;
}

double spline_with_gradient(const Grid3& g, const Vec3& x, Vec3& grad)
{
    const GridSpec& s = g.spec;
    int base[3];
    double w[3][4], dw[3][4];
    for (int a = 0; a < 3; ++a) {
        const double u = (x[a] - s.origin[a]) / s.h;
        const double fl = std::floor(u);
        const double t = u - fl;
        base[a] = static_cast<int>(fl) - 1;
        if (!std::isfinite(u) || base[a] < 0 || base[a] + 3 > s.n - 1)
            throw Error(ErrorCode::support_violation, "spline_with_gradient: point outside the spline stencil range");
        const double t2 = t * t, t3 = t2 * t, m = 1.0 - t;
        w[a][0] = m * m * m / 6.0;
        w[a][1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0;
        w[a][2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0;
        w[a][3] = t3 / 6.0;
        dw[a][0] = -0.5 * m * m / s.h;
        dw[a][1] = (1.5 * t2 - 2.0 * t) / s.h;
        dw[a][2] = (-1.5 * t2 + t + 0.5) / s.h;
        dw[a][3] = 0.5 * t2 / s.h;
    }
    double v = 0.0;
    grad = Vec3{};
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int c = 0; c < 4; ++c) {
                const double q = g.at(base[0] + a, base[1] + b, base[2] + c);
                v += w[0][a] * w[1][b] * w[2][c] * q;
                grad.x += dw[0][a] * w[1][b] * w[2][c] * q;
                grad.y += w[0][a] * dw[1][b] * w[2][c] * q;
                grad.z += w[0][a] * w[1][b] * dw[2][c] * q;
            }
    return v;
}

} // namespace nvlimit
