#include "nvlimit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "nvlimit/parallel.hpp"

namespace nvlimit {

namespace {

// Two-sided 95% quantile of Student's t.
double student_t975(int dof)
{
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                   2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086};
    if (dof < 1) return 0.0;
    return dof <= 20 ? table[dof - 1] : 1.96 + 2.5 / dof;
}

} // namespace

OrderFit fit_order(const std::vector<std::pair<double, double>>& points)
{
    std::set<double> distinct;
    for (const auto& [c, e] : points) {
        if (!(c > 0.0) || !std::isfinite(c))
            throw Error(ErrorCode::rejected_input, "fit_order: c values must be positive");
        if (!(e > 0.0) || !std::isfinite(e))
            throw Error(ErrorCode::rejected_input,
                        "fit_order: non-positive error (log undefined; the measurement is floored)");
        distinct.insert(c);
    }
    if (distinct.size() < 3) throw Error(ErrorCode::rejected_input, "fit_order: need at least 3 distinct c values");
    const double n = static_cast<double>(points.size());
    double sx = 0, sy = 0;
    for (const auto& [c, e] : points) {
        sx += std::log(c);
        sy += std::log(e);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [c, e] : points) {
        const double dx = std::log(c) - mx, dy = std::log(e) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    OrderFit f;
    f.points = points;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    if (points.size() > 2) {
        const double dof = n - 2.0;
        f.slope_stderr = std::sqrt(std::max(0.0, syy - f.slope * sxy) / dof / sxx);
        f.slope_ci95 = student_t975(static_cast<int>(points.size()) - 2) * f.slope_stderr;
    }

    std::vector<std::pair<double, double>> sorted = points;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> local;
    for (std::size_t q = 1; q < sorted.size(); ++q)
        if (sorted[q].first > sorted[q - 1].first)
            local.push_back(std::log(sorted[q].second / sorted[q - 1].second) / std::log(sorted[q].first / sorted[q - 1].first));
    f.tail_slope = local.back();
    bool flattening = local.size() >= 2;
    for (std::size_t q = 1; q < local.size(); ++q) flattening = flattening && local[q] >= local[q - 1];
    f.floor_suspected = flattening && local.back() - local.front() > 0.1;
    return f;
}

double interior_max_abs(const Grid3& g, int sponge_width)
{
    const GridSpec& s = g.spec;
    double m = 0.0;
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            for (int k = 0; k < s.n; ++k)
                if (in_interior(s, sponge_width, i, j, k)) m = std::max(m, std::abs(g.at(i, j, k)));
    return m;
}

double compute_kc(const Grid3& phi, const Grid3& dphi, double c, int sponge_width)
{
    const GridSpec& s = phi.spec;
    const auto grad = gradient(phi);
    double m = 0.0;
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            for (int k = 0; k < s.n; ++k) {
                if (!in_interior(s, sponge_width, i, j, k)) continue;
                const std::size_t q = s.index(i, j, k);
                const Vec3 g{grad[0].data[q], grad[1].data[q], grad[2].data[q]};
                m = std::max(m, c * std::abs(dphi.data[q]) + c * c * norm(g));
            }
    return m;
}

double compute_kc(const FieldState& fs)
{
    return compute_kc(fs.phi_prev, fs.dphi_dt, fs.c, fs.options.sponge_width);
}

std::vector<std::array<int, 3>> support_probe_nodes(const ParticleEnsemble& ens, const GridSpec& spec, int dilate,
                                                    std::size_t max_nodes)
{
    std::vector<char> mark(spec.size(), 0);
    for (const Vec3& x : ens.x) {
        CicStencil st;
        if (!cic_stencil(spec, x, 0, st)) continue;
        for (int a = st.i - dilate; a <= st.i + 1 + dilate; ++a)
            for (int b = st.j - dilate; b <= st.j + 1 + dilate; ++b)
                for (int c = st.k - dilate; c <= st.k + 1 + dilate; ++c)
                    if (a >= 1 && b >= 1 && c >= 1 && a < spec.n - 1 && b < spec.n - 1 && c < spec.n - 1)
                        mark[spec.index(a, b, c)] = 1;
    }
    std::vector<std::array<int, 3>> all;
    for (int i = 0; i < spec.n; ++i)
        for (int j = 0; j < spec.n; ++j)
            for (int k = 0; k < spec.n; ++k)
                if (mark[spec.index(i, j, k)]) all.push_back({i, j, k});
    if (max_nodes == 0 || all.size() <= max_nodes) return all;
    std::vector<std::array<int, 3>> out;
    const double stride = double(all.size()) / double(max_nodes);
    for (std::size_t q = 0; q < max_nodes; ++q) out.push_back(all[static_cast<std::size_t>(q * stride)]);
    return out;
}

std::pair<double, double> field_errors(const Grid3& phi, const Grid3& U, double c,
                                       const std::vector<std::array<int, 3>>& nodes)
{
    if (!phi.spec.same_shape(U.spec)) throw Error(ErrorCode::configuration, "field_errors: grid shapes differ");
    const auto gphi = gradient(phi);
    const auto gU = gradient(U);
    const double c2 = c * c;
    double ep = 0.0, eg = 0.0;
    for (const auto& n : nodes) {
        const std::size_t q = phi.spec.index(n[0], n[1], n[2]);
        ep = std::max(ep, std::abs(c2 * phi.data[q] - U.data[q]));
        const Vec3 d{c2 * gphi[0].data[q] - gU[0].data[q], c2 * gphi[1].data[q] - gU[1].data[q],
                     c2 * gphi[2].data[q] - gU[2].data[q]};
        eg = std::max(eg, norm(d));
    }
    return {ep, eg};
}

DfResult compute_df(const FieldHistory& hist_nv, const FieldHistory& hist_vp, const std::vector<ProbeSet>& probes,
                    const Profile& prof, const PointwiseOptions& opt, int workers)
{
    DfResult res;
    for (const ProbeSet& ps : probes) {
        const std::size_t n = ps.x.size();
        std::vector<double> diff(n, 0.0);
        std::vector<char> ok(n, 0);
        parallel_blocks(n, workers, [&](std::size_t b, std::size_t e, int) {
            for (std::size_t i = b; i < e; ++i) {
                try {
                    const double fn = eval_f_pointwise(hist_nv, prof, ps.t, ps.x[i], ps.p[i], opt);
                    const double fv = eval_f_pointwise(hist_vp, prof, ps.t, ps.x[i], ps.p[i], opt);
                    diff[i] = std::abs(fn - fv);
                    ok[i] = 1;
                } catch (const Error& err) {
                    if (err.code() != ErrorCode::support_violation) throw;
                }
            }
        });
        for (std::size_t i = 0; i < n; ++i) {
            if (ok[i]) {
                res.value = std::max(res.value, diff[i]);
                ++res.evaluated;
            } else {
                ++res.skipped;
            }
        }
        res.per_checkpoint.push_back(res.value);
    }
    return res;
}

double trajectory_discrepancy(const ParticleEnsemble& a, const ParticleEnsemble& b)
{
    if (a.size() != b.size()) throw Error(ErrorCode::configuration, "trajectory_discrepancy: ensemble sizes differ");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, norm(a.x[i] - b.x[i]) + norm(a.p[i] - b.p[i]));
    return m;
}

std::string format_number(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    return out;
}

} // namespace

void write_diagnostics_csv(const std::string& path, const std::vector<StepDiagnostics>& rows)
{
    std::ofstream out = open_out(path);
    out << "t,c,P_c,K_c,Q,sup_f,psi_audit,linf_bound,conservation_drift,max_abs_x\n";
    for (const auto& r : rows)
        out << format_number(r.t) << ',' << format_number(r.c) << ',' << format_number(r.Pc) << ','
            << format_number(r.Kc) << ',' << format_number(r.Q) << ',' << format_number(r.sup_f) << ','
            << format_number(r.psi_audit) << ',' << format_number(r.linf_bound) << ','
            << format_number(r.conservation_drift) << ',' << format_number(r.max_abs_x) << '\n';
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

void write_convergence_csv(const std::string& path, const std::vector<ErrorRecord>& rows)
{
    std::ofstream out = open_out(path);
    out << "c,t_eval,err_phi,err_gradphi,err_dtphi,err_f,err_traj,df_skipped\n";
    for (const auto& r : rows)
        out << format_number(r.c) << ',' << format_number(r.t_eval) << ',' << format_number(r.err_phi) << ','
            << format_number(r.err_gradphi) << ',' << format_number(r.err_dtphi) << ',' << format_number(r.err_f)
            << ',' << format_number(r.err_traj) << ',' << r.df_skipped << '\n';
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

void write_order_txt(const std::string& path, const std::vector<std::pair<std::string, OrderFit>>& fits)
{
    std::ofstream out = open_out(path);
    out << "# kind slope intercept r_squared\n";
    for (const auto& [name, f] : fits)
        out << name << ' ' << format_number(f.slope) << ' ' << format_number(f.intercept) << ' '
            << format_number(f.r_squared) << '\n';
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);
}

} // namespace nvlimit
