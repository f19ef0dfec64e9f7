#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "nvlimit/field_poisson.hpp"
#include "nvlimit/field_wave.hpp"
#include "nvlimit/phase_space.hpp"
#include "nvlimit/pusher.hpp"

namespace nvlimit {

struct ErrorRecord {
    double c = 0.0;
    double err_phi = 0.0;     // max over probe nodes |c^2 phi - U|
    double err_gradphi = 0.0; // max over probe nodes |c^2 grad phi - grad U|
    double err_dtphi = 0.0;   // max over interior nodes |dphi/dt|
    double err_f = 0.0;       // D_F
    double err_traj = 0.0;    // max_i |X_c - X_inf| + |P_c - P_inf|
    double t_eval = 0.0;
    std::size_t df_skipped = 0;
};

struct OrderFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0; // standard error of the slope (0 for an exact line)
    double slope_ci95 = 0.0;   // half-width of the 95% Student-t interval of the slope
    double tail_slope = 0.0;   // slope between the two largest c
    bool floor_suspected = false;
    std::vector<std::pair<double, double>> points;
};

/// Least squares line through (ln c, ln error). Needs >= 3 distinct c and positive errors.
/// A floor is suspected when the local slopes between consecutive c (sorted) flatten
/// monotonically and the last one is shallower than the first by more than 0.1.
OrderFit fit_order(const std::vector<std::pair<double, double>>& points);

/// max over interior (non-sponge) nodes of c |dphi/dt| + c^2 |grad phi|, using the
/// older level of the state (where the centred dphi/dt lives).
double compute_kc(const FieldState& fs);

/// Same functional for explicit grids.
double compute_kc(const Grid3& phi, const Grid3& dphi, double c, int sponge_width);

/// max over interior nodes of |g|.
double interior_max_abs(const Grid3& g, int sponge_width);

/// Nodes within `dilate` cells of any marker, subsampled deterministically to at most `max_nodes`.
std::vector<std::array<int, 3>> support_probe_nodes(const ParticleEnsemble& ens, const GridSpec& spec, int dilate,
                                                    std::size_t max_nodes);

/// (max |c^2 phi - U|, max |c^2 grad phi - grad U|) over the probe nodes.
std::pair<double, double> field_errors(const Grid3& phi, const Grid3& U, double c,
                                       const std::vector<std::array<int, 3>>& nodes);

/// Phase-space probes at one checkpoint time.
struct ProbeSet {
    double t = 0.0;
    std::vector<Vec3> x;
    std::vector<Vec3> p;
};

struct DfResult {
    double value = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    std::vector<double> per_checkpoint; // running max after each checkpoint
};

/// max over checkpoints and probes of |f_nv - f_vp|, both from backward characteristics.
DfResult compute_df(const FieldHistory& hist_nv, const FieldHistory& hist_vp, const std::vector<ProbeSet>& probes,
                    const Profile& prof, const PointwiseOptions& opt = {}, int workers = 1);

/// max_i |X_a - X_b| + |P_a - P_b| over matched markers.
double trajectory_discrepancy(const ParticleEnsemble& a, const ParticleEnsemble& b);

/// One row of diagnostics.csv.
struct StepDiagnostics {
    double t = 0.0;
    double c = 0.0;
    double Pc = 0.0;
    double Kc = 0.0;
    double Q = 0.0;
    double sup_f = 0.0;
    double psi_audit = 0.0;
    double linf_bound = 0.0;
    double conservation_drift = 0.0;
    double max_abs_x = 0.0;
};

/// Fixed 17-significant-digit formatting so outputs are byte-reproducible.
std::string format_number(double v);

void write_diagnostics_csv(const std::string& path, const std::vector<StepDiagnostics>& rows);
void write_convergence_csv(const std::string& path, const std::vector<ErrorRecord>& rows);
void write_order_txt(const std::string& path, const std::vector<std::pair<std::string, OrderFit>>& fits);

} // namespace nvlimit
