#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "nvlimit/diagnostics.hpp"
#include "nvlimit/field_poisson.hpp"
#include "nvlimit/field_wave.hpp"
#include "nvlimit/phase_space.hpp"
#include "nvlimit/pusher.hpp"

namespace nvlimit {

enum class HSharpKind { zero, bump };

/// Run configuration, read from flat `key = value` text. Lengths, times and
/// momenta are in scenario units (G = 1, the light speed c is the only other
/// scale). Unknown keys are rejected.
struct RunConfig {
    std::vector<double> c_list{4, 8, 16, 32};
    int grid_n = 48;
    double half_width = 4.0;
    double cfl_safety = 0.9;
    double t_end = 1.0;

    int particles_nx = 9;  // lattice points per spatial axis
    int particles_np = 5;  // lattice points per momentum axis
    double particles_jitter = 0.0;
    std::uint64_t seed = 20240501;

    ProfileKind profile_kind = ProfileKind::radial_bump;
    Vec3 profile_center_x;
    Vec3 profile_center_p;
    double profile_radius_x = 1.0;
    double profile_radius_p = 0.5;
    double profile_mass = 1.0;      // > 0: amplitude chosen to give this total mass
    double profile_amplitude = 1.0; // used when profile_mass <= 0

    HSharpKind h_sharp = HSharpKind::zero;
    double h_sharp_amplitude = 0.1; // h_sharp = amplitude * bump(|x| / radius)
    double h_sharp_radius = 1.5;

    int sponge_width = 4;
    double sponge_strength = 0.25;
    GreenKernel poisson_kernel = GreenKernel::lattice_consistent;

    int probe_phase = 200;  // phase-space probes for D_F
    int probe_nodes = 500;  // spatial nodes for the field errors
    int probe_dilate = 2;   // cells added around the support for the node probes
    int tracked = 100;      // markers carrying an independent ln f integral
    int checkpoints = 40;   // history frames (and D_F checkpoints) over [0, t_end]
    int pointwise_steps_per_frame = 4;
    int vp_steps = 0;       // 0: the largest NV step count of the sweep
    double v_max = 1.5;     // momentum-support guess for the domain-size check

    std::string output_dir = "out";

    static RunConfig from_text(std::istream& in, const std::string& source = "<config>");
    static RunConfig from_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void validate() const;
    /// Canonical `key = value` dump accepted by from_text.
    std::string to_text() const;

    GridSpec grid() const;
    WaveOptions wave_options() const;
    /// NV step count at light speed c: the CFL step rounded down so that the
    /// checkpoint interval is a whole number of steps.
    int nv_steps(double c) const;
    int vp_step_count() const;
};

/// Everything shared by the runs of one configuration: the ensemble at t = 0
/// (identical for NV and VP), f_in and the data g_sharp, h_sharp.
struct Scenario {
    Profile profile;
    GridSpec spec;
    ParticleEnsemble ens0;
    Grid3 g_sharp;
    Grid3 h_sharp;
};

Scenario make_scenario(const RunConfig& cfg, const PoissonSolver& solver);

struct RunStatus {
    bool ok = true;
    std::string reason;  // error_code_name of the abort, empty when ok
    std::string message;
};

/// Inputs of one NV time loop, stated without reference to a RunConfig so that
/// rescaled copies can be built.
struct NvSetup {
    Profile profile;          // f_in, used for the sup-norm bound
    ParticleEnsemble ens;     // state at t = 0
    Grid3 g_sharp;
    Grid3 h_sharp;
    double c = 1.0;
    double t_end = 0.0;
    double dt = 0.0;          // t_end / n_steps
    int n_steps = 0;
    int frame_every = 0;      // steps between history frames; divides n_steps
    WaveOptions wave;
    int tracked = 0;
    bool companion = true;    // source-free run for phi_hom
    int snapshot_every = 0;
    std::string snapshot_dir;
    int workers = 1;
};

struct NvRunResult {
    RunStatus status;
    double c = 0.0;
    double dt = 0.0;
    int steps = 0;
    FieldHistory history;
    std::vector<StepDiagnostics> diag;
    ParticleEnsemble ens;       // at the last completed marker time
    Grid3 phi_end;              // phi at t_end
    Grid3 dphi_end;             // centred dphi/dt at t_end
    double max_kc = 0.0;
    double max_pc = 0.0;
    double max_psi_audit = 0.0;     // max over steps of max_nodes (phi - phi_hom)
    double max_linf_ratio = 0.0;    // max over steps of sup f / bound
    double max_drift = 0.0;         // conservation-law drift on tracked markers
    double wall_seconds = 0.0;
};

NvRunResult run_nv(const NvSetup& setup);
NvSetup nv_setup(const RunConfig& cfg, const Scenario& sc, double c, int workers = 1);

struct VpRunResult {
    RunStatus status;
    double dt = 0.0;
    int steps = 0;
    FieldHistory history;
    std::vector<StepDiagnostics> diag;
    ParticleEnsemble ens;
    NewtonianField field_end;
    std::vector<ProbeSet> probes;   // VP marker states at every checkpoint
    double mass_drift = 0.0;        // |sum w(t) - sum w(0)| / sum w(0)
    double wall_seconds = 0.0;
};

struct VpRunOptions {
    int n_steps = 0;
    int frame_every = 0;
    std::vector<std::size_t> probe_markers;
    int snapshot_every = 0;
    std::string snapshot_dir;
    int workers = 1;
};

VpRunResult run_vp(const Scenario& sc, const PoissonSolver& solver, double t_end, const VpRunOptions& opt);

/// Evenly spaced marker indices (deterministic).
std::vector<std::size_t> spread_indices(std::size_t n, std::size_t count);

struct AuditLine {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

struct RunSummary {
    std::vector<ErrorRecord> records;
    std::vector<std::pair<std::string, OrderFit>> fits;
    std::vector<std::string> fit_failures; // kinds that could not be fitted, with the reason
    std::vector<AuditLine> audits;
    std::vector<RunStatus> member_status;   // VP first, then one per c
    std::vector<double> max_kc;             // per c
    std::vector<double> max_pc;
    std::vector<double> max_drift;
    std::vector<double> max_psi;
    std::vector<double> max_linf_ratio;
    std::map<std::string, double> wall_seconds;
    std::map<std::string, int> steps;
    double total_seconds = 0.0;
    std::size_t markers = 0;

    bool all_pass() const;
};

struct SweepOptions {
    int workers = 1;
    int snapshot_every = 0;
    bool write_outputs = true;
};

/// VP once, NV per c, error records at t_end, order fits, audits and outputs.
RunSummary run_csweep(const RunConfig& cfg, const SweepOptions& opt = {});

/// Order fits for every error kind of a record list (the sweep's last stage;
/// callable on synthetic records).
void fit_records(RunSummary& summary);

/// Slope-window and bounded-functional audits of a finished sweep.
void audit_sweep(RunSummary& summary);

void write_summary(const std::string& path, const RunSummary& summary);

struct RescaleReport {
    double c = 1.0;
    double discrepancy = 0.0;       // max interior |phi_c(t) - phi_1(c t)| over matched frames
    double field_scale = 0.0;       // max interior |phi_c|
    int frames = 0;
    RunStatus status;
};

/// max interior |phi_h(t_end) - phi_h/2(t_end)| on the coarse nodes, from NV runs
/// at grid_n and 2 grid_n - 1 nodes over the same box (dt follows the CFL rule).
/// The sponge keeps its physical width.
double refinement_difference(const RunConfig& cfg, double c, int workers = 1);

/// Runs the system at light speed c and the c = 1 system with the data mapped
/// by (t, x, p, f) -> (c t, x, p / c, c f), then compares the fields.
RescaleReport rescaling_test(const RunConfig& cfg, double c, int workers = 1);

/// Raw little-endian float64 (row-major, k fastest) plus `<path>.json` with n, h, origin, t, c.
void write_snapshot(const std::string& path, const Grid3& g, double t, double c);
Grid3 read_snapshot(const std::string& path, double* t = nullptr, double* c = nullptr);

/// Record-oriented audit output: one `name value threshold PASS|FAIL detail` line each.
void write_audit_lines(std::ostream& out, const std::vector<AuditLine>& lines);

} // namespace nvlimit
