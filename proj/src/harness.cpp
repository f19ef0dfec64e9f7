#include "nvlimit/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace nvlimit {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double parse_double(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorCode::configuration, "key '" + key + "': not a number: '" + v + "'");
    }
}

long long parse_int(const std::string& key, const std::string& v)
{
    try {
        std::size_t used = 0;
        const long long d = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorCode::configuration, "key '" + key + "': not an integer: '" + v + "'");
    }
}

Vec3 parse_vec3(const std::string& key, const std::string& v)
{
    const auto parts = split_list(v);
    if (parts.size() != 3) throw Error(ErrorCode::configuration, "key '" + key + "': expected three comma-separated numbers");
    return {parse_double(key, parts[0]), parse_double(key, parts[1]), parse_double(key, parts[2])};
}

std::string vec_text(const Vec3& v)
{
    return format_number(v.x) + ", " + format_number(v.y) + ", " + format_number(v.z);
}

const char* kernel_name(GreenKernel k)
{
    return k == GreenKernel::continuum ? "continuum" : "lattice_consistent";
}

std::string c_tag(double c)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", c);
    return buf;
}

double interior_max_diff(const Grid3& a, const Grid3& b, int sponge_width)
{
    const GridSpec& s = a.spec;
    double m = 0.0;
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            for (int k = 0; k < s.n; ++k)
                if (in_interior(s, sponge_width, i, j, k)) m = std::max(m, std::abs(a.at(i, j, k) - b.at(i, j, k)));
    return m;
}

double frame_time(double t_end, int k, int frames)
{
    return k == frames ? t_end : t_end * k / frames;
}

} // namespace

// ---------------------------------------------------------------- RunConfig

void RunConfig::set(const std::string& key, const std::string& value)
{
    const std::string& v = value;
    if (key == "c_list") {
        c_list.clear();
        for (const auto& item : split_list(v)) c_list.push_back(parse_double(key, item));
    } else if (key == "grid_n") {
        grid_n = static_cast<int>(parse_int(key, v));
    } else if (key == "half_width") {
        half_width = parse_double(key, v);
    } else if (key == "cfl_safety") {
        cfl_safety = parse_double(key, v);
    } else if (key == "t_end") {
        t_end = parse_double(key, v);
    } else if (key == "particles_nx") {
        particles_nx = static_cast<int>(parse_int(key, v));
    } else if (key == "particles_np") {
        particles_np = static_cast<int>(parse_int(key, v));
    } else if (key == "particles_jitter") {
        particles_jitter = parse_double(key, v);
    } else if (key == "seed") {
        const long long s = parse_int(key, v);
        if (s < 0) throw Error(ErrorCode::configuration, "seed must be nonnegative");
        seed = static_cast<std::uint64_t>(s);
    } else if (key == "profile_kind") {
        if (v == "radial_bump")
            profile_kind = ProfileKind::radial_bump;
        else if (v == "product_bump")
            profile_kind = ProfileKind::product_bump;
        else
            throw Error(ErrorCode::configuration, "profile_kind must be radial_bump or product_bump");
    } else if (key == "profile_center_x") {
        profile_center_x = parse_vec3(key, v);
    } else if (key == "profile_center_p") {
        profile_center_p = parse_vec3(key, v);
    } else if (key == "profile_radius_x") {
        profile_radius_x = parse_double(key, v);
    } else if (key == "profile_radius_p") {
        profile_radius_p = parse_double(key, v);
    } else if (key == "profile_mass") {
        profile_mass = parse_double(key, v);
    } else if (key == "profile_amplitude") {
        profile_amplitude = parse_double(key, v);
    } else if (key == "h_sharp") {
        if (v == "zero")
            h_sharp = HSharpKind::zero;
        else if (v == "bump")
            h_sharp = HSharpKind::bump;
        else
            throw Error(ErrorCode::configuration, "h_sharp must be zero or bump");
    } else if (key == "h_sharp_amplitude") {
        h_sharp_amplitude = parse_double(key, v);
    } else if (key == "h_sharp_radius") {
        h_sharp_radius = parse_double(key, v);
    } else if (key == "sponge_width") {
        sponge_width = static_cast<int>(parse_int(key, v));
    } else if (key == "sponge_strength") {
        sponge_strength = parse_double(key, v);
    } else if (key == "poisson_kernel") {
        if (v == "continuum")
            poisson_kernel = GreenKernel::continuum;
        else if (v == "lattice_consistent")
            poisson_kernel = GreenKernel::lattice_consistent;
        else
            throw Error(ErrorCode::configuration, "poisson_kernel must be continuum or lattice_consistent");
    } else if (key == "probe_phase") {
        probe_phase = static_cast<int>(parse_int(key, v));
    } else if (key == "probe_nodes") {
        probe_nodes = static_cast<int>(parse_int(key, v));
    } else if (key == "probe_dilate") {
        probe_dilate = static_cast<int>(parse_int(key, v));
    } else if (key == "tracked") {
        tracked = static_cast<int>(parse_int(key, v));
    } else if (key == "checkpoints") {
        checkpoints = static_cast<int>(parse_int(key, v));
    } else if (key == "pointwise_steps_per_frame") {
        pointwise_steps_per_frame = static_cast<int>(parse_int(key, v));
    } else if (key == "vp_steps") {
        vp_steps = static_cast<int>(parse_int(key, v));
    } else if (key == "v_max") {
        v_max = parse_double(key, v);
    } else if (key == "output_dir") {
        output_dir = v;
    } else {
        throw Error(ErrorCode::configuration, "unknown configuration key '" + key + "'");
    }
}

RunConfig RunConfig::from_text(std::istream& in, const std::string& source)
{
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::configuration, source + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            cfg.set(key, value);
        } catch (const Error& e) {
            throw Error(ErrorCode::configuration, source + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open config " + path);
    return from_text(in, path);
}

void RunConfig::validate() const
{
    auto fail = [](const std::string& m) { throw Error(ErrorCode::configuration, m); };
    for (double c : c_list)
        if (!(c >= 1.0) || !std::isfinite(c)) fail("c_list entries must be finite and >= 1");
    if (grid_n < 8) fail("grid_n must be at least 8");
    if (!(half_width > 0.0)) fail("half_width must be positive");
    if (!(cfl_safety > 0.0 && cfl_safety < 1.0)) fail("cfl_safety must lie in (0, 1)");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) fail("t_end must be positive");
    if (particles_nx < 2 || particles_np < 2) fail("particles_nx and particles_np must be at least 2");
    if (!(particles_jitter >= 0.0 && particles_jitter <= 1.0)) fail("particles_jitter must lie in [0, 1]");
    if (!(profile_radius_x > 0.0 && profile_radius_p > 0.0)) fail("profile radii must be positive");
    if (profile_mass <= 0.0 && !(profile_amplitude >= 0.0)) fail("profile_amplitude must be nonnegative");
    if (!std::isfinite(profile_mass)) fail("profile_mass must be finite");
    if (h_sharp == HSharpKind::bump && !(h_sharp_radius > 0.0)) fail("h_sharp_radius must be positive");
    if (sponge_width < 0 || 2 * sponge_width + 4 > grid_n) fail("sponge_width out of range for the grid");
    if (!(sponge_strength >= 0.0 && sponge_strength < 1.0)) fail("sponge_strength must lie in [0, 1)");
    if (probe_phase < 0 || probe_nodes < 0 || probe_dilate < 0 || tracked < 0) fail("probe counts must be nonnegative");
    if (checkpoints < 1) fail("checkpoints must be at least 1");
    if (pointwise_steps_per_frame < 1) fail("pointwise_steps_per_frame must be at least 1");
    if (vp_steps < 0) fail("vp_steps must be nonnegative");
    if (vp_steps > 0 && vp_steps % checkpoints != 0) fail("vp_steps must be a multiple of checkpoints");
    if (!(v_max >= 0.0)) fail("v_max must be nonnegative");

    Profile prof;
    prof.kind = profile_kind;
    prof.center_x = profile_center_x;
    prof.center_p = profile_center_p;
    prof.radius_x = profile_radius_x;
    prof.radius_p = profile_radius_p;
    prof.validate();
    const double h = 2.0 * half_width / (grid_n - 1);
    const double need = prof.support_radius_x() + v_max * t_end + (sponge_width + 2) * h;
    if (half_width < need)
        fail("half_width " + format_number(half_width) + " is smaller than support + v_max t_end + sponge margin = " +
             format_number(need));
}

std::string RunConfig::to_text() const
{
    std::ostringstream o;
    o << "c_list = ";
    for (std::size_t i = 0; i < c_list.size(); ++i) o << (i ? ", " : "") << format_number(c_list[i]);
    o << "\n";
    o << "grid_n = " << grid_n << "\n";
    o << "half_width = " << format_number(half_width) << "\n";
    o << "cfl_safety = " << format_number(cfl_safety) << "\n";
    o << "t_end = " << format_number(t_end) << "\n";
    o << "particles_nx = " << particles_nx << "\n";
    o << "particles_np = " << particles_np << "\n";
    o << "particles_jitter = " << format_number(particles_jitter) << "\n";
    o << "seed = " << seed << "\n";
    o << "profile_kind = " << (profile_kind == ProfileKind::radial_bump ? "radial_bump" : "product_bump") << "\n";
    o << "profile_center_x = " << vec_text(profile_center_x) << "\n";
    o << "profile_center_p = " << vec_text(profile_center_p) << "\n";
    o << "profile_radius_x = " << format_number(profile_radius_x) << "\n";
    o << "profile_radius_p = " << format_number(profile_radius_p) << "\n";
    o << "profile_mass = " << format_number(profile_mass) << "\n";
    o << "profile_amplitude = " << format_number(profile_amplitude) << "\n";
    o << "h_sharp = " << (h_sharp == HSharpKind::zero ? "zero" : "bump") << "\n";
    o << "h_sharp_amplitude = " << format_number(h_sharp_amplitude) << "\n";
    o << "h_sharp_radius = " << format_number(h_sharp_radius) << "\n";
    o << "sponge_width = " << sponge_width << "\n";
    o << "sponge_strength = " << format_number(sponge_strength) << "\n";
    o << "poisson_kernel = " << kernel_name(poisson_kernel) << "\n";
    o << "probe_phase = " << probe_phase << "\n";
    o << "probe_nodes = " << probe_nodes << "\n";
    o << "probe_dilate = " << probe_dilate << "\n";
    o << "tracked = " << tracked << "\n";
    o << "checkpoints = " << checkpoints << "\n";
    o << "pointwise_steps_per_frame = " << pointwise_steps_per_frame << "\n";
    o << "vp_steps = " << vp_steps << "\n";
    o << "v_max = " << format_number(v_max) << "\n";
    o << "output_dir = " << output_dir << "\n";
    return o.str();
}

GridSpec RunConfig::grid() const { return GridSpec::centered(grid_n, half_width); }

WaveOptions RunConfig::wave_options() const
{
    WaveOptions w;
    w.cfl_safety = cfl_safety;
    w.sponge_width = sponge_width;
    w.sponge_strength = sponge_strength;
    return w;
}

int RunConfig::nv_steps(double c) const
{
    const double dt_max = cfl_time_step(c, grid().h, cfl_safety);
    const double blocks = std::ceil(t_end / (dt_max * checkpoints) * (1.0 - 1e-12));
    return static_cast<int>(std::max(1.0, blocks)) * checkpoints;
}

int RunConfig::vp_step_count() const
{
    if (vp_steps > 0) return vp_steps;
    int n = checkpoints;
    for (double c : c_list) n = std::max(n, nv_steps(c));
    return n;
}

// ----------------------------------------------------------------- Scenario

Scenario make_scenario(const RunConfig& cfg, const PoissonSolver& solver)
{
    cfg.validate();
    Scenario sc;
    sc.spec = cfg.grid();
    if (!sc.spec.same_shape(solver.spec())) throw Error(ErrorCode::configuration, "make_scenario: solver grid differs");
    Profile& prof = sc.profile;
    prof.kind = cfg.profile_kind;
    prof.center_x = cfg.profile_center_x;
    prof.center_p = cfg.profile_center_p;
    prof.radius_x = cfg.profile_radius_x;
    prof.radius_p = cfg.profile_radius_p;
    prof.amplitude = 1.0;
    if (cfg.profile_mass > 0.0)
        prof.amplitude = cfg.profile_mass / reference_mass(prof);
    else
        prof.amplitude = cfg.profile_amplitude;
    prof.validate();

    sc.ens0 = sample_ensemble(prof, LatticeCounts{cfg.particles_nx, cfg.particles_np}, cfg.seed, cfg.particles_jitter);
    sc.g_sharp = gsharp_from_fin(sc.ens0, solver);
    sc.h_sharp = Grid3(sc.spec);
    if (cfg.h_sharp == HSharpKind::bump) {
        const GridSpec& s = sc.spec;
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.n; ++j)
                for (int k = 0; k < s.n; ++k)
                    sc.h_sharp.at(i, j, k) =
                        cfg.h_sharp_amplitude * bump(norm(s.node(i, j, k) - prof.center_x) / cfg.h_sharp_radius);
    }
    return sc;
}

std::vector<std::size_t> spread_indices(std::size_t n, std::size_t count)
{
    std::vector<std::size_t> out;
    if (n == 0 || count == 0) return out;
    count = std::min(count, n);
    const double stride = double(n) / double(count);
    for (std::size_t q = 0; q < count; ++q) out.push_back(std::min(n - 1, static_cast<std::size_t>((q + 0.5) * stride)));
    return out;
}

// ----------------------------------------------------------------- NV loop

NvSetup nv_setup(const RunConfig& cfg, const Scenario& sc, double c, int workers)
{
    NvSetup su;
    su.profile = sc.profile;
    su.ens = sc.ens0;
    su.g_sharp = sc.g_sharp;
    su.h_sharp = sc.h_sharp;
    su.c = c;
    su.t_end = cfg.t_end;
    su.n_steps = cfg.nv_steps(c);
    su.dt = cfg.t_end / su.n_steps;
    su.frame_every = su.n_steps / cfg.checkpoints;
    su.wave = cfg.wave_options();
    su.tracked = cfg.tracked;
    su.workers = workers;
    return su;
}

NvRunResult run_nv(const NvSetup& su)
{
    const auto t0 = Clock::now();
    NvRunResult res;
    res.c = su.c;
    res.dt = su.dt;
    res.history = FieldHistory(System::nv, su.c);
    res.ens = su.ens;
    ParticleEnsemble& ens = res.ens;
    try {
        if (su.n_steps < 1 || su.frame_every < 1 || su.n_steps % su.frame_every != 0)
            throw Error(ErrorCode::configuration, "run_nv: n_steps must be a positive multiple of frame_every");
        if (!(su.t_end > 0.0) || std::abs(su.dt * su.n_steps - su.t_end) > 1e-12 * su.t_end)
            throw Error(ErrorCode::configuration, "run_nv: dt * n_steps must equal t_end");
        const double c = su.c, dt = su.dt;
        const GridSpec& spec = su.g_sharp.spec;
        const int frames = su.n_steps / su.frame_every;
        const int sw = su.wave.sponge_width;

        const double inv_c2 = 1.0 / (c * c);
        for (std::size_t i = 0; i < ens.size(); ++i) {
            const CicStencil st = cic_stencil_or_throw(spec, ens.x[i], 1, "run_nv");
            ens.phi0[i] = interpolate(su.g_sharp, st) * inv_c2;
        }
        SourceGrid src = deposit_source(ens, spec, c, 1, su.workers);
        FieldState fs = init_field(su.g_sharp, su.h_sharp, c, dt, src, su.wave);
        const SourceGrid no_source{Grid3(spec)};
        FieldState hom;
        if (su.companion) hom = init_field(su.g_sharp, su.h_sharp, c, dt, no_source, su.wave);
        const double max_phi0 = fs.phi_prev.max_abs();
        const double f_in_sup = su.profile.amplitude;

        ConservationTrack track;
        const bool tracking = su.tracked > 0 && !ens.empty();
        if (tracking) track.init(ens, spread_indices(ens.size(), static_cast<std::size_t>(su.tracked)), fs.phi_prev);

        SupportStats stats = initial_support(ens);
        std::vector<double> phi_at(ens.size());
        auto record = [&](double t, double drift) {
            for (std::size_t i = 0; i < ens.size(); ++i)
                phi_at[i] = interpolate(fs.phi_prev, cic_stencil_or_throw(spec, ens.x[i], 0, "run_nv"));
            if (!ens.empty()) stats = support_update(stats, ens, phi_at);
            StepDiagnostics d;
            d.t = t;
            d.c = c;
            d.Pc = stats.Pc;
            d.Kc = compute_kc(fs.phi_prev, fs.dphi_dt, c, sw);
            d.Q = stats.Q;
            for (double f : ens.f) d.sup_f = std::max(d.sup_f, f);
            const double hom_max = su.companion ? hom.phi_prev.max_abs() : 0.0;
            d.psi_audit = su.companion ? psi_positivity_audit(fs.phi_prev, hom.phi_prev) : 0.0;
            d.linf_bound = f_in_sup * std::exp(4.0 * (hom_max + max_phi0));
            d.conservation_drift = drift;
            d.max_abs_x = max_abs_position(ens);
            res.diag.push_back(d);
            res.max_kc = std::max(res.max_kc, d.Kc);
            res.max_pc = std::max(res.max_pc, d.Pc);
            res.max_psi_audit = std::max(res.max_psi_audit, d.psi_audit);
            if (d.linf_bound > 0.0) res.max_linf_ratio = std::max(res.max_linf_ratio, d.sup_f / d.linf_bound);
            res.max_drift = std::max(res.max_drift, drift);
        };
        auto snapshot = [&](int step, double t) {
            if (su.snapshot_every <= 0 || step % su.snapshot_every != 0) return;
            std::filesystem::create_directories(su.snapshot_dir);
            write_snapshot(su.snapshot_dir + "/phi_c" + c_tag(c) + "_step" + std::to_string(step) + ".f64",
                           fs.phi_prev, t, c);
        };

        record(0.0, 0.0);
        res.history.append(0.0, fs.phi_prev, &fs.dphi_dt);
        snapshot(0, 0.0);
        for (int n = 0; n < su.n_steps; ++n) {
            const int step = n + 1;
            const bool frame = step % su.frame_every == 0;
            const double t = frame ? frame_time(su.t_end, step / su.frame_every, frames) : step * dt;
            push_nv(ens, fs, su.workers, tracking ? &track : nullptr);
            const double drift = tracking ? track.max_drift(ens, fs.phi) : 0.0;
            src = deposit_source(ens, spec, c, 1, su.workers);
            wave_step(fs, src);
            if (su.companion) wave_step(hom, no_source);
            // fs.phi_prev is now the field at the marker time t, with its centred dphi/dt.
            record(t, drift);
            if (frame) res.history.append(t, fs.phi_prev, &fs.dphi_dt);
            snapshot(step, t);
            res.steps = step;
        }
        res.phi_end = fs.phi_prev;
        res.dphi_end = fs.dphi_dt;
    } catch (const Error& e) {
        res.status.ok = false;
        res.status.reason = error_code_name(e.code());
        res.status.message = e.what();
    }
    res.wall_seconds = seconds_since(t0);
    return res;
}

// ----------------------------------------------------------------- VP loop

VpRunResult run_vp(const Scenario& sc, const PoissonSolver& solver, double t_end, const VpRunOptions& opt)
{
    const auto t0 = Clock::now();
    VpRunResult res;
    res.history = FieldHistory(System::vp, std::numeric_limits<double>::infinity());
    res.ens = sc.ens0;
    ParticleEnsemble& ens = res.ens;
    const double inf = std::numeric_limits<double>::infinity();
    try {
        if (opt.n_steps < 1 || opt.frame_every < 1 || opt.n_steps % opt.frame_every != 0)
            throw Error(ErrorCode::configuration, "run_vp: n_steps must be a positive multiple of frame_every");
        const double dt = t_end / opt.n_steps;
        res.dt = dt;
        const GridSpec& spec = solver.spec();
        const int frames = opt.n_steps / opt.frame_every;
        const double mass0 = ens.total_mass();

        SourceGrid rho = deposit_source(ens, spec, inf, 1, opt.workers);
        NewtonianField nf = solver.solve(rho.mu, 0.0);
        SupportStats stats = initial_support(ens);
        std::vector<double> u_at(ens.size());

        auto probe = [&](double t) {
            ProbeSet ps;
            ps.t = t;
            for (std::size_t i : opt.probe_markers) {
                ps.x.push_back(ens.x[i]);
                ps.p.push_back(ens.p[i]);
            }
            res.probes.push_back(std::move(ps));
        };
        auto record = [&](double t) {
            for (std::size_t i = 0; i < ens.size(); ++i)
                u_at[i] = interpolate(nf.U, cic_stencil_or_throw(spec, ens.x[i], 0, "run_vp"));
            if (!ens.empty()) stats = support_update(stats, ens, u_at);
            StepDiagnostics d;
            d.t = t;
            d.c = inf;
            d.Pc = stats.Pc;
            // The c -> infinity analogue of K_c: max |grad U| off the faces.
            double kc = 0.0;
            for (int i = 0; i < spec.n; ++i)
                for (int j = 0; j < spec.n; ++j)
                    for (int k = 0; k < spec.n; ++k) {
                        if (!in_interior(spec, 1, i, j, k)) continue;
                        const std::size_t q = spec.index(i, j, k);
                        kc = std::max(kc, norm(Vec3{nf.gradU[0].data[q], nf.gradU[1].data[q], nf.gradU[2].data[q]}));
                    }
            d.Kc = kc;
            d.Q = stats.Q;
            for (double f : ens.f) d.sup_f = std::max(d.sup_f, f);
            d.linf_bound = sc.profile.amplitude;
            d.max_abs_x = max_abs_position(ens);
            res.diag.push_back(d);
        };
        auto snapshot = [&](int step, double t) {
            if (opt.snapshot_every <= 0 || step % opt.snapshot_every != 0) return;
            std::filesystem::create_directories(opt.snapshot_dir);
            write_snapshot(opt.snapshot_dir + "/U_step" + std::to_string(step) + ".f64", nf.U, t, inf);
        };

        record(0.0);
        res.history.append(0.0, nf.U);
        probe(0.0);
        snapshot(0, 0.0);
        for (int n = 0; n < opt.n_steps; ++n) {
            const int step = n + 1;
            const bool frame = step % opt.frame_every == 0;
            const double t = frame ? frame_time(t_end, step / opt.frame_every, frames) : step * dt;
            push_vp(ens, nf, solver, dt, 1, opt.workers);
            rho = deposit_source(ens, spec, inf, 1, opt.workers);
            nf = solver.solve(rho.mu, t);
            record(t);
            if (frame) {
                res.history.append(t, nf.U);
                probe(t);
            }
            snapshot(step, t);
            res.steps = step;
        }
        res.field_end = nf;
        res.mass_drift = mass0 > 0.0 ? std::abs(ens.total_mass() - mass0) / mass0 : 0.0;
    } catch (const Error& e) {
        res.status.ok = false;
        res.status.reason = error_code_name(e.code());
        res.status.message = e.what();
    }
    res.wall_seconds = seconds_since(t0);
    return res;
}

// ----------------------------------------------------------------- sweep

bool RunSummary::all_pass() const
{
    for (const auto& s : member_status)
        if (!s.ok) return false;
    for (const auto& a : audits)
        if (!a.pass) return false;
    return true;
}

void fit_records(RunSummary& summary)
{
    summary.fits.clear();
    summary.fit_failures.clear();
    const std::pair<const char*, double ErrorRecord::*> kinds[] = {
        {"phi", &ErrorRecord::err_phi},   {"gradphi", &ErrorRecord::err_gradphi}, {"dtphi", &ErrorRecord::err_dtphi},
        {"f", &ErrorRecord::err_f},       {"traj", &ErrorRecord::err_traj},
    };
    for (const auto& [name, member] : kinds) {
        std::vector<std::pair<double, double>> pts;
        for (const auto& r : summary.records) pts.emplace_back(r.c, r.*member);
        try {
            summary.fits.emplace_back(name, fit_order(pts));
        } catch (const Error& e) {
            summary.fit_failures.push_back(std::string(name) + ": " + e.what());
        }
    }
}

namespace {

const OrderFit* find_fit(const RunSummary& s, const std::string& name)
{
    for (const auto& [n, f] : s.fits)
        if (n == name) return &f;
    return nullptr;
}

AuditLine slope_audit(const RunSummary& s, const std::string& kind, double lo, double hi, double min_r2)
{
    AuditLine a;
    a.name = "slope_" + kind;
    a.threshold = hi;
    const OrderFit* f = find_fit(s, kind);
    if (!f) {
        a.pass = false;
        a.value = std::numeric_limits<double>::quiet_NaN();
        a.detail = "no fit (see fit failures)";
        return a;
    }
    a.value = f->slope;
    a.pass = f->slope >= lo && f->slope <= hi && f->r_squared >= min_r2;
    a.detail = "window [" + format_number(lo) + ", " + format_number(hi) + "] r2=" + format_number(f->r_squared);
    if (min_r2 > 0.0) a.detail += " (need >= " + format_number(min_r2) + ")";
    a.detail += " ci95=" + format_number(f->slope_ci95);
    if (f->floor_suspected) a.detail += " floor suspected (tail slope " + format_number(f->tail_slope) + ")";
    return a;
}

} // namespace

void audit_sweep(RunSummary& s)
{
    s.audits.clear();
    s.audits.push_back(slope_audit(s, "phi", -1.3, -0.7, 0.95));
    s.audits.push_back(slope_audit(s, "gradphi", -1.3, -0.7, 0.0));
    s.audits.push_back(slope_audit(s, "dtphi", -1.4, -0.6, 0.0));
    s.audits.push_back(slope_audit(s, "f", -1.3, -0.7, 0.0));
    s.audits.push_back(slope_audit(s, "traj", -1.3, -0.7, 0.0));

    auto max_of = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, x);
        return m;
    };
    AuditLine drift{"conservation_drift", false, max_of(s.max_drift), 1e-3, "max over tracked markers and steps"};
    drift.pass = !s.max_drift.empty() && drift.value <= drift.threshold;
    s.audits.push_back(drift);

    AuditLine linf{"linf_bound_ratio", false, max_of(s.max_linf_ratio), 1.0 + 1e-6, "sup f / bound, max over steps"};
    linf.pass = !s.max_linf_ratio.empty() && linf.value <= linf.threshold;
    s.audits.push_back(linf);

    AuditLine psi{"psi_sign", false, max_of(s.max_psi), 1e-3, "max over nodes and steps of phi - phi_hom"};
    psi.pass = !s.max_psi.empty() && psi.value <= psi.threshold;
    s.audits.push_back(psi);

    std::string kc_detail, pc_detail;
    bool finite = !s.max_kc.empty();
    for (std::size_t q = 0; q < s.max_kc.size(); ++q) {
        kc_detail += (q ? " " : "") + format_number(s.max_kc[q]);
        pc_detail += (q ? " " : "") + format_number(s.max_pc[q]);
        finite = finite && std::isfinite(s.max_kc[q]) && std::isfinite(s.max_pc[q]);
    }
    s.audits.push_back({"kc_reported", finite, max_of(s.max_kc), 0.0, "max K_c per c: " + kc_detail});
    s.audits.push_back({"pc_reported", finite, max_of(s.max_pc), 0.0, "max P_c per c: " + pc_detail});
}

void write_audit_lines(std::ostream& out, const std::vector<AuditLine>& lines)
{
    for (const auto& a : lines)
        out << a.name << ' ' << format_number(a.value) << ' ' << format_number(a.threshold) << ' '
            << (a.pass ? "PASS" : "FAIL") << ' ' << a.detail << '\n';
}

void write_summary(const std::string& path, const RunSummary& s)
{
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot open " + path);
    out << "status " << (s.all_pass() ? "PASS" : "FAIL") << '\n';
    for (std::size_t q = 0; q < s.member_status.size(); ++q) {
        const auto& m = s.member_status[q];
        out << "member " << q << ' ' << (m.ok ? "ok" : "aborted " + m.reason + " " + m.message) << '\n';
    }
    for (const auto& msg : s.fit_failures) out << "fit_failure " << msg << '\n';
    out << "markers " << s.markers << '\n';
    for (const auto& [name, f] : s.fits) {
        out << "fit " << name << " slope=" << format_number(f.slope) << " r2=" << format_number(f.r_squared)
            << " ci95=" << format_number(f.slope_ci95) << " tail_slope=" << format_number(f.tail_slope)
            << (f.floor_suspected ? " floor_suspected" : "") << " local";
        auto pts = f.points;
        std::sort(pts.begin(), pts.end());
        for (std::size_t q = 1; q < pts.size(); ++q) {
            const auto& [c0, e0] = pts[q - 1];
            const auto& [c1, e1] = pts[q];
            out << ' ' << format_number(std::log(e1 / e0) / std::log(c1 / c0));
        }
        out << '\n';
    }
    write_audit_lines(out, s.audits);
    for (const auto& [name, sec] : s.wall_seconds) out << "wall_seconds " << name << ' ' << format_number(sec) << '\n';
    for (const auto& [name, n] : s.steps) out << "steps " << name << ' ' << n << '\n';
    out << "total_seconds " << format_number(s.total_seconds) << '\n';
}

RunSummary run_csweep(const RunConfig& cfg, const SweepOptions& opt)
{
    const auto t0 = Clock::now();
    cfg.validate();
    if (cfg.c_list.size() < 3) throw Error(ErrorCode::configuration, "run_csweep: c_list needs at least 3 entries");
    RunSummary s;
    const PoissonSolver solver(cfg.grid(), cfg.poisson_kernel);
    const Scenario sc = make_scenario(cfg, solver);
    s.markers = sc.ens0.size();

    VpRunOptions vo;
    vo.n_steps = cfg.vp_step_count();
    vo.frame_every = vo.n_steps / cfg.checkpoints;
    vo.probe_markers = spread_indices(sc.ens0.size(), static_cast<std::size_t>(cfg.probe_phase));
    vo.workers = opt.workers;
    vo.snapshot_every = opt.snapshot_every;
    vo.snapshot_dir = cfg.output_dir + "/snapshots";
    const VpRunResult vp = run_vp(sc, solver, cfg.t_end, vo);
    s.member_status.push_back(vp.status);
    s.wall_seconds["vp"] = vp.wall_seconds;
    s.steps["vp"] = vp.steps;

    std::vector<StepDiagnostics> all_diag = vp.diag;
    if (vp.status.ok) {
        const auto nodes = support_probe_nodes(vp.ens, sc.spec, cfg.probe_dilate, static_cast<std::size_t>(cfg.probe_nodes));
        PointwiseOptions po;
        po.steps_per_frame = cfg.pointwise_steps_per_frame;
        for (double c : cfg.c_list) {
            NvSetup su = nv_setup(cfg, sc, c, opt.workers);
            su.snapshot_every = opt.snapshot_every;
            su.snapshot_dir = cfg.output_dir + "/snapshots";
            const NvRunResult nv = run_nv(su);
            s.member_status.push_back(nv.status);
            s.wall_seconds["nv_c" + c_tag(c)] = nv.wall_seconds;
            s.steps["nv_c" + c_tag(c)] = nv.steps;
            all_diag.insert(all_diag.end(), nv.diag.begin(), nv.diag.end());
            if (!nv.status.ok) continue;
            ErrorRecord r;
            r.c = c;
            r.t_eval = cfg.t_end;
            const auto [ep, eg] = field_errors(nv.phi_end, vp.field_end.U, c, nodes);
            r.err_phi = ep;
            r.err_gradphi = eg;
            r.err_dtphi = interior_max_abs(nv.dphi_end, cfg.sponge_width);
            const auto tdf = Clock::now();
            const DfResult df = compute_df(nv.history, vp.history, vp.probes, sc.profile, po, opt.workers);
            s.wall_seconds["df_c" + c_tag(c)] = seconds_since(tdf);
            r.err_f = df.value;
            r.df_skipped = df.skipped;
            r.err_traj = trajectory_discrepancy(nv.ens, vp.ens);
            s.records.push_back(r);
            s.max_kc.push_back(nv.max_kc);
            s.max_pc.push_back(nv.max_pc);
            s.max_drift.push_back(nv.max_drift);
            s.max_psi.push_back(nv.max_psi_audit);
            s.max_linf_ratio.push_back(nv.max_linf_ratio);
        }
    }
    fit_records(s);
    audit_sweep(s);
    s.total_seconds = seconds_since(t0);

    if (opt.write_outputs) {
        std::filesystem::create_directories(cfg.output_dir);
        write_diagnostics_csv(cfg.output_dir + "/diagnostics.csv", all_diag);
        write_convergence_csv(cfg.output_dir + "/convergence.csv", s.records);
        write_order_txt(cfg.output_dir + "/order.txt", s.fits);
        write_summary(cfg.output_dir + "/summary.txt", s);
        std::ofstream meta(cfg.output_dir + "/config_used.txt");
        meta << cfg.to_text() << "# nv steps per c and vp steps are listed in summary.txt\n";
    }
    return s;
}

// ----------------------------------------------------------------- rescaling

RescaleReport rescaling_test(const RunConfig& cfg, double c, int workers)
{
    cfg.validate();
    if (!(c >= 1.0)) throw Error(ErrorCode::configuration, "rescaling_test: c must be >= 1");
    RescaleReport rep;
    rep.c = c;
    const PoissonSolver solver(cfg.grid(), cfg.poisson_kernel);
    const Scenario sc = make_scenario(cfg, solver);

    NvSetup a = nv_setup(cfg, sc, c, workers);
    a.tracked = 0;
    a.companion = false;

    // The c = 1 image: t' = c t, p' = p / c, f' = c f, phi' = phi. Marker
    // weights are f' times the momentum cell, which shrinks by c^3.
    NvSetup b = a;
    b.c = 1.0;
    b.dt = a.dt * c;
    b.t_end = a.t_end * c;
    const double c2 = c * c;
    for (std::size_t i = 0; i < b.ens.size(); ++i) {
        b.ens.p[i] = a.ens.p[i] / c;
        b.ens.w[i] = a.ens.w[i] / c2;
        b.ens.f0[i] = a.ens.f0[i] * c;
        b.ens.f[i] = a.ens.f[i] * c;
    }
    b.ens.cell_volume = a.ens.cell_volume / (c2 * c);
    for (std::size_t q = 0; q < b.g_sharp.data.size(); ++q) {
        b.g_sharp.data[q] = a.g_sharp.data[q] / c2;
        b.h_sharp.data[q] = a.h_sharp.data[q] / (c2 * c);
    }
    b.profile.amplitude = a.profile.amplitude * c;
    b.profile.radius_p = a.profile.radius_p / c;
    b.profile.center_p = a.profile.center_p / c;

    const NvRunResult ra = run_nv(a);
    const NvRunResult rb = run_nv(b);
    if (!ra.status.ok) {
        rep.status = ra.status;
        return rep;
    }
    if (!rb.status.ok) {
        rep.status = rb.status;
        return rep;
    }
    const std::size_t frames = std::min(ra.history.size(), rb.history.size());
    for (std::size_t k = 0; k < frames; ++k) {
        rep.discrepancy = std::max(rep.discrepancy, interior_max_diff(ra.history.field(k), rb.history.field(k), cfg.sponge_width));
        rep.field_scale = std::max(rep.field_scale, interior_max_abs(ra.history.field(k), cfg.sponge_width));
    }
    rep.frames = static_cast<int>(frames);
    return rep;
}

double refinement_difference(const RunConfig& cfg, double c, int workers)
{
    RunConfig fine = cfg;
    fine.grid_n = 2 * cfg.grid_n - 1;
    fine.sponge_width = 2 * cfg.sponge_width;
    fine.validate();
    Grid3 end[2];
    const RunConfig* cfgs[2] = {&cfg, &fine};
    for (int r = 0; r < 2; ++r) {
        const PoissonSolver solver(cfgs[r]->grid(), cfgs[r]->poisson_kernel);
        const Scenario sc = make_scenario(*cfgs[r], solver);
        NvSetup su = nv_setup(*cfgs[r], sc, c, workers);
        su.tracked = 0;
        su.companion = false;
        const NvRunResult res = run_nv(su);
        if (!res.status.ok) throw Error(ErrorCode::numerical_instability, "refinement_difference: " + res.status.message);
        end[r] = res.phi_end;
    }
    const GridSpec& s = end[0].spec;
    double m = 0.0;
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            for (int k = 0; k < s.n; ++k)
                if (in_interior(s, cfg.sponge_width, i, j, k))
                    m = std::max(m, std::abs(end[0].at(i, j, k) - end[1].at(2 * i, 2 * j, 2 * k)));
    return m;
}

// ----------------------------------------------------------------- snapshots

void write_snapshot(const std::string& path, const Grid3& g, double t, double c)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot open " + path);
    std::vector<unsigned char> bytes(g.data.size() * 8);
    for (std::size_t q = 0; q < g.data.size(); ++q) {
        std::uint64_t u;
        std::memcpy(&u, &g.data[q], 8);
        for (int b = 0; b < 8; ++b) bytes[8 * q + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed: " + path);

    nlohmann::json meta;
    meta["n"] = g.spec.n;
    meta["h"] = g.spec.h;
    meta["origin"] = {g.spec.origin.x, g.spec.origin.y, g.spec.origin.z};
    meta["t"] = t;
    meta["c"] = std::isfinite(c) ? nlohmann::json(c) : nlohmann::json("inf");
    meta["dtype"] = "float64-le";
    meta["order"] = "row-major, k fastest";
    std::ofstream side(path + ".json");
    side << meta.dump(2) << '\n';
    if (!side) throw Error(ErrorCode::io, "write failed: " + path + ".json");
}

Grid3 read_snapshot(const std::string& path, double* t, double* c)
{
    std::ifstream side(path + ".json");
    if (!side) throw Error(ErrorCode::io, "cannot open " + path + ".json");
    nlohmann::json meta;
    try {
        side >> meta;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::io, "bad sidecar " + path + ".json: " + e.what());
    }
    GridSpec spec;
    spec.n = meta.at("n").get<int>();
    spec.h = meta.at("h").get<double>();
    spec.origin = {meta.at("origin")[0].get<double>(), meta.at("origin")[1].get<double>(),
                   meta.at("origin")[2].get<double>()};
    spec.validate();
    if (t) *t = meta.at("t").get<double>();
    if (c) *c = meta.at("c").is_string() ? std::numeric_limits<double>::infinity() : meta.at("c").get<double>();

    Grid3 g(spec);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    std::vector<unsigned char> bytes(g.data.size() * 8);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw Error(ErrorCode::io, "snapshot " + path + " is truncated");
    for (std::size_t q = 0; q < g.data.size(); ++q) {
        std::uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= std::uint64_t(bytes[8 * q + b]) << (8 * b);
        std::memcpy(&g.data[q], &u, 8);
    }
    return g;
}

} // namespace nvlimit
