#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>

#include <CLI11.hpp>

#include "nvlimit/batteries.hpp"
#include "nvlimit/harness.hpp"

using namespace nvlimit;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_run_failure = 1;
constexpr int exit_audit_failure = 2;

RunConfig load_config(const std::string& path, const std::string& out_dir)
{
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::from_file(path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
    return cfg;
}

void write_status(const std::string& dir, const RunStatus& st)
{
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/status.txt");
    out << "status " << (st.ok ? "ok" : "aborted") << '\n';
    if (!st.ok) out << "reason " << st.reason << '\n' << "message " << st.message << '\n';
}

int report(const std::vector<AuditLine>& lines, const std::string& out_dir, const std::string& file)
{
    write_audit_lines(std::cout, lines);
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream out(out_dir + "/" + file);
        write_audit_lines(out, lines);
    }
    for (const auto& a : lines)
        if (!a.pass) return exit_audit_failure;
    return exit_pass;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Nordstrom-Vlasov vs Vlasov-Poisson simulation and verification"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    int workers = 1, snapshot_every = 0;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key = value configuration file");
        sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--snapshot-every", snapshot_every, "write field snapshots every K steps")
            ->check(CLI::NonNegativeNumber);
    };

    auto* run = app.add_subcommand("run", "single run of one system");
    common(run);
    std::string system = "nv";
    double c = 4.0;
    run->add_option("--system", system, "nv or vp")->check(CLI::IsMember({"nv", "vp"}));
    run->add_option("--c", c, "light speed for the nv system");

    auto* sweep = app.add_subcommand("sweep", "VP reference and NV runs over c_list, with convergence fits");
    common(sweep);

    auto* rescale = app.add_subcommand("rescale-test", "compare the light-speed-c run with its c = 1 image");
    common(rescale);
    double c_rescale = 2.0;
    rescale->add_option("--c", c_rescale, "light speed of the original run");

    auto* oracle = app.add_subcommand("oracle", "representation formula verification battery");
    common(oracle);
    auto* audit = app.add_subcommand("audit", "lemma, envelope and solver verification battery");
    common(audit);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const RunConfig cfg = load_config(config_path, out_dir);
            std::filesystem::create_directories(cfg.output_dir);
            const PoissonSolver solver(cfg.grid(), cfg.poisson_kernel);
            const Scenario sc = make_scenario(cfg, solver);
            RunStatus st;
            if (system == "nv") {
                NvSetup su = nv_setup(cfg, sc, c, workers);
                su.snapshot_every = snapshot_every;
                su.snapshot_dir = cfg.output_dir + "/snapshots";
                const NvRunResult r = run_nv(su);
                write_diagnostics_csv(cfg.output_dir + "/diagnostics.csv", r.diag);
                st = r.status;
                std::cout << "nv c=" << format_number(c) << " steps=" << r.steps << " max_Kc=" << format_number(r.max_kc)
                          << " max_Pc=" << format_number(r.max_pc) << " psi_audit=" << format_number(r.max_psi_audit)
                          << " drift=" << format_number(r.max_drift) << '\n';
            } else {
                VpRunOptions vo;
                vo.n_steps = cfg.vp_step_count();
                vo.frame_every = vo.n_steps / cfg.checkpoints;
                vo.workers = workers;
                vo.snapshot_every = snapshot_every;
                vo.snapshot_dir = cfg.output_dir + "/snapshots";
                const VpRunResult r = run_vp(sc, solver, cfg.t_end, vo);
                write_diagnostics_csv(cfg.output_dir + "/diagnostics.csv", r.diag);
                st = r.status;
                std::cout << "vp steps=" << r.steps << " mass_drift=" << format_number(r.mass_drift) << '\n';
            }
            write_status(cfg.output_dir, st);
            if (!st.ok) {
                std::cerr << "aborted: " << st.reason << ": " << st.message << '\n';
                return exit_run_failure;
            }
            return exit_pass;
        }
        if (*sweep) {
            const RunConfig cfg = load_config(config_path, out_dir);
            SweepOptions opt;
            opt.workers = workers;
            opt.snapshot_every = snapshot_every;
            const RunSummary s = run_csweep(cfg, opt);
            std::ifstream in(cfg.output_dir + "/summary.txt");
            std::cout << in.rdbuf();
            for (const auto& m : s.member_status)
                if (!m.ok) return exit_run_failure;
            return s.all_pass() ? exit_pass : exit_audit_failure;
        }
        if (*rescale) {
            const RunConfig cfg = load_config(config_path, out_dir);
            const RescaleReport r = rescaling_test(cfg, c_rescale, workers);
            if (!r.status.ok) {
                std::cerr << "aborted: " << r.status.reason << ": " << r.status.message << '\n';
                return exit_run_failure;
            }
            // Floating-point floor of the comparison; the mapped runs agree up to rounding.
            const double floor = 1e-12 * r.field_scale;
            const std::vector<AuditLine> lines = {
                {"rescale_discrepancy", r.discrepancy <= floor, r.discrepancy, floor,
                 "c=" + format_number(r.c) + " frames=" + std::to_string(r.frames) + " field_scale=" +
                     format_number(r.field_scale)}};
            return report(lines, cfg.output_dir, "rescale.txt");
        }
        if (*oracle) return report(oracle_battery(), out_dir, "oracle.txt");
        if (*audit) {
            auto lines = lemma_battery();
            const auto more = solver_battery();
            lines.insert(lines.end(), more.begin(), more.end());
            return report(lines, out_dir, "audit.txt");
        }
    } catch (const Error& e) {
        std::cerr << "error " << error_code_name(e.code()) << ": " << e.what() << '\n';
        return exit_run_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_run_failure;
    }
    return exit_run_failure;
}
