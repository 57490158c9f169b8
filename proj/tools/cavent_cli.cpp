// cavent: command-line driver for the two-emitter cavity entanglement model.

#include "cavent/config.hpp"
#include "cavent/dynamics.hpp"
#include "cavent/entanglement.hpp"
#include "cavent/io.hpp"
#include "cavent/model.hpp"
#include "cavent/sweeps.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace cavent;

namespace {

struct Context {
    RunConfig cfg;
    OutputSet out;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    bool failed = false;

    explicit Context(const RunConfig& c) : cfg(c), out(c.out_dir) {}

    double elapsed() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); }

    void emit_table(const std::string& stem, const CsvTable& t) {
        if (cfg.wants(Format::csv)) out.write(stem + ".csv", t);
        if (cfg.wants(Format::json)) {
            json cols = json::object();
            for (std::size_t c = 0; c < t.header.size(); ++c) {
                json col = json::array();
                for (const auto& r : t.rows) {
                    try {
                        std::size_t pos = 0;
                        const double x = std::stod(r[c], &pos);
                        if (pos == r[c].size() && std::isfinite(x)) {
                            col.push_back(x);
                            continue;
                        }
                    } catch (const std::exception&) {
                    }
                    col.push_back(r[c]);
                }
                cols[t.header[c]] = col;
            }
            out.write(stem + ".json", json{{"comments", t.comments}, {"columns", cols}});
        }
    }

    json base_parameters(const SystemParams& p, const IntegratorConfig& ic) const {
        return json{{"system", params_json(p)}, {"integrator", integrator_json(ic)}, {"jobs", cfg.jobs}};
    }

    int finish(json params) {
        out.finish(cfg.experiment, std::move(params), elapsed());
        return failed ? 1 : 0;
    }
};

std::string ghz_label(double g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", g);
    return buf;
}

void print_summary(const std::string& label, const Trajectory& tr) {
    const auto s = summarize(tr);
    std::printf("%-10s c_max = %.4f  t_max = %.2f ns  min inversion = %.4f  weight = %.4f\n", label.c_str(), s.c_max,
                s.t_max, s.min_inversion, s.weight_at_peak);
}

int cmd_simulate(Context& ctx) {
    const SystemParams p = ctx.cfg.params();
    const IntegratorConfig ic = ctx.cfg.integrator();
    const Trajectory tr = integrate(initial_state(p), p, ic);
    ctx.emit_table("trajectory", trajectory_csv(tr, {"two-emitter exchange dynamics from |0_A 1_B 0_cav>",
                                                      "populations are full-space diagonal sums; concurrence of the ground-state qubit block"}));
    json summary = summary_json(tr);
    summary["g_eff_mhz"] = 1e3 * ghz_from_angular(effective_coupling(p));
    summary["conditions"] = conditions_json(check_conditions(p));
    ctx.out.write("summary.json", summary);
    print_summary("simulate", tr);
    return ctx.finish(ctx.base_parameters(p, ic));
}

int cmd_fig3(Context& ctx) {
    const IntegratorConfig ic = ctx.cfg.integrator();
    struct Case {
        std::string stem, label;
        SystemParams p;
    };
    RunConfig base = ctx.cfg;
    base.q.reset();
    base.kappa_ghz.reset();
    std::vector<Case> cases;
    {
        RunConfig c = base;
        c.ideal = true;
        cases.push_back({"fig3_ideal", "ideal", c.params()});
    }
    for (double q : {9800.0, 98000.0}) {
        RunConfig c = base;
        c.ideal = false;
        c.q = q;
        cases.push_back({"fig3_q" + ghz_label(q), "Q=" + ghz_label(q), c.params()});
    }
    json summary = json::object();
    json params = json::object();
    for (const auto& c : cases) {
        const Trajectory tr = integrate(initial_state(c.p), c.p, ic);
        ctx.emit_table(c.stem, trajectory_csv(tr, {"panel: inversion and concurrence vs time, " + c.label,
                                                    "initial state |0_A 1_B 0_cav>"}));
        summary[c.label] = summary_json(tr);
        params[c.label] = params_json(c.p);
        print_summary(c.label, tr);
    }
    ctx.out.write("fig3_summary.json", summary);
    return ctx.finish(json{{"system", params}, {"integrator", integrator_json(ic)}});
}

void note_failures(Context& ctx, const SweepTable& t, const std::string& what) {
    for (const auto& r : t.rows) {
        if (!r.ok) {
            ctx.failed = true;
            std::fprintf(stderr, "%s: point %g failed: %s\n", what.c_str(), r.value, r.status.c_str());
        }
    }
}

int cmd_fig4(Context& ctx) {
    const SystemParams p = ctx.cfg.params();
    const IntegratorConfig ic = ctx.cfg.sweep_integrator();
    const auto& c = ctx.cfg;
    const Horizon horizon = c.t_end_ns ? Horizon::fixed_at(*c.t_end_ns) : Horizon::automatic();

    SweepSpec spec;
    spec.base = p;
    spec.grid = linspace(c.fig4_factor_min, c.fig4_factor_max, c.fig4_points);
    spec.horizon = horizon;
    spec.integrator = ic;
    spec.jobs = c.jobs;
    spec.axis = Axis::laser_detuning_factor;
    const SweepTable by_l = run_detuning_scan(spec);
    spec.axis = Axis::cavity_detuning_factor;
    const SweepTable by_cav = run_detuning_scan(spec);
    note_failures(ctx, by_l, "delta_L scan");
    note_failures(ctx, by_cav, "delta_cav scan");

    CsvTable a, b;
    a.comments = {"panel (a): maximum concurrence vs detuning factor; the other detuning held at its base value"};
    b.comments = {"panel (b): time of maximum concurrence vs detuning factor; the other detuning held at its base value"};
    a.header = {"factor", "c_max_vary_delta_L", "c_max_vary_delta_cav", "status_delta_L", "status_delta_cav"};
    b.header = {"factor", "t_max_ns_vary_delta_L", "t_max_ns_vary_delta_cav", "status_delta_L", "status_delta_cav"};
    for (std::size_t k = 0; k < spec.grid.size(); ++k) {
        const auto& l = by_l.rows[k];
        const auto& v = by_cav.rows[k];
        a.add_row({fmt(spec.grid[k]), fmt(l.c_max), fmt(v.c_max), csv_escape(l.status), csv_escape(v.status)});
        b.add_row({fmt(spec.grid[k]), fmt(l.t_max), fmt(v.t_max), csv_escape(l.status), csv_escape(v.status)});
    }
    ctx.emit_table("fig4a", a);
    ctx.emit_table("fig4b", b);

    const auto shifts_ghz = linspace(c.shift_min_ghz, c.shift_max_ghz, c.shift_points);
    std::vector<double> shifts;
    for (double s : shifts_ghz) shifts.push_back(angular_from_ghz(s));
    const SweepTable by_shift = run_shift_scan(p, shifts, horizon, ic, c.jobs);
    note_failures(ctx, by_shift, "shift scan");
    CsvTable cc, d;
    cc.comments = {"panel (c): maximum concurrence vs common optical transition shift"};
    d.comments = {"panel (d): time of maximum concurrence vs common optical transition shift"};
    cc.header = {"delta_shift_ghz", "c_max", "status"};
    d.header = {"delta_shift_ghz", "t_max_ns", "status"};
    for (std::size_t k = 0; k < shifts.size(); ++k) {
        const auto& r = by_shift.rows[k];
        cc.add_row({fmt(shifts_ghz[k]), fmt(r.c_max), csv_escape(r.status)});
        d.add_row({fmt(shifts_ghz[k]), fmt(r.t_max), csv_escape(r.status)});
    }
    ctx.emit_table("fig4c", cc);
    ctx.emit_table("fig4d", d);

    json summary{{"t_max_exponent_delta_L", by_l.exponent ? json(*by_l.exponent) : json(nullptr)},
                 {"t_max_exponent_delta_cav", by_cav.exponent ? json(*by_cav.exponent) : json(nullptr)}};
    ctx.out.write("fig4_summary.json", summary);
    std::printf("t_max exponent: delta_L %.3f, delta_cav %.3f\n", by_l.exponent.value_or(NAN),
                by_cav.exponent.value_or(NAN));

    json params = ctx.base_parameters(p, ic);
    params["factor_grid"] = spec.grid;
    params["shift_grid_ghz"] = shifts_ghz;
    params["horizon"] = c.t_end_ns ? json(*c.t_end_ns) : json("3*pi/(2|g_eff|)");
    return ctx.finish(params);
}

DiffusionSpec diffusion_spec(const RunConfig& c, double gamma_inh_ghz) {
    DiffusionSpec d;
    d.gamma_inh = angular_from_ghz(gamma_inh_ghz);
    d.width_is_fwhm = c.width_is_fwhm;
    d.grid_points = c.diffusion_points;
    d.span_sigma = c.diffusion_span;
    d.integrator = c.sweep_integrator();
    d.horizon = c.t_end_ns ? Horizon::fixed_at(*c.t_end_ns) : Horizon::automatic();
    d.jobs = c.jobs;
    return d;
}

const std::vector<std::string>& diffusion_columns() {
    static const std::vector<std::string> cols{"gamma_inh_ghz", "c_red",     "c_pointwise", "c_ref",
                                               "c_max",         "t_eval_ns", "outside_mass", "points", "status"};
    return cols;
}

std::vector<std::string> diffusion_cells(double g, const std::optional<DiffusionResult>& r, const std::string& status) {
    if (!r) return {fmt(g), "nan", "nan", "nan", "nan", "nan", "nan", "0", csv_escape(status)};
    return {fmt(g), fmt(r->c_red), fmt(r->c_pointwise), fmt(r->c_ref), fmt(r->c_max), fmt(r->t_eval),
            fmt(r->outside_mass), std::to_string(r->points), "ok"};
}

std::pair<std::optional<DiffusionResult>, std::string> try_diffusion(const SystemParams& p, const DiffusionSpec& d) {
    try {
        return {spectral_diffusion_average(p, d), "ok"};
    } catch (const std::exception& e) {
        return {std::nullopt, e.what()};
    }
}

int cmd_fig5(Context& ctx) {
    const auto& c = ctx.cfg;
    const SystemParams p = c.params();
    const IntegratorConfig ic = c.sweep_integrator();

    CsvTable a;
    a.comments = {"panel (a): concurrence of the Gaussian-averaged state vs inhomogeneous width",
                  std::string("width convention: ") + (c.width_is_fwhm ? "FWHM" : "sigma")};
    a.header = diffusion_columns();
    for (double g : c.fig5_gamma_inh_ghz) {
        const auto [r, status] = try_diffusion(p, diffusion_spec(c, g));
        if (!r) {
            ctx.failed = true;
            std::fprintf(stderr, "diffusion at %g GHz failed: %s\n", g, status.c_str());
        }
        a.add_row(diffusion_cells(g, r, status));
    }
    ctx.emit_table("fig5a", a);

    const auto qs = geomspace(c.fig5_q_min, c.fig5_q_max, c.fig5_q_points);
    std::vector<SweepTable> tables;
    for (double g : c.fig5_g_ghz) {
        SweepSpec spec;
        spec.base = p;
        apply_default_policy(spec.base, angular_from_ghz(g));
        spec.axis = Axis::quality;
        spec.grid = qs;
        spec.horizon = c.t_end_ns ? Horizon::fixed_at(*c.t_end_ns) : Horizon::automatic();
        spec.integrator = ic;
        spec.jobs = c.jobs;
        tables.push_back(run_sweep(spec));
        note_failures(ctx, tables.back(), "Q scan g=" + ghz_label(g));
    }
    CsvTable b, d;
    b.comments = {"panel (b): maximum concurrence vs quality factor, one column per g_cav/2pi [GHz]"};
    d.comments = {"panel (c): time of maximum concurrence vs quality factor, one column per g_cav/2pi [GHz]"};
    b.header = d.header = {"Q"};
    for (double g : c.fig5_g_ghz) {
        b.header.push_back("c_max_g" + ghz_label(g));
        d.header.push_back("t_max_ns_g" + ghz_label(g));
    }
    for (double g : c.fig5_g_ghz) {
        b.header.push_back("status_g" + ghz_label(g));
        d.header.push_back("status_g" + ghz_label(g));
    }
    for (std::size_t k = 0; k < qs.size(); ++k) {
        std::vector<std::string> rb{fmt(qs[k])}, rd{fmt(qs[k])};
        for (const auto& t : tables) {
            rb.push_back(fmt(t.rows[k].c_max));
            rd.push_back(fmt(t.rows[k].t_max));
        }
        for (const auto& t : tables) {
            rb.push_back(csv_escape(t.rows[k].status));
            rd.push_back(csv_escape(t.rows[k].status));
        }
        b.add_row(rb);
        d.add_row(rd);
    }
    ctx.emit_table("fig5b", b);
    ctx.emit_table("fig5c", d);

    json params = ctx.base_parameters(p, ic);
    params["q_grid"] = qs;
    params["g_grid_ghz"] = c.fig5_g_ghz;
    params["gamma_inh_grid_ghz"] = c.fig5_gamma_inh_ghz;
    params["diffusion"] = {{"points", c.diffusion_points}, {"span_sigma", c.diffusion_span},
                           {"width", c.width_is_fwhm ? "fwhm" : "sigma"}};
    return ctx.finish(params);
}

int cmd_diffusion(Context& ctx) {
    const auto& c = ctx.cfg;
    const SystemParams p = c.params();
    const DiffusionSpec d = diffusion_spec(c, c.gamma_inh_ghz);
    const auto [r, status] = try_diffusion(p, d);
    CsvTable t;
    t.comments = {"concurrence of the Gaussian-averaged state at the unshifted peak time"};
    t.header = diffusion_columns();
    t.add_row(diffusion_cells(c.gamma_inh_ghz, r, status));
    ctx.emit_table("diffusion", t);
    if (r) {
        std::printf("c_red = %.4f  c_ref = %.4f  c_max = %.4f  pointwise = %.4f  t_eval = %.2f ns\n", r->c_red, r->c_ref,
                    r->c_max, r->c_pointwise, r->t_eval);
    } else {
        std::fprintf(stderr, "diffusion failed: %s\n", status.c_str());
        ctx.failed = true;
    }
    json params = ctx.base_parameters(p, d.integrator);
    params["gamma_inh_ghz"] = c.gamma_inh_ghz;
    return ctx.finish(params);
}

int cmd_conditions(Context& ctx) {
    const SystemParams p = ctx.cfg.params();
    const ConditionReport r = check_conditions(p);
    ctx.out.write("conditions.json", conditions_json(r));
    std::printf("%-44s %10s  %s\n", "condition", "ratio", "verdict");
    std::printf("%-44s %10.4g  %s\n", "Delta_L / Omega_L  (>> 1)", r.ratio1, to_string(r.verdict1));
    std::printf("%-44s %10.4g  %s\n", "|Delta_cav - Delta_L| / max(g, Omega, kappa)", r.ratio2, to_string(r.verdict2));
    std::printf("%-44s %10.4g  %s\n", "Delta_L^2 |Delta_cav-Delta_L| gamma_rad/(g Omega)^2", r.ratio3,
                to_string(r.verdict3));
    return ctx.finish(ctx.base_parameters(p, ctx.cfg.integrator()));
}

int cmd_convergence(Context& ctx) {
    const SystemParams p = ctx.cfg.params();
    const IntegratorConfig ic = ctx.cfg.integrator();
    const ConvergenceReport r = convergence_check(p, ic);
    json j{{"truncation_deviation", r.truncation_deviation}, {"step_deviation", r.step_deviation},
           {"cmax_truncation_delta", r.cmax_truncation_delta}, {"cmax_step_delta", r.cmax_step_delta},
           {"dt_ns", r.dt}, {"tolerance", r.tolerance}, {"passed", r.passed}};
    ctx.out.write("convergence.json", j);
    std::printf("n_max %d -> %d: max |dc| = %.3g\n", p.n_max, p.n_max + 1, r.truncation_deviation);
    std::printf("dt %.4g -> %.4g ns: max |dc| = %.3g\n", r.dt, r.dt / 2, r.step_deviation);
    std::printf("%s\n", r.passed ? "converged" : "NOT converged");
    if (!r.passed) ctx.failed = true;
    return ctx.finish(ctx.base_parameters(p, ic));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic entanglement of two Lambda emitters through a shared lossy cavity"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::string config_file;
    std::optional<double> q, g_ghz, gamma_mhz, omega_opt_thz, dt_ns, t_end_ns;
    std::optional<int> nmax;
    std::optional<unsigned> jobs;
    std::optional<std::string> out_dir, format;
    bool ideal = false;
    std::vector<std::string> sets;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_file, "key = value configuration file");
        sub->add_option("--q", q, "cavity quality factor");
        sub->add_option("--g-ghz", g_ghz, "g_cav/2pi [GHz]; also sets Omega_L and the detunings");
        sub->add_option("--gamma-mhz", gamma_mhz, "radiative rate per channel [MHz]");
        sub->add_option("--omega-opt-thz", omega_opt_thz, "optical transition frequency [THz]");
        sub->add_option("--nmax", nmax, "photon truncation");
        sub->add_option("--dt-ns", dt_ns, "fixed integration step [ns]");
        sub->add_option("--t-end-ns", t_end_ns, "horizon [ns]");
        sub->add_flag("--ideal", ideal, "lossless case (kappa = gamma = 0)");
        sub->add_option("--out-dir", out_dir, "output directory");
        sub->add_option("--format", format, "comma-separated output formats: csv, json");
        sub->add_option("--jobs", jobs, "worker threads (0 = all)");
        sub->add_option("--set", sets, "extra key=value override (repeatable)");
    };

    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
             {"simulate", "single trajectory"},
             {"fig3", "dynamics for the ideal case and two quality factors"},
             {"fig4", "detuning and transition-shift scans"},
             {"fig5", "spectral diffusion and quality-factor scans"},
             {"diffusion", "one spectral-diffusion average"},
             {"conditions", "validity conditions of the effective exchange"},
             {"convergence", "photon-truncation and step-size check"}}) {
        subs[name] = app.add_subcommand(name, help);
        add_common(subs[name]);
    }
    double pf = 0, pq = 0, ptau = 0, pd = 0, pomega = 0;
    auto* purcell = app.add_subcommand("purcell", "coupling implied by a Purcell factor; prints g/2pi in GHz");
    purcell->add_option("F", pf, "Purcell factor")->required();
    purcell->add_option("Q", pq, "quality factor")->required();
    purcell->add_option("tau_ns", ptau, "excited-state lifetime [ns]")->required();
    purcell->add_option("d", pd, "Debye-Waller factor")->required();
    purcell->add_option("omega_thz", pomega, "optical frequency [THz]")->required();

    CLI11_PARSE(app, argc, argv);

    if (purcell->parsed()) {
        try {
            const double g = purcell_coupling(pf, pq, ptau, pd, angular_from_ghz(pomega * 1e3));
            std::printf("%s\n", three_digits(ghz_from_angular(g)).c_str());
            return 0;
        } catch (const std::invalid_argument& e) {
            std::fprintf(stderr, "usage error: %s\n", e.what());
            return 2;
        }
    }

    RunConfig cfg;
    try {
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& [name, sub] : subs)
            if (sub->parsed()) cfg.experiment = name;
        auto put = [&](const char* key, const auto& v) {
            if (v) cfg.set(key, [&] {
                std::ostringstream os;
                os.precision(17);
                os << *v;
                return os.str();
            }());
        };
        put("q", q);
        put("g_ghz", g_ghz);
        put("gamma_mhz", gamma_mhz);
        put("omega_opt_thz", omega_opt_thz);
        put("nmax", nmax);
        put("dt_ns", dt_ns);
        put("t_end_ns", t_end_ns);
        put("jobs", jobs);
        put("out_dir", out_dir);
        put("format", format);
        if (ideal) cfg.set("ideal", "true");
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1));
        }
        cfg.params();
        cfg.integrator();
        cfg.sweep_integrator();
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    }

    try {
        Context ctx(cfg);
        const std::string& x = cfg.experiment;
        if (x == "simulate") return cmd_simulate(ctx);
        if (x == "fig3") return cmd_fig3(ctx);
        if (x == "fig4") return cmd_fig4(ctx);
        if (x == "fig5") return cmd_fig5(ctx);
        if (x == "diffusion") return cmd_diffusion(ctx);
        if (x == "conditions") return cmd_conditions(ctx);
        if (x == "convergence") return cmd_convergence(ctx);
        std::fprintf(stderr, "unknown experiment %s\n", x.c_str());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
