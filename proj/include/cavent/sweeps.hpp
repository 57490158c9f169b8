#pragma once

// Parameter sweeps over independent grid points, run on a small thread pool.
// Rows always come back in grid order, so tables do not depend on the number
// of workers or on scheduling.

#include "cavent/dynamics.hpp"
#include "cavent/entanglement.hpp"
#include "cavent/model.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace cavent {

inline constexpr const char* kMaxJobsEnv = "CAVENT_MAX_JOBS";

/// Worker count: the request (0 = all hardware threads), capped by the
/// environment variable and by the amount of work.
inline unsigned resolve_jobs(unsigned requested, std::size_t work_items) {
    unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv(kMaxJobsEnv)) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    }
    return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(n, work_items)));
}

/// Calls fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// escaping fn is rethrown after all workers have joined.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
    const unsigned workers = resolve_jobs(jobs, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto work = [&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

enum class Axis { quality, laser_detuning_factor, cavity_detuning_factor, common_shift, g_cav };

inline const char* to_string(Axis a) {
    switch (a) {
        case Axis::quality: return "Q";
        case Axis::laser_detuning_factor: return "delta_L_factor";
        case Axis::cavity_detuning_factor: return "delta_cav_factor";
        case Axis::common_shift: return "delta_shift";
        case Axis::g_cav: return "g_cav";
    }
    return "?";
}

/// Either a fixed horizon or `periods` * pi/(2|g~|) evaluated per point.
struct Horizon {
    std::optional<double> fixed;
    double periods = 3.0;

    static Horizon fixed_at(double t_end) { return {t_end, 3.0}; }
    static Horizon automatic(double periods = 3.0) { return {std::nullopt, periods}; }

    double resolve(const SystemParams& p) const {
        if (fixed) return *fixed;
        const double g = effective_coupling(p);
        if (g == 0.0) throw SingularCouplingError("automatic horizon needs a nonzero effective coupling");
        return periods * predicted_times(g).transfer;
    }
};

inline IntegratorConfig default_sweep_integrator() {
    IntegratorConfig cfg;
    cfg.method = Method::rk4_propagator;
    cfg.target_samples = 4000;
    cfg.keep_final_state = false;
    return cfg;
}

struct SweepSpec {
    SystemParams base;
    Axis axis = Axis::quality;
    std::vector<double> grid;  ///< Q, factor, angular shift [rad/ns] or angular coupling [rad/ns]
    Horizon horizon = Horizon::automatic();
    /// When Q or g_cav changes, reset Omega_L = g, Delta_L = 9 g, Delta_cav = 9 g + 2 kappa.
    bool default_policy = true;
    IntegratorConfig integrator = default_sweep_integrator();
    unsigned jobs = 0;

    void validate() const {
        base.validate();
        if (grid.empty()) throw std::invalid_argument("sweep grid is empty");
        const bool up = grid.size() < 2 || grid[1] > grid[0];
        for (std::size_t k = 0; k < grid.size(); ++k) {
            if (!std::isfinite(grid[k])) throw std::invalid_argument("sweep grid values must be finite");
            if (k > 0 && ((up && !(grid[k] > grid[k - 1])) || (!up && !(grid[k] < grid[k - 1])))) {
                throw std::invalid_argument("sweep grid must be strictly monotone");
            }
        }
        if (horizon.fixed && !(*horizon.fixed > 0.0)) throw std::invalid_argument("fixed horizon must be > 0");
        if (!(horizon.periods > 0.0)) throw std::invalid_argument("horizon periods must be > 0");
        integrator.validate();
    }
};

struct SweepRow {
    double value = 0.0;
    double c_max = 0.0;
    double t_max = 0.0;
    double min_inversion = 0.0;
    double weight_at_peak = 0.0;
    double g_eff = 0.0;  ///< effective coupling of the point, NaN where singular
    double t_end = 0.0;
    ConditionReport conditions;
    double wall_seconds = 0.0;
    bool ok = false;
    std::string status;  ///< "ok" or the failure message
};

struct SweepTable {
    Axis axis = Axis::quality;
    std::vector<SweepRow> rows;
    /// Slope of log t_max against log(varied detuning) over the upper half of
    /// the grid; set by run_detuning_scan.
    std::optional<double> exponent;

    bool all_ok() const {
        return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; });
    }
};

inline void apply_default_policy(SystemParams& p, double g) {
    const double kappa = p.kappa();
    for (auto& e : p.emitter) {
        e.g_cav = g;
        e.rabi = g;
        e.laser_detuning = 9.0 * g;
        e.cavity_detuning = 9.0 * g + 2.0 * kappa;
    }
}

/// Base parameters with the axis value substituted.
inline SystemParams params_at(const SweepSpec& spec, double v) {
    SystemParams p = spec.base;
    switch (spec.axis) {
        case Axis::quality:
            p.loss = CavityLoss::from_quality(v);
            if (spec.default_policy) apply_default_policy(p, p.A().g_cav);
            break;
        case Axis::g_cav:
            if (!(v >= 0.0)) throw std::invalid_argument("g_cav must be >= 0");
            if (spec.default_policy) {
                apply_default_policy(p, v);
            } else {
                for (auto& e : p.emitter) e.g_cav = v;
            }
            break;
        case Axis::laser_detuning_factor:
            for (auto& e : p.emitter) e.laser_detuning *= v;
            break;
        case Axis::cavity_detuning_factor:
            for (auto& e : p.emitter) e.cavity_detuning *= v;
            break;
        case Axis::common_shift:
            for (auto& e : p.emitter) e.shift = v;
            break;
    }
    return p;
}

/// One trajectory, summarized. Never throws; failures land in `status`.
inline SweepRow evaluate_point(const SystemParams& p, const Horizon& horizon, IntegratorConfig cfg, double value = 0.0) {
    SweepRow row;
    row.value = value;
    const auto start = std::chrono::steady_clock::now();
    try {
        try {
            row.g_eff = effective_coupling(p);
        } catch (const SingularCouplingError&) {
            row.g_eff = std::numeric_limits<double>::quiet_NaN();
        }
        row.conditions = check_conditions(p);
        row.t_end = horizon.resolve(p);
        cfg.t_end = row.t_end;
        cfg.keep_final_state = false;
        const Trajectory tr = integrate(initial_state(p), p, cfg);
        const Peak pk = find_peak(tr);
        row.c_max = pk.value;
        row.t_max = pk.time;
        row.weight_at_peak = tr.weight[pk.index];
        row.min_inversion = *std::min_element(tr.inversion.begin(), tr.inversion.end());
        row.ok = true;
        row.status = "ok";
    } catch (const std::exception& e) {
        row.ok = false;
        row.status = e.what();
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

inline SweepTable run_sweep(const SweepSpec& spec) {
    spec.validate();
    SweepTable table;
    table.axis = spec.axis;
    table.rows.resize(spec.grid.size());
    parallel_for(spec.grid.size(), spec.jobs, [&](std::size_t i) {
        const double v = spec.grid[i];
        try {
            table.rows[i] = evaluate_point(params_at(spec, v), spec.horizon, spec.integrator, v);
        } catch (const std::exception& e) {
            table.rows[i].value = v;
            table.rows[i].status = e.what();
        }
    });
    return table;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw std::invalid_argument("loglog_slope needs positive data");
        const double lx = std::log(x[k]), ly = std::log(y[k]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double den = n * sxx - sx * sx;
    if (den == 0.0) throw std::invalid_argument("loglog_slope: degenerate abscissa");
    return (n * sxy - sx * sy) / den;
}

/// Detuning-factor scan plus the t_max power-law exponent over the upper half
/// of the grid (the half with the larger varied detuning).
inline SweepTable run_detuning_scan(const SweepSpec& spec) {
    if (spec.axis != Axis::laser_detuning_factor && spec.axis != Axis::cavity_detuning_factor) {
        throw std::invalid_argument("detuning scan needs a detuning-factor axis");
    }
    SweepTable table = run_sweep(spec);
    std::vector<std::size_t> order(table.rows.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return table.rows[a].value < table.rows[b].value; });
    std::vector<double> x, y;
    for (std::size_t k = order.size() / 2; k < order.size(); ++k) {
        const SweepRow& r = table.rows[order[k]];
        if (!r.ok) continue;
        x.push_back(std::abs(r.value));
        y.push_back(r.t_max);
    }
    if (x.size() >= 2) table.exponent = loglog_slope(x, y);
    return table;
}

inline SweepTable run_shift_scan(const SystemParams& base, const std::vector<double>& shifts, Horizon horizon = {},
                                 IntegratorConfig cfg = default_sweep_integrator(), unsigned jobs = 0) {
    SweepSpec spec;
    spec.base = base;
    spec.axis = Axis::common_shift;
    spec.grid = shifts;
    spec.horizon = horizon;
    spec.integrator = cfg;
    spec.jobs = jobs;
    return run_sweep(spec);
}

inline std::vector<double> linspace(double a, double b, int n) {
    if (n < 1) throw std::invalid_argument("linspace needs n >= 1");
    std::vector<double> v(n);
    for (int k = 0; k < n; ++k) v[k] = n == 1 ? a : a + (b - a) * k / (n - 1);
    return v;
}

inline std::vector<double> geomspace(double a, double b, int n) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("geomspace needs positive endpoints");
    std::vector<double> v = linspace(std::log(a), std::log(b), n);
    for (auto& x : v) x = std::exp(x);
    return v;
}

// ---------------------------------------------------------------------------
// Static spectral diffusion

class DiffusionGridError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DiffusionSpec {
    double gamma_inh = 0.0;  ///< envelope width [rad/ns]
    bool width_is_fwhm = true;
    int grid_points = 9;
    double span_sigma = 2.5;
    std::optional<double> t_eval;  ///< defaults to t_max of the unshifted run
    double max_outside_mass = 0.01;
    IntegratorConfig integrator = default_sweep_integrator();
    Horizon horizon = Horizon::automatic();  ///< horizon of the unshifted reference run
    unsigned jobs = 0;

    double sigma() const { return width_is_fwhm ? gamma_inh / (2.0 * std::sqrt(2.0 * std::log(2.0))) : gamma_inh; }

    void validate() const {
        if (!(gamma_inh >= 0.0) || !std::isfinite(gamma_inh)) throw std::invalid_argument("Gamma_inh must be >= 0");
        if (grid_points < 1 || grid_points % 2 == 0) throw std::invalid_argument("grid_points must be odd");
        if (!(span_sigma > 0.0)) throw std::invalid_argument("grid span must be > 0");
        if (t_eval && !(*t_eval > 0.0)) throw std::invalid_argument("evaluation time must be > 0");
        integrator.validate();
    }
};

/// Nodes and normalized Gaussian weights of one axis. A zero width collapses
/// the grid to the single unshifted point.
struct DiffusionGrid {
    std::vector<double> shifts;
    std::vector<double> weights;
    double outside_mass = 0.0;  ///< 2-D probability beyond the cells covered by the grid
};

inline DiffusionGrid diffusion_grid(const DiffusionSpec& spec) {
    spec.validate();
    DiffusionGrid g;
    const double s = spec.sigma();
    if (s == 0.0 || spec.grid_points == 1) {
        g.shifts = {0.0};
        g.weights = {1.0};
        g.outside_mass = s == 0.0 ? 0.0 : 1.0 - std::pow(std::erf(spec.span_sigma / std::sqrt(2.0)), 2);
        return g;
    }
    const int n = spec.grid_points;
    const double half_cell = spec.span_sigma / (n - 1);
    const std::vector<double> u = linspace(-spec.span_sigma, spec.span_sigma, n);
    double total = 0.0;
    for (double x : u) {
        g.shifts.push_back(x * s);
        g.weights.push_back(std::exp(-0.5 * x * x));
        total += g.weights.back();
    }
    for (auto& w : g.weights) w /= total;
    // symmetrize so that w(-x) == w(x) bitwise
    for (int k = 0; k < n / 2; ++k) g.weights[n - 1 - k] = g.weights[k];
    g.shifts[n / 2] = 0.0;
    const double covered = std::erf((spec.span_sigma + half_cell) / std::sqrt(2.0));
    g.outside_mass = 1.0 - covered * covered;
    return g;
}

struct DiffusionResult {
    double c_red = 0.0;        ///< concurrence of the averaged state
    double c_ref = 0.0;        ///< concurrence of the unshifted state at t_eval
    double c_max = 0.0;        ///< refined peak of the unshifted run
    double c_pointwise = 0.0;  ///< weighted mean of the per-point concurrences
    double t_eval = 0.0;
    double outside_mass = 0.0;
    int points = 0;
    QubitState averaged;
    std::optional<DensityMatrix> averaged_state;
};

/// Averages the full density matrix over independent static shifts of both
/// emitters at a fixed time and reports the concurrence of the average.
inline DiffusionResult spectral_diffusion_average(const SystemParams& base, const DiffusionSpec& spec) {
    spec.validate();
    const DiffusionGrid grid = diffusion_grid(spec);
    if (grid.outside_mass > spec.max_outside_mass) {
        throw DiffusionGridError("diffusion grid too coarse: " + std::to_string(100.0 * grid.outside_mass) +
                                 "% of the weight lies outside; widen the span or add points");
    }
    DiffusionResult res;
    res.outside_mass = grid.outside_mass;

    IntegratorConfig cfg = spec.integrator;
    cfg.keep_final_state = false;
    if (spec.t_eval) {
        res.t_eval = *spec.t_eval;
    } else {
        cfg.t_end = spec.horizon.resolve(base);
        const Trajectory ref = integrate(initial_state(base), base, cfg);
        const Peak pk = find_peak(ref);
        res.c_max = pk.value;
        res.t_eval = pk.time;
    }

    const std::size_t n = grid.shifts.size();
    std::vector<Matrix> states(n * n);
    IntegratorConfig point_cfg = spec.integrator;
    point_cfg.t_end = res.t_eval;
    point_cfg.keep_final_state = true;
    point_cfg.target_samples = 2;
    parallel_for(n * n, spec.jobs, [&](std::size_t k) {
        SystemParams p = base;
        p.A().shift += grid.shifts[k / n];
        p.B().shift += grid.shifts[k % n];
        states[k] = integrate(initial_state(p), p, point_cfg).final_state->matrix();
    });

    const Layout layout = base.layout();
    Matrix avg = Matrix::Zero(layout.dim(), layout.dim());
    for (std::size_t k = 0; k < n * n; ++k) {
        const double w = grid.weights[k / n] * grid.weights[k % n];
        avg += w * states[k];
        const QubitState q = reduce_to_qubits(Operator(layout, states[k]));
        res.c_pointwise += w * concurrence(q, spec.integrator.qubit_block);
        if (grid.shifts[k / n] == 0.0 && grid.shifts[k % n] == 0.0) res.c_ref = concurrence(q, spec.integrator.qubit_block);
    }
    if (n == 1) avg = states[0];
    res.points = static_cast<int>(n * n);
    res.averaged_state = DensityMatrix::unchecked(Operator(layout, avg));
    res.averaged = reduce_to_qubits(*res.averaged_state);
    res.c_red = concurrence(res.averaged, spec.integrator.qubit_block);
    if (spec.t_eval) res.c_max = res.c_ref;
    return res;
}

}  // namespace cavent
