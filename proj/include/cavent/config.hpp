#pragma once

// Run configuration: a flat "key = value" file plus command-line overrides.
// Every key is range-checked when it is set; unknown keys are rejected.
// Frequencies are value/2pi in GHz, gamma in MHz (a plain rate unless
// gamma_angular is set), times in ns.

#include "cavent/dynamics.hpp"
#include "cavent/model.hpp"
#include "cavent/sweeps.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavent {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Format { csv, json };

struct RunConfig {
    std::string experiment = "simulate";

    // physical parameters
    std::optional<double> q;  ///< default 9800 unless kappa_ghz is given
    std::optional<double> kappa_ghz;
    double g_ghz = 3.0;
    std::optional<double> omega_l_ghz;      ///< default g
    std::optional<double> delta_l_ghz;      ///< default 9 g
    std::optional<double> delta_cav_ghz;    ///< default 9 g + 2 kappa
    double shift_ghz = 0.0;
    double gamma_mhz = 50.0;
    bool gamma_angular = false;
    double omega_opt_thz = 471.0;
    double omega01_ghz = kDefaultGroundSplitGhz;
    int nmax = 2;
    bool ideal = false;

    // integration
    std::optional<double> dt_ns;
    std::optional<double> t_end_ns;
    std::optional<int> record_every;
    Method method = Method::rk4_fixed;
    QubitBlock qubit_block = QubitBlock::renormalized;

    // sweeps
    std::string sweep_method = "rk4_propagator";
    int sweep_samples = 4000;
    int fig4_points = 21;
    double fig4_factor_min = 0.5;
    double fig4_factor_max = 2.0;
    int shift_points = 21;
    double shift_min_ghz = -20.0;
    double shift_max_ghz = 20.0;
    int fig5_q_points = 25;
    double fig5_q_min = 1e3;
    double fig5_q_max = 1e6;
    std::vector<double> fig5_g_ghz{0.3, 1.0, 2.0, 3.0};
    std::vector<double> fig5_gamma_inh_ghz{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};

    // diffusion
    double gamma_inh_ghz = 1.0;
    bool width_is_fwhm = true;
    int diffusion_points = 9;
    double diffusion_span = 2.5;

    // output
    std::string out_dir = ".";
    std::vector<Format> formats{Format::csv, Format::json};
    unsigned jobs = 0;

    bool wants(Format f) const { return std::find(formats.begin(), formats.end(), f) != formats.end(); }

    void set(const std::string& key, const std::string& value);
    void load_file(const std::string& path);

    SystemParams params() const;
    IntegratorConfig integrator() const;
    IntegratorConfig sweep_integrator() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double to_double(const std::string& key, const std::string& v) {
    std::size_t pos = 0;
    double x;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw ConfigError(key + ": '" + v + "' is not a number");
    }
    if (pos != v.size() || !std::isfinite(x)) throw ConfigError(key + ": '" + v + "' is not a finite number");
    return x;
}

inline int to_int(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    if (x != std::floor(x) || std::abs(x) > 2e9) throw ConfigError(key + ": '" + v + "' is not an integer");
    return static_cast<int>(x);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

inline double positive(const std::string& key, double x) {
    if (!(x > 0.0)) throw ConfigError(key + " must be > 0");
    return x;
}
inline double nonnegative(const std::string& key, double x) {
    if (!(x >= 0.0)) throw ConfigError(key + " must be >= 0");
    return x;
}
inline int at_least(const std::string& key, int x, int lo) {
    if (x < lo) throw ConfigError(key + " must be >= " + std::to_string(lo));
    return x;
}

}  // namespace detail

inline void RunConfig::set(const std::string& raw_key, const std::string& raw_value) {
    using namespace detail;
    std::string key = trim(raw_key);
    std::replace(key.begin(), key.end(), '-', '_');
    const std::string v = trim(raw_value);
    if (key == "experiment") {
        static const std::vector<std::string> known{"simulate",   "fig3",    "fig4",       "fig5",
                                                    "diffusion",  "conditions", "purcell", "convergence"};
        if (std::find(known.begin(), known.end(), v) == known.end()) throw ConfigError("unknown experiment '" + v + "'");
        experiment = v;
    } else if (key == "q") {
        q = positive(key, to_double(key, v));
    } else if (key == "kappa_ghz") {
        kappa_ghz = nonnegative(key, to_double(key, v));
    } else if (key == "g_ghz") {
        g_ghz = nonnegative(key, to_double(key, v));
    } else if (key == "omega_l_ghz") {
        omega_l_ghz = nonnegative(key, to_double(key, v));
    } else if (key == "delta_l_ghz") {
        delta_l_ghz = to_double(key, v);
    } else if (key == "delta_cav_ghz") {
        delta_cav_ghz = to_double(key, v);
    } else if (key == "shift_ghz") {
        shift_ghz = to_double(key, v);
    } else if (key == "gamma_mhz") {
        gamma_mhz = nonnegative(key, to_double(key, v));
    } else if (key == "gamma_angular") {
        gamma_angular = to_bool(key, v);
    } else if (key == "omega_opt_thz") {
        omega_opt_thz = positive(key, to_double(key, v));
    } else if (key == "omega01_ghz") {
        omega01_ghz = positive(key, to_double(key, v));
    } else if (key == "nmax") {
        nmax = at_least(key, to_int(key, v), 1);
    } else if (key == "ideal") {
        ideal = to_bool(key, v);
    } else if (key == "dt_ns") {
        dt_ns = positive(key, to_double(key, v));
    } else if (key == "t_end_ns") {
        t_end_ns = positive(key, to_double(key, v));
    } else if (key == "record_every") {
        record_every = at_least(key, to_int(key, v), 1);
    } else if (key == "method") {
        try {
            method = parse_method(v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    } else if (key == "qubit_block") {
        if (v == "renormalized") qubit_block = QubitBlock::renormalized;
        else if (v == "raw") qubit_block = QubitBlock::raw;
        else throw ConfigError("qubit_block must be 'renormalized' or 'raw'");
    } else if (key == "sweep_method") {
        try {
            parse_method(v);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        sweep_method = v;
    } else if (key == "sweep_samples") {
        sweep_samples = at_least(key, to_int(key, v), 2);
    } else if (key == "fig4_points") {
        fig4_points = at_least(key, to_int(key, v), 2);
    } else if (key == "fig4_factor_min") {
        fig4_factor_min = positive(key, to_double(key, v));
    } else if (key == "fig4_factor_max") {
        fig4_factor_max = positive(key, to_double(key, v));
    } else if (key == "shift_points") {
        shift_points = at_least(key, to_int(key, v), 1);
    } else if (key == "shift_min_ghz") {
        shift_min_ghz = to_double(key, v);
    } else if (key == "shift_max_ghz") {
        shift_max_ghz = to_double(key, v);
    } else if (key == "fig5_q_points") {
        fig5_q_points = at_least(key, to_int(key, v), 1);
    } else if (key == "fig5_q_min") {
        fig5_q_min = positive(key, to_double(key, v));
    } else if (key == "fig5_q_max") {
        fig5_q_max = positive(key, to_double(key, v));
    } else if (key == "fig5_g_ghz") {
        fig5_g_ghz = to_list(key, v);
        for (double g : fig5_g_ghz) positive(key, g);
    } else if (key == "fig5_gamma_inh_ghz") {
        fig5_gamma_inh_ghz = to_list(key, v);
        for (double g : fig5_gamma_inh_ghz) nonnegative(key, g);
    } else if (key == "gamma_inh_ghz") {
        gamma_inh_ghz = nonnegative(key, to_double(key, v));
    } else if (key == "width") {
        if (v == "fwhm") width_is_fwhm = true;
        else if (v == "sigma") width_is_fwhm = false;
        else throw ConfigError("width must be 'fwhm' or 'sigma'");
    } else if (key == "diffusion_points") {
        diffusion_points = at_least(key, to_int(key, v), 1);
        if (diffusion_points % 2 == 0) throw ConfigError("diffusion_points must be odd");
    } else if (key == "diffusion_span") {
        diffusion_span = positive(key, to_double(key, v));
    } else if (key == "out_dir") {
        if (v.empty()) throw ConfigError("out_dir must not be empty");
        out_dir = v;
    } else if (key == "format") {
        std::vector<Format> f;
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item == "csv") f.push_back(Format::csv);
            else if (item == "json") f.push_back(Format::json);
            else throw ConfigError("format entries must be csv or json, got '" + item + "'");
        }
        if (f.empty()) throw ConfigError("format must name at least one of csv, json");
        formats = f;
    } else if (key == "jobs") {
        jobs = static_cast<unsigned>(at_least(key, to_int(key, v), 0));
    } else {
        throw ConfigError("unknown configuration key '" + raw_key + "'");
    }
}

inline void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        try {
            set(line.substr(0, eq), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline SystemParams RunConfig::params() const {
    if (q && kappa_ghz) throw ConfigError("give either q or kappa_ghz, not both");
    SystemParams p;
    p.omega_opt = angular_from_ghz(omega_opt_thz * 1e3);
    p.omega_01 = angular_from_ghz(omega01_ghz);
    p.n_max = nmax;
    if (ideal) {
        p.loss = CavityLoss::from_rate(0.0);
        p.gamma = 0.0;
    } else {
        p.loss = kappa_ghz ? CavityLoss::from_rate(angular_from_ghz(*kappa_ghz)) : CavityLoss::from_quality(q.value_or(9800.0));
        p.gamma = gamma_angular ? angular_from_ghz(gamma_mhz * 1e-3) : gamma_mhz * 1e-3;
    }
    const double g = angular_from_ghz(g_ghz);
    const double kappa = p.kappa();
    for (auto& e : p.emitter) {
        e.g_cav = g;
        e.rabi = omega_l_ghz ? angular_from_ghz(*omega_l_ghz) : g;
        e.laser_detuning = delta_l_ghz ? angular_from_ghz(*delta_l_ghz) : 9.0 * g;
        e.cavity_detuning = delta_cav_ghz ? angular_from_ghz(*delta_cav_ghz) : 9.0 * g + 2.0 * kappa;
        e.shift = angular_from_ghz(shift_ghz);
    }
    p.validate();
    return p;
}

inline IntegratorConfig RunConfig::integrator() const {
    IntegratorConfig c;
    c.method = method;
    c.qubit_block = qubit_block;
    c.t_end = t_end_ns.value_or(300.0);
    if (dt_ns) {
        c.dt = *dt_ns;
        c.auto_dt = false;
    }
    if (record_every) c.record_every = *record_every;
    c.validate();
    return c;
}

inline IntegratorConfig RunConfig::sweep_integrator() const {
    IntegratorConfig c = default_sweep_integrator();
    c.method = parse_method(sweep_method);
    c.qubit_block = qubit_block;
    c.target_samples = sweep_samples;
    if (dt_ns) {
        c.dt = *dt_ns;
        c.auto_dt = false;
    }
    if (record_every) {
        c.record_every = *record_every;
        c.target_samples.reset();
    }
    c.validate();
    return c;
}

}  // namespace cavent
