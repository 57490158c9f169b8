#pragma once

// Serialization of trajectories, sweep tables and run manifests.
// CSV: '.' decimal, ',' separator, '#'-prefixed comment lines, values with 10
// significant digits. Needs nlohmann/json and OpenSSL libcrypto.

#include "cavent/dynamics.hpp"
#include "cavent/model.hpp"
#include "cavent/sweeps.hpp"
#include "cavent/trajectory.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cavent {

inline constexpr const char* kVersion = "1.0.0";

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

/// Column-oriented table: named numeric columns plus optional text columns.
struct CsvTable {
    std::vector<std::string> comments;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> r) {
        if (r.size() != header.size()) throw std::invalid_argument("CSV row width differs from header");
        rows.push_back(std::move(r));
    }

    std::string str() const {
        std::ostringstream os;
        for (const auto& c : comments) os << "# " << c << '\n';
        for (std::size_t k = 0; k < header.size(); ++k) os << (k ? "," : "") << header[k];
        os << '\n';
        for (const auto& r : rows) {
            for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
            os << '\n';
        }
        return os.str();
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        throw IoError("no CSV column '" + name + "'");
    }

    std::vector<double> numbers(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(std::stod(r[c]));
        return out;
    }
};

inline std::string csv_escape(std::string s) {
    for (auto& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    return s;
}

inline CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.size() > 2 ? line.substr(2) : "");
        } else if (t.header.empty()) {
            t.header = split(line);
        } else {
            auto cells = split(line);
            if (cells.size() != t.header.size()) throw IoError("CSV row has " + std::to_string(cells.size()) + " cells");
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << content;
    if (!out) throw IoError("write failed for " + p.string());
}

inline std::string sha256_hex(const std::string& data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Records

inline const std::vector<std::string>& trajectory_columns() {
    static const std::vector<std::string> cols{"t_ns",   "rho00",    "rho01",     "rho10",       "rho11",  "popE_A",
                                               "popE_B", "n_photon", "inversion", "concurrence", "weight", "purity"};
    return cols;
}

inline CsvTable trajectory_csv(const Trajectory& tr, std::vector<std::string> comments = {}) {
    CsvTable t;
    t.comments = std::move(comments);
    t.header = trajectory_columns();
    for (std::size_t k = 0; k < tr.size(); ++k) {
        t.add_row({fmt(tr.times[k]), fmt(tr.rho00[k]), fmt(tr.rho01[k]), fmt(tr.rho10[k]), fmt(tr.rho11[k]),
                   fmt(tr.excited_A[k]), fmt(tr.excited_B[k]), fmt(tr.photons[k]), fmt(tr.inversion[k]),
                   fmt(tr.concurrence[k]), fmt(tr.weight[k]), fmt(tr.purity[k])});
    }
    return t;
}

inline Trajectory trajectory_from_csv(const CsvTable& t) {
    Trajectory tr;
    tr.times = t.numbers("t_ns");
    tr.rho00 = t.numbers("rho00");
    tr.rho01 = t.numbers("rho01");
    tr.rho10 = t.numbers("rho10");
    tr.rho11 = t.numbers("rho11");
    tr.excited_A = t.numbers("popE_A");
    tr.excited_B = t.numbers("popE_B");
    tr.photons = t.numbers("n_photon");
    tr.inversion = t.numbers("inversion");
    tr.concurrence = t.numbers("concurrence");
    tr.weight = t.numbers("weight");
    tr.purity = t.numbers("purity");
    return tr;
}

inline json trajectory_json(const Trajectory& tr) {
    return json{{"t_ns", tr.times},         {"rho00", tr.rho00},         {"rho01", tr.rho01},
                {"rho10", tr.rho10},        {"rho11", tr.rho11},         {"popE_A", tr.excited_A},
                {"popE_B", tr.excited_B},   {"n_photon", tr.photons},    {"inversion", tr.inversion},
                {"concurrence", tr.concurrence}, {"weight", tr.weight}, {"purity", tr.purity}};
}

struct TrajectorySummary {
    double c_max = 0.0;
    double t_max = 0.0;
    double min_inversion = 0.0;
    double weight_at_peak = 0.0;
};

inline TrajectorySummary summarize(const Trajectory& tr) {
    const Peak pk = find_peak(tr);
    return {pk.value, pk.time, *std::min_element(tr.inversion.begin(), tr.inversion.end()), tr.weight[pk.index]};
}

inline json summary_json(const Trajectory& tr) {
    const TrajectorySummary s = summarize(tr);
    return json{{"c_max", s.c_max},
                {"t_max_ns", s.t_max},
                {"min_inversion", s.min_inversion},
                {"weight_at_peak", s.weight_at_peak},
                {"samples", tr.size()},
                {"steps", tr.steps},
                {"dt_ns", tr.dt},
                {"reduced_dim", tr.reduced_dim},
                {"max_trace_error", tr.max_trace_error},
                {"max_hermiticity_defect", tr.max_hermiticity},
                {"min_eigenvalue", tr.min_eigenvalue}};
}

inline const std::vector<std::string>& sweep_columns() {
    static const std::vector<std::string> cols{
        "value",  "c_max",  "t_max_ns", "min_inversion", "weight_at_peak", "g_eff_mhz", "t_end_ns",
        "ratio1", "ratio2", "ratio3",   "verdict1",      "verdict2",       "verdict3",  "status"};
    return cols;
}

inline std::vector<std::string> sweep_cells(const SweepRow& r, double display_value) {
    const auto& c = r.conditions;
    return {fmt(display_value), fmt(r.c_max), fmt(r.t_max), fmt(r.min_inversion), fmt(r.weight_at_peak),
            fmt(1e3 * ghz_from_angular(r.g_eff)), fmt(r.t_end), fmt(c.ratio1), fmt(c.ratio2), fmt(c.ratio3),
            to_string(c.verdict1), to_string(c.verdict2), to_string(c.verdict3), csv_escape(r.status)};
}

/// `scale` converts the internal axis value to the printed one (e.g. rad/ns -> GHz).
inline CsvTable sweep_csv(const SweepTable& t, std::vector<std::string> comments, double scale = 1.0) {
    CsvTable out;
    out.comments = std::move(comments);
    out.comments.push_back(std::string("axis: ") + to_string(t.axis));
    out.header = sweep_columns();
    for (const auto& r : t.rows) out.add_row(sweep_cells(r, r.value * scale));
    return out;
}

inline json conditions_json(const ConditionReport& r) {
    return json{{"ratio1", r.ratio1},   {"ratio2", r.ratio2},   {"ratio3", r.ratio3},
                {"ok1", r.ok1},         {"ok2", r.ok2},         {"ok3", r.ok3},
                {"verdict1", to_string(r.verdict1)}, {"verdict2", to_string(r.verdict2)},
                {"verdict3", to_string(r.verdict3)},
                {"threshold", r.thresholds.much_greater}};
}

inline json params_json(const SystemParams& p) {
    auto emitter = [&](const EmitterParams& e) {
        return json{{"g_cav_ghz", ghz_from_angular(e.g_cav)},
                    {"omega_L_ghz", ghz_from_angular(e.rabi)},
                    {"delta_L_ghz", ghz_from_angular(e.laser_detuning)},
                    {"delta_cav_ghz", ghz_from_angular(e.cavity_detuning)},
                    {"delta_shift_ghz", ghz_from_angular(e.shift)},
                    {"internal_rad_per_ns",
                     {{"g_cav", e.g_cav},
                      {"omega_L", e.rabi},
                      {"delta_L", e.laser_detuning},
                      {"delta_cav", e.cavity_detuning},
                      {"delta_shift", e.shift}}}};
    };
    return json{{"A", emitter(p.A())},
                {"B", emitter(p.B())},
                {"omega_opt_thz", ghz_from_angular(p.omega_opt) / 1e3},
                {"omega_01_ghz", ghz_from_angular(p.omega_01)},
                {"Q", p.quality()},
                {"kappa_ghz", ghz_from_angular(p.kappa())},
                {"gamma_mhz", p.gamma * 1e3},
                {"n_max", p.n_max},
                {"internal",
                 {{"omega_opt_rad_per_ns", p.omega_opt},
                  {"omega_01_rad_per_ns", p.omega_01},
                  {"kappa_per_ns", p.kappa()},
                  {"gamma_per_ns", p.gamma}}}};
}

inline json integrator_json(const IntegratorConfig& c) {
    json j{{"method", to_string(c.method)},
           {"dt_ns", c.dt},
           {"auto_dt", c.auto_dt},
           {"t_end_ns", c.t_end},
           {"record_every", c.record_every},
           {"rtol", c.rtol},
           {"atol", c.atol},
           {"positivity_check_every", c.positivity_check_every},
           {"stability_limit", c.stability_limit},
           {"qubit_block", c.qubit_block == QubitBlock::raw ? "raw" : "renormalized"}};
    if (c.target_samples) j["target_samples"] = *c.target_samples;
    return j;
}

/// Collects emitted files and writes the manifest last.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        write_file(dir_ / name, content);
        files_.push_back({name, sha256_hex(content), content.size()});
    }
    void write(const std::string& name, const CsvTable& t) { write(name, t.str()); }
    void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    /// Writes manifest.json; digests are of the bytes written above.
    void finish(const std::string& experiment, json parameters, double wall_seconds) {
        json files = json::array();
        for (const auto& f : files_) files.push_back({{"name", f.name}, {"sha256", f.digest}, {"bytes", f.bytes}});
        json m{{"experiment", experiment},
               {"version", kVersion},
               {"parameters", std::move(parameters)},
               {"wall_clock_seconds", wall_seconds},
               {"files", files}};
        write_file(dir_ / "manifest.json", m.dump(2) + "\n");
    }

    struct Entry {
        std::string name;
        std::string digest;
        std::size_t bytes;
    };
    const std::vector<Entry>& files() const { return files_; }

private:
    std::filesystem::path dir_;
    std::vector<Entry> files_;
};

}  // namespace cavent
