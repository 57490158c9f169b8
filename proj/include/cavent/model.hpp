#pragma once

// Physical parameters, Hamiltonians, collapse operators and the closed-form
// analytics of the cavity-mediated Raman spin exchange.
//
// Internal units: angular frequencies in rad/ns, rates in 1/ns, times in ns.
// User-facing frequencies are "value/2pi in GHz".

#include "cavent/hilbert.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavent {

inline double angular_from_ghz(double f_ghz) { return kTwoPi * f_ghz; }
inline double ghz_from_angular(double w) { return w / kTwoPi; }

/// Default optical transition: 471 THz.
inline constexpr double kDefaultOpticalGhz = 471.0e3;
/// NV zero-field splitting, 2.87 GHz.
inline constexpr double kDefaultGroundSplitGhz = 2.87;
/// Radiative rate per decay channel, 50 MHz taken as a plain rate [1/ns].
inline constexpr double kDefaultGamma = 0.05;

class SingularCouplingError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

inline double kappa_from_q(double omega_opt, double q) {
    if (!(q > 0.0)) throw std::invalid_argument("quality factor must be > 0");
    if (std::isinf(q)) return 0.0;
    return omega_opt / q;
}

/// Cavity loss given either as a quality factor or directly as a rate; the
/// other quantity is derived from the optical frequency.
class CavityLoss {
public:
    static CavityLoss from_quality(double q) {
        if (!(q > 0.0)) throw std::invalid_argument("quality factor must be > 0");
        return CavityLoss(true, q);
    }
    static CavityLoss from_rate(double kappa) {
        if (!(kappa >= 0.0)) throw std::invalid_argument("cavity loss rate must be >= 0");
        return CavityLoss(false, kappa);
    }

    bool quality_given() const { return from_quality_; }
    double kappa(double omega_opt) const { return from_quality_ ? kappa_from_q(omega_opt, value_) : value_; }
    double quality(double omega_opt) const {
        if (from_quality_) return value_;
        return value_ == 0.0 ? std::numeric_limits<double>::infinity() : omega_opt / value_;
    }

private:
    CavityLoss(bool q, double v) : from_quality_(q), value_(v) {}
    bool from_quality_;
    double value_;
};

struct EmitterParams {
    double g_cav = 0.0;            ///< cavity coupling on |1>-|E>
    double rabi = 0.0;             ///< laser coupling on |0>-|E>
    double laser_detuning = 0.0;   ///< Delta_L
    double cavity_detuning = 0.0;  ///< Delta_cav
    double shift = 0.0;            ///< spectral-diffusion shift of the optical transition
};

struct SystemParams {
    std::array<EmitterParams, 2> emitter{};
    double omega_opt = angular_from_ghz(kDefaultOpticalGhz);
    double omega_01 = angular_from_ghz(kDefaultGroundSplitGhz);
    CavityLoss loss = CavityLoss::from_quality(9800.0);
    double gamma = kDefaultGamma;
    int n_max = 2;

    const EmitterParams& A() const { return emitter[0]; }
    const EmitterParams& B() const { return emitter[1]; }
    EmitterParams& A() { return emitter[0]; }
    EmitterParams& B() { return emitter[1]; }

    double kappa() const { return loss.kappa(omega_opt); }
    double quality() const { return loss.quality(omega_opt); }
    Layout layout() const { return Layout(n_max); }

    /// Throws std::invalid_argument on the first violated invariant.
    void validate() const {
        if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
        if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
        if (!(kappa() >= 0.0)) throw std::invalid_argument("kappa must be >= 0");
        if (!(omega_opt > 0.0)) throw std::invalid_argument("optical frequency must be > 0");
        for (const auto& e : emitter) {
            if (!(e.g_cav >= 0.0) || !(e.rabi >= 0.0)) {
                throw std::invalid_argument("couplings must be finite and >= 0");
            }
            if (!std::isfinite(e.laser_detuning) || !std::isfinite(e.cavity_detuning) || !std::isfinite(e.shift)) {
                throw std::invalid_argument("detunings must be finite");
            }
        }
    }
};

/// Operating point used throughout: Omega_L = g, Delta_L = 9 g, Delta_cav = 9 g + 2 kappa.
/// `ideal` switches off both kappa and gamma.
inline SystemParams default_params(double q, double g_over_2pi_ghz, bool ideal = false) {
    SystemParams p;
    p.loss = ideal ? CavityLoss::from_rate(0.0) : CavityLoss::from_quality(q);
    p.gamma = ideal ? 0.0 : kDefaultGamma;
    const double g = angular_from_ghz(g_over_2pi_ghz);
    const double kappa = p.kappa();
    for (auto& e : p.emitter) {
        e.g_cav = g;
        e.rabi = g;
        e.laser_detuning = 9.0 * g;
        e.cavity_detuning = 9.0 * g + 2.0 * kappa;
        e.shift = 0.0;
    }
    return p;
}

inline Slot emitter_slot(int j) { return j == 0 ? Slot::A : Slot::B; }

/// Time-independent Hamiltonian (hbar = 1) in the frame co-rotating with the
/// laser and cavity frequencies.
inline Operator build_rotating_hamiltonian(const SystemParams& p) {
    const Layout L = p.layout();
    const Operator c = embed(annihilation(p.n_max), Slot::cav, L);
    const Operator cdag = c.adjoint();
    Operator diag(L);
    Operator upper(L);
    for (int j = 0; j < 2; ++j) {
        const auto& e = p.emitter[j];
        const Slot s = emitter_slot(j);
        diag += cplx(e.laser_detuning + e.shift) * embed(transition(Level::excited, Level::excited), s, L);
        diag += cplx(e.laser_detuning - e.cavity_detuning) * embed(transition(Level::ground1, Level::ground1), s, L);
        upper += cplx(e.rabi) * embed(transition(Level::excited, Level::ground0), s, L);
        upper += cplx(e.g_cav) * (cdag * embed(transition(Level::ground1, Level::excited), s, L));
    }
    return diag + upper + upper.adjoint();
}

/// Absolute level energies and carrier frequencies behind the rotating frame.
struct LabFrequencies {
    double cavity = 0.0;
    std::array<double, 2> excited{};  ///< omega_E per emitter, including the shift
    std::array<double, 2> laser{};
};

inline LabFrequencies lab_frequencies(const SystemParams& p) {
    LabFrequencies f;
    f.cavity = p.omega_opt - p.omega_01 - p.A().cavity_detuning;
    for (int j = 0; j < 2; ++j) {
        const auto& e = p.emitter[j];
        const double unshifted = f.cavity + p.omega_01 + e.cavity_detuning;
        f.excited[j] = unshifted + e.shift;
        f.laser[j] = unshifted - e.laser_detuning;
    }
    return f;
}

/// H(t) = constant + sum_k (exp(i w_k t) D_k + h.c.)
struct DrivenHamiltonian {
    struct Drive {
        double omega = 0.0;
        Operator op;
    };

    Operator constant;
    std::vector<Drive> drives;

    Operator at(double t) const {
        Operator h = constant;
        for (const auto& d : drives) {
            const Operator term = std::polar(1.0, d.omega * t) * d.op;
            h += term;
            h += term.adjoint();
        }
        return h;
    }
};

/// Lab-frame Hamiltonian: absolute level energies plus the laser terms
/// Omega_L |0><E| exp(i w_L t) + h.c. and the cavity coupling.
inline DrivenHamiltonian lab_hamiltonian(const SystemParams& p) {
    const Layout L = p.layout();
    const LabFrequencies f = lab_frequencies(p);
    const Operator c = embed(annihilation(p.n_max), Slot::cav, L);
    const Operator cdag = c.adjoint();
    Operator diag = cplx(f.cavity) * (cdag * c);
    Operator cav_upper(L);
    DrivenHamiltonian h{Operator(L), {}};
    for (int j = 0; j < 2; ++j) {
        const auto& e = p.emitter[j];
        const Slot s = emitter_slot(j);
        diag += cplx(p.omega_01) * embed(transition(Level::ground1, Level::ground1), s, L);
        diag += cplx(f.excited[j]) * embed(transition(Level::excited, Level::excited), s, L);
        cav_upper += cplx(e.g_cav) * (cdag * embed(transition(Level::ground1, Level::excited), s, L));
        h.drives.push_back({f.laser[j], cplx(e.rabi) * embed(transition(Level::ground0, Level::excited), s, L)});
    }
    h.constant = diag + cav_upper + cav_upper.adjoint();
    return h;
}

inline Operator build_lab_hamiltonian(const SystemParams& p, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("time must be >= 0");
    return lab_hamiltonian(p).at(t);
}

/// sqrt(gamma)|x><E| for x in {0, 1} on each emitter, then sqrt(kappa) c.
inline std::vector<Operator> build_collapse_operators(const SystemParams& p) {
    const double kappa = p.kappa();
    if (!(p.gamma >= 0.0) || !(kappa >= 0.0)) throw std::invalid_argument("decay rates must be >= 0");
    const Layout L = p.layout();
    std::vector<Operator> ops;
    ops.reserve(5);
    const double sg = std::sqrt(p.gamma);
    for (int j = 0; j < 2; ++j) {
        const Slot s = emitter_slot(j);
        ops.push_back(cplx(sg) * embed(transition(Level::ground0, Level::excited), s, L));
        ops.push_back(cplx(sg) * embed(transition(Level::ground1, Level::excited), s, L));
    }
    ops.push_back(cplx(std::sqrt(kappa)) * embed(annihilation(p.n_max), Slot::cav, L));
    return ops;
}

/// Effective spin-exchange coupling from adiabatic elimination of the excited
/// states and the cavity mode (emitter A parameters; sign retained).
inline double effective_coupling(const SystemParams& p) {
    const auto& e = p.A();
    const double om2 = e.rabi * e.rabi;
    const double g2 = e.g_cav * e.g_cav;
    if (om2 == 0.0 || g2 == 0.0) return 0.0;
    if (e.laser_detuning == 0.0) throw SingularCouplingError("effective coupling undefined for Delta_L = 0");
    const double dressed = e.cavity_detuning - e.laser_detuning - 2.0 * g2 / e.laser_detuning;
    if (std::abs(dressed) < 1e-6) {
        throw SingularCouplingError("effective coupling singular: dressed Raman detuning " + std::to_string(dressed) +
                                    " rad/ns");
    }
    return om2 * g2 / (e.laser_detuning * e.laser_detuning * dressed);
}

struct ExchangeTimes {
    double bell = 0.0;      ///< pi/(4|g~|): |01> -> (|01> + i|10>)/sqrt2
    double transfer = 0.0;  ///< pi/(2|g~|): |01> -> |10>
};

inline ExchangeTimes predicted_times(double g_eff) {
    if (g_eff == 0.0 || !std::isfinite(g_eff)) throw std::invalid_argument("predicted_times needs a nonzero coupling");
    const double a = std::abs(g_eff);
    return {kPi / (4.0 * a), kPi / (2.0 * a)};
}

enum class Verdict { satisfied, marginal, violated };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::satisfied: return "satisfied";
        case Verdict::marginal: return "marginal";
        case Verdict::violated: return "violated";
    }
    return "?";
}

struct ConditionThresholds {
    double much_greater = 3.0;  ///< a >> b means a/b above this
    double weak_band = 10.0;    ///< a << b violated "weakly" while a/b < weak_band * much_greater
};

/// Validity of the effective exchange description:
///   (1) Delta_L >> Omega_L
///   (2) |Delta_cav - Delta_L| >> g, Omega_L, kappa
///   (3) Delta_L^2 |Delta_cav - Delta_L| << g^2 Omega_L^2 / gamma_rad, gamma_rad = 2 gamma
struct ConditionReport {
    double ratio1 = 0.0;
    double ratio2 = 0.0;
    double ratio3 = 0.0;
    bool ok1 = false;
    bool ok2 = false;
    bool ok3 = false;
    Verdict verdict1 = Verdict::violated;
    Verdict verdict2 = Verdict::violated;
    Verdict verdict3 = Verdict::violated;
    ConditionThresholds thresholds{};
};

namespace detail {
inline double safe_ratio(double num, double den) {
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return num / den;
}
inline Verdict greater_verdict(double r, double thr) {
    if (r > thr) return Verdict::satisfied;
    if (r > 1.0) return Verdict::marginal;
    return Verdict::violated;
}
}  // namespace detail

inline ConditionReport check_conditions(const SystemParams& p, ConditionThresholds thr = {}) {
    const auto& e = p.A();
    const double kappa = p.kappa();
    const double gamma_rad = 2.0 * p.gamma;
    const double split = std::abs(e.cavity_detuning - e.laser_detuning);
    ConditionReport r;
    r.thresholds = thr;
    r.ratio1 = detail::safe_ratio(std::abs(e.laser_detuning), e.rabi);
    r.ratio2 = detail::safe_ratio(split, std::max({e.g_cav, e.rabi, kappa}));
    r.ratio3 = detail::safe_ratio(e.laser_detuning * e.laser_detuning * split * gamma_rad,
                                  e.g_cav * e.g_cav * e.rabi * e.rabi);
    r.ok1 = r.ratio1 > thr.much_greater;
    r.ok2 = r.ratio2 > thr.much_greater;
    r.ok3 = r.ratio3 < 1.0;
    r.verdict1 = detail::greater_verdict(r.ratio1, thr.much_greater);
    r.verdict2 = detail::greater_verdict(r.ratio2, thr.much_greater);
    r.verdict3 = r.ok3                                           ? Verdict::satisfied
                 : r.ratio3 < thr.weak_band * thr.much_greater ? Verdict::marginal
                                                                 : Verdict::violated;
    return r;
}

/// Coherent coupling implied by a measured Purcell enhancement:
/// g = sqrt(d * omega * F / (4 Q tau)).
inline double purcell_coupling(double purcell_factor, double q, double tau_ns, double debye_waller, double omega) {
    if (!(purcell_factor > 0.0) || !(q > 0.0) || !(tau_ns > 0.0) || !(debye_waller > 0.0) || !(omega > 0.0)) {
        throw std::invalid_argument("purcell_coupling inputs must all be > 0");
    }
    return std::sqrt(debye_waller * omega * purcell_factor / (4.0 * q * tau_ns));
}

/// Truncates (does not round) to three significant digits for display.
inline std::string three_digits(double x) {
    if (x == 0.0) return "0.00";
    const int e = static_cast<int>(std::floor(std::log10(std::abs(x))));
    const double scale = std::pow(10.0, 2 - e);
    const double t = std::trunc(x * scale + std::copysign(1e-9, x)) / scale;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", std::max(0, 2 - e), t);
    return buf;
}

}  // namespace cavent
