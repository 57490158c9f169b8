#pragma once

// Lindblad master-equation integration.
//
//   d rho/dt = -i [H, rho] + sum_L ( L rho L^+ - 1/2 {L^+ L, rho} )
//
// Integration runs on the smallest coordinate subspace that contains the
// support of rho(0) and is mapped into itself by H - i/2 sum L^+L and by every
// L. Outside that subspace rho stays exactly zero, so the restriction changes
// nothing but the cost. For the entangling protocol started in |0_A 1_B 0>
// the subspace has six states for any photon truncation.

#include "cavent/entanglement.hpp"
#include "cavent/hilbert.hpp"
#include "cavent/model.hpp"
#include "cavent/trajectory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavent {

class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Smallest eigenvalue of rho fell below -1e-6 at a checkpoint.
class PositivityError : public IntegrationError {
public:
    using IntegrationError::IntegrationError;
};

enum class Method { rk4_fixed, rk45_adaptive, rk4_propagator };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::rk4_fixed: return "rk4_fixed";
        case Method::rk45_adaptive: return "rk45_adaptive";
        case Method::rk4_propagator: return "rk4_propagator";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "rk4_fixed" || s == "rk4") return Method::rk4_fixed;
    if (s == "rk45_adaptive" || s == "rk45") return Method::rk45_adaptive;
    if (s == "rk4_propagator" || s == "propagator") return Method::rk4_propagator;
    throw std::invalid_argument("unknown integration method '" + s + "'");
}

inline constexpr double kDefaultDt = 2e-4;

struct IntegratorConfig {
    double dt = kDefaultDt;      ///< step [ns]; an upper bound when auto_dt is set
    bool auto_dt = true;         ///< shrink dt to satisfy the stability guard instead of failing
    double t_end = 300.0;        ///< horizon [ns]
    int record_every = 100;      ///< steps between samples
    std::optional<int> target_samples;  ///< when set, overrides record_every to give about this many samples
    Method method = Method::rk4_fixed;
    double rtol = 1e-9;
    double atol = 1e-12;
    int positivity_check_every = 1000;
    double stability_limit = 0.1;  ///< max dt * (spectral spread of H) for fixed-step methods
    QubitBlock qubit_block = QubitBlock::renormalized;
    bool keep_final_state = true;

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
        if (!(t_end > 0.0) || !std::isfinite(t_end)) throw std::invalid_argument("t_end must be > 0");
        if (record_every < 1) throw std::invalid_argument("record_every must be >= 1");
        if (target_samples && *target_samples < 2) throw std::invalid_argument("target_samples must be >= 2");
        if (positivity_check_every < 1) throw std::invalid_argument("positivity_check_every must be >= 1");
        if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("tolerances must be > 0");
    }
};

/// Full dense right-hand side; the reference form of the generator.
inline Matrix lindblad_rhs(const Matrix& rho, const Matrix& h, const std::vector<Matrix>& jumps) {
    if (rho.rows() != h.rows() || rho.cols() != h.cols()) throw std::invalid_argument("lindblad_rhs: shape mismatch");
    const cplx I(0.0, 1.0);
    Matrix out = -I * (h * rho - rho * h);
    for (const auto& l : jumps) {
        if (l.rows() != rho.rows() || l.cols() != rho.cols()) {
            throw std::invalid_argument("lindblad_rhs: jump shape mismatch");
        }
        const Matrix ldl = l.adjoint() * l;
        out += l * rho * l.adjoint() - 0.5 * (ldl * rho + rho * ldl);
    }
    return out;
}

inline Operator lindblad_rhs(const DensityMatrix& rho, const Operator& h, const std::vector<Operator>& jumps) {
    std::vector<Matrix> js;
    js.reserve(jumps.size());
    for (const auto& j : jumps) js.push_back(j.matrix());
    return Operator(rho.layout(), lindblad_rhs(rho.matrix(), h.matrix(), js));
}

inline DensityMatrix initial_state(const SystemParams& p) {
    const Layout L = p.layout();
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(L.dim());
    psi(L.index(Level::ground0, Level::ground1, 0)) = 1.0;
    return DensityMatrix::pure(psi, L);
}

namespace detail {

struct JumpEntry {
    int row;
    int col;
    cplx val;
};
using SparseJump = std::vector<JumpEntry>;

/// Closure of the support of rho0 under the column action of every operator
/// in `ops`.
inline std::vector<int> invariant_support(const Matrix& rho0, const std::vector<const Matrix*>& ops) {
    const int n = static_cast<int>(rho0.rows());
    std::vector<char> in(n, 0);
    std::deque<int> queue;
    for (int i = 0; i < n; ++i) {
        if ((rho0.row(i).array() != cplx(0.0)).any() || (rho0.col(i).array() != cplx(0.0)).any()) {
            in[i] = 1;
            queue.push_back(i);
        }
    }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        for (const Matrix* m : ops) {
            for (int j = 0; j < n; ++j) {
                if (!in[j] && (*m)(j, i) != cplx(0.0)) {
                    in[j] = 1;
                    queue.push_back(j);
                }
            }
        }
    }
    std::vector<int> support;
    for (int i = 0; i < n; ++i)
        if (in[i]) support.push_back(i);
    return support;
}

inline Matrix restrict(const Matrix& m, const std::vector<int>& s) {
    const int d = static_cast<int>(s.size());
    Matrix out(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(i, j) = m(s[i], s[j]);
    return out;
}

inline Matrix expand(const Matrix& r, const std::vector<int>& s, int dim) {
    Matrix out = Matrix::Zero(dim, dim);
    const int d = static_cast<int>(s.size());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) out(s[i], s[j]) = r(i, j);
    return out;
}

inline SparseJump sparsify(const Matrix& m) {
    SparseJump out;
    for (int j = 0; j < m.cols(); ++j)
        for (int i = 0; i < m.rows(); ++i)
            if (m(i, j) != cplx(0.0)) out.push_back({i, j, m(i, j)});
    return out;
}

/// Generator restricted to an invariant subspace, stored as
/// f(rho) = X + X^+ with X = G rho + 1/2 sum L rho L^+, G = -i (H - i/2 sum L^+L).
/// The split keeps every stage exactly Hermitian.
struct ReducedGenerator {
    std::vector<int> support;
    Matrix hamiltonian;  ///< restricted H
    Matrix decay;        ///< restricted sum L^+L
    Matrix g;            ///< -i (H - i/2 decay)
    std::vector<SparseJump> jumps;

    int dim() const { return static_cast<int>(support.size()); }

    void set_hamiltonian(const Matrix& h_restricted) {
        hamiltonian = h_restricted;
        g = cplx(0.0, -1.0) * hamiltonian - 0.5 * decay;
    }

    void apply(const Matrix& rho, Matrix& x, Matrix& out) const {
        x.noalias() = g.lazyProduct(rho);
        for (const auto& jump : jumps) {
            for (const auto& a : jump) {
                for (const auto& b : jump) {
                    x(a.row, b.row) += 0.5 * a.val * std::conj(b.val) * rho(a.col, b.col);
                }
            }
        }
        out = x + x.adjoint();
    }

    /// Column-major Liouville-space matrix of the generator.
    Matrix superoperator() const {
        const int d = dim();
        const Matrix id = Matrix::Identity(d, d);
        Matrix s = kron(id, g) + kron(g.conjugate(), id);
        for (const auto& jump : jumps) {
            for (const auto& a : jump) {
                for (const auto& b : jump) {
                    // vec(L rho L^+) = (conj(L) (x) L) vec(rho)
                    s(b.row * d + a.row, b.col * d + a.col) += std::conj(b.val) * a.val;
                }
            }
        }
        return s;
    }
};

inline ReducedGenerator reduce(const Matrix& rho0, const Matrix& h_pattern, const std::vector<Matrix>& jumps) {
    const int n = static_cast<int>(rho0.rows());
    Matrix decay = Matrix::Zero(n, n);
    for (const auto& l : jumps) decay += l.adjoint() * l;
    std::vector<const Matrix*> ops{&h_pattern, &decay};
    for (const auto& l : jumps) ops.push_back(&l);

    ReducedGenerator r;
    r.support = invariant_support(rho0, ops);
    r.decay = restrict(decay, r.support);
    r.set_hamiltonian(restrict(h_pattern, r.support));
    for (const auto& l : jumps) {
        SparseJump sj = sparsify(restrict(l, r.support));
        if (!sj.empty()) r.jumps.push_back(std::move(sj));
    }
    return r;
}

inline double spectral_spread(const Matrix& h) {
    if (h.rows() == 0) return 0.0;
    const RealVector ev = hermitian_eigenvalues(h, 1e-8 * std::max(1.0, h.cwiseAbs().maxCoeff()));
    return ev(ev.size() - 1) - ev(0);
}

/// Basis bookkeeping for computing observables directly on the reduced state.
struct SampleMap {
    std::vector<int> a, b, n;
    std::vector<int> qubit;  ///< position in the 4x4 block, -1 outside the ground manifold

    SampleMap(const std::vector<int>& support, const Layout& layout) {
        const int dc = layout.cavity_dim();
        for (int s : support) {
            const int n_ = s % dc;
            const int ab = s / dc;
            const int a_ = ab / kEmitterDim;
            const int b_ = ab % kEmitterDim;
            a.push_back(a_);
            b.push_back(b_);
            n.push_back(n_);
            qubit.push_back(a_ < 2 && b_ < 2 ? a_ * 2 + b_ : -1);
        }
    }
};

class Recorder {
public:
    Recorder(const std::vector<int>& support, const Layout& layout, QubitBlock mode)
        : map_(support, layout), mode_(mode) {}

    void sample(double t, const Matrix& rho, Trajectory& traj) const {
        const int d = static_cast<int>(rho.rows());
        double p[4] = {0, 0, 0, 0};
        double ea = 0.0, eb = 0.0, photons = 0.0, trace = 0.0;
        Matrix4 block = Matrix4::Zero();
        for (int i = 0; i < d; ++i) {
            const double pop = rho(i, i).real();
            trace += pop;
            photons += map_.n[i] * pop;
            if (map_.a[i] == 2) ea += pop;
            if (map_.b[i] == 2) eb += pop;
            if (map_.qubit[i] >= 0) p[map_.qubit[i]] += pop;
            if (map_.qubit[i] < 0) continue;
            for (int j = 0; j < d; ++j) {
                if (map_.qubit[j] >= 0 && map_.n[i] == map_.n[j]) block(map_.qubit[i], map_.qubit[j]) += rho(i, j);
            }
        }
        if (!std::isfinite(trace)) throw IntegrationError("non-finite density matrix at t = " + std::to_string(t));
        const double w = block.trace().real();
        double c = 0.0;
        if (w >= kMinQubitWeight) {
            c = concurrence(Matrix4(block / w));
            if (mode_ == QubitBlock::raw) c *= w;
        }
        traj.times.push_back(t);
        traj.rho00.push_back(p[0]);
        traj.rho01.push_back(p[1]);
        traj.rho10.push_back(p[2]);
        traj.rho11.push_back(p[3]);
        traj.excited_A.push_back(ea);
        traj.excited_B.push_back(eb);
        traj.photons.push_back(photons);
        traj.inversion.push_back(p[1] - p[2]);
        traj.concurrence.push_back(c);
        traj.weight.push_back(w);
        traj.purity.push_back(rho.squaredNorm());
        traj.max_trace_error = std::max(traj.max_trace_error, std::abs(trace - 1.0));
    }

private:
    SampleMap map_;
    QubitBlock mode_;
};

inline void symmetrize(Matrix& rho, Trajectory& traj) {
    traj.max_hermiticity = std::max(traj.max_hermiticity, hermiticity_defect(rho));
    rho = (0.5 * (rho + rho.adjoint())).eval();
}

inline void check_positivity(const Matrix& rho, double t, Trajectory& traj) {
    if (!rho.allFinite()) throw IntegrationError("non-finite density matrix at t = " + std::to_string(t));
    const double lo = hermitian_eigenvalues(rho, 1e-6)(0);
    traj.min_eigenvalue = std::min(traj.min_eigenvalue, lo);
    if (!(lo >= -1e-6)) {
        throw PositivityError("positivity lost at t = " + std::to_string(t) + " ns (smallest eigenvalue " +
                               std::to_string(lo) + "); reduce dt or raise n_max");
    }
}

struct StepPlan {
    double dt;
    long long steps;
    long long record_every;
};

inline StepPlan plan_steps(const IntegratorConfig& cfg, double spread) {
    double dt = cfg.dt;
    const double guard = spread > 0.0 ? cfg.stability_limit / spread : std::numeric_limits<double>::infinity();
    if (cfg.method != Method::rk45_adaptive && dt > guard) {
        if (!cfg.auto_dt) {
            throw std::invalid_argument("dt = " + std::to_string(cfg.dt) + " ns violates the stability guard dt * " +
                                        std::to_string(spread) + " <= " + std::to_string(cfg.stability_limit));
        }
        dt = guard;
    }
    const long long steps = std::max<long long>(1, static_cast<long long>(std::ceil(cfg.t_end / dt - 1e-9)));
    long long every = cfg.record_every;
    if (cfg.target_samples) every = std::max<long long>(1, steps / (*cfg.target_samples - 1));
    return {cfg.t_end / static_cast<double>(steps), steps, every};
}

/// Classic RK4 on the reduced state. `update` refreshes the generator for a
/// stage time when the Hamiltonian depends on time.
class Rk4Stepper {
public:
    explicit Rk4Stepper(int d)
        : k1_(d, d), k2_(d, d), k3_(d, d), k4_(d, d), tmp_(d, d), x_(d, d) {}

    template <class Update>
    void step(ReducedGenerator& gen, Matrix& rho, double t, double h, Update&& update) {
        update(gen, t);
        gen.apply(rho, x_, k1_);
        tmp_ = rho + (0.5 * h) * k1_;
        update(gen, t + 0.5 * h);
        gen.apply(tmp_, x_, k2_);
        tmp_ = rho + (0.5 * h) * k2_;
        gen.apply(tmp_, x_, k3_);
        tmp_ = rho + h * k3_;
        update(gen, t + h);
        gen.apply(tmp_, x_, k4_);
        rho += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
    }

private:
    Matrix k1_, k2_, k3_, k4_, tmp_, x_;
};

struct NoUpdate {
    void operator()(ReducedGenerator&, double) const {}
};

template <class Update>
inline Matrix run_rk4(ReducedGenerator& gen, Matrix rho, const StepPlan& plan, const IntegratorConfig& cfg,
                      const Recorder* rec, Trajectory& traj, Update&& update) {
    Rk4Stepper stepper(gen.dim());
    if (rec) rec->sample(0.0, rho, traj);
    for (long long k = 1; k <= plan.steps; ++k) {
        const double t0 = static_cast<double>(k - 1) * plan.dt;
        stepper.step(gen, rho, t0, plan.dt, update);
        symmetrize(rho, traj);
        const double t = static_cast<double>(k) * plan.dt;
        if (k % cfg.positivity_check_every == 0) check_positivity(rho, t, traj);
        if (rec && (k % plan.record_every == 0 || k == plan.steps)) rec->sample(t, rho, traj);
        else if (!std::isfinite(rho(0, 0).real())) throw IntegrationError("non-finite state at t = " + std::to_string(t));
    }
    traj.steps = plan.steps;
    traj.dt = plan.dt;
    check_positivity(rho, plan.steps * plan.dt, traj);
    return rho;
}

inline Matrix matrix_power(Matrix base, long long e) {
    Matrix result = Matrix::Identity(base.rows(), base.cols());
    while (e > 0) {
        if (e & 1) result = (result * base).eval();
        e >>= 1;
        if (e > 0) base = (base * base).eval();
    }
    return result;
}

/// Exactly the RK4 update for an autonomous linear generator, assembled once
/// as a Liouville-space matrix and raised to the sampling stride.
inline Matrix run_propagator(const ReducedGenerator& gen, Matrix rho, const StepPlan& plan, const IntegratorConfig& cfg,
                             const Recorder* rec, Trajectory& traj) {
    const int d = gen.dim();
    const int n = d * d;
    const Matrix hs = plan.dt * gen.superoperator();
    const Matrix id = Matrix::Identity(n, n);
    Matrix one = id + hs / 4.0;
    one = (id + (hs * one) / 3.0).eval();
    one = (id + (hs * one) / 2.0).eval();
    one = (id + hs * one).eval();

    const Matrix stride = matrix_power(one, plan.record_every);
    const long long full = plan.steps / plan.record_every;
    const long long rest = plan.steps % plan.record_every;

    if (rec) rec->sample(0.0, rho, traj);
    Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(rho.data(), n);
    const long long check_stride = std::max<long long>(1, cfg.positivity_check_every / plan.record_every);
    for (long long k = 1; k <= full; ++k) {
        v = (stride * v).eval();
        rho = Eigen::Map<const Matrix>(v.data(), d, d);
        symmetrize(rho, traj);
        v = Eigen::Map<const Eigen::VectorXcd>(rho.data(), n);
        const double t = static_cast<double>(k * plan.record_every) * plan.dt;
        if (k % check_stride == 0) check_positivity(rho, t, traj);
        if (rec) rec->sample(t, rho, traj);
    }
    if (rest > 0) {
        v = (matrix_power(one, rest) * v).eval();
        rho = Eigen::Map<const Matrix>(v.data(), d, d);
        symmetrize(rho, traj);
        if (rec) rec->sample(static_cast<double>(plan.steps) * plan.dt, rho, traj);
    }
    traj.steps = plan.steps;
    traj.dt = plan.dt;
    check_positivity(rho, plan.steps * plan.dt, traj);
    return rho;
}

/// Dormand-Prince 5(4) with error control; lands exactly on every sample time.
inline Matrix run_rk45(const ReducedGenerator& gen, Matrix rho, const StepPlan& plan, const IntegratorConfig& cfg,
                       const Recorder* rec, Trajectory& traj) {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    static constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                            e5 = b5 + 92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
    (void)c2, (void)c3, (void)c4, (void)c5;

    const int d = gen.dim();
    Matrix k1(d, d), k2(d, d), k3(d, d), k4(d, d), k5(d, d), k6(d, d), k7(d, d), x(d, d), y(d, d), err(d, d);
    const double sample_dt = plan.dt * static_cast<double>(plan.record_every);
    const long long samples = plan.steps / plan.record_every;
    const bool ragged = plan.steps % plan.record_every != 0;

    if (rec) rec->sample(0.0, rho, traj);
    gen.apply(rho, x, k1);
    double h = plan.dt;
    double t = 0.0;
    long long accepted = 0;
    long long since_check = 0;
    const long long total_targets = samples + (ragged ? 1 : 0);
    for (long long target = 1; target <= total_targets; ++target) {
        const double t_target = target <= samples ? static_cast<double>(target) * sample_dt : cfg.t_end;
        while (t < t_target) {
            const bool last = t + h >= t_target * (1.0 - 1e-14);
            const double hs = last ? t_target - t : h;
            y = rho + hs * a21 * k1;
            gen.apply(y, x, k2);
            y = rho + hs * (a31 * k1 + a32 * k2);
            gen.apply(y, x, k3);
            y = rho + hs * (a41 * k1 + a42 * k2 + a43 * k3);
            gen.apply(y, x, k4);
            y = rho + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            gen.apply(y, x, k5);
            y = rho + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            gen.apply(y, x, k6);
            y = rho + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            gen.apply(y, x, k7);
            err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double norm = 0.0;
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    const double scale = cfg.atol + cfg.rtol * std::max(std::abs(rho(i, j)), std::abs(y(i, j)));
                    norm += std::norm(err(i, j)) / (scale * scale);
                }
            }
            norm = std::sqrt(norm / (d * d));
            if (!std::isfinite(norm)) throw IntegrationError("non-finite state in adaptive step at t = " + std::to_string(t));
            if (norm <= 1.0) {
                t = last ? t_target : t + hs;
                rho = y;
                symmetrize(rho, traj);
                gen.apply(rho, x, k1);
                ++accepted;
                if (++since_check >= cfg.positivity_check_every) {
                    check_positivity(rho, t, traj);
                    since_check = 0;
                }
            }
            const double factor = norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(norm, -0.2), 0.2, 5.0);
            if (!last || norm > 1.0) h = hs * factor;
            if (h < 1e-14) throw IntegrationError("adaptive step size underflow at t = " + std::to_string(t));
        }
        if (rec) rec->sample(t, rho, traj);
    }
    traj.steps = accepted;
    traj.dt = plan.dt;
    check_positivity(rho, t, traj);
    return rho;
}

/// With auto_dt the step is the guard value; when that step still breaks
/// positivity (undamped dynamics accumulate RK4 phase error), it is halved and
/// the run repeated. An explicit dt is never changed.
inline constexpr int kMaxStepRefinements = 4;

template <class Run>
auto with_step_refinement(IntegratorConfig cfg, double spread, Run&& run) {
    for (int attempt = 0;; ++attempt) {
        try {
            return run(cfg, plan_steps(cfg, spread));
        } catch (const PositivityError&) {
            if (!cfg.auto_dt || cfg.method == Method::rk45_adaptive || attempt == kMaxStepRefinements) throw;
            cfg.dt = plan_steps(cfg, spread).dt / 2.0;
            cfg.record_every *= 2;
        }
    }
}

}  // namespace detail

/// Integrates from rho0 with a fixed Hamiltonian and jump operators on an
/// arbitrary space; returns the final state. Observables are not recorded.
inline Matrix evolve(const Matrix& rho0, const Matrix& h, const std::vector<Matrix>& jumps, const IntegratorConfig& cfg) {
    cfg.validate();
    auto gen = detail::reduce(rho0, h, jumps);
    const Matrix r0 = detail::restrict(rho0, gen.support);
    const Matrix r = detail::with_step_refinement(
        cfg, detail::spectral_spread(gen.hamiltonian), [&](const IntegratorConfig& c, const detail::StepPlan& plan) {
            Trajectory scratch;
            switch (c.method) {
                case Method::rk4_fixed: return detail::run_rk4(gen, r0, plan, c, nullptr, scratch, detail::NoUpdate{});
                case Method::rk4_propagator: return detail::run_propagator(gen, r0, plan, c, nullptr, scratch);
                case Method::rk45_adaptive: break;
            }
            return detail::run_rk45(gen, r0, plan, c, nullptr, scratch);
        });
    return detail::expand(r, gen.support, static_cast<int>(rho0.rows()));
}

namespace detail {
inline void finish(Trajectory& traj, const Matrix& r, const ReducedGenerator& gen, const Layout& layout,
                   const IntegratorConfig& cfg) {
    traj.reduced_dim = gen.dim();
    if (cfg.keep_final_state) {
        traj.final_state = DensityMatrix::unchecked(Operator(layout, expand(r, gen.support, layout.dim())));
    }
}
inline std::vector<Matrix> matrices(const std::vector<Operator>& ops) {
    std::vector<Matrix> out;
    out.reserve(ops.size());
    for (const auto& o : ops) out.push_back(o.matrix());
    return out;
}
}  // namespace detail

/// Integrates a generic (H, jumps) on the composite layout, recording the
/// standard observables.
inline Trajectory integrate(const DensityMatrix& rho0, const Operator& h, const std::vector<Operator>& jumps,
                            const IntegratorConfig& cfg) {
    cfg.validate();
    if (!rho0.valid()) throw std::invalid_argument("initial state is not a valid density matrix");
    const Layout layout = rho0.layout();
    if (!(h.layout() == layout)) throw std::invalid_argument("Hamiltonian layout differs from the state layout");
    auto gen = detail::reduce(rho0.matrix(), h.matrix(), detail::matrices(jumps));
    const detail::Recorder rec(gen.support, layout, cfg.qubit_block);
    const Matrix r0 = detail::restrict(rho0.matrix(), gen.support);
    return detail::with_step_refinement(
        cfg, detail::spectral_spread(gen.hamiltonian), [&](const IntegratorConfig& c, const detail::StepPlan& plan) {
            Trajectory traj;
            Matrix r;
            switch (c.method) {
                case Method::rk4_fixed: r = detail::run_rk4(gen, r0, plan, c, &rec, traj, detail::NoUpdate{}); break;
                case Method::rk4_propagator: r = detail::run_propagator(gen, r0, plan, c, &rec, traj); break;
                case Method::rk45_adaptive: r = detail::run_rk45(gen, r0, plan, c, &rec, traj); break;
            }
            detail::finish(traj, r, gen, layout, c);
            return traj;
        });
}

inline Trajectory integrate(const DensityMatrix& rho0, const SystemParams& p, const IntegratorConfig& cfg) {
    p.validate();
    if (!(rho0.layout() == p.layout())) throw std::invalid_argument("initial state truncation differs from n_max");
    return integrate(rho0, build_rotating_hamiltonian(p), build_collapse_operators(p), cfg);
}

/// Fixed-step RK4 with a time-dependent Hamiltonian (lab-frame propagation).
inline Trajectory integrate_driven(const DensityMatrix& rho0, const DrivenHamiltonian& h,
                                   const std::vector<Operator>& jumps, IntegratorConfig cfg) {
    cfg.validate();
    if (!rho0.valid()) throw std::invalid_argument("initial state is not a valid density matrix");
    cfg.method = Method::rk4_fixed;
    const Layout layout = rho0.layout();
    Matrix pattern = h.constant.matrix();
    for (const auto& d : h.drives) pattern += d.op.matrix() + d.op.matrix().adjoint();
    auto gen = detail::reduce(rho0.matrix(), pattern, detail::matrices(jumps));
    const Matrix constant = detail::restrict(h.constant.matrix(), gen.support);
    std::vector<std::pair<double, Matrix>> drives;
    for (const auto& d : h.drives) drives.emplace_back(d.omega, detail::restrict(d.op.matrix(), gen.support));
    double spread = detail::spectral_spread(constant);
    for (const auto& [w, m] : drives) spread += 2.0 * m.cwiseAbs().maxCoeff() * m.rows();

    const auto plan = detail::plan_steps(cfg, spread);
    const detail::Recorder rec(gen.support, layout, cfg.qubit_block);
    Trajectory traj;
    auto update = [&](detail::ReducedGenerator& g, double t) {
        Matrix hh = constant;
        for (const auto& [w, m] : drives) {
            const Matrix term = std::polar(1.0, w * t) * m;
            hh += term + term.adjoint();
        }
        g.set_hamiltonian(hh);
    };
    Matrix r = detail::restrict(rho0.matrix(), gen.support);
    r = detail::run_rk4(gen, r, plan, cfg, &rec, traj, update);
    detail::finish(traj, r, gen, layout, cfg);
    return traj;
}

struct ConvergenceReport {
    double truncation_deviation = 0.0;  ///< max |c(t)| difference, n_max -> n_max + 1
    double step_deviation = 0.0;        ///< max |c(t)| difference, dt -> dt/2
    double cmax_truncation_delta = 0.0;
    double cmax_step_delta = 0.0;
    double dt = 0.0;
    double tolerance = 1e-3;
    bool passed = false;
};

/// Reruns with one more photon state and with half the step and compares the
/// concurrence curves sample by sample.
inline ConvergenceReport convergence_check(const SystemParams& p, const IntegratorConfig& cfg) {
    auto curve_gap = [](const Trajectory& a, const Trajectory& b) {
        if (a.size() != b.size()) throw IntegrationError("convergence runs produced different sample grids");
        double m = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.concurrence[k] - b.concurrence[k]));
        return m;
    };
    IntegratorConfig base_cfg = cfg;
    base_cfg.keep_final_state = false;
    const Trajectory base = integrate(initial_state(p), p, base_cfg);

    SystemParams wider = p;
    wider.n_max = p.n_max + 1;
    const Trajectory trunc = integrate(initial_state(wider), wider, base_cfg);

    IntegratorConfig half = base_cfg;
    half.auto_dt = false;
    half.dt = base.dt / 2.0;
    half.t_end = base.dt * static_cast<double>(base.steps);
    half.target_samples.reset();
    const long long every = base.steps / std::max<long long>(1, static_cast<long long>(base.size()) - 1);
    half.record_every = static_cast<int>(2 * (cfg.target_samples ? every : cfg.record_every));
    const Trajectory fine = integrate(initial_state(p), p, half);

    ConvergenceReport r;
    r.dt = base.dt;
    r.truncation_deviation = curve_gap(base, trunc);
    r.step_deviation = curve_gap(base, fine);
    r.cmax_truncation_delta = std::abs(find_peak(base).value - find_peak(trunc).value);
    r.cmax_step_delta = std::abs(find_peak(base).value - find_peak(fine).value);
    r.passed = r.truncation_deviation < r.tolerance && r.step_deviation < r.tolerance;
    return r;
}

}  // namespace cavent
