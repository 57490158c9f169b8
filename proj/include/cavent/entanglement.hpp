#pragma once

// Two-qubit reduction of the emitter ground manifold, Wootters concurrence,
// Bell-state overlap and peak extraction.

#include "cavent/hilbert.hpp"
#include "cavent/trajectory.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavent {

using Matrix4 = Eigen::Matrix4cd;

class QubitManifoldError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// How the ground-state block enters the concurrence.
enum class QubitBlock { renormalized, raw };

/// State of the two ground-state spins on {|00>, |01>, |10>, |11>}.
struct QubitState {
    Matrix4 rho4 = Matrix4::Zero();  ///< unit trace
    double weight = 0.0;             ///< probability in the qubit manifold before renormalization
};

/// Positions of |a b> (a, b in {0, 1}) inside the 9-dimensional emitter pair space.
inline constexpr std::array<int, 4> kQubitIndices{0, 1, 3, 4};

inline constexpr double kMinQubitWeight = 1e-6;

inline QubitState qubit_block(const Matrix& pair9) {
    Matrix4 block;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) block(i, j) = pair9(kQubitIndices[i], kQubitIndices[j]);
    QubitState q;
    q.weight = block.trace().real();
    if (!(q.weight >= kMinQubitWeight)) {
        throw QubitManifoldError("state has left the qubit manifold (weight " + std::to_string(q.weight) + ")");
    }
    q.rho4 = block / q.weight;
    return q;
}

inline QubitState reduce_to_qubits(const Operator& rho) { return qubit_block(partial_trace_cavity(rho)); }
inline QubitState reduce_to_qubits(const DensityMatrix& rho) { return reduce_to_qubits(rho.op()); }

inline Matrix4 spin_flip() {
    Eigen::Matrix2cd y;
    y << 0.0, cplx(0.0, -1.0), cplx(0.0, 1.0), 0.0;
    return kron(y, y);
}

/// Wootters concurrence of a (not necessarily normalized) 4x4 block. The
/// lambdas are the singular values of sqrt(r) Y(x)Y sqrt(r)*, whose squares
/// are the spectrum of r r~. Eigenvalues of r at round-off level are treated
/// as exact zeros; their square roots would otherwise leak ~1e-8 into the
/// lambdas of rank-deficient (e.g. pure) states.
inline double concurrence(const Matrix4& r) {
    const Matrix4 herm = 0.5 * (r + r.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix4> es(herm);
    const double floor = 64.0 * std::numeric_limits<double>::epsilon() * es.eigenvalues().cwiseAbs().maxCoeff();
    Eigen::Vector4d ev = es.eigenvalues();
    for (int i = 0; i < 4; ++i) ev(i) = ev(i) > floor ? std::sqrt(ev(i)) : 0.0;
    const Matrix4 sqrt_r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    const Matrix4 a = sqrt_r * spin_flip() * sqrt_r.conjugate();
    Eigen::JacobiSVD<Matrix4> svd(a);
    const Eigen::Vector4d lam = svd.singularValues();  // descending
    return std::max(0.0, lam(0) - lam(1) - lam(2) - lam(3));
}

inline double concurrence(const QubitState& q, QubitBlock mode = QubitBlock::renormalized) {
    const double c = concurrence(q.rho4);
    return mode == QubitBlock::raw ? q.weight * c : c;
}

/// Target of the entangling operation, (|01> + i|10>)/sqrt2.
inline Eigen::Vector4cd bell_target() {
    Eigen::Vector4cd psi(0.0, 1.0, cplx(0.0, 1.0), 0.0);
    return psi / std::sqrt(2.0);
}

inline double bell_fidelity(const QubitState& q) {
    const Eigen::Vector4cd psi = bell_target();
    return std::clamp((psi.adjoint() * q.rho4 * psi)(0, 0).real(), 0.0, 1.0);
}

inline std::vector<double> inversion(const Trajectory& traj) {
    std::vector<double> out(traj.size());
    for (std::size_t k = 0; k < traj.size(); ++k) out[k] = traj.rho01[k] - traj.rho10[k];
    return out;
}

struct Peak {
    double time = 0.0;
    double value = 0.0;
    std::size_t index = 0;
};

/// Global maximum (earliest on ties), refined by the parabola through the
/// three samples around an interior maximum.
inline Peak find_peak(const std::vector<double>& times, const std::vector<double>& values) {
    if (values.empty() || values.size() != times.size()) {
        throw std::invalid_argument("find_peak needs equally sized, nonempty series");
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k] > values[best]) best = k;
    Peak p{times[best], values[best], best};
    if (best == 0 || best + 1 == values.size()) return p;

    const double h0 = times[best - 1] - times[best];
    const double h2 = times[best + 1] - times[best];
    const double y0 = values[best - 1] - values[best];
    const double y2 = values[best + 1] - values[best];
    // y(h) = a h^2 + b h through (h0, y0), (0, 0), (h2, y2)
    const double det = h0 * h2 * (h0 - h2);
    if (det == 0.0) return p;
    const double a = (y0 * h2 - y2 * h0) / det;
    const double b = (y2 * h0 * h0 - y0 * h2 * h2) / det;
    if (!(a < 0.0)) return p;
    const double hv = std::clamp(-b / (2.0 * a), h0, h2);
    p.time = times[best] + hv;
    p.value = values[best] + a * hv * hv + b * hv;
    return p;
}

inline Peak find_peak(const Trajectory& traj) { return find_peak(traj.times, traj.concurrence); }

/// Exchange rate g~ estimated from the first downward zero crossing of the
/// inversion rho01 - rho10, which for a (damped) cos(2 g~ t) lies at pi/(4 g~).
/// Returns 0 when the inversion never crosses zero.
inline double exchange_rate_from_inversion(const std::vector<double>& times, const std::vector<double>& inv) {
    for (std::size_t k = 1; k < inv.size(); ++k) {
        if (inv[k - 1] > 0.0 && inv[k] <= 0.0) {
            const double frac = inv[k - 1] / (inv[k - 1] - inv[k]);
            const double t0 = times[k - 1] + frac * (times[k] - times[k - 1]);
            return kPi / (4.0 * t0);
        }
    }
    return 0.0;
}

}  // namespace cavent
