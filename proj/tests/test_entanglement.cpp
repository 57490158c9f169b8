#include "cavent/dynamics.hpp"
#include "cavent/entanglement.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <random>

using namespace cavent;

namespace {

Eigen::Vector4cd ket(cplx a, cplx b, cplx c, cplx d) {
    Eigen::Vector4cd v(a, b, c, d);
    return v / v.norm();
}

Matrix4 proj(const Eigen::Vector4cd& v) { return v * v.adjoint(); }

/// Brute force: lambdas from the (non-Hermitian) product rho * rho~ with a
/// general complex eigensolver.
double concurrence_brute(const Matrix4& rho) {
    Eigen::Matrix2cd y;
    y << 0.0, cplx(0, -1), cplx(0, 1), 0.0;
    const Matrix4 yy = kron(y, y);
    const Matrix4 prod = rho * yy * rho.conjugate() * yy;
    Eigen::ComplexEigenSolver<Matrix4> es(prod);
    std::vector<double> lam;
    for (int i = 0; i < 4; ++i) lam.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i).real())));
    std::sort(lam.rbegin(), lam.rend());
    return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

Eigen::Matrix2cd random_unitary2(std::mt19937& rng) {
    std::normal_distribution<double> d;
    Eigen::Matrix2cd a;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) a(i, j) = cplx(d(rng), d(rng));
    Eigen::HouseholderQR<Eigen::Matrix2cd> qr(a);
    return qr.householderQ();
}

Eigen::Matrix2cd random_density2(std::mt19937& rng) {
    std::normal_distribution<double> d;
    Eigen::Matrix2cd a;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) a(i, j) = cplx(d(rng), d(rng));
    Eigen::Matrix2cd r = a * a.adjoint();
    return r / r.trace();
}

Matrix4 random_density4(std::mt19937& rng, int rank) {
    std::normal_distribution<double> d;
    Eigen::Matrix<cplx, 4, Eigen::Dynamic> a(4, rank);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < rank; ++j) a(i, j) = cplx(d(rng), d(rng));
    Matrix4 r = a * a.adjoint();
    return r / r.trace();
}

Matrix full_state(const Layout& L, const std::vector<std::pair<std::array<int, 3>, cplx>>& amps) {
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(L.dim());
    for (const auto& [idx, a] : amps) psi(L.index(idx[0], idx[1], idx[2])) = a;
    psi /= psi.norm();
    return psi * psi.adjoint();
}

}  // namespace

TEST(Entanglement, ReduceInitialState) {
    const SystemParams p = default_params(9800, 3.0);
    const QubitState q = reduce_to_qubits(initial_state(p));
    EXPECT_NEAR(q.weight, 1.0, 1e-15);
    EXPECT_LT((q.rho4 - proj(ket(0, 1, 0, 0))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Entanglement, ExcitedStateHasNoQubitWeight) {
    const Layout L(2);
    const Matrix r = full_state(L, {{{2, 1, 0}, 1.0}});
    EXPECT_THROW(reduce_to_qubits(Operator(L, r)), QubitManifoldError);
}

TEST(Entanglement, MixtureWeightByHand) {
    const Layout L(2);
    const Matrix r = 0.9 * full_state(L, {{{0, 1, 0}, 1.0}}) + 0.1 * full_state(L, {{{2, 1, 0}, 1.0}});
    const QubitState q = reduce_to_qubits(Operator(L, r));
    EXPECT_NEAR(q.weight, 0.9, 1e-15);
    EXPECT_LT((q.rho4 - proj(ket(0, 1, 0, 0))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Entanglement, PhotonSectorsAreTracedOut) {
    const Layout L(2);
    // (|01,0> + |10,1>)/sqrt2: the cavity photon marks which path, so no coherence survives
    const Matrix r = full_state(L, {{{0, 1, 0}, 1.0}, {{1, 0, 1}, 1.0}});
    const QubitState q = reduce_to_qubits(Operator(L, r));
    EXPECT_NEAR(q.rho4(1, 2).real(), 0.0, 1e-15);
    EXPECT_NEAR(concurrence(q), 0.0, 1e-12);
}

TEST(Entanglement, ConcurrenceReferenceStates) {
    EXPECT_NEAR(concurrence(proj(ket(0, 1, 0, 0))), 0.0, 1e-8);
    EXPECT_NEAR(concurrence(proj(bell_target())), 1.0, 1e-8);
    EXPECT_NEAR(concurrence(proj(ket(1, 0, 0, 1))), 1.0, 1e-8);
}

TEST(Entanglement, WernerStatesMatchClosedFormAndBruteForce) {
    const Matrix4 phi = proj(ket(1, 0, 0, 1));
    for (double p : {0.0, 0.2, 1.0 / 3.0, 0.5, 0.8, 1.0}) {
        const Matrix4 w = p * phi + (1 - p) * Matrix4::Identity() / 4.0;
        const double c = concurrence(w);
        EXPECT_NEAR(c, std::max(0.0, (3 * p - 1) / 2), 1e-8) << p;
        EXPECT_NEAR(c, concurrence_brute(w), 1e-8) << p;
    }
}

TEST(Entanglement, RandomStatesMatchBruteForce) {
    std::mt19937 rng(31);
    for (int k = 0; k < 20; ++k) {
        const Matrix4 r = random_density4(rng, 1 + k % 3);
        EXPECT_NEAR(concurrence(r), concurrence_brute(r), 1e-7);
    }
}

TEST(Entanglement, LocalUnitaryInvariance) {
    std::mt19937 rng(37);
    for (int k = 0; k < 10; ++k) {
        const Matrix4 r = random_density4(rng, 2);
        const Matrix4 u = kron(random_unitary2(rng), random_unitary2(rng));
        EXPECT_NEAR(concurrence(r), concurrence(Matrix4(u * r * u.adjoint())), 1e-8);
    }
}

TEST(Entanglement, ProductStatesAreSeparable) {
    std::mt19937 rng(41);
    for (int k = 0; k < 20; ++k) {
        const Matrix4 r = kron(random_density2(rng), random_density2(rng));
        const double c = concurrence(r);
        EXPECT_GE(c, 0.0);
        EXPECT_LT(c, 1e-8);
    }
}

TEST(Entanglement, PureStatesFollowAmplitudeFormula) {
    std::mt19937 rng(43);
    std::normal_distribution<double> d;
    for (int k = 0; k < 20; ++k) {
        const Eigen::Vector4cd v = ket({d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)}, {d(rng), d(rng)});
        EXPECT_NEAR(concurrence(proj(v)), 2.0 * std::abs(v(0) * v(3) - v(1) * v(2)), 1e-8);
    }
}

TEST(Entanglement, BoundedForValidInputs) {
    std::mt19937 rng(47);
    for (int k = 0; k < 30; ++k) {
        const double c = concurrence(random_density4(rng, 1 + k % 4));
        EXPECT_GE(c, 0.0);
        EXPECT_LE(c, 1.0 + 1e-12);
    }
}

TEST(Entanglement, SpinFlipPhaseConventionIrrelevant) {
    // A phase on Y multiplies Y(x)Y by a global phase that cancels between
    // the two sides of rho~.
    std::mt19937 rng(53);
    const Matrix4 r = random_density4(rng, 2);
    Eigen::Matrix2cd y;
    y << 0.0, cplx(0, -1), cplx(0, 1), 0.0;
    const cplx phase = std::polar(1.0, 0.7);
    const Matrix4 yy = kron(Eigen::Matrix2cd(phase * y), Eigen::Matrix2cd(phase * y));
    const Matrix4 tilde = yy * r.conjugate() * yy.adjoint();
    Eigen::ComplexEigenSolver<Matrix4> es(Matrix4(r * tilde));
    std::vector<double> lam;
    for (int i = 0; i < 4; ++i) lam.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i).real())));
    std::sort(lam.rbegin(), lam.rend());
    EXPECT_NEAR(concurrence(r), std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]), 1e-8);
}

TEST(Entanglement, RawModeScalesByWeight) {
    QubitState q;
    q.rho4 = proj(bell_target());
    q.weight = 0.8;
    EXPECT_NEAR(concurrence(q, QubitBlock::renormalized), 1.0, 1e-8);
    EXPECT_NEAR(concurrence(q, QubitBlock::raw), 0.8, 1e-8);
}

TEST(Entanglement, BellFidelity) {
    QubitState q;
    q.weight = 1.0;
    q.rho4 = proj(bell_target());
    EXPECT_NEAR(bell_fidelity(q), 1.0, 1e-12);
    q.rho4 = proj(ket(0, 1, 0, 0));
    EXPECT_NEAR(bell_fidelity(q), 0.5, 1e-12);
    q.rho4 = proj(ket(0, 1, cplx(0, -1), 0));
    EXPECT_NEAR(bell_fidelity(q), 0.0, 1e-12);
}

TEST(Entanglement, InversionStartsAtOne) {
    const SystemParams p = default_params(98000, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 1.0;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    const auto inv = inversion(tr);
    EXPECT_DOUBLE_EQ(inv.front(), 1.0);
    for (std::size_t k = 0; k < inv.size(); ++k) EXPECT_DOUBLE_EQ(inv[k], tr.inversion[k]);
}

TEST(Entanglement, FindPeak) {
    std::vector<double> t, y;
    for (int k = 0; k <= 10; ++k) {
        t.push_back(k);
        y.push_back(0.1 * k);
    }
    Peak p = find_peak(t, y);
    EXPECT_EQ(p.index, 10u);
    EXPECT_DOUBLE_EQ(p.time, 10.0);

    // exact parabola, vertex between samples
    y.clear();
    for (double x : t) y.push_back(0.9 - 0.02 * (x - 4.3) * (x - 4.3));
    p = find_peak(t, y);
    EXPECT_NEAR(p.time, 4.3, 1e-12);
    EXPECT_NEAR(p.value, 0.9, 1e-12);

    // shift invariance
    std::vector<double> ts = t;
    for (auto& x : ts) x += 123.25;
    const Peak ps = find_peak(ts, y);
    EXPECT_NEAR(ps.time - 123.25, p.time, 1e-9);
    EXPECT_NEAR(ps.value, p.value, 1e-12);

    // ties resolve to the earliest sample
    const std::vector<double> flat{0.0, 0.5, 0.2, 0.5, 0.1};
    EXPECT_EQ(find_peak({0, 1, 2, 3, 4}, flat).index, 1u);

    EXPECT_THROW(find_peak({}, {}), std::invalid_argument);
    EXPECT_THROW(find_peak({0, 1}, {1}), std::invalid_argument);
}

TEST(Entanglement, ExchangeRateFromSyntheticInversion) {
    const double g = 0.0731;
    std::vector<double> t, inv;
    for (int k = 0; k < 4000; ++k) {
        t.push_back(0.01 * k);
        inv.push_back(std::exp(-0.01 * t.back()) * std::cos(2 * g * t.back()));
    }
    EXPECT_NEAR(exchange_rate_from_inversion(t, inv), g, 1e-5);
    EXPECT_EQ(exchange_rate_from_inversion({0, 1, 2}, {1, 0.9, 0.8}), 0.0);
}
