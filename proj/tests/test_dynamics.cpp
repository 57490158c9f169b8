#include "cavent/dynamics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cavent;

namespace {

Matrix random_density(int n, std::mt19937& rng) {
    std::normal_distribution<double> d;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = cplx(d(rng), d(rng));
    Matrix r = a * a.adjoint();
    return r / r.trace();
}

/// Plain dense RK4 on the full space, written out independently of the
/// library's reduced integrator.
Matrix dense_rk4(Matrix rho, const Matrix& h, const std::vector<Matrix>& jumps, double dt, int steps) {
    for (int k = 0; k < steps; ++k) {
        const Matrix k1 = lindblad_rhs(rho, h, jumps);
        const Matrix k2 = lindblad_rhs(rho + 0.5 * dt * k1, h, jumps);
        const Matrix k3 = lindblad_rhs(rho + 0.5 * dt * k2, h, jumps);
        const Matrix k4 = lindblad_rhs(rho + dt * k3, h, jumps);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return rho;
}

std::vector<Matrix> matrices(const std::vector<Operator>& ops) {
    std::vector<Matrix> m;
    for (const auto& o : ops) m.push_back(o.matrix());
    return m;
}

}  // namespace

TEST(Dynamics, RhsVanishesForStationaryClassicalState) {
    Matrix h = Matrix::Zero(4, 4), rho = Matrix::Zero(4, 4);
    h.diagonal() << 1.0, -2.0, 0.5, 3.0;
    rho.diagonal() << 0.1, 0.2, 0.3, 0.4;
    EXPECT_EQ(lindblad_rhs(rho, h, {}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Dynamics, RhsIsTraceless) {
    std::mt19937 rng(2);
    const SystemParams p = default_params(9800, 3.0);
    const Matrix h = build_rotating_hamiltonian(p).matrix();
    const auto jumps = matrices(build_collapse_operators(p));
    for (int k = 0; k < 5; ++k) {
        const Matrix r = random_density(27, rng);
        EXPECT_LT(std::abs(lindblad_rhs(r, h, jumps).trace()), 1e-10);
    }
}

TEST(Dynamics, RhsTwoLevelDecayRate) {
    const double gamma = 0.37;
    Matrix l = Matrix::Zero(2, 2);
    l(0, 1) = std::sqrt(gamma);  // |g><e|
    Matrix rho = Matrix::Zero(2, 2);
    rho(1, 1) = 1.0;
    const Matrix d = lindblad_rhs(rho, Matrix::Zero(2, 2), {l});
    EXPECT_NEAR(d(1, 1).real(), -gamma, 1e-15);
    EXPECT_NEAR(d(0, 0).real(), gamma, 1e-15);
    EXPECT_THROW(lindblad_rhs(rho, Matrix::Zero(3, 3), {}), std::invalid_argument);
}

TEST(Dynamics, InitialState) {
    const SystemParams p = default_params(9800, 3.0);
    const DensityMatrix r = initial_state(p);
    EXPECT_NEAR(r.matrix().trace().real(), 1.0, 1e-15);
    EXPECT_NEAR(r.purity(), 1.0, 1e-15);
    const Layout L = p.layout();
    EXPECT_EQ(r.population(L.index(0, 1, 0)), 1.0);
    EXPECT_EQ(r.population(L.index(0, 0, 0)), 0.0);
    EXPECT_EQ(r.population(L.index(1, 0, 0)), 0.0);
    EXPECT_EQ(r.population(L.index(1, 1, 0)), 0.0);
    const Matrix n = embed(annihilation(2), Slot::cav, L).matrix();
    EXPECT_EQ((r.matrix() * n.adjoint() * n).trace().real(), 0.0);
}

TEST(Dynamics, FreeDiagonalEvolutionKeepsPopulations) {
    SystemParams p = default_params(9800, 3.0, true);
    for (auto& e : p.emitter) e.g_cav = e.rabi = 0.0;
    std::mt19937 rng(4);
    Matrix r = random_density(27, rng);
    const DensityMatrix rho0 = DensityMatrix::from(Operator(p.layout(), r));
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    const Trajectory tr = integrate(rho0, p, cfg);
    const Matrix diff = tr.final_state->matrix().diagonal() - r.diagonal();
    EXPECT_LT(diff.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dynamics, TwoLevelDecayMatchesExponential) {
    const double gamma = 0.05;
    Matrix l = Matrix::Zero(2, 2);
    l(0, 1) = std::sqrt(gamma);
    Matrix rho = Matrix::Zero(2, 2);
    rho(1, 1) = 1.0;
    IntegratorConfig cfg;
    cfg.t_end = 3.0 / gamma;
    cfg.dt = 0.01;
    for (Method m : {Method::rk4_fixed, Method::rk4_propagator, Method::rk45_adaptive}) {
        cfg.method = m;
        const Matrix out = evolve(rho, Matrix::Zero(2, 2), {l}, cfg);
        EXPECT_NEAR(out(1, 1).real(), std::exp(-3.0), 1e-6) << to_string(m);
        EXPECT_NEAR(out.trace().real(), 1.0, 1e-12) << to_string(m);
    }
}

TEST(Dynamics, ReducedIntegrationMatchesDenseFullSpaceOracle) {
    const SystemParams p = default_params(9800, 3.0);
    const DensityMatrix rho0 = initial_state(p);
    IntegratorConfig cfg;
    cfg.t_end = 1.0;
    cfg.dt = 1e-4;
    cfg.auto_dt = false;
    const Trajectory tr = integrate(rho0, p, cfg);
    EXPECT_EQ(tr.reduced_dim, 6);
    const Matrix dense = dense_rk4(rho0.matrix(), build_rotating_hamiltonian(p).matrix(),
                                   matrices(build_collapse_operators(p)), 1e-4, 10000);
    EXPECT_LT((tr.final_state->matrix() - dense).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dynamics, SupportClosureCoversGenericStates) {
    std::mt19937 rng(8);
    const SystemParams p = default_params(98000, 3.0);
    const Matrix r = random_density(27, rng);
    const auto gen = detail::reduce(r, build_rotating_hamiltonian(p).matrix(), matrices(build_collapse_operators(p)));
    EXPECT_EQ(gen.dim(), 27);
}

TEST(Dynamics, SuperoperatorMatchesGenerator) {
    std::mt19937 rng(9);
    const SystemParams p = default_params(9800, 3.0);
    const Matrix r0 = random_density(27, rng);
    const auto gen = detail::reduce(r0, build_rotating_hamiltonian(p).matrix(), matrices(build_collapse_operators(p)));
    const Matrix r = random_density(gen.dim(), rng);
    Matrix x(gen.dim(), gen.dim()), out(gen.dim(), gen.dim());
    gen.apply(r, x, out);
    const Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(r.data(), r.size());
    const Eigen::VectorXcd sv = gen.superoperator() * v;
    const Matrix via_s = Eigen::Map<const Matrix>(sv.data(), gen.dim(), gen.dim());
    EXPECT_LT((via_s - out).cwiseAbs().maxCoeff(), 1e-9);
    // and the generator itself against the dense reference
    const Matrix full = lindblad_rhs(r0, build_rotating_hamiltonian(p).matrix(), matrices(build_collapse_operators(p)));
    Matrix x2(27, 27), out2(27, 27);
    gen.apply(detail::restrict(r0, gen.support), x2, out2);
    EXPECT_LT((out2 - detail::restrict(full, gen.support)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Dynamics, MethodsAgree) {
    const SystemParams p = default_params(9800, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 150.0;
    const Trajectory a = integrate(initial_state(p), p, cfg);
    cfg.method = Method::rk4_propagator;
    const Trajectory b = integrate(initial_state(p), p, cfg);
    cfg.method = Method::rk45_adaptive;
    const Trajectory c = integrate(initial_state(p), p, cfg);
    ASSERT_EQ(a.size(), b.size());
    // the adaptive method is not bound by the step guard, so its sample grid differs
    EXPECT_EQ(c.times.back(), 150.0);
    double gap = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) gap = std::max(gap, std::abs(a.concurrence[k] - b.concurrence[k]));
    EXPECT_LT(gap, 1e-9);
    EXPECT_LT(std::abs(find_peak(a).value - find_peak(c).value), 1e-4);
}

TEST(Dynamics, FixedStepIsBitwiseReproducible) {
    const SystemParams p = default_params(98000, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 20.0;
    const Trajectory a = integrate(initial_state(p), p, cfg);
    const Trajectory b = integrate(initial_state(p), p, cfg);
    EXPECT_EQ(a.concurrence, b.concurrence);
    EXPECT_EQ(a.inversion, b.inversion);
    EXPECT_TRUE(a.final_state->matrix() == b.final_state->matrix());
}

TEST(Dynamics, InvariantsOverLongHorizon) {
    const SystemParams p = default_params(9800, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 500.0;
    cfg.method = Method::rk4_propagator;
    cfg.record_every = 100;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    EXPECT_LT(tr.max_trace_error, 1e-8);
    EXPECT_LT(tr.max_hermiticity, 1e-10);
    EXPECT_GE(tr.min_eigenvalue, -1e-8);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        EXPECT_LE(tr.purity[k], 1.0 + 1e-8);
        for (double v : {tr.rho00[k], tr.rho01[k], tr.rho10[k], tr.rho11[k], tr.excited_A[k], tr.excited_B[k]}) {
            ASSERT_GE(v, -1e-8);
            ASSERT_LE(v, 1.0 + 1e-8);
        }
    }
    EXPECT_TRUE(tr.final_state->valid());
}

TEST(Dynamics, UnitaryCaseKeepsPurity) {
    const SystemParams p = default_params(9800, 3.0, true);
    IntegratorConfig cfg;
    cfg.t_end = 30.0;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    for (double x : tr.purity) ASSERT_NEAR(x, 1.0, 1e-6);
}

TEST(Dynamics, InversionAtQ9800DropsBelowMinusPointThree) {
    const SystemParams p = default_params(9800, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 300.0;
    cfg.method = Method::rk4_propagator;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    EXPECT_LT(*std::min_element(tr.inversion.begin(), tr.inversion.end()), -0.3);
}

TEST(Dynamics, StabilityGuard) {
    const SystemParams p = default_params(9800, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 1.0;
    cfg.dt = 2e-4;
    cfg.auto_dt = false;
    EXPECT_THROW(integrate(initial_state(p), p, cfg), std::invalid_argument);
    cfg.auto_dt = true;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    EXPECT_LT(tr.dt, 2e-4);
    const double spread = detail::spectral_spread(
        detail::reduce(initial_state(p).matrix(), build_rotating_hamiltonian(p).matrix(), {}).hamiltonian);
    EXPECT_LE(tr.dt * spread, 0.1 + 1e-12);
    // at Q = 98000 the default step already satisfies the guard
    const SystemParams q = default_params(98000, 3.0);
    EXPECT_DOUBLE_EQ(integrate(initial_state(q), q, cfg).dt, 2e-4);
}

TEST(Dynamics, BlowUpIsDetected) {
    const SystemParams p = default_params(9800, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 50.0;
    cfg.dt = 0.05;
    cfg.auto_dt = false;
    cfg.stability_limit = 1e9;
    EXPECT_THROW(integrate(initial_state(p), p, cfg), IntegrationError);
}

TEST(Dynamics, RejectsInvalidInput) {
    const SystemParams p = default_params(9800, 3.0);
    Matrix bad = initial_state(p).matrix();
    bad(0, 0) = 0.5;
    EXPECT_THROW(integrate(DensityMatrix::unchecked(Operator(p.layout(), bad)), p, IntegratorConfig{}),
                 std::invalid_argument);
    IntegratorConfig cfg;
    cfg.dt = 0.0;
    EXPECT_THROW(integrate(initial_state(p), p, cfg), std::invalid_argument);
    cfg = {};
    cfg.record_every = 0;
    EXPECT_THROW(integrate(initial_state(p), p, cfg), std::invalid_argument);
    SystemParams wider = p;
    wider.n_max = 3;
    EXPECT_THROW(integrate(initial_state(p), wider, IntegratorConfig{}), std::invalid_argument);
    EXPECT_THROW(parse_method("euler"), std::invalid_argument);
}

TEST(Dynamics, SamplingGrid) {
    const SystemParams p = default_params(98000, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 10.0;
    cfg.record_every = 1000;
    const Trajectory tr = integrate(initial_state(p), p, cfg);
    EXPECT_EQ(tr.size(), 51u);  // 50000 steps of 2e-4 ns
    EXPECT_DOUBLE_EQ(tr.times.front(), 0.0);
    EXPECT_NEAR(tr.times.back(), 10.0, 1e-12);
    cfg.target_samples = 11;
    EXPECT_EQ(integrate(initial_state(p), p, cfg).size(), 11u);
}

TEST(Dynamics, ConvergenceIdealTruncation) {
    const SystemParams p = default_params(9800, 3.0, true);
    IntegratorConfig cfg;
    cfg.t_end = 20.0;
    const ConvergenceReport r = convergence_check(p, cfg);
    EXPECT_LT(r.truncation_deviation, 1e-3);
    EXPECT_LT(r.step_deviation, 1e-3);
    EXPECT_TRUE(r.passed);
}

TEST(Dynamics, ConvergenceStepHalvingAtGuard) {
    const SystemParams p = default_params(98000, 3.0);
    IntegratorConfig cfg;
    cfg.t_end = 30.0;
    const ConvergenceReport r = convergence_check(p, cfg);
    EXPECT_LT(r.cmax_step_delta, 1e-4);
    EXPECT_LT(r.truncation_deviation, 1e-3);
}

TEST(Dynamics, ConvergenceWithoutDrive) {
    SystemParams p = default_params(9800, 3.0);
    for (auto& e : p.emitter) e.rabi = 0.0;
    IntegratorConfig cfg;
    cfg.t_end = 5.0;
    const ConvergenceReport r = convergence_check(p, cfg);
    EXPECT_EQ(r.truncation_deviation, 0.0);
}
