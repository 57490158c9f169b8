#include "cavent/hilbert.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cavent;

namespace {

Matrix random_matrix(int n, std::mt19937& rng) {
    std::normal_distribution<double> d;
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = cplx(d(rng), d(rng));
    return m;
}

Matrix random_density(int n, std::mt19937& rng) {
    const Matrix a = random_matrix(n, rng);
    Matrix r = a * a.adjoint();
    return r / r.trace();
}

}  // namespace

TEST(Hilbert, LayoutIndexArithmetic) {
    const Layout L(2);
    EXPECT_EQ(L.dim(), 27);
    EXPECT_EQ(L.index(0, 0, 0), 0);
    EXPECT_EQ(L.index(0, 1, 0), 3);
    EXPECT_EQ(L.index(2, 2, 2), 26);
    EXPECT_EQ(L.index(Level::excited, Level::ground1, 1), (2 * 3 + 1) * 3 + 1);
    EXPECT_THROW(Layout(0), std::invalid_argument);
}

TEST(Hilbert, TensorProductOfIdentitiesIsIdentity) {
    const Layout L(1);
    const Operator op = tensor_product({Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Identity(2, 2)}, L);
    EXPECT_EQ(op.dim(), 18);
    EXPECT_TRUE(op.matrix().isApprox(Matrix::Identity(18, 18)));
}

TEST(Hilbert, TransitionOnAHasSixUnitEntriesAtHandEnumeratedPositions) {
    const Layout L(1);
    const Operator op = embed(transition(Level::ground0, Level::ground1), Slot::A, L);
    int nonzero = 0;
    for (int i = 0; i < 18; ++i)
        for (int j = 0; j < 18; ++j)
            if (op(i, j) != cplx(0.0)) ++nonzero;
    EXPECT_EQ(nonzero, 6);
    // |0 b n><1 b n| for b in {0,1,2}, n in {0,1}: row (0*3+b)*2+n, column (1*3+b)*2+n
    for (int b = 0; b < 3; ++b) {
        for (int n = 0; n < 2; ++n) {
            EXPECT_EQ(op(b * 2 + n, (3 + b) * 2 + n), cplx(1.0));
        }
    }
}

TEST(Hilbert, TraceIsMultiplicative) {
    std::mt19937 rng(7);
    const Layout L(1);
    const Matrix a = random_matrix(3, rng), b = random_matrix(3, rng);
    const Operator op = tensor_product({a, b, Matrix::Identity(2, 2)}, L);
    EXPECT_NEAR(std::abs(op.trace() - a.trace() * b.trace() * 2.0), 0.0, 1e-12);
}

TEST(Hilbert, TensorProductRejectsBadFactors) {
    const Layout L(2);
    EXPECT_THROW(tensor_product({Matrix::Identity(3, 3), Matrix::Identity(3, 3)}, L), std::invalid_argument);
    EXPECT_THROW(tensor_product({Matrix::Identity(3, 3), Matrix::Identity(3, 3), Matrix::Identity(2, 2)}, L),
                 std::invalid_argument);
    EXPECT_THROW(tensor_product({Matrix::Identity(3, 3), Matrix::Zero(3, 2), Matrix::Identity(3, 3)}, L),
                 std::invalid_argument);
}

TEST(Hilbert, KroneckerIsAssociative) {
    std::mt19937 rng(11);
    const Matrix a = random_matrix(3, rng), b = random_matrix(3, rng), c = random_matrix(3, rng);
    EXPECT_LT((kron(kron(a, b), c) - kron(a, kron(b, c))).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(Hilbert, Annihilation) {
    Matrix c1 = annihilation(1);
    Matrix expect1(2, 2);
    expect1 << 0.0, 1.0, 0.0, 0.0;
    EXPECT_TRUE(c1.isApprox(expect1));

    const Matrix c2 = annihilation(2);
    EXPECT_EQ(c2(0, 1), cplx(1.0));
    EXPECT_NEAR(c2(1, 2).real(), std::sqrt(2.0), 1e-15);
    EXPECT_EQ((c2.array() != cplx(0.0)).count(), 2);

    const Matrix n = annihilation(4).adjoint() * annihilation(4);
    for (int k = 0; k <= 4; ++k) EXPECT_NEAR(n(k, k).real(), k, 1e-14);
    EXPECT_THROW(annihilation(0), std::invalid_argument);
}

TEST(Hilbert, Embed) {
    std::mt19937 rng(3);
    const Layout L(2);
    EXPECT_TRUE(embed(Matrix::Identity(3, 3), Slot::A, L).matrix().isApprox(Matrix::Identity(27, 27)));
    const Matrix x = random_matrix(3, rng), y = random_matrix(3, rng);
    const Matrix ex = embed(x, Slot::A, L).matrix(), ey = embed(y, Slot::B, L).matrix();
    EXPECT_LT((ex * ey - ey * ex).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(std::abs(embed(x, Slot::A, L).trace() - x.trace() * 3.0 * 3.0), 0.0, 1e-12);
    EXPECT_THROW(embed(Matrix::Identity(2, 2), Slot::A, L), std::invalid_argument);
    EXPECT_THROW(embed(Matrix::Identity(3, 3), Slot::cav, Layout(1)), std::invalid_argument);
}

TEST(Hilbert, EmbedPreservesHermiticityAndSpectrum) {
    std::mt19937 rng(5);
    const Layout L(2);
    const Matrix a = random_matrix(3, rng);
    const Matrix h = a + a.adjoint();
    const Matrix e = embed(h, Slot::B, L).matrix();
    EXPECT_EQ(hermiticity_defect(e), 0.0);
    const RealVector local = hermitian_eigenvalues(h);
    const RealVector full = hermitian_eigenvalues(e);
    // every local eigenvalue appears 3 * 3 times
    for (int k = 0; k < 27; ++k) EXPECT_NEAR(full(k), local(k / 9), 1e-12);
}

TEST(Hilbert, PartialTraceOfPureCavityFactor) {
    std::mt19937 rng(13);
    const Layout L(2);
    const Matrix sigma = random_density(9, rng);
    Matrix vac = Matrix::Zero(3, 3);
    vac(0, 0) = 1.0;
    const Operator rho(L, kron(sigma, vac));
    EXPECT_LT((partial_trace_cavity(rho) - sigma).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Hilbert, PartialTraceBlockSumByHand) {
    std::mt19937 rng(17);
    const Layout L(1);
    const Matrix sigma = random_density(9, rng);
    Matrix cav = Matrix::Zero(2, 2);
    cav(0, 0) = 0.7;
    cav(1, 1) = 0.3;
    const Matrix full = kron(sigma, cav);
    // hand block sum: out(i,j) = full(2i, 2j) + full(2i+1, 2j+1)
    Matrix hand(9, 9);
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) hand(i, j) = full(2 * i, 2 * j) + full(2 * i + 1, 2 * j + 1);
    const Matrix out = partial_trace_cavity(Operator(L, full));
    EXPECT_LT((out - hand).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LT((out - sigma).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Hilbert, PartialTraceIsLinearAndTracePreserving) {
    std::mt19937 rng(19);
    const Layout L(2);
    const Matrix a = random_matrix(27, rng), b = random_matrix(27, rng);
    const cplx s(0.3, -1.2);
    const Matrix lhs = partial_trace_cavity(Operator(L, a + s * b));
    const Matrix rhs = partial_trace_cavity(Operator(L, a)) + s * partial_trace_cavity(Operator(L, b));
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(std::abs(partial_trace_cavity(Operator(L, a)).trace() - a.trace()), 0.0, 1e-12);
}

TEST(Hilbert, HermitianEigenvalues) {
    Matrix d = Matrix::Zero(3, 3);
    d.diagonal() << 3.0, 1.0, 2.0;
    const RealVector ev = hermitian_eigenvalues(d);
    EXPECT_DOUBLE_EQ(ev(0), 1.0);
    EXPECT_DOUBLE_EQ(ev(1), 2.0);
    EXPECT_DOUBLE_EQ(ev(2), 3.0);

    Matrix x(2, 2);
    x << 0.0, 1.0, 1.0, 0.0;
    const RealVector px = hermitian_eigenvalues(x);
    EXPECT_NEAR(px(0), -1.0, 1e-15);
    EXPECT_NEAR(px(1), 1.0, 1e-15);

    std::mt19937 rng(23);
    const Matrix a = random_matrix(8, rng);
    const Matrix h = a + a.adjoint();
    EXPECT_NEAR(hermitian_eigenvalues(h).sum(), h.trace().real(), 1e-8);

    Matrix bad = h;
    bad(0, 1) += 1e-3;
    EXPECT_THROW(hermitian_eigenvalues(bad), std::invalid_argument);
}

TEST(Hilbert, DensityMatrixValidation) {
    std::mt19937 rng(29);
    const Layout L(1);
    const Matrix r = random_density(18, rng);
    const DensityMatrix d = DensityMatrix::from(Operator(L, r));
    EXPECT_TRUE(d.valid());
    const RealVector ev = hermitian_eigenvalues(d.matrix());
    EXPECT_GE(ev(0), -1e-8);
    EXPECT_LE(ev(ev.size() - 1), 1.0 + 1e-8);
    EXPECT_NEAR(ev.sum(), 1.0, 1e-8);

    EXPECT_THROW(DensityMatrix::from(Operator(L, 2.0 * r)), std::invalid_argument);
    Matrix neg = Matrix::Zero(18, 18);
    neg(0, 0) = 1.5;
    neg(1, 1) = -0.5;
    EXPECT_THROW(DensityMatrix::from(Operator(L, neg)), std::invalid_argument);
    Matrix nh = r;
    nh(0, 1) += 1e-6;
    EXPECT_THROW(DensityMatrix::from(Operator(L, nh)), std::invalid_argument);
    EXPECT_FALSE(DensityMatrix::unchecked(Operator(L, neg)).valid());
    EXPECT_THROW(Operator(L, Matrix::Identity(5, 5)), std::invalid_argument);
}
