#pragma once

// Dense operators on the composite space (emitter A) x (emitter B) x (cavity).
//
// Basis index for |a>_A |b>_B |n>_cav is ((a*3)+b)*(n_max+1)+n, with the
// emitter levels ordered 0, 1, E -> 0, 1, 2.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cavent {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class Level : int { ground0 = 0, ground1 = 1, excited = 2 };
enum class Slot { A, B, cav };

inline constexpr int kEmitterDim = 3;

class Layout {
public:
    explicit Layout(int n_max = 2) : n_max_(n_max) {
        if (n_max < 1) {
            throw std::invalid_argument("photon truncation n_max must be >= 1, got " + std::to_string(n_max));
        }
    }

    int n_max() const { return n_max_; }
    int cavity_dim() const { return n_max_ + 1; }
    int dim() const { return kEmitterDim * kEmitterDim * cavity_dim(); }
    std::array<int, 3> factors() const { return {kEmitterDim, kEmitterDim, cavity_dim()}; }

    int slot_dim(Slot s) const { return s == Slot::cav ? cavity_dim() : kEmitterDim; }

    int index(int a, int b, int n) const { return (a * kEmitterDim + b) * cavity_dim() + n; }
    int index(Level a, Level b, int n) const { return index(static_cast<int>(a), static_cast<int>(b), n); }

    bool operator==(const Layout&) const = default;

private:
    int n_max_;
};

/// Square matrix on the full composite space, tagged with its layout.
class Operator {
public:
    explicit Operator(Layout layout = Layout{}) : layout_(layout), m_(Matrix::Zero(layout.dim(), layout.dim())) {}

    Operator(Layout layout, Matrix m) : layout_(layout), m_(std::move(m)) {
        if (m_.rows() != layout_.dim() || m_.cols() != layout_.dim()) {
            throw std::invalid_argument("operator entries are " + std::to_string(m_.rows()) + "x" +
                                        std::to_string(m_.cols()) + ", layout requires " +
                                        std::to_string(layout_.dim()));
        }
    }

    static Operator identity(Layout layout) { return Operator(layout, Matrix::Identity(layout.dim(), layout.dim())); }

    const Layout& layout() const { return layout_; }
    int dim() const { return layout_.dim(); }
    const Matrix& matrix() const { return m_; }
    Matrix& matrix() { return m_; }

    cplx operator()(int i, int j) const { return m_(i, j); }
    cplx trace() const { return m_.trace(); }
    Operator adjoint() const { return Operator(layout_, m_.adjoint()); }

    Operator& operator+=(const Operator& o) {
        check_same(o);
        m_ += o.m_;
        return *this;
    }
    Operator& operator-=(const Operator& o) {
        check_same(o);
        m_ -= o.m_;
        return *this;
    }
    Operator& operator*=(cplx s) {
        m_ *= s;
        return *this;
    }

    friend Operator operator+(Operator a, const Operator& b) { return a += b; }
    friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
    friend Operator operator*(cplx s, Operator a) { return a *= s; }
    friend Operator operator*(const Operator& a, const Operator& b) {
        a.check_same(b);
        return Operator(a.layout_, a.m_ * b.m_);
    }

private:
    void check_same(const Operator& o) const {
        if (!(layout_ == o.layout_)) throw std::invalid_argument("operator layouts differ");
    }

    Layout layout_;
    Matrix m_;
};

/// Largest entrywise modulus of M - M^dagger.
inline double hermiticity_defect(const Matrix& m) {
    if (m.rows() != m.cols()) return INFINITY;
    return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

/// Kronecker product of (A, B, cavity) factors in the fixed layout order.
inline Operator tensor_product(const std::vector<Matrix>& factors, Layout layout) {
    const auto dims = layout.factors();
    if (factors.size() != dims.size()) {
        throw std::invalid_argument("tensor_product expects 3 factors (A, B, cavity), got " +
                                    std::to_string(factors.size()));
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (factors[k].rows() != factors[k].cols() || factors[k].rows() != dims[k]) {
            throw std::invalid_argument("factor " + std::to_string(k) + " has shape " +
                                        std::to_string(factors[k].rows()) + "x" +
                                        std::to_string(factors[k].cols()) + ", layout requires " +
                                        std::to_string(dims[k]));
        }
    }
    return Operator(layout, kron(kron(factors[0], factors[1]), factors[2]));
}

/// Truncated photon annihilation operator, c[n-1, n] = sqrt(n).
inline Matrix annihilation(int n_max) {
    if (n_max < 1) throw std::invalid_argument("annihilation requires n_max >= 1");
    Matrix c = Matrix::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) c(n - 1, n) = std::sqrt(static_cast<double>(n));
    return c;
}

/// |i><j| on a single emitter.
inline Matrix transition(Level i, Level j) {
    Matrix m = Matrix::Zero(kEmitterDim, kEmitterDim);
    m(static_cast<int>(i), static_cast<int>(j)) = 1.0;
    return m;
}

inline Operator embed(const Matrix& local, Slot slot, Layout layout) {
    const int d = layout.slot_dim(slot);
    if (local.rows() != d || local.cols() != d) {
        throw std::invalid_argument("local operator is " + std::to_string(local.rows()) + "x" +
                                    std::to_string(local.cols()) + " but slot needs " + std::to_string(d));
    }
    std::vector<Matrix> f{Matrix::Identity(kEmitterDim, kEmitterDim), Matrix::Identity(kEmitterDim, kEmitterDim),
                          Matrix::Identity(layout.cavity_dim(), layout.cavity_dim())};
    f[slot == Slot::A ? 0 : slot == Slot::B ? 1 : 2] = local;
    return tensor_product(f, layout);
}

/// Sum of the diagonal cavity blocks; returns the 9x9 emitter-pair operator.
inline Matrix partial_trace_cavity(const Operator& rho) {
    const int dc = rho.layout().cavity_dim();
    constexpr int de = kEmitterDim * kEmitterDim;
    Matrix out = Matrix::Zero(de, de);
    const Matrix& m = rho.matrix();
    for (int i = 0; i < de; ++i) {
        for (int j = 0; j < de; ++j) {
            cplx s = 0.0;
            for (int n = 0; n < dc; ++n) s += m(i * dc + n, j * dc + n);
            out(i, j) = s;
        }
    }
    return out;
}

/// Ascending real spectrum of a Hermitian matrix. The input is symmetrized
/// before solving; inputs with a Hermiticity defect above `tol` are rejected.
inline RealVector hermitian_eigenvalues(const Matrix& m, double tol = 1e-8) {
    const double defect = hermiticity_defect(m);
    if (!(defect <= tol)) {
        throw std::invalid_argument("hermitian_eigenvalues: input is not Hermitian (defect " + std::to_string(defect) +
                                    ")");
    }
    const Matrix sym = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

struct DensityTolerance {
    double hermitian = 1e-10;
    double trace = 1e-8;
    double negativity = 1e-8;
};

/// Hermitian, unit-trace, positive semidefinite operator on the full space.
class DensityMatrix {
public:
    /// Validates and wraps; throws std::invalid_argument when any invariant fails.
    static DensityMatrix from(Operator op, DensityTolerance tol = {}) {
        const std::string why = violation(op.matrix(), tol);
        if (!why.empty()) throw std::invalid_argument("not a density matrix: " + why);
        return DensityMatrix(std::move(op), true);
    }

    /// Wraps without validation; `valid()` reports the result of a check.
    static DensityMatrix unchecked(Operator op, DensityTolerance tol = {}) {
        const bool ok = violation(op.matrix(), tol).empty();
        return DensityMatrix(std::move(op), ok);
    }

    static DensityMatrix pure(const Eigen::VectorXcd& psi, Layout layout) {
        Eigen::VectorXcd v = psi / psi.norm();
        return from(Operator(layout, v * v.adjoint()));
    }

    const Operator& op() const { return op_; }
    const Matrix& matrix() const { return op_.matrix(); }
    const Layout& layout() const { return op_.layout(); }
    int dim() const { return op_.dim(); }
    bool valid() const { return valid_; }

    double purity() const { return (op_.matrix() * op_.matrix()).trace().real(); }
    double population(int index) const { return op_.matrix()(index, index).real(); }

    static std::string violation(const Matrix& m, DensityTolerance tol) {
        const double herm = hermiticity_defect(m);
        if (!(herm <= tol.hermitian)) return "Hermiticity defect " + std::to_string(herm);
        const double tr_err = std::abs(m.trace() - cplx(1.0));
        if (!(tr_err <= tol.trace)) return "trace deviates from 1 by " + std::to_string(tr_err);
        const double lo = hermitian_eigenvalues(m, tol.hermitian)(0);
        if (!(lo >= -tol.negativity)) return "smallest eigenvalue " + std::to_string(lo);
        return {};
    }

private:
    DensityMatrix(Operator op, bool valid) : op_(std::move(op)), valid_(valid) {}

    Operator op_;
    bool valid_;
};

}  // namespace cavent
