#pragma once

// Dense matrix foundations shared by every other module: a validated
// feature-major data matrix, SVD with a fixed sign convention, the
// Moore-Penrose pseudoinverse, the Gram matrix and both routes to the
// Euclidean distance matrix (direct and Gram-based).

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "gcl/error.hpp"

namespace gcl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// d x k matrix whose columns are prototype positions.
using PrototypeSet = Matrix;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw DataError(std::string(what) + ": matrix contains non-finite entries");
    }
}

/// Feature-major data matrix: rows are the d features, columns the n samples.
class DataMatrix {
public:
    DataMatrix() = default;

    explicit DataMatrix(Matrix values) : values_(std::move(values)) {
        if (values_.rows() < 1 || values_.cols() < 1) {
            throw DataError("data matrix must have at least one feature and one sample");
        }
        require_finite(values_, "data matrix");
    }

    const Matrix& values() const noexcept { return values_; }
    Eigen::Index d() const noexcept { return values_.rows(); }
    Eigen::Index n() const noexcept { return values_.cols(); }

    /// Sample i (column).
    auto sample(Eigen::Index i) const { return values_.col(i); }
    /// Feature f over all samples (row).
    auto feature(Eigen::Index f) const { return values_.row(f); }

private:
    Matrix values_;
};

struct SvdFactors {
    Matrix U;                // d x d, orthogonal
    Vector singular_values;  // min(d, n), nonincreasing
    Matrix V;                // n x n, orthogonal

    Eigen::Index rank(double rel_tol = 1e-12) const {
        if (singular_values.size() == 0 || singular_values(0) <= 0.0) return 0;
        const double tau = rel_tol * singular_values(0);
        return static_cast<Eigen::Index>((singular_values.array() > tau).count());
    }
};

namespace detail {

// Index of the entry with the largest magnitude; first one wins ties.
inline Eigen::Index argmax_abs(const Eigen::Ref<const Vector>& v) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v(i));
        if (a > best_abs) {
            best_abs = a;
            best = i;
        }
    }
    return best;
}

} // namespace detail

/// Full SVD X = U diag(s) V^T. Signs are fixed so that the largest-magnitude
/// entry of every column of U is positive; paired columns of V follow, and
/// the unpaired trailing columns of V get the same rule applied directly.
inline SvdFactors svd(const Matrix& X) {
    require_finite(X, "svd");
    Eigen::JacobiSVD<Matrix> solver(X, Eigen::ComputeFullU | Eigen::ComputeFullV);
    SvdFactors f{solver.matrixU(), solver.singularValues(), solver.matrixV()};

    const Eigen::Index r = f.singular_values.size();
    for (Eigen::Index i = 0; i < f.U.cols(); ++i) {
        const Eigen::Index m = detail::argmax_abs(f.U.col(i));
        if (f.U(m, i) < 0.0) {
            f.U.col(i) *= -1.0;
            if (i < r) f.V.col(i) *= -1.0;
        }
    }
    for (Eigen::Index i = r; i < f.V.cols(); ++i) {
        const Eigen::Index m = detail::argmax_abs(f.V.col(i));
        if (f.V(m, i) < 0.0) f.V.col(i) *= -1.0;
    }
    return f;
}

/// Singular values only (cheap path for large matrices).
inline Vector singular_values(const Matrix& X) {
    require_finite(X, "singular_values");
    Eigen::BDCSVD<Matrix> solver(X);
    return solver.singularValues();
}

/// Relative rank tolerance used for pseudoinverse truncation.
inline constexpr double kPinvRelTol = 1e-12;

inline Matrix pseudoinverse(const SvdFactors& f) {
    const Eigen::Index d = f.U.rows();
    const Eigen::Index n = f.V.rows();
    Matrix pinv = Matrix::Zero(n, d);
    if (f.singular_values.size() == 0 || f.singular_values(0) <= 0.0) return pinv;
    const double tau = kPinvRelTol * f.singular_values(0);
    for (Eigen::Index i = 0; i < f.singular_values.size(); ++i) {
        const double s = f.singular_values(i);
        if (s <= tau) break;
        pinv.noalias() += (1.0 / s) * f.V.col(i) * f.U.col(i).transpose();
    }
    return pinv;
}

/// Moore-Penrose pseudoinverse (n x d) via SVD.
inline Matrix pseudoinverse(const Matrix& X) { return pseudoinverse(svd(X)); }

/// G = X^T X.
inline Matrix gram(const Matrix& X) {
    Matrix G = X.transpose() * X;
    return G.selfadjointView<Eigen::Lower>();
}

/// Squared distances between the samples (columns of X, d x n) and the
/// prototypes (columns of P, d x k). Returns n x k.
inline Matrix edm(const Matrix& X, const Matrix& P) {
    if (X.rows() != P.rows()) {
        throw DataError("edm: feature dimension mismatch (" + std::to_string(X.rows()) +
                        " vs " + std::to_string(P.rows()) + ")");
    }
    Matrix D(X.cols(), P.cols());
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        D.col(j) = (X.colwise() - P.col(j)).colwise().squaredNorm().transpose();
    }
    return D;
}

/// Same edm written as a quadratic function of the dual weights:
///   1_n diag(Omega G Omega^T)^T - 2 G Omega^T + diag(G) 1_k^T
/// with G (n x n) the Gram matrix and Omega (k x n). Tiny negative values
/// produced by cancellation are clamped to zero.
inline Matrix edm_gram(const Matrix& G, const Matrix& Omega) {
    if (G.rows() != G.cols()) throw DataError("edm_gram: Gram matrix must be square");
    if (Omega.cols() != G.rows()) {
        throw DataError("edm_gram: weights have " + std::to_string(Omega.cols()) +
                        " columns, Gram matrix is " + std::to_string(G.rows()) + " x " +
                        std::to_string(G.cols()));
    }
    const Matrix GOt = G * Omega.transpose();                           // n x k
    const Vector proto_sq = (Omega * G).cwiseProduct(Omega).rowwise().sum();  // k
    Matrix D = (-2.0) * GOt;
    D.colwise() += G.diagonal();
    D.rowwise() += proto_sq.transpose();
    return D.cwiseMax(0.0);
}

} // namespace gcl
