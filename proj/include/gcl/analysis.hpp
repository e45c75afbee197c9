#pragma once

// Numerical checks of the gradient-flow picture with frozen Voronoi sets.
//
// For one prototype j with n_j assigned samples and centroid mu_j, one plain
// gradient step under the mean-Q loss is
//   base:  w     <- w     - (2 eps n_j / n) (w - mu_j)
//   dual:  Omega <- Omega - (2 eps n_j / n) (X^T X Omega - X^T mu_j)
// so both follow their ODE in the time variable t = (2 eps n_j / n) * epoch.
// The dual flow decays along v_i at rate sigma_i^2; modes with sigma_i = 0
// (the centers) never move.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/linalg.hpp"
#include "gcl/loss.hpp"

namespace gcl {

/// Time elapsed per epoch of plain gradient descent.
inline double flow_time_scale(double eps, int n_j, Eigen::Index n) {
    if (n < 1) throw DataError("flow_time_scale: n must be positive");
    return 2.0 * eps * static_cast<double>(n_j) / static_cast<double>(n);
}

/// state(t) = limit + sum_i c_i b_i exp(-rate_i t)
struct FlowPrediction {
    Vector limit;           // Omega_crit (dual) or mu_j (base)
    Matrix basis;           // orthonormal columns b_i
    Vector mode_constants;  // c_i
    Vector rates;           // sigma_i^2 (dual), 1 (base), 0 for centers
    std::vector<bool> center;
    double time_scale = 0.0;

    Vector at_time(double t) const {
        const Vector decay = (-rates.array() * t).exp().matrix();
        return limit + basis * mode_constants.cwiseProduct(decay);
    }
    Vector at_epoch(int epoch) const { return at_time(time_scale * epoch); }

    /// One column per epoch 0..epochs.
    Matrix trajectory(int epochs) const {
        Matrix out(limit.size(), epochs + 1);
        for (int e = 0; e <= epochs; ++e) out.col(e) = at_epoch(e);
        return out;
    }
};

/// Omega_crit = X^+ mu: the minimum-norm solution of X^T X Omega = X^T mu.
inline Vector critical_weights(const Matrix& X, const Vector& mu) {
    if (mu.size() != X.rows()) throw DataError("critical_weights: centroid has wrong dimension");
    return pseudoinverse(X) * mu;
}

inline PrototypeSet voronoi_centroids(const Matrix& X, const VoronoiAssignment& a) {
    PrototypeSet C = PrototypeSet::Zero(X.rows(), static_cast<Eigen::Index>(a.k()));
    for (std::size_t i = 0; i < a.n(); ++i) C.col(a.winner1[i]) += X.col(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < a.k(); ++j) {
        if (a.counts[j] > 0) C.col(static_cast<Eigen::Index>(j)) /= a.counts[j];
    }
    return C;
}

inline FlowPrediction predict_dual_flow(const SvdFactors& f, const Matrix& X, const Vector& omega0,
                                        const Vector& mu, int n_j, double eps) {
    const Eigen::Index n = X.cols();
    if (omega0.size() != n) throw DataError("predict_dual_flow: weights must have n entries");
    FlowPrediction p;
    p.limit = pseudoinverse(f) * mu;
    p.basis = f.V;
    p.mode_constants = f.V.transpose() * (omega0 - p.limit);
    p.rates = Vector::Zero(n);
    p.center.assign(static_cast<std::size_t>(n), true);
    const Eigen::Index r = f.rank(kPinvRelTol);
    for (Eigen::Index i = 0; i < r; ++i) {
        p.rates(i) = f.singular_values(i) * f.singular_values(i);
        p.center[static_cast<std::size_t>(i)] = false;
    }
    p.time_scale = flow_time_scale(eps, n_j, n);
    return p;
}

inline FlowPrediction predict_dual_flow(const Matrix& X, const Vector& omega0, const Vector& mu,
                                        int n_j, double eps) {
    return predict_dual_flow(svd(X), X, omega0, mu, n_j, eps);
}

inline FlowPrediction predict_base_flow(const Vector& w0, const Vector& mu, int n_j, Eigen::Index n,
                                        double eps) {
    if (w0.size() != mu.size()) throw DataError("predict_base_flow: dimension mismatch");
    FlowPrediction p;
    p.limit = mu;
    p.basis = Matrix::Identity(mu.size(), mu.size());
    p.mode_constants = w0 - mu;
    p.rates = Vector::Ones(mu.size());
    p.center.assign(static_cast<std::size_t>(mu.size()), false);
    p.time_scale = flow_time_scale(eps, n_j, n);
    return p;
}

inline constexpr double kUnobservableAmplitude = 1e-10;
inline constexpr double kFitFloor = 1e-8;

struct FittedMode {
    Eigen::Index index = 0;
    bool observable = false;
    double initial_amplitude = 0.0;
    double slope = 0.0;  // d log|a| / dt; compare with -rate
    int points = 0;
};

/// Projects every trajectory column (minus `limit`) on every basis column and
/// fits log|amplitude| against t by least squares, using the points whose
/// amplitude exceeds 1e-8.
inline std::vector<FittedMode> fit_decay_rates(const Matrix& trajectory, const std::vector<int>& epochs,
                                               const Matrix& basis, const Vector& limit,
                                               double time_scale) {
    if (static_cast<Eigen::Index>(epochs.size()) != trajectory.cols())
        throw DataError("fit_decay_rates: one epoch per trajectory column required");
    if (basis.rows() != trajectory.rows() || limit.size() != trajectory.rows())
        throw DataError("fit_decay_rates: dimension mismatch");
    const Matrix amp = basis.transpose() * (trajectory.colwise() - limit);  // modes x points
    std::vector<FittedMode> out;
    for (Eigen::Index m = 0; m < amp.rows(); ++m) {
        FittedMode fm;
        fm.index = m;
        fm.initial_amplitude = amp.cols() ? std::abs(amp(m, 0)) : 0.0;
        fm.observable = fm.initial_amplitude >= kUnobservableAmplitude;
        if (fm.observable) {
            double st = 0, sy = 0, stt = 0, sty = 0;
            for (Eigen::Index c = 0; c < amp.cols(); ++c) {
                const double a = std::abs(amp(m, c));
                if (a <= kFitFloor) continue;
                const double t = time_scale * epochs[static_cast<std::size_t>(c)];
                const double y = std::log(a);
                st += t;
                sy += y;
                stt += t * t;
                sty += t * y;
                ++fm.points;
            }
            const double denom = fm.points * stt - st * st;
            if (fm.points >= 2 && denom > 0.0) {
                fm.slope = (fm.points * sty - st * sy) / denom;
            } else {
                fm.observable = false;
            }
        }
        out.push_back(fm);
    }
    return out;
}

enum class Subspace { range_X, range_XT };

struct SubspaceReport {
    std::vector<double> residual_norms;
    Eigen::Index rank = 0;
};

/// Distance of every column of `vectors` to R(X) (d-dim vectors) or R(X^T)
/// (n-dim vectors), using the leading rank-many singular directions.
inline SubspaceReport subspace_residuals(const Matrix& vectors, const SvdFactors& f, Subspace which) {
    SubspaceReport rep;
    rep.rank = f.rank(kPinvRelTol);
    const Matrix& full = which == Subspace::range_X ? f.U : f.V;
    if (vectors.rows() != full.rows()) throw DataError("subspace_residuals: dimension mismatch");
    const Matrix B = full.leftCols(rep.rank);
    for (Eigen::Index j = 0; j < vectors.cols(); ++j) {
        rep.residual_norms.push_back((vectors.col(j) - B * (B.transpose() * vectors.col(j))).norm());
    }
    return rep;
}

inline SubspaceReport subspace_residuals(const Matrix& vectors, const Matrix& X, Subspace which) {
    return subspace_residuals(vectors, svd(X), which);
}

/// First index whose value drops below `fraction` of the first value.
inline std::optional<std::size_t> transient_index(const std::vector<double>& curve,
                                                  double fraction = 0.1) {
    if (curve.empty()) return std::nullopt;
    const double threshold = fraction * curve.front();
    for (std::size_t i = 0; i < curve.size(); ++i) {
        if (curve[i] < threshold) return i;
    }
    return std::nullopt;
}

struct DualityReport {
    double base_whiteness = 0.0;     // ||X X^T - I_d||_2
    double complete_duality = 0.0;   // ||X^T X - I_n||_2
    double u_recovery_error = 0.0;   // max_i ||u_i - X v_i / sigma_i||
    double centroid_error = 0.0;     // max_j ||mu_j - X X^+ mu_j|| over supplied centroids
    Eigen::Index rank = 0;
};

namespace detail {

inline double spectral_norm_symmetric(const Matrix& S) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

} // namespace detail

inline DualityReport duality_checks(const Matrix& X, const PrototypeSet& centroids = PrototypeSet()) {
    const SvdFactors f = svd(X);
    DualityReport r;
    r.rank = f.rank(kPinvRelTol);
    r.base_whiteness =
        detail::spectral_norm_symmetric(X * X.transpose() - Matrix::Identity(X.rows(), X.rows()));
    r.complete_duality =
        detail::spectral_norm_symmetric(X.transpose() * X - Matrix::Identity(X.cols(), X.cols()));
    for (Eigen::Index i = 0; i < r.rank; ++i) {
        const Vector u = X * f.V.col(i) / f.singular_values(i);
        r.u_recovery_error = std::max(r.u_recovery_error, (u - f.U.col(i)).norm());
    }
    if (centroids.size() > 0) {
        if (centroids.rows() != X.rows()) throw DataError("duality_checks: centroid dimension mismatch");
        const Matrix pinv = pseudoinverse(f);
        for (Eigen::Index j = 0; j < centroids.cols(); ++j) {
            const Vector omega = pinv * centroids.col(j);
            r.centroid_error = std::max(r.centroid_error, (centroids.col(j) - X * omega).norm());
        }
    }
    return r;
}

/// ||X^T X Omega - X^T mu||
inline double normal_equation_residual(const Matrix& X, const Vector& omega, const Vector& mu) {
    return (X.transpose() * (X * omega) - X.transpose() * mu).norm();
}

} // namespace gcl
