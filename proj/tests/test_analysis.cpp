#include <gtest/gtest.h>

#include <cmath>

#include "gcl/analysis.hpp"
#include "gcl/trainer.hpp"
#include "test_util.hpp"

using namespace gcl;
using gcl::testing::random_matrix;

namespace {

// Q from a thin QR: columns orthonormal.
Matrix orthonormal_columns(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rows, cols, seed));
    return qr.householderQ() * Matrix::Identity(rows, cols);
}

Dataset wrap(const Matrix& X) { return Dataset{DataMatrix(X), std::nullopt, "t", 0, {}}; }

}  // namespace

TEST(DualFlow, CriticalStartIsConstant) {
    const Matrix X = random_matrix(3, 7, 1);
    const Vector mu = random_matrix(3, 1, 2);
    const Vector crit = critical_weights(X, mu);
    const auto p = predict_dual_flow(X, crit, mu, 3, 1e-3);
    const Matrix traj = p.trajectory(50);
    for (Eigen::Index e = 0; e < traj.cols(); ++e) EXPECT_LE((traj.col(e) - crit).norm(), 1e-12);
}

TEST(DualFlow, LimitSolvesNormalEquations) {
    const Matrix X = random_matrix(6, 4, 3);  // d >= n
    const Vector mu = random_matrix(6, 1, 4);
    const auto p = predict_dual_flow(X, random_matrix(4, 1, 5), mu, 2, 0.01);
    EXPECT_LE(normal_equation_residual(X, p.at_time(1e6), mu), 1e-8);
}

TEST(DualFlow, WhitenedDataHasUnitRates) {
    const Matrix X = orthonormal_columns(8, 3, 6).transpose();  // 3 x 8, X X^T = I
    const auto p = predict_dual_flow(X, random_matrix(8, 1, 7), random_matrix(3, 1, 8), 4, 0.01);
    int decaying = 0;
    for (Eigen::Index i = 0; i < p.rates.size(); ++i) {
        if (p.center[static_cast<std::size_t>(i)]) {
            EXPECT_EQ(p.rates(i), 0.0);
        } else {
            EXPECT_NEAR(p.rates(i), 1.0, 1e-12);
            ++decaying;
        }
    }
    EXPECT_EQ(decaying, 3);
}

TEST(DualFlow, CenterModesStayConstant) {
    const Matrix X = random_matrix(2, 6, 9);  // n > d: four center modes
    const auto p = predict_dual_flow(X, random_matrix(6, 1, 10), random_matrix(2, 1, 11), 3, 0.05);
    const Matrix traj = p.trajectory(100);
    for (Eigen::Index i = 2; i < 6; ++i) {
        ASSERT_TRUE(p.center[static_cast<std::size_t>(i)]);
        const double c0 = p.basis.col(i).dot(traj.col(0));
        for (Eigen::Index e = 1; e < traj.cols(); ++e) EXPECT_NEAR(p.basis.col(i).dot(traj.col(e)), c0, 1e-12);
    }
}

TEST(Flows, BaseAndDualAgreeWithOrthonormalColumns) {
    const Matrix X = orthonormal_columns(5, 3, 12);  // X^T X = I_3, no centers
    const Vector mu = X * random_matrix(3, 1, 13);   // centroids live in R(X)
    const Vector omega0 = random_matrix(3, 1, 14);
    const auto dual = predict_dual_flow(X, omega0, mu, 2, 0.01);
    const auto base = predict_base_flow(X * omega0, mu, 2, 3, 0.01);
    for (int e = 0; e <= 200; e += 10) {
        EXPECT_LE((X * dual.at_epoch(e) - base.at_epoch(e)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(BaseFlow, ConstantAtCentroidAndIsotropic) {
    const Vector mu = random_matrix(4, 1, 15);
    const auto still = predict_base_flow(mu, mu, 5, 10, 0.01);
    EXPECT_LE((still.at_epoch(300) - mu).norm(), 1e-15);
    const Vector w0 = random_matrix(4, 1, 16);
    const auto p = predict_base_flow(w0, mu, 5, 10, 0.01);
    const Vector a = p.at_time(0.3) - mu, b = p.at_time(1.1) - mu;
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(b(i) / a(i), std::exp(-0.8), 1e-12);
}

TEST(BaseFlow, DiscreteGdTracksPrediction) {
    const Matrix X = random_matrix(2, 40, 17);
    TrainConfig cfg = TrainConfig::defaults_for(ModelKind::vcl);
    cfg.k = 3;
    cfg.epochs = 200;
    cfg.lambda = 0.0;
    cfg.learning_rate = 1e-3;
    cfg.optimizer = OptimizerKind::gd;
    cfg.freeze_assignment = true;
    const auto r = train(wrap(X), cfg);
    const PrototypeSet mu = voronoi_centroids(X, r.assignment);
    for (int j = 0; j < 3; ++j) {
        const int nj = r.assignment.counts[static_cast<std::size_t>(j)];
        if (nj == 0) continue;
        const Vector w0 = r.trace.snapshots.front().col(j);
        const auto p = predict_base_flow(w0, mu.col(j), nj, 40, cfg.learning_rate);
        const double scale = (w0 - mu.col(j)).norm();
        for (std::size_t e = 0; e < r.trace.size(); ++e) {
            const double dev = (r.trace.snapshots[e].col(j) - p.at_epoch(r.trace.epochs[e])).norm();
            EXPECT_LE(dev, 0.02 * scale) << "prototype " << j << " epoch " << e;
        }
    }
}

TEST(FitRates, RecoversSyntheticRates) {
    const Matrix X = random_matrix(3, 5, 18);
    const auto p = predict_dual_flow(X, random_matrix(5, 1, 19), random_matrix(3, 1, 20), 2, 0.002);
    const int epochs = 300;
    std::vector<int> ep(epochs + 1);
    for (int e = 0; e <= epochs; ++e) ep[static_cast<std::size_t>(e)] = e;
    const auto fits = fit_decay_rates(p.trajectory(epochs), ep, p.basis, p.limit, p.time_scale);
    ASSERT_EQ(fits.size(), 5u);
    for (const auto& f : fits) {
        ASSERT_TRUE(f.observable);
        EXPECT_NEAR(f.slope, -p.rates(f.index), 1e-6) << "mode " << f.index;
    }
}

TEST(FitRates, ZeroAmplitudeModeIsUnobservable) {
    const Matrix basis = Matrix::Identity(2, 2);
    Matrix traj(2, 3);
    traj << 1.0, 0.5, 0.25, 0.0, 0.0, 0.0;
    const auto fits = fit_decay_rates(traj, {0, 1, 2}, basis, Vector::Zero(2), 1.0);
    EXPECT_TRUE(fits[0].observable);
    EXPECT_NEAR(fits[0].slope, std::log(0.5), 1e-12);
    EXPECT_FALSE(fits[1].observable);
}

TEST(FitRates, TrainedDclTopModeMatchesSigmaSquared) {
    const Matrix X = random_matrix(3, 2, 21);
    TrainConfig cfg = TrainConfig::defaults_for(ModelKind::dcl);
    cfg.k = 2;
    cfg.epochs = 3000;
    cfg.lambda = 0.0;
    cfg.learning_rate = 1e-3;
    cfg.optimizer = OptimizerKind::gd;
    cfg.freeze_assignment = true;
    cfg.record_weights = true;
    const auto r = train(wrap(X), cfg);
    const SvdFactors f = svd(X);
    const PrototypeSet mu = voronoi_centroids(X, r.assignment);
    for (int j = 0; j < 2; ++j) {
        const int nj = r.assignment.counts[static_cast<std::size_t>(j)];
        if (nj == 0) continue;
        Matrix traj(2, static_cast<Eigen::Index>(r.trace.size()));
        for (std::size_t e = 0; e < r.trace.size(); ++e) traj.col(static_cast<Eigen::Index>(e)) = r.trace.weights[e].row(j).transpose();
        const auto p = predict_dual_flow(f, X, traj.col(0), mu.col(j), nj, cfg.learning_rate);
        const auto fits = fit_decay_rates(traj, r.trace.epochs, p.basis, p.limit, p.time_scale);
        ASSERT_TRUE(fits[0].observable);
        EXPECT_NEAR(-fits[0].slope / p.rates(0), 1.0, 0.10);
    }
}

TEST(Subspace, InSpanAndOrthogonal) {
    const Matrix X = random_matrix(4, 2, 22);
    const SvdFactors f = svd(X);
    Matrix v(4, 2);
    v.col(0) = X * Vector::Random(2);
    v.col(1) = f.U.col(3) * 2.5;
    const auto rep = subspace_residuals(v, f, Subspace::range_X);
    EXPECT_EQ(rep.rank, 2);
    EXPECT_LE(rep.residual_norms[0], 1e-10);
    EXPECT_NEAR(rep.residual_norms[1], 2.5, 1e-12);
    EXPECT_THROW(subspace_residuals(v, f, Subspace::range_XT), DataError);
}

TEST(Subspace, TrainedVclApproachesRangeOfX) {
    const Matrix X = random_matrix(3, 2, 23);
    TrainConfig cfg = TrainConfig::defaults_for(ModelKind::vcl);
    cfg.k = 2;
    cfg.epochs = 1500;
    cfg.lambda = 0.0;
    cfg.learning_rate = 0.05;
    cfg.optimizer = OptimizerKind::gd;
    const auto r = train(wrap(X), cfg);
    const SvdFactors f = svd(X);
    for (int j = 0; j < 2; ++j) {
        if (r.assignment.counts[static_cast<std::size_t>(j)] == 0) continue;
        std::vector<double> curve;
        for (const auto& s : r.trace.snapshots) curve.push_back(subspace_residuals(s.col(j), f, Subspace::range_X).residual_norms[0]);
        EXPECT_LE(curve.back(), 1e-3 * curve.front());
        for (std::size_t e = 1; e < curve.size(); ++e) EXPECT_LE(curve[e], curve[e - 1] * (1 + 1e-9) + 1e-15);
        EXPECT_TRUE(transient_index(curve).has_value());
    }
}

TEST(Duality, OrthonormalRowsAreWhite) {
    const Matrix X = orthonormal_columns(8, 3, 24).transpose();
    const auto r = duality_checks(X);
    EXPECT_LE(r.base_whiteness, 1e-10);
    EXPECT_GE(r.complete_duality, 1.0 - 1e-12);
}

TEST(Duality, CompleteDualityImpossibleWhenNExceedsD) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        EXPECT_GE(duality_checks(random_matrix(3, 5 + static_cast<Eigen::Index>(s), 30 + s)).complete_duality, 1.0);
    }
}

TEST(Duality, URecoveryAndCentroids) {
    const Matrix X = random_matrix(4, 9, 25);
    const auto a = assign(X, random_matrix(4, 3, 26));
    const auto r = duality_checks(X, voronoi_centroids(X, a));
    EXPECT_LE(r.u_recovery_error, 1e-9);
    EXPECT_LE(r.centroid_error, 1e-9);  // full row rank: every centroid is reachable
}

TEST(CriticalPoint, NormalEquationsOnBothBranches) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const bool wide = s % 2 == 0;
        const Matrix X = wide ? random_matrix(3, 8, 40 + s) : random_matrix(8, 3, 40 + s);
        const Vector mu = random_matrix(X.rows(), 1, 80 + s);
        EXPECT_LE(normal_equation_residual(X, critical_weights(X, mu), mu), 1e-8) << "seed " << s;
    }
}

TEST(Transient, FirstBelowTenPercent) {
    EXPECT_EQ(transient_index({1.0, 0.5, 0.11, 0.09, 0.01}), 3u);
    EXPECT_FALSE(transient_index({1.0, 0.5}).has_value());
    EXPECT_FALSE(transient_index({}).has_value());
}
