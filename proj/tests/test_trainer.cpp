#include <gtest/gtest.h>

#include <cmath>

#include "gcl/trainer.hpp"
#include "test_util.hpp"

using namespace gcl;
using gcl::testing::random_matrix;

namespace {

Dataset wrap(const Matrix& X, std::optional<std::vector<int>> labels = std::nullopt) {
    return Dataset{DataMatrix(X), std::move(labels), "test", 0, {}};
}

TrainConfig small_config(ModelKind kind, int epochs = 30) {
    TrainConfig cfg = TrainConfig::defaults_for(kind);
    cfg.k = 6;
    cfg.epochs = epochs;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST(Config, DefaultsPerModel) {
    EXPECT_EQ(TrainConfig::defaults_for(ModelKind::vcl).learning_rate, 0.008);
    EXPECT_EQ(TrainConfig::defaults_for(ModelKind::dcl).learning_rate, 0.0008);
    const TrainConfig c = TrainConfig::defaults_for(ModelKind::deep_dcl);
    EXPECT_EQ(c.learning_rate, 0.0008);
    EXPECT_EQ(c.epochs, 400);
    EXPECT_EQ(c.k, 30);
    EXPECT_EQ(c.lambda, 0.01);
}

TEST(Config, ValidationRejectsBadValues) {
    TrainConfig c;
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), DataError);
    c = TrainConfig{};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), DataError);
    c = TrainConfig{};
    c.k = 1;
    EXPECT_THROW(c.validate(), DataError);
    c = TrainConfig{};
    c.lambda = -1.0;
    EXPECT_THROW(c.validate(), DataError);
    EXPECT_EQ(parse_optimizer("rmsprop"), std::nullopt);
    EXPECT_EQ(parse_optimizer("gd"), OptimizerKind::gd);
}

TEST(Train, GeometricDecayOfASinglePrototype) {
    Matrix X(2, 1);
    X << 0.3, -0.2;
    TrainConfig cfg = small_config(ModelKind::vcl, 25);
    cfg.k = 2;
    cfg.lambda = 0.0;
    cfg.optimizer = OptimizerKind::gd;
    cfg.learning_rate = 0.05;
    const auto r = train(wrap(X), cfg);
    const int w = r.assignment.winner1[0];
    const double factor = 1.0 - 2.0 * cfg.learning_rate / 1.0;
    for (std::size_t e = 1; e < r.trace.snapshots.size(); ++e) {
        const double prev = (r.trace.snapshots[e - 1].col(w) - X.col(0)).norm();
        const double cur = (r.trace.snapshots[e].col(w) - X.col(0)).norm();
        EXPECT_NEAR(cur, factor * prev, 1e-12 * (1.0 + prev));
    }
    // The losing prototype has an empty Voronoi set and never moves.
    EXPECT_EQ(r.trace.snapshots.front().col(1 - w), r.trace.snapshots.back().col(1 - w));
}

TEST(Train, SameSeedIsBitIdentical) {
    const auto ds = normalize(gen_moons(120, 0.05, 2));
    for (auto kind : {ModelKind::vcl, ModelKind::dcl, ModelKind::deep_dcl}) {
        const auto a = train(ds, small_config(kind));
        const auto b = train(ds, small_config(kind));
        EXPECT_EQ(a.trace.quantization, b.trace.quantization) << to_string(kind);
        EXPECT_EQ(a.trace.edge_norm, b.trace.edge_norm);
        EXPECT_EQ(a.trace.valid_count, b.trace.valid_count);
        EXPECT_EQ(a.prototypes, b.prototypes);
    }
}

TEST(Train, RecordEverySubsamplesTrace) {
    const auto ds = normalize(gen_circles(80, 0.05, 1));
    TrainConfig cfg = small_config(ModelKind::dcl, 25);
    cfg.record_every = 10;
    const auto r = train(ds, cfg);
    EXPECT_EQ(r.trace.epochs, (std::vector<int>{0, 10, 20}));
    EXPECT_EQ(r.trace.snapshots.size(), 3u);
}

TEST(Train, MoonsVclTrendAndValidity) {
    const auto ds = normalize(gen_moons(500, 0.05, 0));
    TrainConfig cfg = TrainConfig::defaults_for(ModelKind::vcl);
    const auto r = train(ds, cfg);
    ASSERT_EQ(r.trace.size(), 400u);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b + 10 <= r.trace.size(); b += 10) {
        double mean = 0.0;
        for (std::size_t e = b; e < b + 10; ++e) mean += r.trace.quantization[e] / 10.0;
        EXPECT_LE(mean, prev * (1.0 + 1e-9)) << "block starting at epoch " << b;
        prev = mean;
    }
    EXPECT_GE(r.trace.valid_count.back(), 2);
}

TEST(Train, FrozenAssignmentGdNeverIncreasesQ) {
    // Replays the training loop with plain GD at the default rates and checks
    // Q across every pair of epochs that share a Voronoi assignment.
    const auto ds = normalize(gen_spiral(300, 0.05, 4));
    const Matrix& X = ds.X.values();
    for (auto kind : {ModelKind::vcl, ModelKind::dcl}) {
        TrainConfig cfg = TrainConfig::defaults_for(kind);
        cfg.optimizer = OptimizerKind::gd;
        Model model = make_model(cfg, X.rows(), X.cols());
        Optimizer opt(cfg.optimizer, cfg.learning_rate);
        std::optional<VoronoiAssignment> prev_a;
        double prev_q = 0.0;
        int checked = 0;
        for (int epoch = 0; epoch < 150; ++epoch) {
            const Embedding emb = embed(model, X);
            const auto a = assign(emb.features, emb.prototypes);
            const double q = quantization(emb.features, emb.prototypes, a);
            if (prev_a && *prev_a == a) {
                EXPECT_LE(q, prev_q + 1e-12) << to_string(kind) << " epoch " << epoch;
                ++checked;
            }
            opt.step(parameters(model), flat_gradients(model, X, a, cfg.lambda));
            prev_a = a;
            prev_q = q;
        }
        EXPECT_GT(checked, 0);
    }
}

TEST(Train, FreezeFlagKeepsInitialAssignment) {
    const auto ds = normalize(gen_moons(100, 0.05, 3));
    TrainConfig cfg = small_config(ModelKind::dcl, 50);
    cfg.freeze_assignment = true;
    const auto r = train(ds, cfg);
    const Embedding initial = embed(make_model(cfg, ds.d(), ds.n()), ds.X.values());
    EXPECT_EQ(r.assignment, assign(initial.features, initial.prototypes));
}

TEST(Train, DivergenceGuardNamesEpoch) {
    const auto ds = normalize(gen_moons(100, 0.05, 3));
    TrainConfig cfg = small_config(ModelKind::dcl, 200);
    cfg.optimizer = OptimizerKind::gd;
    cfg.learning_rate = 50.0;
    try {
        train(ds, cfg);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GT(e.epoch(), 0);
        EXPECT_NE(std::string(e.what()).find("epoch " + std::to_string(e.epoch())), std::string::npos);
    }
}

TEST(Train, WarnsOnUncenteredData) {
    const Matrix X = random_matrix(2, 40, 5).array() + 3.0;
    const auto r = train(wrap(X), small_config(ModelKind::vcl, 2));
    ASSERT_FALSE(r.warnings.empty());
    EXPECT_NE(r.warnings[0].find("not centered"), std::string::npos);
    const auto centered = train(normalize(wrap(X)), small_config(ModelKind::vcl, 2));
    EXPECT_TRUE(centered.warnings.empty());
}

TEST(Model, ParameterCountsAreKdAndKn) {
    const auto ds = normalize(gen_spiral(500, 0.05, 0));
    for (auto kind : {ModelKind::vcl, ModelKind::dcl}) {
        const TrainConfig cfg = TrainConfig::defaults_for(kind);
        const Model m = make_model(cfg, ds.d(), ds.n());
        EXPECT_EQ(parameter_count(m), kind == ModelKind::vcl ? 30 * 2 : 30 * 500);
    }
}

TEST(Model, InitialDclPrototypesLieInRangeOfX) {
    const Matrix X = random_matrix(6, 3, 77);  // d > n, so R(X) is a proper subspace
    const TrainConfig cfg = small_config(ModelKind::dcl);
    const Model m = make_model(cfg, 6, 3);
    const PrototypeSet P = embed(m, X).prototypes;
    const SvdFactors f = svd(X);
    const Matrix U = f.U.leftCols(f.rank());
    for (Eigen::Index j = 0; j < P.cols(); ++j) {
        EXPECT_LE((P.col(j) - U * (U.transpose() * P.col(j))).norm(), 1e-8);
    }
}

TEST(Accuracy, PureClusters) {
    Matrix X(1, 4);
    X << -5, -4, 4, 5;
    Matrix P(1, 2);
    P << -4.5, 4.5;
    EXPECT_EQ(accuracy(X, P, {0, 0, 1, 1}), 1.0);
}

TEST(Accuracy, SinglePrototypeBalanced) {
    const Matrix X = random_matrix(2, 10, 1);
    EXPECT_EQ(accuracy(X, Matrix::Zero(2, 1), {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}), 0.5);
}

TEST(Accuracy, BruteForceCounting) {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 10; ++t) {
        const Matrix X = random_matrix(3, 50, 400 + t);
        const Matrix P = random_matrix(3, 7, 500 + t);
        std::vector<int> labels(50);
        for (auto& l : labels) l = gcl::testing::random_int(rng, 0, 2);
        long correct = 0;
        for (int j = 0; j < 7; ++j) {
            int counts[3] = {0, 0, 0};
            for (int i = 0; i < 50; ++i) {
                int best = 0;
                for (int c = 1; c < 7; ++c)
                    if ((X.col(i) - P.col(c)).squaredNorm() < (X.col(i) - P.col(best)).squaredNorm()) {
                        best = c;
                    }
                if (best == j) ++counts[labels[static_cast<std::size_t>(i)]];
            }
            correct += *std::max_element(counts, counts + 3);
        }
        EXPECT_DOUBLE_EQ(accuracy(X, P, labels), static_cast<double>(correct) / 50.0);
    }
}

TEST(GridSearch, SinglePointEqualsTrain) {
    const auto ds = normalize(gen_moons(100, 0.05, 5));
    const TrainConfig cfg = small_config(ModelKind::dcl);
    const auto rows = grid_search(ds, {cfg}, 1);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].mean_quantization, train(ds, cfg).loss.quantization);
}

TEST(GridSearch, RankingIsDeterministicAndOrdered) {
    const auto ds = normalize(gen_moons(100, 0.05, 5));
    std::vector<TrainConfig> grid;
    for (double lr : {0.0008, 0.008}) {
        TrainConfig c = small_config(ModelKind::dcl);
        c.learning_rate = lr;
        grid.push_back(c);
    }
    const auto a = grid_search(ds, grid, 3);
    const auto b = grid_search(ds, grid, 3);
    ASSERT_EQ(a.size(), 2u);
    EXPECT_EQ(a[0].config_index, b[0].config_index);
    EXPECT_EQ(a[0].quantization, b[0].quantization);
    EXPECT_LE(a[0].mean_quantization, a[1].mean_quantization);
    // seed_r = base + r
    TrainConfig rep2 = grid[a[0].config_index];
    rep2.seed += 2;
    EXPECT_EQ(a[0].quantization[2], train(ds, rep2).loss.quantization);
}

TEST(GridSearch, RejectsEmptyGrid) {
    const auto ds = normalize(gen_moons(20, 0.05, 5));
    EXPECT_THROW(grid_search(ds, {}, 1), DataError);
    EXPECT_THROW(grid_search(ds, {small_config(ModelKind::vcl)}, 0), DataError);
}
