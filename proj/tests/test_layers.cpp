#include <gtest/gtest.h>

#include <cmath>

#include "gcl/datasets.hpp"
#include "gcl/layers.hpp"
#include "test_util.hpp"

using namespace gcl;
using gcl::testing::random_matrix;

TEST(Glorot, SingleEntryIsFiniteAndSeeded) {
    const Matrix a = glorot_init(1, 1, 5);
    ASSERT_EQ(a.size(), 1);
    EXPECT_TRUE(std::isfinite(a(0, 0)));
    EXPECT_EQ(a, glorot_init(1, 1, 5));
}

TEST(Glorot, EmpiricalStd) {
    const Matrix W = glorot_init(100, 100, 0);
    const double mean = W.mean();
    const double var = (W.array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(std::sqrt(var) / std::sqrt(2.0 / 200.0), 1.0, 0.10);
}

TEST(Glorot, DeterministicAndSeedSensitive) {
    EXPECT_EQ(glorot_init(7, 4, 3), glorot_init(7, 4, 3));
    EXPECT_NE(glorot_init(7, 4, 3), glorot_init(7, 4, 4));
    EXPECT_THROW(glorot_init(0, 4, 3), DataError);
}

TEST(ModelKind, ParseRoundTrip) {
    for (auto k : {ModelKind::vcl, ModelKind::dcl, ModelKind::deep_dcl}) {
        EXPECT_EQ(parse_model_kind(to_string(k)), k);
    }
    EXPECT_FALSE(parse_model_kind("mlp").has_value());
}

TEST(Vcl, IdentityWeightsGiveBasisPrototypes) {
    const VclLayer layer{Matrix::Identity(2, 2)};
    EXPECT_EQ(vcl_prototypes(layer), Matrix::Identity(2, 2));
}

TEST(Vcl, RowsBecomePrototypeColumns) {
    VclLayer layer{Matrix::Zero(3, 2)};
    layer.W1.row(1) << 0.25, -7.0;
    const PrototypeSet P = vcl_prototypes(layer);
    EXPECT_EQ(P.rows(), 2);
    EXPECT_EQ(P.cols(), 3);
    EXPECT_EQ(P(0, 1), 0.25);
    EXPECT_EQ(P(1, 1), -7.0);
}

TEST(Vcl, UpdatesVisibleThroughParameterViews) {
    Model m = VclLayer::create(3, 2, 1);
    auto params = parameters(m);
    ASSERT_EQ(params.size(), 1u);
    params[0][0] = 42.0;  // column-major: W1(0, 0)
    EXPECT_EQ(embed(m, Matrix::Zero(2, 4)).prototypes(0, 0), 42.0);
}

TEST(Dcl, SelectorWeightsReproduceSamples) {
    const Matrix X = random_matrix(3, 6, 1);
    DclLayer layer{Matrix::Zero(2, 6), std::nullopt};
    layer.W2(0, 4) = 1.0;
    layer.W2(1, 0) = 1.0;
    const PrototypeSet P = dcl_forward(layer, X);
    EXPECT_EQ(P.col(0), X.col(4));
    EXPECT_EQ(P.col(1), X.col(0));
}

TEST(Dcl, AveragingWeightsGiveTheMean) {
    const Matrix X = random_matrix(4, 9, 2);
    const DclLayer layer{Matrix::Constant(1, 9, 1.0 / 9.0), std::nullopt};
    EXPECT_LE((dcl_forward(layer, X).col(0) - X.rowwise().mean()).norm(), 1e-14);
}

TEST(Dcl, MatchesNaiveDoubleLoop) {
    const Matrix X = random_matrix(3, 8, 9);
    const DclLayer layer{random_matrix(5, 8, 90), std::nullopt};
    const PrototypeSet P = dcl_forward(layer, X);
    for (int f = 0; f < 3; ++f) {
        for (int j = 0; j < 5; ++j) {
            double acc = 0.0;
            for (int i = 0; i < 8; ++i) acc += layer.W2(j, i) * X(f, i);
            EXPECT_NEAR(P(f, j), acc, 1e-12);
        }
    }
}

TEST(Dcl, RejectsSampleCountMismatch) {
    const DclLayer layer = DclLayer::create(3, 10, 0);
    EXPECT_THROW(dcl_forward(layer, Matrix::Zero(2, 11)), DataError);
}

TEST(Dcl, LinearInWeights) {
    const Matrix X = random_matrix(3, 7, 4);
    const Matrix A = random_matrix(4, 7, 5), B = random_matrix(4, 7, 6);
    const double alpha = 1.7, beta = -0.3;
    const PrototypeSet lhs = dcl_forward(DclLayer{alpha * A + beta * B, std::nullopt}, X);
    const PrototypeSet rhs = alpha * dcl_forward(DclLayer{A, std::nullopt}, X) +
                             beta * dcl_forward(DclLayer{B, std::nullopt}, X);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dcl, FeatureComponentsOnlyReadTheirRow) {
    const Matrix X = random_matrix(4, 10, 12);
    const DclLayer layer{random_matrix(6, 10, 13), std::nullopt};
    const PrototypeSet P = dcl_forward(layer, X);
    for (int g = 0; g < 4; ++g) {
        Matrix Y = X;
        Y.row(g) += random_matrix(1, 10, 100 + static_cast<std::uint64_t>(g));
        const PrototypeSet Q = dcl_forward(layer, Y);
        for (int f = 0; f < 4; ++f) {
            if (f == g) continue;
            EXPECT_EQ(P.row(f), Q.row(f)) << "row " << f << " changed after perturbing " << g;
        }
        EXPECT_NE(P.row(g), Q.row(g));
    }
}

TEST(Dcl, BiasShiftsEveryComponent) {
    const Matrix X = random_matrix(2, 5, 3);
    DclLayer layer = DclLayer::create(3, 5, 8, /*with_bias=*/true);
    ASSERT_TRUE(layer.bias.has_value());
    EXPECT_EQ(layer.parameter_count(), 3 * 5 + 3);
    const PrototypeSet base = dcl_forward(layer, X);
    (*layer.bias)(1) = 2.5;
    const PrototypeSet shifted = dcl_forward(layer, X);
    EXPECT_LE((shifted.col(1) - base.col(1) - Vector::Constant(2, 2.5)).norm(), 1e-14);
    EXPECT_EQ(shifted.col(0), base.col(0));
}

TEST(Deep, EmptyEncoderIsBitwiseDcl) {
    const Matrix X = random_matrix(3, 12, 21);
    DeepDcl model = DeepDcl::create(3, {}, 4, 12, 7);
    const DeepOutput out = deep_forward(model, X);
    EXPECT_EQ(out.features, X);
    EXPECT_EQ(out.prototypes, dcl_forward(model.head, X));
}

TEST(Deep, IdentityLinearEncoderReducesToDcl) {
    const Matrix X = random_matrix(3, 12, 22);
    DeepDcl model = DeepDcl::create(3, {3}, 4, 12, 7);
    model.encoder[0].W = Matrix::Identity(3, 3);
    ASSERT_EQ(model.encoder[0].activation, Activation::identity);
    const DeepOutput out = deep_forward(model, X);
    EXPECT_EQ(out.prototypes, dcl_forward(model.head, X));
}

TEST(Deep, MadelonShapes) {
    const auto ds = normalize(gen_madelon(100, 1000, 2, 0));
    const DeepDcl model = DeepDcl::create(1000, {10, 10}, 10, 100, 3);
    const DeepOutput out = deep_forward(model, ds.X.values());
    EXPECT_EQ(out.features.rows(), 10);
    EXPECT_EQ(out.features.cols(), 100);
    EXPECT_EQ(out.prototypes.rows(), 10);
    EXPECT_EQ(out.prototypes.cols(), 10);
    EXPECT_EQ(model.encoder[0].activation, Activation::tanh);
    EXPECT_EQ(model.encoder[1].activation, Activation::identity);
    EXPECT_TRUE(model.encoder[0].b.isZero(0.0));
}

TEST(Deep, ChainMismatchRejected) {
    const DeepDcl model = DeepDcl::create(5, {4}, 2, 6, 0);
    EXPECT_THROW(deep_forward(model, Matrix::Zero(3, 6)), DataError);
    EXPECT_THROW(DeepDcl::create(5, {4, 0}, 2, 6, 0), DataError);
}

TEST(Model, ParameterCountsMatchViews) {
    const std::vector<Model> models = {VclLayer::create(30, 2, 0), DclLayer::create(30, 500, 0),
                                       DclLayer::create(30, 500, 0, true),
                                       DeepDcl::create(1000, {10, 10}, 10, 100, 0)};
    const std::vector<Eigen::Index> expected = {60, 15000, 15030,
                                                1000 * 10 + 10 + 10 * 10 + 10 + 10 * 100};
    for (std::size_t m = 0; m < models.size(); ++m) {
        Model copy = models[m];
        std::size_t total = 0;
        for (const auto& s : parameters(copy)) total += s.size();
        EXPECT_EQ(parameter_count(models[m]), expected[m]);
        EXPECT_EQ(static_cast<Eigen::Index>(total), expected[m]);
    }
}

TEST(Model, KindOfFollowsVariant) {
    EXPECT_EQ(kind_of(Model{VclLayer::create(2, 2, 0)}), ModelKind::vcl);
    EXPECT_EQ(kind_of(Model{DclLayer::create(2, 2, 0)}), ModelKind::dcl);
    EXPECT_EQ(kind_of(Model{DeepDcl::create(2, {2}, 2, 2, 0)}), ModelKind::deep_dcl);
}

TEST(Model, VclEmbedRejectsWrongDimension) {
    EXPECT_THROW(embed(Model{VclLayer::create(3, 2, 0)}, Matrix::Zero(5, 4)), DataError);
}
