#pragma once

// Competitive layers.
//
//   VCL       prototypes are the rows of W1 (k x d); nothing is computed.
//   DCL       prototypes are the outputs Y2 = W2 X^T (k x d, stored here as
//             the d x k matrix X W2^T); W2 is k x n, bound to the training set.
//   deep-DCL  a dense encoder maps every sample to d1 features; a DCL head
//             then works on the encoded, transposed feature matrix.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/linalg.hpp"

namespace gcl {

/// splitmix64 finalizer; derives independent child seeds from one seed.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Glorot (Xavier) normal initialization: N(0, 2 / (rows + cols)).
inline Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    if (rows < 1 || cols < 1) throw DataError("glorot_init: dimensions must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
    Matrix W(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) W(i, j) = gauss(rng);
    return W;
}

enum class ModelKind { vcl, dcl, deep_dcl };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::vcl: return "vcl";
        case ModelKind::dcl: return "dcl";
        case ModelKind::deep_dcl: return "deep_dcl";
    }
    return "unknown";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view s) {
    if (s == "vcl") return ModelKind::vcl;
    if (s == "dcl") return ModelKind::dcl;
    if (s == "deep_dcl" || s == "deep-dcl" || s == "deep") return ModelKind::deep_dcl;
    return std::nullopt;
}

struct VclLayer {
    Matrix W1;  // k x d, row j is prototype j

    static VclLayer create(Eigen::Index k, Eigen::Index d, std::uint64_t seed) {
        return VclLayer{glorot_init(k, d, seed)};
    }
    Eigen::Index k() const noexcept { return W1.rows(); }
    Eigen::Index d() const noexcept { return W1.cols(); }
    Eigen::Index parameter_count() const noexcept { return W1.size(); }
};

struct DclLayer {
    Matrix W2;                    // k x n, row j is Omega_j
    std::optional<Vector> bias;   // k, one scalar per output neuron

    static DclLayer create(Eigen::Index k, Eigen::Index n, std::uint64_t seed,
                           bool with_bias = false) {
        DclLayer layer{glorot_init(k, n, seed), std::nullopt};
        if (with_bias) layer.bias = Vector::Zero(k);
        return layer;
    }
    Eigen::Index k() const noexcept { return W2.rows(); }
    Eigen::Index n() const noexcept { return W2.cols(); }
    Eigen::Index parameter_count() const noexcept {
        return W2.size() + (bias ? bias->size() : 0);
    }
};

enum class Activation { identity, tanh };

struct DenseLayer {
    Matrix W;  // out x in
    Vector b;  // out
    Activation activation = Activation::tanh;

    Eigen::Index in() const noexcept { return W.cols(); }
    Eigen::Index out() const noexcept { return W.rows(); }
};

struct DeepDcl {
    std::vector<DenseLayer> encoder;
    DclLayer head;

    /// Encoder d -> widths[0] -> ... -> widths.back() (= d1). Every layer but
    /// the last uses tanh; the last is linear. Biases start at zero.
    static DeepDcl create(Eigen::Index d, const std::vector<int>& widths, Eigen::Index k,
                          Eigen::Index n, std::uint64_t seed, bool head_bias = false) {
        DeepDcl model;
        Eigen::Index in = d;
        for (std::size_t l = 0; l < widths.size(); ++l) {
            const Eigen::Index out = widths[l];
            if (out < 1) throw DataError("deep-DCL: encoder widths must be positive");
            DenseLayer layer{glorot_init(out, in, mix_seed(seed, l + 1)), Vector::Zero(out),
                             l + 1 == widths.size() ? Activation::identity : Activation::tanh};
            model.encoder.push_back(std::move(layer));
            in = out;
        }
        model.head = DclLayer::create(k, n, mix_seed(seed, 0), head_bias);
        return model;
    }

    Eigen::Index input_dim() const {
        return encoder.empty() ? -1 : encoder.front().in();
    }
    Eigen::Index feature_dim(Eigen::Index d) const {
        return encoder.empty() ? d : encoder.back().out();
    }
    Eigen::Index parameter_count() const {
        Eigen::Index c = head.parameter_count();
        for (const auto& l : encoder) c += l.W.size() + l.b.size();
        return c;
    }
};

/// Prototypes of a VCL: W1^T (d x k). No forward pass is involved.
inline PrototypeSet vcl_prototypes(const VclLayer& layer) { return layer.W1.transpose(); }

/// Prototypes of a DCL: (W2 X^T)^T = X W2^T, d x k. Component f of every
/// prototype only reads feature row f of X.
inline PrototypeSet dcl_forward(const DclLayer& layer, const Matrix& X) {
    if (X.cols() != layer.n()) {
        throw DataError("dcl_forward: layer is bound to " + std::to_string(layer.n()) +
                        " samples but X has " + std::to_string(X.cols()));
    }
    PrototypeSet P = X * layer.W2.transpose();
    if (layer.bias) P.rowwise() += layer.bias->transpose();
    return P;
}

inline Matrix apply_activation(Activation a, const Matrix& z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh: return z.array().tanh().matrix();
    }
    return z;
}

/// Forward pass of deep-DCL, keeping every intermediate for backprop.
struct DeepForward {
    std::vector<Matrix> inputs;       // input to each encoder layer (inputs[0] = X)
    std::vector<Matrix> pre_activation;
    Matrix features;                  // d1 x n
    PrototypeSet prototypes;          // d1 x k
};

inline DeepForward deep_forward_cached(const DeepDcl& model, const Matrix& X) {
    DeepForward fw;
    Matrix h = X;
    for (std::size_t l = 0; l < model.encoder.size(); ++l) {
        const auto& layer = model.encoder[l];
        if (layer.in() != h.rows()) {
            throw DataError("deep_forward: encoder layer " + std::to_string(l) + " expects " +
                            std::to_string(layer.in()) + " inputs, got " +
                            std::to_string(h.rows()));
        }
        Matrix z = layer.W * h;
        z.colwise() += layer.b;
        fw.inputs.push_back(std::move(h));
        h = apply_activation(layer.activation, z);
        fw.pre_activation.push_back(std::move(z));
    }
    fw.prototypes = dcl_forward(model.head, h);
    fw.features = std::move(h);
    return fw;
}

struct DeepOutput {
    Matrix features;          // d1 x n
    PrototypeSet prototypes;  // d1 x k
};

inline DeepOutput deep_forward(const DeepDcl& model, const Matrix& X) {
    auto fw = deep_forward_cached(model, X);
    return DeepOutput{std::move(fw.features), std::move(fw.prototypes)};
}

using Model = std::variant<VclLayer, DclLayer, DeepDcl>;

inline ModelKind kind_of(const Model& m) {
    return static_cast<ModelKind>(m.index());
}

inline Eigen::Index parameter_count(const Model& m) {
    return std::visit([](const auto& l) { return l.parameter_count(); }, m);
}

/// The space where competition happens: the raw samples for VCL/DCL, the
/// encoded features for deep-DCL, together with the prototypes living there.
struct Embedding {
    Matrix features;
    PrototypeSet prototypes;
};

inline Embedding embed(const Model& model, const Matrix& X) {
    if (const auto* v = std::get_if<VclLayer>(&model)) {
        if (v->d() != X.rows()) {
            throw DataError("VCL has " + std::to_string(v->d()) + " input features, data has " +
                            std::to_string(X.rows()));
        }
        return Embedding{X, vcl_prototypes(*v)};
    }
    if (const auto* d = std::get_if<DclLayer>(&model)) return Embedding{X, dcl_forward(*d, X)};
    auto out = deep_forward(std::get<DeepDcl>(model), X);
    return Embedding{std::move(out.features), std::move(out.prototypes)};
}

/// Flat views over every trainable array of a model, in a fixed order.
inline std::vector<std::span<double>> parameters(Model& model) {
    std::vector<std::span<double>> out;
    auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<std::size_t>(m.size())); };
    std::visit(
        [&](auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, VclLayer>) {
                add(l.W1);
            } else if constexpr (std::is_same_v<T, DclLayer>) {
                add(l.W2);
                if (l.bias) add(*l.bias);
            } else {
                for (auto& layer : l.encoder) {
                    add(layer.W);
                    add(layer.b);
                }
                add(l.head.W2);
                if (l.head.bias) add(*l.head.bias);
            }
        },
        model);
    return out;
}

} // namespace gcl
