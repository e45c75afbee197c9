#pragma once

// JSON round-trips for configs, generator specs and models. Matrices are
// nested row-major arrays.

#include <string>

#include "json.hpp"

#include "gcl/datasets.hpp"
#include "gcl/error.hpp"
#include "gcl/layers.hpp"
#include "gcl/trainer.hpp"

namespace gcl {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline Matrix matrix_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw DataError(std::string(what) + ": expected a non-empty array of rows");
    }
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
            throw DataError(std::string(what) + ": row " + std::to_string(i) + " has the wrong length");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline json vector_to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Vector vector_from_json(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

inline json to_json(const GeneratorSpec& s) {
    return json{{"kind", to_string(s.kind)}, {"n_samples", s.n_samples}, {"n_features", s.n_features},
                {"noise", s.noise},          {"n_clusters", s.n_clusters}, {"seed", s.seed}};
}

inline GeneratorSpec generator_spec_from_json(const json& j) {
    GeneratorSpec s;
    const auto kind = parse_generator_kind(j.at("kind").get<std::string>());
    if (!kind) throw DataError("unknown dataset kind '" + j.at("kind").get<std::string>() + "'");
    s.kind = *kind;
    s.n_samples = j.at("n_samples").get<int>();
    s.n_features = j.at("n_features").get<int>();
    s.noise = j.at("noise").get<double>();
    s.n_clusters = j.at("n_clusters").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

inline json to_json(const TrainConfig& c) {
    return json{{"model", to_string(c.model_kind)},
                {"k", c.k},
                {"epochs", c.epochs},
                {"learning_rate", c.learning_rate},
                {"lambda", c.lambda},
                {"seed", c.seed},
                {"record_every", c.record_every},
                {"optimizer", to_string(c.optimizer)},
                {"freeze_assignment", c.freeze_assignment},
                {"dcl_bias", c.dcl_bias},
                {"hidden", c.hidden}};
}

inline TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    const auto kind = parse_model_kind(j.at("model").get<std::string>());
    if (!kind) throw DataError("unknown model kind '" + j.at("model").get<std::string>() + "'");
    c.model_kind = *kind;
    c.k = j.at("k").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.record_every = j.at("record_every").get<int>();
    const auto opt = parse_optimizer(j.at("optimizer").get<std::string>());
    if (!opt) throw DataError("unknown optimizer '" + j.at("optimizer").get<std::string>() + "'");
    c.optimizer = *opt;
    c.freeze_assignment = j.at("freeze_assignment").get<bool>();
    c.dcl_bias = j.at("dcl_bias").get<bool>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    return c;
}

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

inline json model_to_json(const Model& model, Eigen::Index d, Eigen::Index n, std::uint64_t seed) {
    json j{{"kind", to_string(kind_of(model))}, {"d", d}, {"n", n}, {"seed", seed},
           {"param_count", parameter_count(model)}};
    std::visit(
        [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, VclLayer>) {
                j["k"] = l.k();
                j["W1"] = matrix_to_json(l.W1);
            } else if constexpr (std::is_same_v<T, DclLayer>) {
                j["k"] = l.k();
                j["W2"] = matrix_to_json(l.W2);
                if (l.bias) j["bias"] = vector_to_json(*l.bias);
            } else {
                j["k"] = l.head.k();
                json enc = json::array();
                for (const auto& layer : l.encoder) {
                    enc.push_back({{"W", matrix_to_json(layer.W)},
                                   {"b", vector_to_json(layer.b)},
                                   {"activation", to_string(layer.activation)}});
                }
                j["encoder"] = std::move(enc);
                j["W2"] = matrix_to_json(l.head.W2);
                if (l.head.bias) j["bias"] = vector_to_json(*l.head.bias);
            }
        },
        model);
    return j;
}

inline Model model_from_json(const json& j) {
    const auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw DataError("model.json: unknown kind");
    auto head = [&j] {
        DclLayer h{matrix_from_json(j.at("W2"), "W2"), std::nullopt};
        if (j.contains("bias")) h.bias = vector_from_json(j.at("bias"));
        return h;
    };
    Model m;
    switch (*kind) {
        case ModelKind::vcl: m = VclLayer{matrix_from_json(j.at("W1"), "W1")}; break;
        case ModelKind::dcl: m = head(); break;
        case ModelKind::deep_dcl: {
            DeepDcl deep;
            for (const auto& e : j.at("encoder")) {
                deep.encoder.push_back(DenseLayer{
                    matrix_from_json(e.at("W"), "encoder W"), vector_from_json(e.at("b")),
                    e.at("activation").get<std::string>() == "tanh" ? Activation::tanh
                                                                   : Activation::identity});
            }
            deep.head = head();
            m = std::move(deep);
            break;
        }
    }
    if (parameter_count(m) != j.at("param_count").get<Eigen::Index>()) {
        throw DataError("model.json: parameter count does not match the stored weights");
    }
    return m;
}

} // namespace gcl
