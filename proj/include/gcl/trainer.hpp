#pragma once

// Full-batch training of VCL / DCL / deep-DCL on the prototype loss.
//
// One epoch: forward -> assign -> CHL edges -> loss -> gradient -> update.
// Metrics are recorded before the update, so the trace entry for epoch e
// describes the parameters the e-th update started from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcl/datasets.hpp"
#include "gcl/error.hpp"
#include "gcl/layers.hpp"
#include "gcl/linalg.hpp"
#include "gcl/loss.hpp"

namespace gcl {

enum class OptimizerKind { adam, gd };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "gd"; }

inline std::optional<OptimizerKind> parse_optimizer(std::string_view s) {
    if (s == "adam") return OptimizerKind::adam;
    if (s == "gd" || s == "sgd") return OptimizerKind::gd;
    return std::nullopt;
}

inline constexpr double kVclLearningRate = 0.008;
inline constexpr double kDclLearningRate = 0.0008;
inline constexpr int kDefaultEpochs = 400;
inline constexpr int kDefaultPrototypes = 30;
inline constexpr double kDivergenceFactor = 1e6;

inline double default_learning_rate(ModelKind kind) {
    return kind == ModelKind::vcl ? kVclLearningRate : kDclLearningRate;
}

struct TrainConfig {
    ModelKind model_kind = ModelKind::dcl;
    int k = kDefaultPrototypes;
    int epochs = kDefaultEpochs;
    double learning_rate = kDclLearningRate;
    double lambda = kDefaultLambda;
    std::uint64_t seed = 0;
    int record_every = 1;
    OptimizerKind optimizer = OptimizerKind::adam;
    bool freeze_assignment = false;  // keep the epoch-0 Voronoi sets for the whole run
    bool dcl_bias = false;
    std::vector<int> hidden = {10, 10};  // deep-DCL encoder widths
    bool record_snapshots = true;        // prototype positions per recorded epoch
    bool record_weights = false;         // raw weights per recorded epoch (analysis)

    static TrainConfig defaults_for(ModelKind kind) {
        TrainConfig c;
        c.model_kind = kind;
        c.learning_rate = default_learning_rate(kind);
        return c;
    }

    void validate() const {
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
            throw DataError("learning rate must be positive");
        if (epochs < 1) throw DataError("epochs must be at least 1");
        if (k < 2) throw DataError("k must be at least 2");
        if (!(lambda >= 0.0)) throw DataError("lambda must be nonnegative");
        if (record_every < 1) throw DataError("record_every must be positive");
    }
};

struct MetricsTrace {
    std::vector<int> epochs;
    std::vector<double> quantization;
    std::vector<double> edge_norm;
    std::vector<int> valid_count;
    std::vector<PrototypeSet> snapshots;  // d x k (feature space for deep-DCL)
    std::vector<Matrix> weights;          // W1 or W2 when requested

    std::size_t size() const noexcept { return epochs.size(); }
};

struct TrainResult {
    Model model;
    MetricsTrace trace;
    PrototypeSet prototypes;       // final, in the competition space
    Matrix features;               // samples in the competition space
    VoronoiAssignment assignment;  // final (or the frozen one)
    EdgeMatrix edges;
    LossBreakdown loss;
    std::vector<std::string> warnings;
};

inline Model make_model(const TrainConfig& cfg, Eigen::Index d, Eigen::Index n) {
    switch (cfg.model_kind) {
        case ModelKind::vcl: return VclLayer::create(cfg.k, d, cfg.seed);
        case ModelKind::dcl: return DclLayer::create(cfg.k, n, cfg.seed, cfg.dcl_bias);
        case ModelKind::deep_dcl:
            return DeepDcl::create(d, cfg.hidden, cfg.k, n, cfg.seed, cfg.dcl_bias);
    }
    throw DataError("unknown model kind");
}

/// Gradients of every parameter array, flattened in the order of parameters().
inline std::vector<Vector> flat_gradients(const Model& model, const Matrix& X,
                                          const VoronoiAssignment& a, double lambda) {
    std::vector<Vector> out;
    auto add = [&out](const auto& m) {
        out.emplace_back(Eigen::Map<const Vector>(m.data(), m.size()));
    };
    if (const auto* v = std::get_if<VclLayer>(&model)) {
        add(grad_vcl(X, *v, a, lambda));
    } else if (const auto* d = std::get_if<DclLayer>(&model)) {
        const Matrix gP = grad_prototypes(X, dcl_forward(*d, X), a, lambda);
        add(Matrix(gP.transpose() * X));
        if (d->bias) add(Vector(gP.colwise().sum().transpose()));
    } else {
        const auto g = grad_deep(std::get<DeepDcl>(model), X, a, lambda);
        for (std::size_t l = 0; l < g.encoder_W.size(); ++l) {
            add(g.encoder_W[l]);
            add(g.encoder_b[l]);
        }
        add(g.head_W2);
        if (g.head_bias) add(*g.head_bias);
    }
    return out;
}

/// Plain gradient descent or Adam (beta1 0.9, beta2 0.999, eps 1e-7).
class Optimizer {
public:
    Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

    void step(const std::vector<std::span<double>>& params, const std::vector<Vector>& grads) {
        if (params.size() != grads.size()) throw DataError("optimizer: parameter/gradient mismatch");
        if (kind_ == OptimizerKind::gd) {
            for (std::size_t p = 0; p < params.size(); ++p) {
                Eigen::Map<Vector> w(params[p].data(), static_cast<Eigen::Index>(params[p].size()));
                w -= lr_ * grads[p];
            }
            return;
        }
        if (m_.empty()) {
            for (const auto& g : grads) {
                m_.push_back(Vector::Zero(g.size()));
                v_.push_back(Vector::Zero(g.size()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(kBeta1, t_);
        const double c2 = 1.0 - std::pow(kBeta2, t_);
        for (std::size_t p = 0; p < params.size(); ++p) {
            Eigen::Map<Vector> w(params[p].data(), static_cast<Eigen::Index>(params[p].size()));
            m_[p] = kBeta1 * m_[p] + (1.0 - kBeta1) * grads[p];
            v_[p] = kBeta2 * v_[p] + (1.0 - kBeta2) * grads[p].cwiseAbs2();
            w.array() -= lr_ * (m_[p].array() / c1) / ((v_[p].array() / c2).sqrt() + kEps);
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-7;

    OptimizerKind kind_;
    double lr_;
    int t_ = 0;
    std::vector<Vector> m_;
    std::vector<Vector> v_;
};

namespace detail {

inline Matrix raw_weights(const Model& m) {
    if (const auto* v = std::get_if<VclLayer>(&m)) return v->W1;
    if (const auto* d = std::get_if<DclLayer>(&m)) return d->W2;
    return std::get<DeepDcl>(m).head.W2;
}

} // namespace detail

/// Trains a fresh model. `frozen`, when given, replaces the Voronoi sets for
/// every epoch (and overrides cfg.freeze_assignment).
inline TrainResult train(const Dataset& ds, const TrainConfig& cfg,
                         const std::optional<VoronoiAssignment>& frozen = std::nullopt) {
    cfg.validate();
    const Matrix& X = ds.X.values();
    TrainResult r{make_model(cfg, X.rows(), X.cols()), {}, {}, {}, {}, {}, {}, {}};

    const RowVector means = X.rowwise().mean().transpose();
    if (means.cwiseAbs().maxCoeff() > 1e-6) {
        r.warnings.push_back("training data is not centered (max feature mean " +
                             std::to_string(means.cwiseAbs().maxCoeff()) + ")");
    }

    Optimizer opt(cfg.optimizer, cfg.learning_rate);
    std::optional<VoronoiAssignment> fixed = frozen;
    double q0 = 0.0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Embedding emb = embed(r.model, X);
        if (!fixed && cfg.freeze_assignment) fixed = assign(emb.features, emb.prototypes);
        const VoronoiAssignment a = fixed ? *fixed : assign(emb.features, emb.prototypes);
        const LossBreakdown loss = total_loss(emb.features, emb.prototypes, a, cfg.lambda);

        if (epoch == 0) q0 = loss.quantization;
        if (!std::isfinite(loss.total) ||
            loss.quantization > kDivergenceFactor * std::max(q0, 1e-300)) {
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                                      ": quantization error " + std::to_string(loss.quantization) +
                                      " (initial " + std::to_string(q0) + ")",
                                  epoch);
        }

        if (epoch % cfg.record_every == 0) {
            r.trace.epochs.push_back(epoch);
            r.trace.quantization.push_back(loss.quantization);
            r.trace.edge_norm.push_back(loss.edge_norm);
            r.trace.valid_count.push_back(valid_prototypes(a));
            if (cfg.record_snapshots) r.trace.snapshots.push_back(emb.prototypes);
            if (cfg.record_weights) r.trace.weights.push_back(detail::raw_weights(r.model));
        }

        opt.step(parameters(r.model), flat_gradients(r.model, X, a, cfg.lambda));
    }

    Embedding emb = embed(r.model, X);
    r.assignment = fixed ? *fixed : assign(emb.features, emb.prototypes);
    r.edges = chl_edges(r.assignment, emb.prototypes);
    r.loss = total_loss(emb.features, emb.prototypes, r.assignment, cfg.lambda);
    if (!std::isfinite(r.loss.total)) {
        throw DivergenceError("training diverged after the last epoch", cfg.epochs);
    }
    r.prototypes = std::move(emb.prototypes);
    r.features = std::move(emb.features);
    return r;
}

/// Majority-class accuracy of the winner partition: for every non-empty
/// Voronoi set the most frequent label counts as correct; the result is the
/// sample-weighted total.
inline double accuracy(const Matrix& features, const PrototypeSet& P, const std::vector<int>& labels) {
    if (static_cast<Eigen::Index>(labels.size()) != features.cols())
        throw DataError("accuracy: label count does not match sample count");
    if (P.cols() < 1) throw DataError("accuracy: no prototypes");
    const Matrix D = edm(features, P);
    int n_classes = 0;
    for (int l : labels) n_classes = std::max(n_classes, l + 1);
    Eigen::MatrixXi table = Eigen::MatrixXi::Zero(P.cols(), n_classes);
    for (Eigen::Index i = 0; i < D.rows(); ++i) {
        Eigen::Index w = 0;
        D.row(i).minCoeff(&w);
        ++table(w, labels[static_cast<std::size_t>(i)]);
    }
    long correct = 0;
    for (Eigen::Index j = 0; j < table.rows(); ++j) correct += table.row(j).maxCoeff();
    return static_cast<double>(correct) / static_cast<double>(features.cols());
}

inline double accuracy(const Model& model, const Dataset& ds) {
    if (!ds.labels) throw DataError("accuracy: dataset has no labels");
    const Embedding emb = embed(model, ds.X.values());
    return accuracy(emb.features, emb.prototypes, *ds.labels);
}

struct GridRow {
    std::size_t config_index = 0;
    TrainConfig config;
    double mean_quantization = 0.0;
    double mean_edge_norm = 0.0;
    std::vector<double> quantization;  // per repetition
};

/// Trains every config `repetitions` times (seed_r = config.seed + r) and
/// ranks by mean final quantization error, then by mean edge norm.
inline std::vector<GridRow> grid_search(const Dataset& ds, const std::vector<TrainConfig>& grid,
                                        int repetitions) {
    if (grid.empty()) throw DataError("grid_search: empty grid");
    if (repetitions < 1) throw DataError("grid_search: repetitions must be positive");
    std::vector<GridRow> rows;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        GridRow row{c, grid[c], 0.0, 0.0, {}};
        for (int rep = 0; rep < repetitions; ++rep) {
            TrainConfig cfg = grid[c];
            cfg.seed = grid[c].seed + static_cast<std::uint64_t>(rep);
            cfg.record_snapshots = false;
            const TrainResult res = train(ds, cfg);
            row.quantization.push_back(res.loss.quantization);
            row.mean_quantization += res.loss.quantization;
            row.mean_edge_norm += res.loss.edge_norm;
        }
        row.mean_quantization /= repetitions;
        row.mean_edge_norm /= repetitions;
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
        if (a.mean_quantization != b.mean_quantization) return a.mean_quantization < b.mean_quantization;
        return a.mean_edge_norm < b.mean_edge_norm;
    });
    return rows;
}

} // namespace gcl
