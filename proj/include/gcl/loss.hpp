#pragma once

// Prototype loss L = Q + lambda * ||E||_F.
//
// Q is the mean squared distance of each sample to its first winner. E is
// the CHL edge matrix: every sample links its first and second winner, and
// the link carries (1/n) * ||p_a - p_b||^2, so long edges cost more. Winners
// are treated as constants when differentiating (they are piecewise
// constant in the parameters).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/layers.hpp"
#include "gcl/linalg.hpp"

namespace gcl {

inline constexpr double kDefaultLambda = 0.01;

struct VoronoiAssignment {
    std::vector<int> winner1;  // per sample
    std::vector<int> winner2;  // per sample
    std::vector<int> counts;   // per prototype

    std::size_t n() const noexcept { return winner1.size(); }
    std::size_t k() const noexcept { return counts.size(); }

    bool operator==(const VoronoiAssignment&) const = default;
};

struct EdgeMatrix {
    Matrix values;               // k x k, symmetric, zero diagonal
    Eigen::MatrixXi occupancy;   // k x k co-winner counts, symmetric
};

struct LossBreakdown {
    double quantization = 0.0;
    double edge_norm = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// First and second winners of every row of an n x k distance matrix.
/// Ties go to the lower prototype index.
inline VoronoiAssignment assign_from_edm(const Matrix& D) {
    const Eigen::Index n = D.rows();
    const Eigen::Index k = D.cols();
    if (k < 2) throw DataError("assign: CHL needs at least two prototypes");
    VoronoiAssignment a;
    a.winner1.resize(static_cast<std::size_t>(n));
    a.winner2.resize(static_cast<std::size_t>(n));
    a.counts.assign(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        int b1 = -1, b2 = -1;
        double d1 = std::numeric_limits<double>::infinity();
        double d2 = d1;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double v = D(i, j);
            if (v < d1 || b1 < 0) {
                b2 = b1;
                d2 = d1;
                b1 = static_cast<int>(j);
                d1 = v;
            } else if (v < d2 || b2 < 0) {
                b2 = static_cast<int>(j);
                d2 = v;
            }
        }
        a.winner1[static_cast<std::size_t>(i)] = b1;
        a.winner2[static_cast<std::size_t>(i)] = b2;
        ++a.counts[static_cast<std::size_t>(b1)];
    }
    return a;
}

inline VoronoiAssignment assign(const Matrix& X, const PrototypeSet& P) {
    if (P.cols() < 2) throw DataError("assign: CHL needs at least two prototypes");
    return assign_from_edm(edm(X, P));
}

namespace detail {

inline void check_assignment(const VoronoiAssignment& a, Eigen::Index n, Eigen::Index k) {
    if (static_cast<Eigen::Index>(a.n()) != n || static_cast<Eigen::Index>(a.k()) != k) {
        throw DataError("assignment does not match data/prototype shapes");
    }
}

} // namespace detail

inline EdgeMatrix chl_edges(const VoronoiAssignment& a, const PrototypeSet& P) {
    const Eigen::Index k = P.cols();
    detail::check_assignment(a, static_cast<Eigen::Index>(a.n()), k);
    EdgeMatrix e{Matrix::Zero(k, k), Eigen::MatrixXi::Zero(k, k)};
    for (std::size_t i = 0; i < a.n(); ++i) {
        const int w1 = a.winner1[i];
        const int w2 = a.winner2[i];
        ++e.occupancy(w1, w2);
        ++e.occupancy(w2, w1);
    }
    const double inv_n = a.n() ? 1.0 / static_cast<double>(a.n()) : 0.0;
    for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = r + 1; c < k; ++c) {
            if (e.occupancy(r, c) == 0) continue;
            const double w = e.occupancy(r, c) * inv_n * (P.col(r) - P.col(c)).squaredNorm();
            e.values(r, c) = w;
            e.values(c, r) = w;
        }
    }
    return e;
}

inline double quantization(const Matrix& X, const PrototypeSet& P, const VoronoiAssignment& a) {
    detail::check_assignment(a, X.cols(), P.cols());
    double q = 0.0;
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        q += (X.col(i) - P.col(a.winner1[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return q / static_cast<double>(X.cols());
}

/// Loss with a fixed (frozen) assignment.
inline LossBreakdown total_loss(const Matrix& X, const PrototypeSet& P,
                                const VoronoiAssignment& a, double lambda) {
    LossBreakdown l;
    l.quantization = quantization(X, P, a);
    l.edge_norm = chl_edges(a, P).values.norm();
    l.lambda = lambda;
    l.total = l.quantization + lambda * l.edge_norm;
    return l;
}

inline LossBreakdown total_loss(const Matrix& X, const PrototypeSet& P, double lambda) {
    return total_loss(X, P, assign(X, P), lambda);
}

/// dL/dP (d x k) with the assignment held fixed.
inline Matrix grad_prototypes(const Matrix& X, const PrototypeSet& P, const VoronoiAssignment& a,
                              double lambda) {
    detail::check_assignment(a, X.cols(), P.cols());
    const Eigen::Index k = P.cols();
    const double scale = 2.0 / static_cast<double>(X.cols());

    // Quantization: (2/n) (n_j p_j - sum_{i in V_j} x_i)
    Matrix sums = Matrix::Zero(P.rows(), k);
    for (Eigen::Index i = 0; i < X.cols(); ++i) sums.col(a.winner1[static_cast<std::size_t>(i)]) += X.col(i);
    Matrix g(P.rows(), k);
    for (Eigen::Index j = 0; j < k; ++j) {
        g.col(j) = scale * (a.counts[static_cast<std::size_t>(j)] * P.col(j) - sums.col(j));
    }

    if (lambda != 0.0) {
        const EdgeMatrix e = chl_edges(a, P);
        const double norm = e.values.norm();
        if (norm > 0.0) {
            // d||E||/dp_a = (4/||E||) sum_b E_ab (c_ab / n) (p_a - p_b)
            const double inv_n = 1.0 / static_cast<double>(a.n());
            for (Eigen::Index r = 0; r < k; ++r) {
                for (Eigen::Index c = 0; c < k; ++c) {
                    if (e.occupancy(r, c) == 0 || r == c) continue;
                    const double w = 4.0 * lambda / norm * e.values(r, c) * e.occupancy(r, c) * inv_n;
                    g.col(r) += w * (P.col(r) - P.col(c));
                }
            }
        }
    }
    return g;
}

/// dL/dX (d x n) through the samples themselves, prototypes held fixed.
/// Only the quantization term reads the samples directly.
inline Matrix grad_samples(const Matrix& X, const PrototypeSet& P, const VoronoiAssignment& a) {
    detail::check_assignment(a, X.cols(), P.cols());
    const double scale = 2.0 / static_cast<double>(X.cols());
    Matrix g(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        g.col(i) = scale * (X.col(i) - P.col(a.winner1[static_cast<std::size_t>(i)]));
    }
    return g;
}

/// Gradient w.r.t. W1 (k x d).
inline Matrix grad_vcl(const Matrix& X, const VclLayer& layer, const VoronoiAssignment& a,
                       double lambda) {
    return grad_prototypes(X, vcl_prototypes(layer), a, lambda).transpose();
}

/// Gradient w.r.t. W2 (k x n): chain rule through P = X W2^T gives
/// dL/dW2 = (dL/dP)^T X. Row j equals (2/n)(n_j X^T X Omega_j - X^T sum x_i)
/// plus the edge contribution.
inline Matrix grad_dcl(const Matrix& X, const DclLayer& layer, const VoronoiAssignment& a,
                       double lambda) {
    const Matrix gP = grad_prototypes(X, dcl_forward(layer, X), a, lambda);
    return gP.transpose() * X;
}

/// Gradient w.r.t. the optional DCL bias (k): column sums of dL/dP.
inline Vector grad_dcl_bias(const Matrix& X, const DclLayer& layer, const VoronoiAssignment& a,
                            double lambda) {
    const Matrix gP = grad_prototypes(X, dcl_forward(layer, X), a, lambda);
    return gP.colwise().sum().transpose();
}

struct DeepGradients {
    std::vector<Matrix> encoder_W;
    std::vector<Vector> encoder_b;
    Matrix head_W2;
    std::optional<Vector> head_bias;
};

/// Reverse-mode gradients of deep-DCL; the assignment is over the encoded
/// features and stays fixed.
inline DeepGradients grad_deep(const DeepDcl& model, const Matrix& X, const VoronoiAssignment& a,
                               double lambda) {
    const DeepForward fw = deep_forward_cached(model, X);
    const Matrix& H = fw.features;
    const Matrix gP = grad_prototypes(H, fw.prototypes, a, lambda);  // d1 x k

    DeepGradients g;
    g.head_W2 = gP.transpose() * H;
    if (model.head.bias) g.head_bias = gP.colwise().sum().transpose();

    // Features feed the loss twice: as samples and through P = H W2^T.
    Matrix dH = grad_samples(H, fw.prototypes, a) + gP * model.head.W2;

    const std::size_t L = model.encoder.size();
    g.encoder_W.resize(L);
    g.encoder_b.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = model.encoder[l];
        Matrix dZ = dH;
        if (layer.activation == Activation::tanh) {
            const Matrix& z = fw.pre_activation[l];
            dZ.array() *= 1.0 - z.array().tanh().square();
        }
        g.encoder_W[l] = dZ * fw.inputs[l].transpose();
        g.encoder_b[l] = dZ.rowwise().sum();
        if (l > 0) dH = layer.W.transpose() * dZ;
    }
    return g;
}

/// Number of prototypes with a non-empty Voronoi set.
inline int valid_prototypes(const VoronoiAssignment& a) {
    return static_cast<int>(std::count_if(a.counts.begin(), a.counts.end(), [](int c) { return c > 0; }));
}

/// Indices of prototypes that take part in at least one CHL edge.
inline std::vector<int> connected_prototypes(const EdgeMatrix& e) {
    std::vector<int> keep;
    for (Eigen::Index j = 0; j < e.occupancy.rows(); ++j) {
        if (e.occupancy.row(j).sum() > 0) keep.push_back(static_cast<int>(j));
    }
    return keep;
}

/// Drops lonely prototypes (no CHL edge).
inline PrototypeSet prune_lonely(const PrototypeSet& P, const EdgeMatrix& e) {
    const auto keep = connected_prototypes(e);
    PrototypeSet out(P.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = P.col(keep[c]);
    return out;
}

/// Connected components of the occupancy graph over non-lonely prototypes.
/// Returns a component id per prototype (-1 for lonely ones) and the count.
struct Components {
    std::vector<int> label;
    int count = 0;
};

inline Components occupancy_components(const EdgeMatrix& e) {
    const Eigen::Index k = e.occupancy.rows();
    Components c;
    c.label.assign(static_cast<std::size_t>(k), -1);
    std::vector<int> stack;
    for (Eigen::Index s = 0; s < k; ++s) {
        if (c.label[static_cast<std::size_t>(s)] >= 0 || e.occupancy.row(s).sum() == 0) continue;
        c.label[static_cast<std::size_t>(s)] = c.count;
        stack.push_back(static_cast<int>(s));
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (Eigen::Index v = 0; v < k; ++v) {
                if (e.occupancy(u, v) > 0 && c.label[static_cast<std::size_t>(v)] < 0) {
                    c.label[static_cast<std::size_t>(v)] = c.count;
                    stack.push_back(static_cast<int>(v));
                }
            }
        }
        ++c.count;
    }
    return c;
}

} // namespace gcl
