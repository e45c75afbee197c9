#pragma once

// Synthetic data generators (spiral, moons, circles, hypercube-vertex
// Gaussian clusters), standardization and CSV ingest/export.
//
// All generators are deterministic given their seed: the same spec always
// yields a bit-identical matrix on the same platform.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gcl/error.hpp"
#include "gcl/linalg.hpp"

namespace gcl {

struct Dataset {
    DataMatrix X;
    std::optional<std::vector<int>> labels;
    std::string name;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    Eigen::Index d() const noexcept { return X.d(); }
    Eigen::Index n() const noexcept { return X.n(); }

    int n_classes() const {
        if (!labels || labels->empty()) return 0;
        int m = 0;
        for (int l : *labels) m = std::max(m, l);
        return m + 1;
    }
};

enum class GeneratorKind { spiral, moons, circles, madelon };

inline std::string to_string(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::spiral: return "spiral";
        case GeneratorKind::moons: return "moons";
        case GeneratorKind::circles: return "circles";
        case GeneratorKind::madelon: return "madelon";
    }
    return "unknown";
}

inline std::optional<GeneratorKind> parse_generator_kind(std::string_view s) {
    if (s == "spiral") return GeneratorKind::spiral;
    if (s == "moons") return GeneratorKind::moons;
    if (s == "circles") return GeneratorKind::circles;
    if (s == "madelon") return GeneratorKind::madelon;
    return std::nullopt;
}

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::moons;
    int n_samples = 500;
    int n_features = 2;   // forced to 2 for the planar kinds
    double noise = 0.05;  // std of the additive noise (planar kinds) / blob std (madelon)
    int n_clusters = 2;
    std::uint64_t seed = 0;
};

namespace detail {

inline void require_positive_samples(int n, const char* who) {
    if (n <= 0) throw DataError(std::string(who) + ": sample count must be positive");
}

inline void require_nonnegative_noise(double noise, const char* who) {
    if (!(noise >= 0.0) || !std::isfinite(noise)) {
        throw DataError(std::string(who) + ": noise must be a finite nonnegative number");
    }
}

// n evenly spaced points on [lo, hi] (or [lo, hi) when endpoint is false).
inline std::vector<double> linspace(double lo, double hi, int n, bool endpoint) {
    std::vector<double> out(static_cast<std::size_t>(n));
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double step = (hi - lo) / (endpoint ? n - 1 : n);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
    return out;
}

inline void add_noise(Matrix& X, double noise, std::mt19937_64& rng) {
    if (noise == 0.0) return;
    std::normal_distribution<double> gauss(0.0, noise);
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, j) += gauss(rng);
}

} // namespace detail

/// Archimedean spiral r = theta, theta ~ U[pi/2, 7pi/2], one cluster.
inline constexpr double kSpiralThetaMin = 0.5 * std::numbers::pi;
inline constexpr double kSpiralThetaMax = 3.5 * std::numbers::pi;

inline Dataset gen_spiral(int n, double noise, std::uint64_t seed) {
    detail::require_positive_samples(n, "spiral");
    detail::require_nonnegative_noise(noise, "spiral");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> arc(kSpiralThetaMin, kSpiralThetaMax);
    Matrix X(2, n);
    for (int i = 0; i < n; ++i) {
        const double theta = arc(rng);
        X(0, i) = theta * std::cos(theta);
        X(1, i) = theta * std::sin(theta);
    }
    detail::add_noise(X, noise, rng);
    return Dataset{DataMatrix(std::move(X)), std::vector<int>(static_cast<std::size_t>(n), 0),
                   "spiral", seed, {}};
}

/// Two interleaved unit half circles; the second is offset by (1, -0.5).
inline Dataset gen_moons(int n, double noise, std::uint64_t seed) {
    detail::require_positive_samples(n, "moons");
    detail::require_nonnegative_noise(noise, "moons");
    const int n_out = n / 2;
    const int n_in = n - n_out;
    Matrix X(2, n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    const auto t_out = detail::linspace(0.0, std::numbers::pi, n_out, true);
    const auto t_in = detail::linspace(0.0, std::numbers::pi, n_in, true);
    for (int i = 0; i < n_out; ++i) {
        X(0, i) = std::cos(t_out[static_cast<std::size_t>(i)]);
        X(1, i) = std::sin(t_out[static_cast<std::size_t>(i)]);
        labels[static_cast<std::size_t>(i)] = 0;
    }
    for (int i = 0; i < n_in; ++i) {
        X(0, n_out + i) = 1.0 - std::cos(t_in[static_cast<std::size_t>(i)]);
        X(1, n_out + i) = 1.0 - std::sin(t_in[static_cast<std::size_t>(i)]) - 0.5;
        labels[static_cast<std::size_t>(n_out + i)] = 1;
    }
    std::mt19937_64 rng(seed);
    detail::add_noise(X, noise, rng);
    return Dataset{DataMatrix(std::move(X)), std::move(labels), "moons", seed, {}};
}

/// Two concentric circles of radius 1 (class 0) and 0.5 (class 1).
inline Dataset gen_circles(int n, double noise, std::uint64_t seed) {
    detail::require_positive_samples(n, "circles");
    detail::require_nonnegative_noise(noise, "circles");
    const int n_out = n / 2;
    const int n_in = n - n_out;
    Matrix X(2, n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    const auto t_out = detail::linspace(0.0, 2.0 * std::numbers::pi, n_out, false);
    const auto t_in = detail::linspace(0.0, 2.0 * std::numbers::pi, n_in, false);
    for (int i = 0; i < n_out; ++i) {
        X(0, i) = std::cos(t_out[static_cast<std::size_t>(i)]);
        X(1, i) = std::sin(t_out[static_cast<std::size_t>(i)]);
        labels[static_cast<std::size_t>(i)] = 0;
    }
    for (int i = 0; i < n_in; ++i) {
        X(0, n_out + i) = 0.5 * std::cos(t_in[static_cast<std::size_t>(i)]);
        X(1, n_out + i) = 0.5 * std::sin(t_in[static_cast<std::size_t>(i)]);
        labels[static_cast<std::size_t>(n_out + i)] = 1;
    }
    std::mt19937_64 rng(seed);
    detail::add_noise(X, noise, rng);
    return Dataset{DataMatrix(std::move(X)), std::move(labels), "circles", seed, {}};
}

/// Gaussian clusters around vertices of the hypercube {-scale, +scale}^n_features.
///
/// Vertices are drawn in antipodal pairs (v, -v); consecutive clusters go to
/// alternating classes, so every pair straddles the two classes. Samples are
/// split as evenly as possible over the clusters.
inline Dataset gen_madelon(int n_samples, int n_features, int n_clusters, std::uint64_t seed,
                           double cluster_std = 1.0, double scale = 1.0) {
    detail::require_positive_samples(n_samples, "madelon");
    if (n_features < 1) throw DataError("madelon: feature count must be positive");
    if (n_clusters < 2 || n_clusters % 2 != 0) {
        throw DataError("madelon: cluster count must be even and at least 2");
    }
    const int cap_bits = std::min(n_features, 20);
    if (static_cast<std::uint64_t>(n_clusters) > (std::uint64_t{1} << cap_bits)) {
        throw DataError("madelon: " + std::to_string(n_clusters) +
                        " distinct vertices requested but the hypercube has at most 2^" +
                        std::to_string(cap_bits));
    }
    if (n_samples < n_clusters) {
        throw DataError("madelon: fewer samples than clusters");
    }
    detail::require_nonnegative_noise(cluster_std, "madelon");

    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::set<std::vector<bool>> used;
    Matrix vertices(n_features, n_clusters);
    for (int pair = 0; pair < n_clusters / 2; ++pair) {
        std::vector<bool> bits(static_cast<std::size_t>(n_features));
        for (;;) {
            for (int f = 0; f < n_features; ++f) bits[static_cast<std::size_t>(f)] = coin(rng);
            std::vector<bool> flipped = bits;
            flipped.flip();
            if (!used.contains(bits) && !used.contains(flipped)) {
                used.insert(bits);
                used.insert(std::move(flipped));
                break;
            }
        }
        for (int f = 0; f < n_features; ++f) {
            const double v = bits[static_cast<std::size_t>(f)] ? scale : -scale;
            vertices(f, 2 * pair) = v;
            vertices(f, 2 * pair + 1) = -v;
        }
    }

    Matrix X(n_features, n_samples);
    std::vector<int> labels(static_cast<std::size_t>(n_samples));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int base = n_samples / n_clusters;
    const int extra = n_samples % n_clusters;
    int col = 0;
    for (int c = 0; c < n_clusters; ++c) {
        const int size = base + (c < extra ? 1 : 0);
        for (int s = 0; s < size; ++s, ++col) {
            for (int f = 0; f < n_features; ++f) {
                X(f, col) = vertices(f, c) + cluster_std * gauss(rng);
            }
            labels[static_cast<std::size_t>(col)] = c % 2;
        }
    }
    return Dataset{DataMatrix(std::move(X)), std::move(labels), "madelon", seed, {}};
}

inline Dataset generate(const GeneratorSpec& spec) {
    switch (spec.kind) {
        case GeneratorKind::spiral: return gen_spiral(spec.n_samples, spec.noise, spec.seed);
        case GeneratorKind::moons: return gen_moons(spec.n_samples, spec.noise, spec.seed);
        case GeneratorKind::circles: return gen_circles(spec.n_samples, spec.noise, spec.seed);
        case GeneratorKind::madelon:
            return gen_madelon(spec.n_samples, spec.n_features, spec.n_clusters, spec.seed,
                               spec.noise);
    }
    throw DataError("unknown generator kind");
}

/// Standardize every feature row to mean 0 and unit population variance.
/// Rows with (numerically) zero variance become all zeros and a warning is
/// appended to the dataset.
inline Dataset normalize(const Dataset& ds) {
    Dataset out = ds;
    Matrix X = ds.X.values();
    const double n = static_cast<double>(X.cols());
    for (Eigen::Index f = 0; f < X.rows(); ++f) {
        const double mean = X.row(f).sum() / n;
        X.row(f).array() -= mean;
        const double var = X.row(f).squaredNorm() / n;
        const double sd = std::sqrt(var);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
            X.row(f).setZero();
            out.warnings.push_back("feature " + std::to_string(f) +
                                   " has zero variance; set to zero");
            continue;
        }
        X.row(f) /= sd;
    }
    out.X = DataMatrix(std::move(X));
    return out;
}

// ---------------------------------------------------------------------------
// CSV: one row per sample, one column per feature, optional trailing
// "label" column. Values are written in shortest round-trip form.

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& os, const Dataset& ds) {
    const Matrix& X = ds.X.values();
    for (Eigen::Index f = 0; f < X.rows(); ++f) {
        if (f) os << ',';
        os << 'f' << f;
    }
    if (ds.labels) os << ",label";
    os << '\n';
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
        for (Eigen::Index f = 0; f < X.rows(); ++f) {
            if (f) os << ',';
            os << format_double(X(f, i));
        }
        if (ds.labels) os << ',' << (*ds.labels)[static_cast<std::size_t>(i)];
        os << '\n';
    }
}

inline void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path + " for writing");
    write_csv(os, ds);
    if (!os) throw DataError("write failed: " + path);
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace detail

inline Dataset read_csv(std::istream& is, const std::string& source = "<stream>") {
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) {
        if (detail::trim(line).empty()) continue;
        lines.push_back(line);
    }
    if (lines.size() < 2) throw DataError(source + ": no rows");

    const auto header = detail::split_csv_line(detail::trim(lines[0]));
    const bool has_labels = detail::trim(header.back()) == "label";
    const std::size_t n_cols = header.size();
    const std::size_t d = has_labels ? n_cols - 1 : n_cols;
    if (d == 0) throw DataError(source + ": header declares no feature columns");

    const std::size_t n = lines.size() - 1;
    Matrix X(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    std::vector<int> labels;
    if (has_labels) labels.resize(n);

    for (std::size_t r = 0; r < n; ++r) {
        const auto cells = detail::split_csv_line(detail::trim(lines[r + 1]));
        const std::size_t line_no = r + 2;
        if (cells.size() != n_cols) {
            throw DataError(source + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(n_cols));
        }
        for (std::size_t c = 0; c < d; ++c) {
            const auto cell = detail::trim(cells[c]);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size() ||
                !std::isfinite(v)) {
                throw DataError(source + ": row " + std::to_string(line_no) + ", column " +
                                std::to_string(c + 1) + ": not a finite number: '" +
                                std::string(cell) + "'");
            }
            X(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(r)) = v;
        }
        if (has_labels) {
            const auto cell = detail::trim(cells[d]);
            int l = 0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), l);
            if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size() ||
                l < 0) {
                throw DataError(source + ": row " + std::to_string(line_no) + ", column " +
                                std::to_string(d + 1) + ": invalid label '" + std::string(cell) +
                                "'");
            }
            labels[r] = l;
        }
    }
    Dataset ds{DataMatrix(std::move(X)), std::nullopt, source, 0, {}};
    if (has_labels) ds.labels = std::move(labels);
    return ds;
}

inline Dataset load_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    return read_csv(is, path);
}

} // namespace gcl
