#pragma once

// Multi-seed experiments and their on-disk bundles.
//
// A bundle directory holds
//   config.json        experiment spec and its FNV-1a hash
//   data.csv           the (normalized) training data
//   trace.csv          model, seed, epoch, quantization, edge_norm, valid_count
//   trajectories.csv   model, seed, epoch, prototype, x0..x{D-1}
//   model.json         final weights of every run
//   aggregate.csv      per model and epoch: mean and SEM over seeds
// Runs execute on a worker pool; results are always collected in
// (model, seed) order, so output never depends on the job count.

#include <atomic>
#include <charconv>
#include <cstring>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "gcl/analysis.hpp"
#include "gcl/datasets.hpp"
#include "gcl/error.hpp"
#include "gcl/serialize.hpp"
#include "gcl/svg.hpp"
#include "gcl/trainer.hpp"

namespace gcl {

/// Runs fn(0..count-1) on up to `jobs` threads and returns the results in
/// index order. The first failing index (by position) is rethrown.
template <class F>
auto parallel_map(std::size_t count, int jobs, F&& fn) {
    using R = std::invoke_result_t<F&, std::size_t>;
    std::vector<std::optional<R>> slots(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::max(1, jobs));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::min(threads, count); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(count);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct MeanSem {
    double mean = 0.0;
    double sem = 0.0;  // s / sqrt(R) with the (R - 1) sample deviation; 0 for R = 1
};

inline MeanSem mean_sem(const std::vector<double>& v) {
    MeanSem m;
    if (v.empty()) return m;
    for (double x : v) m.mean += x;
    m.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - m.mean) * (x - m.mean);
        const double s = std::sqrt(ss / static_cast<double>(v.size() - 1));
        m.sem = s / std::sqrt(static_cast<double>(v.size()));
    }
    return m;
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct ExperimentSpec {
    GeneratorSpec data;
    std::string input_path;          // when set, data is loaded instead of generated
    bool normalize_data = true;
    std::vector<TrainConfig> models; // one entry per compared model; seed is the base seed
    int repetitions = 10;

    void validate() const {
        if (models.empty()) throw DataError("experiment needs at least one model");
        if (repetitions < 1) throw DataError("repetitions must be at least 1");
        for (const auto& m : models) m.validate();
    }
};

inline json to_json(const ExperimentSpec& s) {
    json models = json::array();
    for (const auto& m : s.models) models.push_back(to_json(m));
    json j{{"data", to_json(s.data)},
           {"normalize", s.normalize_data},
           {"models", std::move(models)},
           {"repetitions", s.repetitions}};
    if (!s.input_path.empty()) j["input_path"] = s.input_path;
    return j;
}

inline ExperimentSpec experiment_spec_from_json(const json& j) {
    ExperimentSpec s;
    s.data = generator_spec_from_json(j.at("data"));
    s.normalize_data = j.at("normalize").get<bool>();
    for (const auto& m : j.at("models")) s.models.push_back(train_config_from_json(m));
    s.repetitions = j.at("repetitions").get<int>();
    if (j.contains("input_path")) s.input_path = j.at("input_path").get<std::string>();
    return s;
}

inline std::string spec_hash(const ExperimentSpec& s) { return hex64(fnv1a64(to_json(s).dump())); }

inline Dataset experiment_data(const ExperimentSpec& s) {
    Dataset ds = s.input_path.empty() ? generate(s.data) : load_csv(s.input_path);
    return s.normalize_data ? normalize(ds) : ds;
}

struct RunRecord {
    std::size_t model_index = 0;
    std::uint64_t seed = 0;
    TrainResult result;
};

struct TraceRow {
    std::string model;
    std::uint64_t seed = 0;
    int epoch = 0;
    double quantization = 0.0;
    double edge_norm = 0.0;
    int valid_count = 0;
};

struct AggregateRow {
    std::string model;
    int epoch = 0;
    int runs = 0;
    MeanSem quantization;
    MeanSem edge_norm;
    MeanSem valid_count;
};

/// Groups rows by model (first-appearance order) and epoch; values enter the
/// reductions in row order.
inline std::vector<AggregateRow> aggregate(const std::vector<TraceRow>& rows) {
    std::vector<std::string> order;
    std::map<std::string, std::map<int, std::vector<const TraceRow*>>> groups;
    for (const auto& r : rows) {
        if (!groups.count(r.model)) order.push_back(r.model);
        groups[r.model][r.epoch].push_back(&r);
    }
    std::vector<AggregateRow> out;
    for (const auto& model : order) {
        for (const auto& [epoch, members] : groups[model]) {
            std::vector<double> q, e, v;
            for (const auto* m : members) {
                q.push_back(m->quantization);
                e.push_back(m->edge_norm);
                v.push_back(m->valid_count);
            }
            out.push_back(AggregateRow{model, epoch, static_cast<int>(members.size()), mean_sem(q),
                                       mean_sem(e), mean_sem(v)});
        }
    }
    return out;
}

struct ExperimentResult {
    ExperimentSpec spec;
    Dataset data;
    std::vector<RunRecord> runs;  // ordered by (model_index, seed)

    std::vector<TraceRow> trace_rows() const {
        std::vector<TraceRow> rows;
        for (const auto& run : runs) {
            const auto& t = run.result.trace;
            const std::string name = to_string(spec.models[run.model_index].model_kind);
            for (std::size_t e = 0; e < t.size(); ++e) {
                rows.push_back(TraceRow{name, run.seed, t.epochs[e], t.quantization[e], t.edge_norm[e],
                                        t.valid_count[e]});
            }
        }
        return rows;
    }
    std::vector<AggregateRow> aggregate() const { return gcl::aggregate(trace_rows()); }
};

inline ExperimentResult run_experiment(const ExperimentSpec& spec, int jobs = 1) {
    spec.validate();
    ExperimentResult res{spec, experiment_data(spec), {}};
    const std::size_t R = static_cast<std::size_t>(spec.repetitions);
    res.runs = parallel_map(spec.models.size() * R, jobs, [&](std::size_t idx) {
        const std::size_t m = idx / R;
        TrainConfig cfg = spec.models[m];
        cfg.seed = spec.models[m].seed + idx % R;
        return RunRecord{m, cfg.seed, train(res.data, cfg)};
    });
    return res;
}

// ---------------------------------------------------------------------------
// Bundle files

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw DataError("cannot open " + p.string() + " for writing");
    os << text;
    if (!os) throw DataError("write failed: " + p.string());
}

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw DataError("missing or unreadable file: " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name, const std::string& source) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw DataError(source + ": missing column '" + name + "'");
    }
};

inline CsvTable read_table(const std::filesystem::path& p) {
    std::istringstream is(read_text(p));
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        for (auto c : split_csv_line(trim(line))) cells.emplace_back(trim(c));
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size()) {
                throw DataError(p.string() + ": row " + std::to_string(line_no) + " has " +
                                std::to_string(cells.size()) + " cells, expected " +
                                std::to_string(t.header.size()));
            }
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw DataError(p.string() + ": no rows");
    return t;
}

template <class T>
T parse_cell(const std::string& cell, const std::string& where) {
    T v{};
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw DataError(where + ": cannot parse '" + cell + "'");
    }
    return v;
}

} // namespace detail

inline std::string trace_csv(const std::vector<TraceRow>& rows) {
    std::string s = "model,seed,epoch,quantization,edge_norm,valid_count\n";
    for (const auto& r : rows) {
        s += r.model + ',' + std::to_string(r.seed) + ',' + std::to_string(r.epoch) + ',' +
             format_double(r.quantization) + ',' + format_double(r.edge_norm) + ',' +
             std::to_string(r.valid_count) + '\n';
    }
    return s;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::string s =
        "model,epoch,runs,quantization_mean,quantization_sem,edge_norm_mean,edge_norm_sem,"
        "valid_count_mean,valid_count_sem\n";
    for (const auto& r : rows) {
        s += r.model + ',' + std::to_string(r.epoch) + ',' + std::to_string(r.runs) + ',' +
             format_double(r.quantization.mean) + ',' + format_double(r.quantization.sem) + ',' +
             format_double(r.edge_norm.mean) + ',' + format_double(r.edge_norm.sem) + ',' +
             format_double(r.valid_count.mean) + ',' + format_double(r.valid_count.sem) + '\n';
    }
    return s;
}

inline std::string trajectories_csv(const ExperimentResult& res) {
    Eigen::Index dims = 0;
    for (const auto& run : res.runs)
        for (const auto& s : run.result.trace.snapshots) dims = std::max(dims, s.rows());
    std::string s = "model,seed,epoch,prototype";
    for (Eigen::Index f = 0; f < dims; ++f) s += ",x" + std::to_string(f);
    s += '\n';
    for (const auto& run : res.runs) {
        const auto& t = run.result.trace;
        const std::string name = to_string(res.spec.models[run.model_index].model_kind);
        for (std::size_t e = 0; e < t.snapshots.size(); ++e) {
            const PrototypeSet& P = t.snapshots[e];
            for (Eigen::Index j = 0; j < P.cols(); ++j) {
                s += name + ',' + std::to_string(run.seed) + ',' + std::to_string(t.epochs[e]) + ',' +
                     std::to_string(j);
                for (Eigen::Index f = 0; f < dims; ++f) {
                    s += ',';
                    if (f < P.rows()) s += format_double(P(f, j));
                }
                s += '\n';
            }
        }
    }
    return s;
}

inline void write_bundle(const ExperimentResult& res, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const json config{{"spec", to_json(res.spec)},
                      {"spec_hash", spec_hash(res.spec)},
                      {"time_mapping", "t = 2 * learning_rate * n_j * epoch / n"}};
    detail::write_text(dir / "config.json", config.dump(2) + "\n");
    save_csv(res.data, (dir / "data.csv").string());
    const auto rows = res.trace_rows();
    detail::write_text(dir / "trace.csv", trace_csv(rows));
    detail::write_text(dir / "aggregate.csv", aggregate_csv(aggregate(rows)));
    detail::write_text(dir / "trajectories.csv", trajectories_csv(res));
    json models = json::array();
    for (const auto& run : res.runs) {
        models.push_back(model_to_json(run.result.model, res.data.d(), res.data.n(), run.seed));
    }
    detail::write_text(dir / "model.json", json{{"models", std::move(models)}}.dump(2) + "\n");
}

struct Bundle {
    std::filesystem::path dir;
    ExperimentSpec spec;
    std::string hash;
    Dataset data;
    std::vector<TraceRow> trace;
    std::vector<AggregateRow> aggregate;
};

inline std::vector<TraceRow> load_trace(const std::filesystem::path& p) {
    const auto t = detail::read_table(p);
    const std::string src = p.string();
    const std::size_t cm = t.column("model", src), cs = t.column("seed", src), ce = t.column("epoch", src),
                      cq = t.column("quantization", src), cn = t.column("edge_norm", src),
                      cv = t.column("valid_count", src);
    std::vector<TraceRow> rows;
    for (const auto& r : t.rows) {
        rows.push_back(TraceRow{r[cm], detail::parse_cell<std::uint64_t>(r[cs], src),
                                detail::parse_cell<int>(r[ce], src), detail::parse_cell<double>(r[cq], src),
                                detail::parse_cell<double>(r[cn], src), detail::parse_cell<int>(r[cv], src)});
    }
    return rows;
}

inline std::vector<AggregateRow> load_aggregate(const std::filesystem::path& p) {
    const auto t = detail::read_table(p);
    const std::string src = p.string();
    std::vector<AggregateRow> rows;
    for (const auto& r : t.rows) {
        auto d = [&](const char* name) { return detail::parse_cell<double>(r[t.column(name, src)], src); };
        rows.push_back(AggregateRow{r[t.column("model", src)],
                                    detail::parse_cell<int>(r[t.column("epoch", src)], src),
                                    detail::parse_cell<int>(r[t.column("runs", src)], src),
                                    {d("quantization_mean"), d("quantization_sem")},
                                    {d("edge_norm_mean"), d("edge_norm_sem")},
                                    {d("valid_count_mean"), d("valid_count_sem")}});
    }
    return rows;
}

inline Bundle load_bundle(const std::filesystem::path& dir) {
    Bundle b;
    b.dir = dir;
    json config;
    try {
        config = json::parse(detail::read_text(dir / "config.json"));
        b.spec = experiment_spec_from_json(config.at("spec"));
        b.hash = config.at("spec_hash").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError((dir / "config.json").string() + ": " + e.what());
    }
    b.data = load_csv((dir / "data.csv").string());
    b.trace = load_trace(dir / "trace.csv");
    b.aggregate = load_aggregate(dir / "aggregate.csv");
    return b;
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

inline bool same_bits(const AggregateRow& a, const AggregateRow& b) {
    return a.model == b.model && a.epoch == b.epoch && a.runs == b.runs &&
           same_bits(a.quantization.mean, b.quantization.mean) && same_bits(a.quantization.sem, b.quantization.sem) &&
           same_bits(a.edge_norm.mean, b.edge_norm.mean) && same_bits(a.edge_norm.sem, b.edge_norm.sem) &&
           same_bits(a.valid_count.mean, b.valid_count.mean) && same_bits(a.valid_count.sem, b.valid_count.sem);
}

/// Snapshots per (model, seed), read back from trajectories.csv.
struct TrajectorySet {
    std::string model;
    std::uint64_t seed = 0;
    std::vector<int> epochs;
    std::vector<PrototypeSet> snapshots;
};

inline std::vector<TrajectorySet> load_trajectories(const std::filesystem::path& p) {
    const auto t = detail::read_table(p);
    const std::string src = p.string();
    const std::size_t cm = t.column("model", src), cs = t.column("seed", src), ce = t.column("epoch", src),
                      cp = t.column("prototype", src);
    std::vector<std::size_t> coord_cols;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c].size() > 1 && t.header[c][0] == 'x') coord_cols.push_back(c);

    std::vector<TrajectorySet> out;
    std::vector<std::vector<Vector>> pending;  // columns of the snapshot being assembled
    for (const auto& r : t.rows) {
        const auto seed = detail::parse_cell<std::uint64_t>(r[cs], src);
        const int epoch = detail::parse_cell<int>(r[ce], src);
        const int proto = detail::parse_cell<int>(r[cp], src);
        if (out.empty() || out.back().model != r[cm] || out.back().seed != seed) {
            out.push_back(TrajectorySet{r[cm], seed, {}, {}});
        }
        auto& set = out.back();
        if (set.epochs.empty() || set.epochs.back() != epoch) {
            set.epochs.push_back(epoch);
            set.snapshots.emplace_back();
        }
        std::vector<double> coords;
        for (std::size_t c : coord_cols) {
            if (r[c].empty()) break;
            coords.push_back(detail::parse_cell<double>(r[c], src));
        }
        PrototypeSet& P = set.snapshots.back();
        if (P.size() == 0) P.resize(static_cast<Eigen::Index>(coords.size()), 0);
        if (proto != P.cols() || static_cast<Eigen::Index>(coords.size()) != P.rows()) {
            throw DataError(src + ": prototype rows out of order or ragged at epoch " + std::to_string(epoch));
        }
        P.conservativeResize(Eigen::NoChange, P.cols() + 1);
        for (std::size_t f = 0; f < coords.size(); ++f) P(static_cast<Eigen::Index>(f), proto) = coords[f];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bundle analysis

struct AnalysisOutput {
    json report;
    std::string rates_svg;
    std::string residuals_svg;
};

/// Fits per-mode decay rates of every valid prototype in the prototype space
/// and tracks the distance of the prototypes to R(X). VCL modes are the
/// coordinate axes with rate 1; DCL modes are the left singular vectors u_i
/// with rate sigma_i^2 (X v_i = sigma_i u_i). Deep-DCL runs are skipped.
inline AnalysisOutput analyze_bundle(const std::filesystem::path& dir) {
    const Bundle b = load_bundle(dir);
    const auto trajectories = load_trajectories(dir / "trajectories.csv");
    const Matrix& X = b.data.X.values();
    const Eigen::Index n = X.cols();
    const SvdFactors f = svd(X);
    const Eigen::Index r = f.rank(kPinvRelTol);
    const Matrix proj = f.U.leftCols(r) * f.U.leftCols(r).transpose();

    const DualityReport dual = duality_checks(X);
    json report{{"spec_hash", b.hash},
                {"time_mapping", "t = 2 * learning_rate * n_j * epoch / n"},
                {"duality",
                 {{"rank", dual.rank},
                  {"base_whiteness", dual.base_whiteness},
                  {"complete_duality", dual.complete_duality},
                  {"u_recovery_error", dual.u_recovery_error}}},
                {"singular_values", vector_to_json(f.singular_values)}};
    json runs = json::array();

    std::vector<std::pair<std::string, std::vector<svg::Point>>> rate_groups;
    std::map<std::string, std::map<int, std::vector<double>>> residual_by_model;
    std::vector<std::string> model_order;

    for (const auto& set : trajectories) {
        const auto kind = parse_model_kind(set.model);
        if (!kind || *kind == ModelKind::deep_dcl || set.snapshots.empty()) continue;
        const TrainConfig* cfg = nullptr;
        for (const auto& m : b.spec.models)
            if (m.model_kind == *kind) cfg = &m;
        if (!cfg) throw DataError("trajectories.csv: model '" + set.model + "' is not in config.json");
        if (set.snapshots.front().rows() != X.rows())
            throw DataError("trajectories.csv: prototype dimension does not match data.csv");

        const bool frozen = cfg->freeze_assignment;
        const VoronoiAssignment a = assign(X, frozen ? set.snapshots.front() : set.snapshots.back());
        const PrototypeSet mu = voronoi_centroids(X, a);
        const Matrix basis = *kind == ModelKind::vcl ? Matrix::Identity(X.rows(), X.rows()) : f.U;

        if (std::find(model_order.begin(), model_order.end(), set.model) == model_order.end()) {
            model_order.push_back(set.model);
            rate_groups.emplace_back(set.model, std::vector<svg::Point>{});
        }
        auto& points = std::find_if(rate_groups.begin(), rate_groups.end(),
                                    [&](const auto& g) { return g.first == set.model; })->second;

        json protos = json::array();
        for (Eigen::Index j = 0; j < mu.cols(); ++j) {
            const int nj = a.counts[static_cast<std::size_t>(j)];
            if (nj == 0) continue;
            Matrix traj(X.rows(), static_cast<Eigen::Index>(set.snapshots.size()));
            for (std::size_t e = 0; e < set.snapshots.size(); ++e) traj.col(static_cast<Eigen::Index>(e)) = set.snapshots[e].col(j);
            const Vector limit = *kind == ModelKind::vcl ? Vector(mu.col(j)) : Vector(proj * mu.col(j));
            const double ts = flow_time_scale(cfg->learning_rate, nj, n);
            const auto fits = fit_decay_rates(traj, set.epochs, basis, limit, ts);
            json modes = json::array();
            for (const auto& fm : fits) {
                double predicted = 1.0;
                if (*kind == ModelKind::dcl) {
                    predicted = fm.index < r ? f.singular_values(fm.index) * f.singular_values(fm.index) : 0.0;
                }
                // One discrete step multiplies a mode by (1 - ts * rate).
                const double step = ts * predicted;
                json mj{{"mode", fm.index}, {"observable", fm.observable},
                        {"initial_amplitude", fm.initial_amplitude}, {"predicted_rate", predicted},
                        {"predicted_rate_discrete", step < 1.0 ? json(-std::log1p(-step) / ts) : json(nullptr)}};
                if (fm.observable) {
                    mj["fitted_rate"] = -fm.slope;
                    points.push_back(svg::Point{predicted, -fm.slope});
                }
                modes.push_back(std::move(mj));
            }
            std::vector<double> curve;
            for (Eigen::Index e = 0; e < traj.cols(); ++e) curve.push_back((traj.col(e) - proj * traj.col(e)).norm());
            const auto t0 = transient_index(curve);
            for (std::size_t e = 0; e < curve.size(); ++e) residual_by_model[set.model][set.epochs[e]].push_back(curve[e]);
            protos.push_back({{"prototype", j},
                              {"n_j", nj},
                              {"time_scale", ts},
                              {"modes", std::move(modes)},
                              {"range_residual_first", curve.front()},
                              {"range_residual_last", curve.back()},
                              {"transient_epoch", t0 ? json(set.epochs[*t0]) : json(nullptr)}});
        }
        runs.push_back({{"model", set.model},
                        {"seed", set.seed},
                        {"assignment", frozen ? "initial" : "final"},
                        {"prototypes", std::move(protos)}});
    }
    report["runs"] = std::move(runs);

    json curves = json::object();
    std::vector<svg::Series> series;
    for (const auto& model : model_order) {
        svg::Series s{model, {}, {}, {}};
        json c = json::array();
        for (const auto& [epoch, vals] : residual_by_model[model]) {
            const MeanSem ms = mean_sem(vals);
            s.x.push_back(epoch);
            s.y.push_back(ms.mean);
            c.push_back({{"epoch", epoch}, {"mean_residual", ms.mean}});
        }
        curves[model] = std::move(c);
        series.push_back(std::move(s));
    }
    report["range_residual_curves"] = std::move(curves);

    AnalysisOutput out;
    out.report = std::move(report);
    out.rates_svg = svg::scatter_plot("Fitted vs predicted decay rates", "predicted rate", "fitted rate",
                                      rate_groups, true);
    out.residuals_svg = svg::line_plot("Distance of prototypes to R(X)", "epoch", "mean residual", series);
    return out;
}

} // namespace gcl
