// gcl: command-line runner for competitive-layer experiments.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 training diverged.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gcl/gcl.hpp"

namespace fs = std::filesystem;
using namespace gcl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataOptions {
    std::string kind = "moons";
    int n = 500;
    int features = 2;
    double noise = 0.05;
    int clusters = 2;
    std::uint64_t seed = 0;
    std::string input;
    bool raw = false;
    bool noise_given = false;  // --noise seen on the command line or in the config
};

struct TrainOptions {
    int k = kDefaultPrototypes;
    int epochs = kDefaultEpochs;
    double lr = 0.0;  // 0: per-model default
    double lambda = kDefaultLambda;
    std::string optimizer = "adam";
    bool dcl_bias = false;
    bool freeze = false;
    int record_every = 1;
    std::vector<int> hidden = {10, 10};
};

struct RunOptions {
    int reps = 10;
    int jobs = 1;
    std::string out;
};

const std::vector<std::string> kDataKinds = {"spiral", "moons", "circles", "madelon"};
const std::vector<std::string> kModelKinds = {"vcl", "dcl", "deep_dcl", "deep-dcl", "deep"};

void add_data_options(CLI::App* sub, DataOptions& o) {
    sub->add_option("--kind", o.kind, "dataset: spiral, moons, circles or madelon")
        ->check(CLI::IsMember(kDataKinds))
        ->capture_default_str();
    sub->add_option("--n", o.n, "number of samples")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--features", o.features, "feature count (madelon only)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--noise", o.noise, "noise std (default 0.05, madelon 1.0)")->check(CLI::NonNegativeNumber);
    sub->add_option("--clusters", o.clusters, "madelon cluster count")->capture_default_str();
    sub->add_option("--seed", o.seed, "base seed")->capture_default_str();
    sub->add_flag("--raw", o.raw, "skip normalization to zero mean / unit variance");
}

void add_train_options(CLI::App* sub, TrainOptions& o) {
    sub->add_option("--k", o.k, "number of prototypes")->capture_default_str();
    sub->add_option("--epochs", o.epochs, "full-batch epochs")->capture_default_str();
    sub->add_option("--lr", o.lr, "learning rate (default 0.008 VCL, 0.0008 DCL)");
    sub->add_option("--lambda", o.lambda, "edge-term weight")->capture_default_str();
    sub->add_option("--optimizer", o.optimizer, "adam or gd")
        ->check(CLI::IsMember({"adam", "gd", "sgd"}))
        ->capture_default_str();
    sub->add_flag("--dcl-bias", o.dcl_bias, "add a bias to every DCL output neuron");
    sub->add_flag("--freeze", o.freeze, "keep the initial Voronoi sets for the whole run");
    sub->add_option("--record-every", o.record_every, "trace stride in epochs")->capture_default_str();
    sub->add_option("--hidden", o.hidden, "deep-DCL encoder widths")->delimiter(',')->capture_default_str();
}

void add_run_options(CLI::App* sub, RunOptions& o, const std::string& out_default) {
    o.out = out_default;
    sub->add_option("--reps", o.reps, "repetitions (seeds base..base+reps-1)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
}

ModelKind model_kind(const std::string& s) {
    const auto k = parse_model_kind(s);
    if (!k) throw UsageError("unknown model '" + s + "'");
    return *k;
}

GeneratorSpec generator_spec(const DataOptions& o) {
    GeneratorSpec g;
    const auto kind = parse_generator_kind(o.kind);
    if (!kind) throw UsageError("unknown dataset kind '" + o.kind + "'");
    g.kind = *kind;
    g.n_samples = o.n;
    g.n_features = g.kind == GeneratorKind::madelon ? o.features : 2;
    g.noise = (g.kind == GeneratorKind::madelon && !o.noise_given) ? 1.0 : o.noise;
    g.n_clusters = o.clusters;
    g.seed = o.seed;
    return g;
}

TrainConfig train_config(ModelKind kind, const TrainOptions& o, std::uint64_t seed) {
    TrainConfig c = TrainConfig::defaults_for(kind);
    c.k = o.k;
    c.epochs = o.epochs;
    if (o.lr > 0.0) c.learning_rate = o.lr;
    c.lambda = o.lambda;
    c.seed = seed;
    c.record_every = o.record_every;
    c.optimizer = *parse_optimizer(o.optimizer);
    c.freeze_assignment = o.freeze;
    c.dcl_bias = o.dcl_bias;
    c.hidden = o.hidden;
    return c;
}

ExperimentSpec experiment_spec(const DataOptions& d, const TrainOptions& t, const RunOptions& r,
                               const std::vector<std::string>& models) {
    ExperimentSpec s;
    s.data = generator_spec(d);
    s.input_path = d.input;
    s.normalize_data = !d.raw;
    s.repetitions = r.reps;
    for (const auto& m : models) {
        const ModelKind k = model_kind(m);
        for (const auto& prev : s.models)
            if (prev.model_kind == k) throw UsageError("model '" + m + "' listed twice");
        s.models.push_back(train_config(k, t, d.seed));
    }
    return s;
}

void print_warnings(const ExperimentResult& res) {
    for (const auto& w : res.data.warnings) std::cerr << "warning: " << w << '\n';
    if (!res.runs.empty())
        for (const auto& w : res.runs.front().result.warnings) std::cerr << "warning: " << w << '\n';
}

void write_metric_plots(const std::vector<AggregateRow>& agg, const fs::path& dir) {
    struct Metric {
        const char* file;
        const char* title;
        MeanSem AggregateRow::*field;
    };
    const Metric metrics[] = {{"metric_quantization.svg", "Quantization error", &AggregateRow::quantization},
                              {"metric_edge_norm.svg", "Edge matrix norm", &AggregateRow::edge_norm},
                              {"metric_valid_count.svg", "Valid prototypes", &AggregateRow::valid_count}};
    for (const auto& m : metrics) {
        std::vector<svg::Series> series;
        for (const auto& row : agg) {
            if (series.empty() || series.back().label != row.model) series.push_back({row.model, {}, {}, {}});
            series.back().x.push_back(row.epoch);
            series.back().y.push_back((row.*m.field).mean);
            series.back().band.push_back((row.*m.field).sem);
        }
        detail::write_text(dir / m.file, svg::line_plot(m.title, "epoch", m.title, series));
    }
}

void write_run_plots(const ExperimentResult& res, const fs::path& dir) {
    for (const auto& run : res.runs) {
        if (run.seed != res.spec.models[run.model_index].seed) continue;  // first repetition only
        const std::string name = to_string(res.spec.models[run.model_index].model_kind);
        const auto& r = run.result;
        if (r.features.rows() < 2) continue;
        detail::write_text(dir / ("topology_" + name + ".svg"),
                           svg::topology_plot("Topology: " + name + " (seed " + std::to_string(run.seed) + ")",
                                              r.features, r.prototypes, r.edges, r.assignment));
        if (!r.trace.snapshots.empty()) {
            const Matrix& X = r.features;
            detail::write_text(dir / ("trajectories_" + name + ".svg"),
                               svg::trajectory_plot("Prototype trajectories: " + name, X, r.trace.snapshots));
        }
    }
}

void report_summary(const ExperimentResult& res, const fs::path& dir) {
    for (std::size_t m = 0; m < res.spec.models.size(); ++m) {
        std::vector<double> q, e, v;
        for (const auto& run : res.runs) {
            if (run.model_index != m) continue;
            q.push_back(run.result.loss.quantization);
            e.push_back(run.result.loss.edge_norm);
            v.push_back(valid_prototypes(run.result.assignment));
        }
        const MeanSem mq = mean_sem(q), me = mean_sem(e), mv = mean_sem(v);
        std::cout << to_string(res.spec.models[m].model_kind) << ": final Q " << mq.mean << " +- " << mq.sem
                  << ", ||E|| " << me.mean << " +- " << me.sem << ", valid " << mv.mean << " +- " << mv.sem
                  << '\n';
    }
    std::cout << "bundle written to " << dir.string() << " (spec " << spec_hash(res.spec) << ")\n";
}

int cmd_generate(const DataOptions& d, const std::string& out) {
    const GeneratorSpec g = generator_spec(d);
    Dataset ds = generate(g);
    if (!d.raw) ds = normalize(ds);
    const fs::path path = out.empty() ? fs::path(to_string(g.kind) + ".csv") : fs::path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_csv(ds, path.string());
    const Vector s = singular_values(ds.X.values());
    const json sidecar{{"spec", to_json(g)},
                       {"normalized", !d.raw},
                       {"d", ds.d()},
                       {"n", ds.n()},
                       {"max_singular_value", s(0)},
                       {"min_singular_value", s(s.size() - 1)}};
    fs::path side = path;
    side.replace_extension(".json");
    detail::write_text(side, sidecar.dump(2) + "\n");
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << "wrote " << path.string() << " (" << ds.n() << " samples, " << ds.d()
              << " features) and " << side.string() << '\n';
    return 0;
}

int cmd_train(const DataOptions& d, const TrainOptions& t, const RunOptions& r, const std::string& model) {
    const ExperimentSpec spec = experiment_spec(d, t, r, {model});
    const ExperimentResult res = run_experiment(spec, r.jobs);
    print_warnings(res);
    write_bundle(res, r.out);
    report_summary(res, r.out);
    return 0;
}

int cmd_compare(const DataOptions& d, const TrainOptions& t, const RunOptions& r,
                const std::vector<std::string>& models) {
    const ExperimentSpec spec = experiment_spec(d, t, r, models);
    const ExperimentResult res = run_experiment(spec, r.jobs);
    print_warnings(res);
    const fs::path dir = r.out;
    write_bundle(res, dir);
    const auto agg = res.aggregate();
    detail::write_text(dir / "comparison.csv", aggregate_csv(agg));
    write_metric_plots(agg, dir);
    write_run_plots(res, dir);
    report_summary(res, dir);
    return 0;
}

int cmd_highdim(const DataOptions& d, const TrainOptions& t, const RunOptions& r,
                const std::vector<int>& feature_list, const std::vector<std::string>& models) {
    if (feature_list.empty()) throw UsageError("--features-list must not be empty");
    if (d.n < 10) throw UsageError("highdim needs at least 10 samples (k = n / 10)");
    const int k = d.n / 10;
    std::vector<ModelKind> kinds;
    for (const auto& m : models) kinds.push_back(model_kind(m));
    const double noise = d.noise_given ? d.noise : 1.0;

    const std::size_t R = static_cast<std::size_t>(r.reps);
    const std::size_t cells = feature_list.size() * kinds.size() * R;
    const auto acc = parallel_map(cells, r.jobs, [&](std::size_t idx) {
        const std::size_t rep = idx % R;
        const std::size_t m = (idx / R) % kinds.size();
        const std::size_t f = idx / (R * kinds.size());
        const auto seed = d.seed + rep;
        const Dataset ds = normalize(gen_madelon(d.n, feature_list[f], d.clusters, seed, noise));
        TrainConfig cfg = train_config(kinds[m], t, seed);
        cfg.k = k;
        cfg.record_snapshots = false;
        const TrainResult res = train(ds, cfg);
        return accuracy(res.features, res.prototypes, *ds.labels);
    });

    const fs::path dir = r.out;
    fs::create_directories(dir);
    std::string csv = "model,n_features,n_samples,k,reps,accuracy_mean,accuracy_sem\n";
    std::vector<svg::Series> series;
    for (std::size_t m = 0; m < kinds.size(); ++m) series.push_back({to_string(kinds[m]), {}, {}, {}});
    for (std::size_t f = 0; f < feature_list.size(); ++f) {
        for (std::size_t m = 0; m < kinds.size(); ++m) {
            const auto first = acc.begin() + static_cast<std::ptrdiff_t>((f * kinds.size() + m) * R);
            const MeanSem ms = mean_sem(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(R)));
            csv += to_string(kinds[m]) + ',' + std::to_string(feature_list[f]) + ',' + std::to_string(d.n) + ',' +
                   std::to_string(k) + ',' + std::to_string(R) + ',' + format_double(ms.mean) + ',' +
                   format_double(ms.sem) + '\n';
            series[m].x.push_back(feature_list[f]);
            series[m].y.push_back(ms.mean);
            series[m].band.push_back(ms.sem);
            std::cout << to_string(kinds[m]) << " n_f=" << feature_list[f] << ": accuracy " << ms.mean << " +- "
                      << ms.sem << '\n';
        }
    }
    detail::write_text(dir / "accuracy_vs_features.csv", csv);
    detail::write_text(dir / "accuracy_vs_features.svg",
                       svg::line_plot("Accuracy vs number of features", "features", "accuracy", series));
    return 0;
}

int cmd_analyze(const std::string& bundle, const std::string& out) {
    const fs::path dir = bundle;
    const fs::path dest = out.empty() ? dir / "analysis" : fs::path(out);
    const AnalysisOutput a = analyze_bundle(dir);
    fs::create_directories(dest);
    detail::write_text(dest / "analysis.json", a.report.dump(2) + "\n");
    detail::write_text(dest / "rates.svg", a.rates_svg);
    detail::write_text(dest / "residuals.svg", a.residuals_svg);
    std::cout << "analysis written to " << dest.string() << '\n';
    return 0;
}

int cmd_grid(const DataOptions& d, const TrainOptions& t, const RunOptions& r, const std::string& model,
             const std::vector<double>& lrs, const std::vector<double>& lambdas, const std::vector<int>& ks) {
    const ModelKind kind = model_kind(model);
    Dataset ds = d.input.empty() ? generate(generator_spec(d)) : load_csv(d.input);
    if (!d.raw) ds = normalize(ds);
    std::vector<TrainConfig> grid;
    const std::vector<double> lr_list = lrs.empty() ? std::vector<double>{default_learning_rate(kind)} : lrs;
    const std::vector<double> lambda_list = lambdas.empty() ? std::vector<double>{t.lambda} : lambdas;
    const std::vector<int> k_list = ks.empty() ? std::vector<int>{t.k} : ks;
    for (double lr : lr_list)
        for (double lambda : lambda_list)
            for (int k : k_list) {
                TrainConfig c = train_config(kind, t, d.seed);
                c.learning_rate = lr;
                c.lambda = lambda;
                c.k = k;
                grid.push_back(c);
            }
    const auto rows = grid_search(ds, grid, r.reps);
    const fs::path dir = r.out;
    fs::create_directories(dir);
    std::string csv = "rank,config,model,k,learning_rate,lambda,mean_quantization,mean_edge_norm\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        csv += std::to_string(i + 1) + ',' + std::to_string(row.config_index) + ',' + to_string(kind) + ',' +
               std::to_string(row.config.k) + ',' + format_double(row.config.learning_rate) + ',' +
               format_double(row.config.lambda) + ',' + format_double(row.mean_quantization) + ',' +
               format_double(row.mean_edge_norm) + '\n';
    }
    detail::write_text(dir / "grid.csv", csv);
    const auto& best = rows.front().config;
    std::cout << "best: k=" << best.k << " lr=" << best.learning_rate << " lambda=" << best.lambda
              << " (mean Q " << rows.front().mean_quantization << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-based competitive learning: vanilla and dual competitive layers"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file of key=value settings, one [subcommand] section each");
    app.allow_config_extras(CLI::config_extras_mode::error);

    DataOptions data;
    TrainOptions tr;
    RunOptions run;
    std::string out_file, model = "dcl", bundle;
    std::vector<std::string> models = {"vcl", "dcl"};
    std::vector<int> feature_list = {1000, 2000};
    std::vector<double> lrs, lambdas;
    std::vector<int> ks;

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset as CSV plus a JSON sidecar");
    add_data_options(gen, data);
    gen->add_option("--out", out_file, "CSV path (default <kind>.csv)");

    auto* train_cmd = app.add_subcommand("train", "train one model over several seeds and write a run bundle");
    add_data_options(train_cmd, data);
    add_train_options(train_cmd, tr);
    add_run_options(train_cmd, run, "run");
    train_cmd->add_option("--model", model, "vcl, dcl or deep_dcl")->check(CLI::IsMember(kModelKinds))->capture_default_str();
    train_cmd->add_option("--input", data.input, "train on this CSV instead of a generated dataset");

    auto* cmp = app.add_subcommand("compare", "train several models over seeds; write bundle, comparison.csv and plots");
    add_data_options(cmp, data);
    add_train_options(cmp, tr);
    add_run_options(cmp, run, "compare");
    cmp->add_option("--models", models, "models to compare")->delimiter(',')->check(CLI::IsMember(kModelKinds))->capture_default_str();
    cmp->add_option("--input", data.input, "train on this CSV instead of a generated dataset");

    auto* hd = app.add_subcommand("highdim", "accuracy sweep over the feature count on hypercube clusters");
    hd->add_option("--n", data.n, "number of samples (k = n / 10)")->capture_default_str();
    hd->add_option("--features-list", feature_list, "feature counts to sweep")->delimiter(',')->capture_default_str();
    hd->add_option("--noise", data.noise, "cluster std (default 1.0)")->check(CLI::NonNegativeNumber);
    hd->add_option("--clusters", data.clusters, "clusters (even)")->capture_default_str();
    hd->add_option("--seed", data.seed, "base seed")->capture_default_str();
    add_train_options(hd, tr);
    add_run_options(hd, run, "highdim");
    hd->add_option("--models", models, "models to sweep")->delimiter(',')->check(CLI::IsMember(kModelKinds));

    auto* an = app.add_subcommand("analyze", "fit decay rates and subspace residuals from a run bundle");
    an->add_option("--bundle", bundle, "run bundle directory")->required();
    an->add_option("--out", out_file, "output directory (default <bundle>/analysis)");

    auto* gs = app.add_subcommand("grid-search", "rank hyperparameter combinations by mean final Q");
    add_data_options(gs, data);
    add_train_options(gs, tr);
    add_run_options(gs, run, "grid");
    gs->add_option("--model", model, "vcl, dcl or deep_dcl")->check(CLI::IsMember(kModelKinds))->capture_default_str();
    gs->add_option("--lrs", lrs, "learning rates")->delimiter(',');
    gs->add_option("--lambdas", lambdas, "edge weights")->delimiter(',');
    gs->add_option("--ks", ks, "prototype counts")->delimiter(',');
    gs->add_option("--input", data.input, "use this CSV instead of a generated dataset");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    for (auto* sub : app.get_subcommands()) {
        if (const auto* opt = sub->get_option_no_throw("--noise")) data.noise_given = opt->count() > 0;
    }
    // Models default to {vcl, dcl}; highdim adds the deep variant and a coarser trace.
    if (hd->parsed() && hd->get_option("--models")->count() == 0) models = {"vcl", "dcl", "deep_dcl"};
    if (hd->parsed() && hd->get_option("--record-every")->count() == 0) tr.record_every = 10;

    try {
        if (gen->parsed()) return cmd_generate(data, out_file);
        if (train_cmd->parsed()) return cmd_train(data, tr, run, model);
        if (cmp->parsed()) return cmd_compare(data, tr, run, models);
        if (hd->parsed()) return cmd_highdim(data, tr, run, feature_list, models);
        if (an->parsed()) return cmd_analyze(bundle, out_file);
        if (gs->parsed()) return cmd_grid(data, tr, run, model, lrs, lambdas, ks);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}
