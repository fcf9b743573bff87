#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "leocvae/config.hpp"
#include "leocvae/cv.hpp"
#include "leocvae/dataset.hpp"
#include "leocvae/entropy.hpp"
#include "leocvae/errors.hpp"
#include "leocvae/resample.hpp"

namespace fs = std::filesystem;
using namespace leocvae;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

nlohmann::json base_manifest(const std::string& command, const ExperimentConfig& cfg) {
    nlohmann::json m;
    m["command"] = command;
    m["config"] = cfg.to_json();
    m["seed"] = cfg.seed;
    if (!cfg.data_path.empty()) m["input_hash"] = hex64(file_fnv1a(cfg.data_path));
    return m;
}

// Tracks which flags the user actually passed, keyed by config-file name, so
// the config-file-wins warning can name them.
std::vector<std::string> provided_flags(CLI::App* cmd,
                                        const std::map<std::string, std::string>& flag_to_key) {
    std::vector<std::string> out;
    for (const auto& [flag, key] : flag_to_key) {
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        if (opt && opt->count() > 0) out.push_back(key);
    }
    return out;
}

struct CommonOpts {
    std::string config_path;
    std::map<std::string, std::string> flag_to_key;
};

void add_common_options(CLI::App* cmd, ExperimentConfig& cfg, CommonOpts& opts,
                        bool with_data = true) {
    cmd->add_option("--config", opts.config_path, "JSON config file (wins over flags)");
    cmd->add_option("--seed", cfg.seed, "master random seed");
    opts.flag_to_key["--seed"] = "seed";
    cmd->add_option("--out", cfg.out_dir, "output directory");
    opts.flag_to_key["--out"] = "out";
    if (with_data) {
        cmd->add_option("--data", cfg.data_path, "input CSV path");
        opts.flag_to_key["--data"] = "data";
        cmd->add_option("--label-col", cfg.label_column, "label column name");
        opts.flag_to_key["--label-col"] = "label_col";
    }
}

void add_model_options(CLI::App* cmd, ExperimentConfig& cfg, CommonOpts& opts) {
    cmd->add_option("--k", cfg.k, "neighbor count (default 7 binary / 15 multiclass)");
    opts.flag_to_key["--k"] = "k";
    cmd->add_option("--gamma", cfg.gamma, "entropy exponent (default 0.5 binary / 2.5 multiclass)");
    opts.flag_to_key["--gamma"] = "gamma";
    cmd->add_option("--beta", cfg.beta, "KLD weight");
    opts.flag_to_key["--beta"] = "beta";
    cmd->add_option("--kld-floor", cfg.kld_floor, "minimum KLD in the loss");
    opts.flag_to_key["--kld-floor"] = "kld_floor";
    cmd->add_flag("--no-entropy-loss", cfg.no_entropy_loss,
                  "drop the (1+H)^gamma reconstruction weight");
    opts.flag_to_key["--no-entropy-loss"] = "no_entropy_loss";
    cmd->add_flag("--no-entropy-sampling", cfg.no_entropy_sampling,
                  "draw generation seeds uniformly");
    opts.flag_to_key["--no-entropy-sampling"] = "no_entropy_sampling";
    cmd->add_flag("--no-class-weights", cfg.no_class_weights,
                  "drop inverse-frequency class weights");
    opts.flag_to_key["--no-class-weights"] = "no_class_weights";
}

void finish_config(ExperimentConfig& cfg, CLI::App* cmd, const CommonOpts& opts) {
    if (!opts.config_path.empty())
        apply_config_file(cfg, opts.config_path, provided_flags(cmd, opts.flag_to_key));
}

StrategySpec spec_from_config(const ExperimentConfig& cfg, const std::string& name) {
    StrategySpec spec = make_strategy_spec(strategy_from_string(name));
    spec.entropy_loss = !cfg.no_entropy_loss;
    spec.entropy_sampling = !cfg.no_entropy_sampling;
    spec.class_weights = !cfg.no_class_weights;
    return spec;
}

EntropyScores entropy_for(const Dataset& dataset, std::size_t k) {
    const NeighborIndex knn = build_knn(dataset.features, k);
    return local_entropy(knn, dataset.labels, dataset.num_classes);
}

// Standardized working copy used by the in-process training/resampling
// pipeline; the scaler remembers how to map synthetic rows back.
Dataset standardized_copy(const Dataset& original, Scaler& scaler) {
    scaler = fit_scaler(original);
    Dataset work = original;
    Matrix scaled = scaler.apply(original.features);
    if (!work.feature_names.empty()) {
        std::vector<std::string> kept;
        for (std::size_t j : scaler.kept_columns) kept.push_back(work.feature_names[j]);
        work.feature_names = std::move(kept);
    }
    work.features = std::move(scaled);
    return work;
}

// Rebuilds a full-width dataset: original rows bit-exact, synthetic rows
// inverse-transformed, dropped constant columns refilled with their value.
Dataset restore_units(const Dataset& original, const Dataset& combined, const Scaler& scaler) {
    Dataset out;
    out.features = Matrix(combined.size(), original.dim());
    out.labels = combined.labels;
    out.num_classes = combined.num_classes;
    out.feature_names = original.feature_names;
    out.label_names = original.label_names;
    out.synthetic = combined.synthetic;
    out.provenance_seed_id = combined.provenance_seed_id;

    for (std::size_t i = 0; i < original.size(); ++i)
        out.features.set_row(i, original.features.row(i));

    if (combined.size() > original.size()) {
        std::vector<std::size_t> synth_rows;
        for (std::size_t i = original.size(); i < combined.size(); ++i) synth_rows.push_back(i);
        const Matrix inverted = scaler.invert(combined.features.take_rows(synth_rows));
        for (std::size_t s = 0; s < synth_rows.size(); ++s) {
            const std::size_t row = synth_rows[s];
            for (std::size_t j = 0; j < original.dim(); ++j)
                out.features(row, j) = original.features(0, j);  // constant-column fill
            for (std::size_t jk = 0; jk < scaler.kept_columns.size(); ++jk)
                out.features(row, scaler.kept_columns[jk]) = inverted(s, jk);
        }
    }
    out.validate();
    return out;
}

int cmd_make_synthetic(const ExperimentConfig& cfg, const std::string& out_file, bool pinned) {
    Dataset ds;
    if (pinned) {
        ds = pinned_benchmark_dataset(cfg.seed);
    } else {
        SyntheticSpec spec;
        spec.dim = cfg.synth_dim;
        spec.class_counts = cfg.synth_counts;
        spec.separation = cfg.synth_separation;
        spec.noise_std = cfg.synth_noise;
        spec.warp = cfg.synth_warp;
        RngStream rng =
            RngStream::derive(cfg.seed, {RngStream::hash_string("synthetic-benchmark")});
        ds = make_synthetic_benchmark(spec, rng);
    }

    const fs::path out_path(out_file);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    save_csv(ds, out_file);

    nlohmann::json manifest = base_manifest("make-synthetic", cfg);
    manifest["outputs"] = {out_file};
    manifest["rows"] = ds.size();
    manifest["class_counts"] = ds.class_counts();
    manifest["output_hash"] = hex64(file_fnv1a(out_file));
    write_json(manifest, out_file + ".manifest.json");
    std::cout << "wrote " << ds.size() << " rows (" << ds.num_classes << " classes) to "
              << out_file << "\n";
    return 0;
}

int cmd_entropy_report(const ExperimentConfig& cfg) {
    Dataset dataset = load_csv(cfg.data_path, cfg.label_column);
    const std::size_t k = cfg.resolved_k(dataset.num_classes);
    const double gamma = cfg.resolved_gamma(dataset.num_classes);

    Scaler scaler;
    const Dataset work = standardized_copy(dataset, scaler);
    const EntropyScores entropy = entropy_for(work, k);

    fs::create_directories(cfg.out_dir);
    const fs::path csv_path = fs::path(cfg.out_dir) / "entropy.csv";
    {
        std::ofstream out(csv_path);
        if (!out) throw ConfigError("cannot open '" + csv_path.string() + "' for writing");
        out << "sample_id,label,H,w_entropy\n";
        char buf[80];
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g\n", i,
                          dataset.label_names[static_cast<std::size_t>(dataset.labels[i])].c_str(),
                          entropy.h[i], entropy_weight(entropy.h[i], gamma));
            out << buf;
        }
    }

    std::vector<double> mean_h(dataset.num_classes, 0.0);
    const auto counts = dataset.class_counts();
    for (std::size_t i = 0; i < dataset.size(); ++i)
        mean_h[static_cast<std::size_t>(dataset.labels[i])] += entropy.h[i];
    std::cout << "entropy report for " << cfg.data_path << " (k=" << k << ", gamma=" << gamma
              << ")\n";
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        mean_h[c] /= static_cast<double>(counts[c]);
        std::cout << "  class " << dataset.label_names[c] << ": n=" << counts[c]
                  << " mean H=" << mean_h[c] << "\n";
    }
    std::cout << "  max possible H = log2(" << dataset.num_classes
              << ") = " << std::log2(static_cast<double>(dataset.num_classes)) << "\n";

    nlohmann::json manifest = base_manifest("entropy-report", cfg);
    manifest["outputs"] = {csv_path.string()};
    manifest["k"] = k;
    manifest["gamma"] = gamma;
    manifest["mean_entropy_per_class"] = mean_h;
    write_json(manifest, fs::path(cfg.out_dir) / "manifest.json");
    return 0;
}

// Full in-process pipeline for one strategy on one file: standardize, train
// the generator if needed, resample, map back to original units.
struct ResampleOutcome {
    Dataset result;
    std::optional<TrainingHistory> history;
    std::optional<nlohmann::json> model_json;
};

ResampleOutcome run_resample_pipeline(const Dataset& dataset, const StrategySpec& spec,
                                      const ExperimentConfig& cfg) {
    const std::size_t k = cfg.resolved_k(dataset.num_classes);
    const double gamma = cfg.resolved_gamma(dataset.num_classes);
    ResampleOutcome outcome;

    if (spec.strategy == Strategy::None) {
        outcome.result = dataset;
        return outcome;
    }
    if (spec.strategy == Strategy::Random) {
        RngStream rng = RngStream::derive(cfg.seed, {RngStream::hash_string("resample")});
        outcome.result = random_oversample(dataset, rng);
        return outcome;
    }

    Scaler scaler;
    const Dataset work = standardized_copy(dataset, scaler);

    EntropyScores entropy;
    entropy.k = k;
    entropy.num_classes = work.num_classes;
    entropy.h.assign(work.size(), 0.0);
    if (spec.strategy == Strategy::LeoCvae) entropy = entropy_for(work, k);

    CvaeModel* model_ptr = nullptr;
    std::optional<CvaeModel> model;
    if (strategy_needs_model(spec.strategy)) {
        BenchmarkConfig bc = make_benchmark_config(cfg, dataset.num_classes);
        const TrainConfig tc = cvae_config_for(spec, bc);
        RngStream train_rng = RngStream::derive(cfg.seed, {RngStream::hash_string("cvae-train")});
        auto [trained, history] = train_cvae(work, entropy, tc, train_rng);
        model = std::move(trained);
        outcome.history = std::move(history);
        outcome.model_json = model->to_json();
        model_ptr = &*model;
    }

    ResamplePlan plan;
    plan.strategy = spec.strategy;
    plan.k_neighbors = k;
    plan.gamma = gamma;
    plan.entropy_sampling = spec.entropy_sampling;
    plan.seed = cfg.seed;
    RngStream rng = RngStream::derive(cfg.seed, {RngStream::hash_string("resample")});
    const Dataset combined = resample(work, entropy, plan, model_ptr, rng);
    outcome.result = restore_units(dataset, combined, scaler);
    return outcome;
}

int cmd_resample(const ExperimentConfig& cfg) {
    if (cfg.strategies.size() != 1)
        throw ConfigError("resample needs exactly one --strategy");
    const StrategySpec spec = spec_from_config(cfg, cfg.strategies[0]);
    Dataset dataset = load_csv(cfg.data_path, cfg.label_column);

    fs::create_directories(cfg.out_dir);
    const fs::path csv_path = fs::path(cfg.out_dir) / "resampled.csv";

    nlohmann::json metadata = base_manifest("resample", cfg);
    metadata["strategy"] = spec.name;
    metadata["toggles"] = {{"entropy_loss", spec.entropy_loss},
                           {"entropy_sampling", spec.entropy_sampling},
                           {"class_weights", spec.class_weights}};
    metadata["k"] = cfg.resolved_k(dataset.num_classes);
    metadata["gamma"] = cfg.resolved_gamma(dataset.num_classes);
    metadata["label_mapping"] = dataset.label_names;
    metadata["counts_before"] = dataset.class_counts();

    if (spec.strategy == Strategy::None) {
        // Byte-identical copy of the input.
        fs::copy_file(cfg.data_path, csv_path, fs::copy_options::overwrite_existing);
        metadata["counts_after"] = dataset.class_counts();
        metadata["outputs"] = {csv_path.string()};
        metadata["output_hash"] = hex64(file_fnv1a(csv_path.string()));
        write_json(metadata, fs::path(cfg.out_dir) / "metadata.json");
        std::cout << "strategy none: copied input unchanged to " << csv_path.string() << "\n";
        return 0;
    }

    ResampleOutcome outcome = run_resample_pipeline(dataset, spec, cfg);
    save_csv(outcome.result, csv_path.string());
    std::vector<std::string> outputs = {csv_path.string()};
    if (outcome.history) {
        const fs::path hist_path = fs::path(cfg.out_dir) / "history.csv";
        outcome.history->to_csv(hist_path.string());
        outputs.push_back(hist_path.string());
        metadata["training"] = {
            {"epochs", outcome.history->rows.size()},
            {"best_epoch", outcome.history->best_epoch},
            {"early_stop_epoch",
             outcome.history->early_stop_epoch ? nlohmann::json(*outcome.history->early_stop_epoch)
                                               : nlohmann::json()},
            {"final_recon_corr", outcome.history->rows.back().recon_corr},
            {"history", hist_path.string()},
        };
    }
    metadata["counts_after"] = outcome.result.class_counts();
    metadata["synthetic_rows"] = outcome.result.size() - dataset.size();
    metadata["outputs"] = outputs;
    metadata["output_hash"] = hex64(file_fnv1a(csv_path.string()));
    write_json(metadata, fs::path(cfg.out_dir) / "metadata.json");

    std::cout << "wrote " << outcome.result.size() << " rows ("
              << outcome.result.size() - dataset.size() << " synthetic) to " << csv_path.string()
              << "\n";
    return 0;
}

int cmd_train_cvae(const ExperimentConfig& cfg) {
    if (cfg.strategies.size() > 1) throw ConfigError("train-cvae takes at most one --strategy");
    const std::string name = cfg.strategies.empty() ? "leo-cvae" : cfg.strategies[0];
    const StrategySpec spec = spec_from_config(cfg, name);
    if (!strategy_needs_model(spec.strategy))
        throw ConfigError("strategy '" + spec.name + "' has no generative model to train");

    Dataset dataset = load_csv(cfg.data_path, cfg.label_column);
    Scaler scaler;
    const Dataset work = standardized_copy(dataset, scaler);
    const std::size_t k = cfg.resolved_k(dataset.num_classes);

    EntropyScores entropy;
    entropy.k = k;
    entropy.num_classes = work.num_classes;
    entropy.h.assign(work.size(), 0.0);
    if (spec.strategy == Strategy::LeoCvae) entropy = entropy_for(work, k);

    BenchmarkConfig bc = make_benchmark_config(cfg, dataset.num_classes);
    const TrainConfig tc = cvae_config_for(spec, bc);
    RngStream rng = RngStream::derive(cfg.seed, {RngStream::hash_string("cvae-train")});
    auto [model, history] = train_cvae(work, entropy, tc, rng);

    fs::create_directories(cfg.out_dir);
    const fs::path model_path = fs::path(cfg.out_dir) / "model.json";
    const fs::path hist_path = fs::path(cfg.out_dir) / "history.csv";
    write_json(model.to_json(), model_path);
    history.to_csv(hist_path.string());

    nlohmann::json scaler_json = {{"mean", scaler.mean},
                                  {"std", scaler.std_dev},
                                  {"kept_columns", scaler.kept_columns},
                                  {"dropped_columns", scaler.dropped_columns}};
    write_json(scaler_json, fs::path(cfg.out_dir) / "scaler.json");

    nlohmann::json manifest = base_manifest("train-cvae", cfg);
    manifest["strategy"] = spec.name;
    manifest["outputs"] = {model_path.string(), hist_path.string(),
                           (fs::path(cfg.out_dir) / "scaler.json").string()};
    manifest["epochs"] = history.rows.size();
    manifest["best_epoch"] = history.best_epoch;
    manifest["final_recon_corr"] = history.rows.back().recon_corr;
    manifest["final_kld"] = history.rows.back().kld;
    write_json(manifest, fs::path(cfg.out_dir) / "manifest.json");

    std::cout << "trained " << spec.name << " for " << history.rows.size()
              << " epochs (best " << history.best_epoch
              << "); final recon_corr=" << history.rows.back().recon_corr
              << " kld=" << history.rows.back().kld << "\n";
    return 0;
}

int cmd_benchmark(const ExperimentConfig& cfg) {
    Dataset dataset = load_csv(cfg.data_path, cfg.label_column);
    const BenchmarkConfig bc = make_benchmark_config(cfg, dataset.num_classes);

    std::vector<StrategySpec> specs;
    if (cfg.ablation) {
        specs = ablation_specs();
    } else {
        std::vector<std::string> names = cfg.strategies;
        if (names.empty())
            names = {"none",   "random", "smote",      "borderline-smote",
                     "adasyn", "cvae",   "cvae-focal", "leo-cvae"};
        for (const auto& n : names) specs.push_back(spec_from_config(cfg, n));
    }

    fs::create_directories(cfg.out_dir);
    MetricsReport report;
    report.metric_names = metric_names_for(dataset.num_classes);
    std::map<std::string, std::string> failures;
    int exit_code = 0;
    for (const auto& spec : specs) {
        try {
            MetricsReport one = run_cv_benchmark(dataset, {spec}, bc);
            report.rows.push_back(std::move(one.rows.front()));
        } catch (const ConfigError& e) {
            std::cerr << "strategy '" << spec.name << "' failed: " << e.what() << "\n";
            failures[spec.name] = e.what();
            if (exit_code == 0) exit_code = 1;
            continue;
        } catch (const std::exception& e) {
            std::cerr << "strategy '" << spec.name << "' failed: " << e.what() << "\n";
            failures[spec.name] = e.what();
            exit_code = 2;
            continue;
        }
        nlohmann::json m = base_manifest("benchmark", cfg);
        m["strategy"] = spec.name;
        m["toggles"] = {{"entropy_loss", spec.entropy_loss},
                        {"entropy_sampling", spec.entropy_sampling},
                        {"class_weights", spec.class_weights}};
        m["folds"] = bc.cv.n_folds;
        nlohmann::json summary;
        for (const auto& name : report.metric_names) {
            const auto& values = report.rows.back().folds.at(name);
            const MeanStd ms = mean_std(values);
            summary[name] = {{"mean", ms.mean}, {"std", ms.std_dev}, {"folds", values}};
        }
        m["metrics"] = std::move(summary);
        write_json(m, fs::path(cfg.out_dir) / ("manifest-" + spec.name + ".json"));
    }

    nlohmann::json rj = report.to_json();
    rj["folds"] = bc.cv.n_folds;
    rj["seed"] = cfg.seed;
    rj["leakage_checked"] = true;
    if (!failures.empty()) rj["failures"] = failures;

    // Record the headline comparison when both rows are present.
    const auto find_row = [&](const std::string& name) -> const MetricsReport::Row* {
        for (const auto& row : report.rows)
            if (row.strategy == name) return &row;
        return nullptr;
    };
    const auto* leo = find_row("leo-cvae");
    const auto* none = find_row("none");
    if (leo && none) {
        nlohmann::json deltas;
        for (const auto& name : report.metric_names)
            deltas[name] =
                mean_std(leo->folds.at(name)).mean - mean_std(none->folds.at(name)).mean;
        rj["leo_cvae_minus_none"] = std::move(deltas);
    }

    write_json(rj, fs::path(cfg.out_dir) / "report.json");
    const std::string table = report.to_table();
    {
        std::ofstream out(fs::path(cfg.out_dir) / "report.txt");
        out << table;
    }
    std::cout << table;

    nlohmann::json manifest = base_manifest("benchmark", cfg);
    std::vector<std::string> names;
    for (const auto& s : specs) names.push_back(s.name);
    manifest["strategies"] = names;
    manifest["outputs"] = {(fs::path(cfg.out_dir) / "report.json").string(),
                           (fs::path(cfg.out_dir) / "report.txt").string()};
    if (!failures.empty()) manifest["failures"] = failures;
    write_json(manifest, fs::path(cfg.out_dir) / "manifest.json");
    return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"entropy-guided oversampling for imbalanced tabular classification"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    CommonOpts common;
    std::string synth_out = "synthetic.csv";
    bool synth_pinned = false;

    auto* make_synth = app.add_subcommand("make-synthetic", "generate a benchmark dataset");
    add_common_options(make_synth, cfg, common, /*with_data=*/false);
    make_synth->add_option("--out-file", synth_out, "output CSV path");
    make_synth->add_flag("--pinned-benchmark", synth_pinned,
                         "emit the fixed 900/100 64-dim benchmark (ignores shape flags)");
    make_synth->add_option("--dim", cfg.synth_dim, "feature dimension");
    make_synth->add_option("--counts", cfg.synth_counts, "per-class sample counts")
        ->delimiter(',');
    make_synth->add_option("--separation", cfg.synth_separation,
                           "distance between class means in noise-std units");
    make_synth->add_option("--noise", cfg.synth_noise, "class noise std");
    make_synth->add_option("--warp", cfg.synth_warp, "sinusoidal warp strength");

    auto* entropy_cmd = app.add_subcommand("entropy-report", "per-sample local entropy scores");
    add_common_options(entropy_cmd, cfg, common);
    add_model_options(entropy_cmd, cfg, common);

    auto* resample_cmd = app.add_subcommand("resample", "balance a dataset with one strategy");
    add_common_options(resample_cmd, cfg, common);
    add_model_options(resample_cmd, cfg, common);
    resample_cmd->add_option("--strategy", cfg.strategies, "oversampling strategy")
        ->expected(0, 1);
    common.flag_to_key["--strategy"] = "strategy";

    auto* train_cmd = app.add_subcommand("train-cvae", "train a generator and save it");
    add_common_options(train_cmd, cfg, common);
    add_model_options(train_cmd, cfg, common);
    train_cmd->add_option("--strategy", cfg.strategies,
                          "generative strategy (cvae, cvae-focal, leo-cvae)")
        ->expected(0, 1);

    auto* bench_cmd = app.add_subcommand("benchmark", "stratified k-fold strategy comparison");
    add_common_options(bench_cmd, cfg, common);
    add_model_options(bench_cmd, cfg, common);
    bench_cmd->add_option("--strategy", cfg.strategies, "strategies to compare (default: all)")
        ->delimiter(',');
    bench_cmd->add_option("--folds", cfg.folds, "cross-validation folds");
    common.flag_to_key["--folds"] = "folds";
    bench_cmd->add_flag("--ablation", cfg.ablation, "run the six toggle-ablation variants");
    common.flag_to_key["--ablation"] = "ablation";
    bench_cmd->add_option("--select-top-m", cfg.select_top_m,
                          "mutual-information feature selection (0 = off)");
    common.flag_to_key["--select-top-m"] = "select_top_m";
    bench_cmd->add_flag("--global-select", cfg.global_feature_selection,
                        "fit feature selection once on the full dataset instead of per fold");
    common.flag_to_key["--global-select"] = "global_feature_selection";

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        finish_config(cfg, cmd, common);
        if (cmd == make_synth) return cmd_make_synthetic(cfg, synth_out, synth_pinned);
        if (cmd == entropy_cmd) return cmd_entropy_report(cfg);
        if (cmd == resample_cmd) return cmd_resample(cfg);
        if (cmd == train_cmd) return cmd_train_cvae(cfg);
        if (cmd == bench_cmd) return cmd_benchmark(cfg);
        throw UsageError("unhandled subcommand");
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
