#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "leocvae/classifier.hpp"
#include "leocvae/cv.hpp"
#include "leocvae/cvae.hpp"

namespace leocvae {

// Everything a CLI run can configure. k and gamma default by task: 7 / 0.5
// for binary, 15 / 2.5 for multiclass.
struct ExperimentConfig {
    std::string data_path;
    std::string label_column = "label";
    std::string out_dir = "out";
    std::vector<std::string> strategies;
    std::size_t folds = 5;
    std::uint64_t seed = 42;
    long k = 0;         // 0: derive from class count
    double gamma = -1;  // negative: derive from class count
    double beta = 4.0;
    double kld_floor = 0.1;
    bool no_entropy_loss = false;
    bool no_entropy_sampling = false;
    bool no_class_weights = false;
    bool ablation = false;
    std::size_t select_top_m = 0;
    bool global_feature_selection = false;

    TrainConfig cvae;              // beta/kld_floor/gamma/k/seed synced at use
    ClassifierConfig classifier;

    std::size_t synth_dim = 64;
    std::vector<std::size_t> synth_counts = {900, 100};
    double synth_separation = 6.0;
    double synth_noise = 1.0;
    double synth_warp = 0.0;

    std::size_t resolved_k(std::size_t num_classes) const;
    double resolved_gamma(std::size_t num_classes) const;
    nlohmann::json to_json() const;
};

// Overlays the JSON config file onto cfg. Keys that were also given as
// explicit flags (flag_provided, config-file key names) emit a warning; the
// file value wins.
void apply_config_file(ExperimentConfig& cfg, const std::string& path,
                       const std::vector<std::string>& flag_provided);

BenchmarkConfig make_benchmark_config(const ExperimentConfig& cfg, std::size_t num_classes);

// The six ablation variants of the entropy-guided pipeline, toggle-encoded.
std::vector<StrategySpec> ablation_specs();

std::uint64_t file_fnv1a(const std::string& path);

}  // namespace leocvae
