#pragma once

#include <string>
#include <vector>

#include "leocvae/classifier.hpp"
#include "leocvae/cvae.hpp"
#include "leocvae/dataset.hpp"
#include "leocvae/metrics.hpp"
#include "leocvae/resample.hpp"

namespace leocvae {

struct CvPlan {
    std::size_t n_folds = 5;
    std::uint64_t seed = 42;
    bool stratified = true;

    void validate() const;
};

// Fold id in [0, n_folds) per sample. Per-class counts across folds differ
// by at most one; deterministic given the seed.
std::vector<std::size_t> stratified_kfold(const std::vector<int>& labels, std::size_t n_folds,
                                          std::uint64_t seed);

// One benchmark entry: a strategy plus the CVAE ablation toggles that apply
// when the strategy is leo-cvae.
struct StrategySpec {
    std::string name;  // manifest / report id
    Strategy strategy = Strategy::None;
    bool entropy_loss = true;
    bool entropy_sampling = true;
    bool class_weights = true;
};

StrategySpec make_strategy_spec(Strategy s);

struct BenchmarkConfig {
    CvPlan cv;
    TrainConfig cvae;  // leo-cvae defaults: beta 4.0, floor 0.1
    ClassifierConfig classifier;
    std::size_t k = 7;   // entropy / neighbor count for all strategies
    double gamma = 0.5;  // entropy weighting and seed-selection exponent
    std::size_t select_top_m = 0;  // 0 disables mutual-information selection
    bool global_feature_selection = false;  // default: fit per training fold
    std::uint64_t master_seed = 42;

    void validate() const;
};

// The CVAE training configuration a given strategy runs under: leo-cvae uses
// the benchmark's TrainConfig plus the spec's toggles; the standard and
// focal CVAE baselines use beta 1.0 with floor 0.1.
TrainConfig cvae_config_for(const StrategySpec& spec, const BenchmarkConfig& config);

// Per fold: scaler, entropy, feature selection, and resampling are fit on
// the training fold only; the validation fold is checksummed before and
// after each strategy run and any change aborts the benchmark. Every RNG
// stream is derived from (master seed, fold, strategy), so a strategy's
// result is reproducible in isolation; on identical training data two
// strategies can still differ through their classifier streams.
MetricsReport run_cv_benchmark(const Dataset& dataset, const std::vector<StrategySpec>& specs,
                               const BenchmarkConfig& config);

// Metric column names for a given class count (binary vs macro/micro set).
std::vector<std::string> metric_names_for(std::size_t num_classes);

// Metrics of one trained classifier on one validation fold.
std::map<std::string, double> evaluate_fold(MlpClassifier& model, const Dataset& val);

}  // namespace leocvae
