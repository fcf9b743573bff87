#include "leocvae/cv.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

#include "leocvae/entropy.hpp"
#include "leocvae/errors.hpp"

namespace leocvae {

void CvPlan::validate() const {
    if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
}

void BenchmarkConfig::validate() const {
    cv.validate();
    cvae.validate();
    classifier.validate();
    if (k == 0) throw ConfigError("k must be positive");
    if (gamma < 0) throw ConfigError("gamma must be nonnegative");
}

std::vector<std::size_t> stratified_kfold(const std::vector<int>& labels, std::size_t n_folds,
                                          std::uint64_t seed) {
    if (n_folds < 2) throw ConfigError("n_folds must be at least 2");
    if (labels.empty()) throw ConfigError("cannot fold an empty dataset");
    const int max_label = *std::max_element(labels.begin(), labels.end());
    const std::size_t num_classes = static_cast<std::size_t>(max_label) + 1;

    RngStream rng = RngStream::derive(seed, {RngStream::hash_string("stratified-kfold")});
    std::vector<std::size_t> fold_of(labels.size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == static_cast<int>(c)) ids.push_back(i);
        if (ids.size() < n_folds)
            throw ConfigError("class " + std::to_string(c) + " has " +
                              std::to_string(ids.size()) + " samples; needs at least " +
                              std::to_string(n_folds) + " for " + std::to_string(n_folds) +
                              "-fold CV");
        rng.shuffle(ids);
        for (std::size_t i = 0; i < ids.size(); ++i) fold_of[ids[i]] = i % n_folds;
    }
    return fold_of;
}

StrategySpec make_strategy_spec(Strategy s) {
    StrategySpec spec;
    spec.name = strategy_name(s);
    spec.strategy = s;
    return spec;
}

TrainConfig cvae_config_for(const StrategySpec& spec, const BenchmarkConfig& config) {
    TrainConfig tc = config.cvae;
    tc.k = config.k;
    tc.gamma = config.gamma;
    switch (spec.strategy) {
        case Strategy::Cvae:
            tc.beta = 1.0;
            tc.kld_floor = 0.1;
            tc.entropy_loss = false;
            tc.class_weights = false;
            break;
        case Strategy::CvaeFocal:
            tc.beta = 1.0;
            tc.kld_floor = 0.1;
            tc.weight_mode = WeightMode::Focal;
            tc.entropy_loss = false;
            tc.class_weights = false;
            break;
        case Strategy::LeoCvae:
            tc.entropy_loss = spec.entropy_loss;
            tc.class_weights = spec.class_weights;
            break;
        default:
            break;
    }
    return tc;
}

std::vector<std::string> metric_names_for(std::size_t num_classes) {
    if (num_classes == 2) return {"auc_roc", "auprc", "f1"};
    return {"macro_auc_roc", "micro_auc_roc", "macro_auprc",
            "micro_auprc",   "macro_f1",      "micro_f1"};
}

std::map<std::string, double> evaluate_fold(MlpClassifier& model, const Dataset& val) {
    std::map<std::string, double> out;
    const Matrix scores = model.predict_scores(val.features);
    if (model.binary()) {
        std::vector<double> col(scores.rows());
        std::vector<int> preds(scores.rows());
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            col[i] = scores(i, 0);
            preds[i] = scores(i, 0) >= 0.5;
        }
        out["auc_roc"] = auc_roc(col, val.labels);
        out["auprc"] = auprc(col, val.labels);
        out["f1"] = f1_score(preds, val.labels);
    } else {
        const MacroMicro auc = macro_micro(MetricKind::AucRoc, scores, val.labels);
        const MacroMicro pr = macro_micro(MetricKind::Auprc, scores, val.labels);
        const MacroMicro f1 = macro_micro(MetricKind::F1, scores, val.labels);
        out["macro_auc_roc"] = auc.macro;
        out["micro_auc_roc"] = auc.micro;
        out["macro_auprc"] = pr.macro;
        out["micro_auprc"] = pr.micro;
        out["macro_f1"] = f1.macro;
        out["micro_f1"] = f1.micro;
    }
    return out;
}

namespace {

Dataset resample_for_strategy(const Dataset& train_fold, const StrategySpec& spec,
                              const BenchmarkConfig& config, std::size_t fold) {
    const std::uint64_t strategy_hash = RngStream::hash_string(spec.name);
    EntropyScores entropy;
    entropy.k = config.k;
    entropy.num_classes = train_fold.num_classes;
    entropy.h.assign(train_fold.size(), 0.0);
    const bool needs_entropy = spec.strategy == Strategy::LeoCvae;
    if (needs_entropy) {
        const NeighborIndex knn = build_knn(train_fold.features, config.k);
        entropy = local_entropy(knn, train_fold.labels, train_fold.num_classes);
    }

    ResamplePlan plan;
    plan.strategy = spec.strategy;
    plan.k_neighbors = config.k;
    plan.gamma = config.gamma;
    plan.entropy_sampling = spec.entropy_sampling;
    plan.seed = config.master_seed;

    CvaeModel* model_ptr = nullptr;
    std::optional<CvaeModel> model;
    if (strategy_needs_model(spec.strategy)) {
        TrainConfig tc = cvae_config_for(spec, config);
        RngStream train_rng = RngStream::derive(
            config.master_seed, {fold, strategy_hash, RngStream::hash_string("cvae-train")});
        model = train_cvae(train_fold, entropy, tc, train_rng).first;
        model_ptr = &*model;
    }
    RngStream resample_rng = RngStream::derive(
        config.master_seed, {fold, strategy_hash, RngStream::hash_string("resample")});
    return resample(train_fold, entropy, plan, model_ptr, resample_rng);
}

}  // namespace

MetricsReport run_cv_benchmark(const Dataset& dataset, const std::vector<StrategySpec>& specs,
                               const BenchmarkConfig& config) {
    config.validate();
    dataset.validate();
    if (specs.empty()) throw ConfigError("no strategies to benchmark");

    const std::vector<std::size_t> fold_of =
        stratified_kfold(dataset.labels, config.cv.n_folds, config.cv.seed);

    // Optional single global feature selection (leaks the label statistics
    // of validation folds into selection; off by default).
    std::optional<FeatureSelector> global_selector;
    if (config.select_top_m > 0 && config.global_feature_selection)
        global_selector = mutual_info_select(dataset, config.select_top_m);

    MetricsReport report;
    report.metric_names = metric_names_for(dataset.num_classes);
    for (const auto& spec : specs) {
        MetricsReport::Row row;
        row.strategy = spec.name;
        for (std::size_t fold = 0; fold < config.cv.n_folds; ++fold) {
            std::vector<std::size_t> train_ids, val_ids;
            for (std::size_t i = 0; i < fold_of.size(); ++i)
                (fold_of[i] == fold ? val_ids : train_ids).push_back(i);
            Dataset train_fold = dataset.take(train_ids);
            Dataset val_fold = dataset.take(val_ids);
            const std::uint64_t checksum_before = dataset_checksum(val_fold);

            if (global_selector) {
                train_fold = global_selector->apply(train_fold);
                val_fold = global_selector->apply(val_fold);
            } else if (config.select_top_m > 0) {
                const FeatureSelector selector =
                    mutual_info_select(train_fold, config.select_top_m);
                train_fold = selector.apply(train_fold);
                val_fold = selector.apply(val_fold);
            }
            fit_apply_scaler(train_fold, {&val_fold});

            const Dataset resampled = resample_for_strategy(train_fold, spec, config, fold);

            RngStream clf_rng = RngStream::derive(
                config.master_seed,
                {fold, RngStream::hash_string(spec.name), RngStream::hash_string("classifier")});
            auto [model, history] =
                train_classifier(resampled, val_fold, config.classifier, clf_rng);
            (void)history;
            const auto metrics = evaluate_fold(model, val_fold);
            for (const auto& [name, value] : metrics) row.folds[name].push_back(value);

            // The scaler rewrote val_fold's features, so re-derive the
            // checksum from the untouched source rows.
            const std::uint64_t checksum_after = dataset_checksum(dataset.take(val_ids));
            if (checksum_after != checksum_before)
                throw UsageError("leakage guard tripped: validation fold " +
                                 std::to_string(fold) + " changed during strategy '" +
                                 spec.name + "'");
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace leocvae
