#include "leocvae/config.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "leocvae/errors.hpp"

namespace leocvae {

std::size_t ExperimentConfig::resolved_k(std::size_t num_classes) const {
    if (k > 0) return static_cast<std::size_t>(k);
    return num_classes <= 2 ? 7 : 15;
}

double ExperimentConfig::resolved_gamma(std::size_t num_classes) const {
    if (gamma >= 0) return gamma;
    return num_classes <= 2 ? 0.5 : 2.5;
}

nlohmann::json ExperimentConfig::to_json() const {
    return {
        {"data", data_path},
        {"label_col", label_column},
        {"out", out_dir},
        {"strategy", strategies},
        {"folds", folds},
        {"seed", seed},
        {"k", k},
        {"gamma", gamma},
        {"beta", beta},
        {"kld_floor", kld_floor},
        {"no_entropy_loss", no_entropy_loss},
        {"no_entropy_sampling", no_entropy_sampling},
        {"no_class_weights", no_class_weights},
        {"ablation", ablation},
        {"select_top_m", select_top_m},
        {"global_feature_selection", global_feature_selection},
        {"cvae",
         {{"lr", cvae.lr},
          {"weight_decay", cvae.weight_decay},
          {"batch_size", cvae.batch_size},
          {"max_epochs", cvae.max_epochs},
          {"patience", cvae.patience},
          {"clip_norm", cvae.clip_norm},
          {"val_fraction", cvae.val_fraction}}},
        {"classifier",
         {{"lr", classifier.lr},
          {"weight_decay", classifier.weight_decay},
          {"batch_size", classifier.batch_size},
          {"max_epochs", classifier.max_epochs},
          {"patience", classifier.patience},
          {"scheduler_patience", classifier.scheduler_patience},
          {"scheduler_factor", classifier.scheduler_factor},
          {"clip_norm", classifier.clip_norm},
          {"label_smoothing", classifier.label_smoothing},
          {"hidden", classifier.hidden},
          {"dropout_p", classifier.dropout_p}}},
        {"synthetic",
         {{"dim", synth_dim},
          {"counts", synth_counts},
          {"separation", synth_separation},
          {"noise", synth_noise},
          {"warp", synth_warp}}},
    };
}

namespace {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

void apply_config_file(ExperimentConfig& cfg, const std::string& path,
                       const std::vector<std::string>& flag_provided) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(path + ": config must be a JSON object");

    for (const auto& flag : flag_provided)
        if (j.contains(flag))
            std::cerr << "warning: config file '" << path << "' overrides --" << flag << "\n";

    take(j, "data", cfg.data_path);
    take(j, "label_col", cfg.label_column);
    take(j, "out", cfg.out_dir);
    if (j.contains("strategy")) {
        if (j.at("strategy").is_string())
            cfg.strategies = {j.at("strategy").get<std::string>()};
        else
            cfg.strategies = j.at("strategy").get<std::vector<std::string>>();
    }
    take(j, "folds", cfg.folds);
    take(j, "seed", cfg.seed);
    take(j, "k", cfg.k);
    take(j, "gamma", cfg.gamma);
    take(j, "beta", cfg.beta);
    take(j, "kld_floor", cfg.kld_floor);
    take(j, "no_entropy_loss", cfg.no_entropy_loss);
    take(j, "no_entropy_sampling", cfg.no_entropy_sampling);
    take(j, "no_class_weights", cfg.no_class_weights);
    take(j, "ablation", cfg.ablation);
    take(j, "select_top_m", cfg.select_top_m);
    take(j, "global_feature_selection", cfg.global_feature_selection);

    if (j.contains("cvae")) {
        const auto& c = j.at("cvae");
        take(c, "lr", cfg.cvae.lr);
        take(c, "weight_decay", cfg.cvae.weight_decay);
        take(c, "batch_size", cfg.cvae.batch_size);
        take(c, "max_epochs", cfg.cvae.max_epochs);
        take(c, "patience", cfg.cvae.patience);
        take(c, "clip_norm", cfg.cvae.clip_norm);
        take(c, "val_fraction", cfg.cvae.val_fraction);
    }
    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        take(c, "lr", cfg.classifier.lr);
        take(c, "weight_decay", cfg.classifier.weight_decay);
        take(c, "batch_size", cfg.classifier.batch_size);
        take(c, "max_epochs", cfg.classifier.max_epochs);
        take(c, "patience", cfg.classifier.patience);
        take(c, "scheduler_patience", cfg.classifier.scheduler_patience);
        take(c, "scheduler_factor", cfg.classifier.scheduler_factor);
        take(c, "clip_norm", cfg.classifier.clip_norm);
        take(c, "label_smoothing", cfg.classifier.label_smoothing);
        take(c, "hidden", cfg.classifier.hidden);
        take(c, "dropout_p", cfg.classifier.dropout_p);
    }
    if (j.contains("synthetic")) {
        const auto& s = j.at("synthetic");
        take(s, "dim", cfg.synth_dim);
        take(s, "counts", cfg.synth_counts);
        take(s, "separation", cfg.synth_separation);
        take(s, "noise", cfg.synth_noise);
        take(s, "warp", cfg.synth_warp);
    }
}

BenchmarkConfig make_benchmark_config(const ExperimentConfig& cfg, std::size_t num_classes) {
    BenchmarkConfig bc;
    bc.cv.n_folds = cfg.folds;
    bc.cv.seed = cfg.seed;
    bc.cvae = cfg.cvae;
    bc.cvae.beta = cfg.beta;
    bc.cvae.kld_floor = cfg.kld_floor;
    bc.cvae.seed = cfg.seed;
    bc.classifier = cfg.classifier;
    bc.k = cfg.resolved_k(num_classes);
    bc.gamma = cfg.resolved_gamma(num_classes);
    bc.cvae.k = bc.k;
    bc.cvae.gamma = bc.gamma;
    bc.select_top_m = cfg.select_top_m;
    bc.global_feature_selection = cfg.global_feature_selection;
    bc.master_seed = cfg.seed;
    return bc;
}

std::vector<StrategySpec> ablation_specs() {
    auto variant = [](const char* name, bool ent_loss, bool ent_sampling, bool class_w) {
        StrategySpec s;
        s.name = name;
        s.strategy = Strategy::LeoCvae;
        s.entropy_loss = ent_loss;
        s.entropy_sampling = ent_sampling;
        s.class_weights = class_w;
        return s;
    };
    return {
        variant("full", true, true, true),
        variant("no-entropy-loss", false, true, true),
        variant("no-entropy-sampling", true, false, true),
        variant("no-class-weights", true, true, false),
        variant("class-weights-only", false, false, true),
        variant("plain-cvae", false, false, false),
    };
}

std::uint64_t file_fnv1a(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "' for hashing");
    std::uint64_t h = 1469598103934665603ull;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!in) break;
    }
    return h;
}

}  // namespace leocvae
