#pragma once

#include <optional>
#include <string>
#include <vector>

#include "leocvae/cvae.hpp"
#include "leocvae/dataset.hpp"
#include "leocvae/entropy.hpp"
#include "leocvae/matrix.hpp"
#include "leocvae/rng.hpp"

namespace leocvae {

enum class Strategy {
    None,
    Random,
    Smote,
    BorderlineSmote,
    Adasyn,
    Cvae,       // standard CVAE generation, uniform seeds
    CvaeFocal,  // focal-loss CVAE generation, uniform seeds
    LeoCvae,    // entropy-weighted loss + entropy-guided seeds
};

Strategy strategy_from_string(const std::string& name);
std::string strategy_name(Strategy s);
bool strategy_needs_model(Strategy s);

struct ResamplePlan {
    Strategy strategy = Strategy::LeoCvae;
    std::size_t k_neighbors = 7;  // interpolation k; also the census size
    double gamma = 0.5;           // seed-selection exponent for leo-cvae
    bool entropy_sampling = true; // false: uniform seeds even for leo-cvae
    std::uint64_t seed = 42;
};

struct SyntheticBatch {
    Matrix features;
    int label = 0;
    std::vector<std::size_t> seed_ids;  // source-dataset row per synthetic row
    Strategy strategy = Strategy::None;
};

// N_gen per class: N_maj - N_c (0 for every class tied at the maximum).
std::vector<std::size_t> generation_counts(const std::vector<int>& labels,
                                           std::size_t num_classes);

// n seed draws with replacement from minority_ids, each with probability
// proportional to (1 + H_i)^gamma.
std::vector<std::size_t> select_seeds(const std::vector<std::size_t>& minority_ids,
                                      const EntropyScores& entropy, double gamma, std::size_t n,
                                      RngStream& rng);

// Encode each seed row (eval mode), draw a fresh latent epsilon, decode.
SyntheticBatch generate_cvae(CvaeModel& model, const Matrix& seed_features,
                             const std::vector<std::size_t>& seed_ids, int cls, RngStream& rng);

Dataset random_oversample(const Dataset& dataset, RngStream& rng);
Dataset smote(const Dataset& dataset, std::size_t k_neighbors, RngStream& rng);
// borderline-1: seeds restricted to the DANGER set (minority samples whose
// m-neighborhood over all classes is half-or-more other-class but not all).
Dataset borderline_smote(const Dataset& dataset, std::size_t k_neighbors,
                         std::size_t m_neighbors, RngStream& rng);
Dataset adasyn(const Dataset& dataset, std::size_t n_neighbors, RngStream& rng);

// Dispatch on plan.strategy. Output keeps every original row bit-exactly,
// ordered before the synthetic rows; all class counts end equal to N_maj.
Dataset resample(const Dataset& dataset, const EntropyScores& entropy, const ResamplePlan& plan,
                 CvaeModel* model, RngStream& rng);

}  // namespace leocvae
