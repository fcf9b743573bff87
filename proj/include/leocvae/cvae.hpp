#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "leocvae/dataset.hpp"
#include "leocvae/entropy.hpp"
#include "leocvae/matrix.hpp"
#include "leocvae/rng.hpp"
#include "leocvae/tape.hpp"

namespace leocvae {

struct CvaeArchitecture {
    std::size_t input_dim = 64;
    std::size_t num_classes = 2;
    std::size_t enc_hidden1 = 64;
    std::size_t enc_hidden2 = 32;
    std::size_t latent_dim = 16;
    std::size_t dec_hidden1 = 32;
    std::size_t dec_hidden2 = 64;
    double dropout_p = 0.1;
    double leaky_slope = 0.2;

    void validate() const;
};

// How per-sample reconstruction weights are formed during training.
enum class WeightMode {
    EntropyWeighted,  // w_class(y_i) * (1 + H_i)^gamma, per the toggles below
    Focal,            // (e_i / mean e)^focal_gamma, e_i detached per batch
};

struct TrainConfig {
    double lr = 1e-3;
    double weight_decay = 1e-5;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 500;
    std::size_t patience = 25;
    double clip_norm = 1.0;
    double beta = 4.0;
    double kld_floor = 0.1;
    double gamma = 0.5;  // 0.5 binary / 2.5 multiclass
    std::size_t k = 7;   // 7 binary / 15 multiclass
    double val_fraction = 0.1;
    std::uint64_t seed = 42;

    WeightMode weight_mode = WeightMode::EntropyWeighted;
    // Ablation toggles: drop the (1+H)^gamma factor / the class weights.
    bool entropy_loss = true;
    bool class_weights = true;
    double focal_gamma = 1.0;

    void validate() const;
};

// Per-epoch training measurements. The recon / kld / recon_corr columns are
// computed on the internal validation split in eval mode with a frozen
// epsilon (sampled once at split time) so epochs are comparable; kld is the
// pre-floor mean per-sample KL divergence.
struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0;
    double val_loss = 0;
    double recon = 0;
    double kld = 0;
    double recon_corr = 0;
};

struct TrainingHistory {
    std::vector<EpochRecord> rows;
    std::size_t best_epoch = 0;  // 1-based epoch whose weights were returned
    std::optional<std::size_t> early_stop_epoch;

    void to_csv(const std::string& path) const;
};

class CvaeModel {
public:
    // Kaiming-uniform fan-in init for weights, zero biases.
    CvaeModel(const CvaeArchitecture& arch, RngStream& rng);

    const CvaeArchitecture& architecture() const { return arch_; }
    std::vector<ParamTensor*> parameters();
    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& snap);

    struct Encoded {
        Node mu;
        Node logvar;
    };

    // Graph builders; dropout is live only when training. logvar is clamped
    // to [-10, 10].
    Encoded encode_nodes(Tape& tape, Node x, Node class_onehot, bool training, RngStream& rng);
    Node decode_nodes(Tape& tape, Node z, Node class_onehot, bool training, RngStream& rng);

    // Eval-mode value API (deterministic, dropout off).
    std::pair<Matrix, Matrix> encode(const Matrix& x, const Matrix& class_onehot);
    Matrix decode(const Matrix& z, const Matrix& class_onehot);

    nlohmann::json to_json() const;
    static CvaeModel from_json(const nlohmann::json& j);

private:
    CvaeModel() = default;
    CvaeArchitecture arch_;
    std::vector<ParamTensor> params_;
};

// z = mu + epsilon .* exp(logvar / 2)
Node reparameterize_nodes(Tape& tape, Node mu, Node logvar, const Matrix& epsilon);
Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& epsilon);

// Per-sample KL divergence of N(mu, diag exp(logvar)) from N(0, I):
// 0.5 * sum_d (mu^2 + exp(logvar) - 1 - logvar).
std::vector<double> kld_term(const Matrix& mu, const Matrix& logvar);

struct LossNodes {
    Node total;
    Node recon;  // 1x1, weighted mean reconstruction term
    Node kld;    // 1x1, mean per-sample KLD before the floor
};

// total = mean_i w_i * ||x_i - x_hat_i||^2 + beta * max(mean KLD, kld_floor)
LossNodes weighted_loss_nodes(Tape& tape, Node x_hat, const Matrix& x,
                              const std::vector<double>& sample_weights, Node mu, Node logvar,
                              double beta, double kld_floor);

// w_i = w_class(y_i) * (1 + H_i)^gamma with the TrainConfig toggles applied.
std::vector<double> lewl_sample_weights(const std::vector<int>& labels,
                                        const EntropyScores& entropy,
                                        const std::vector<double>& class_w, double gamma,
                                        bool use_entropy, bool use_class_weights);

struct LossValues {
    double total = 0;
    double recon = 0;
    double kld = 0;
};

// Value-level loss with the same semantics as the training graph.
LossValues lewl_loss(const Matrix& x, const Matrix& x_hat, const std::vector<int>& labels,
                     const EntropyScores& entropy, const std::vector<double>& class_w,
                     const Matrix& mu, const Matrix& logvar, double beta, double gamma,
                     double kld_floor);

CorrelationResult reconstruction_correlation(const Matrix& x, const Matrix& x_hat);

// Trains under the weighted objective with mini-batch Adam, per-batch
// gradient clipping, an internal stratified validation split, and early
// stopping on validation loss; returns the best-validation snapshot.
std::pair<CvaeModel, TrainingHistory> train_cvae(const Dataset& dataset,
                                                 const EntropyScores& entropy,
                                                 const TrainConfig& config, RngStream& rng);

}  // namespace leocvae
