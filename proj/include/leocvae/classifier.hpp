#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leocvae/dataset.hpp"
#include "leocvae/matrix.hpp"
#include "leocvae/rng.hpp"
#include "leocvae/tape.hpp"

namespace leocvae {

struct ClassifierConfig {
    double lr = 1e-4;
    double weight_decay = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;           // early stop, monitored on val AUC
    std::size_t scheduler_patience = 5;  // ReduceLROnPlateau-style
    double scheduler_factor = 0.7;
    double clip_norm = 0.5;
    double label_smoothing = 0.1;
    std::size_t hidden = 32;
    double dropout_p = 0.5;

    void validate() const;
};

// affine input->hidden, batch norm, ReLU, dropout, affine hidden->out with
// out = 1 (binary, sigmoid score) or C (multiclass, softmax scores).
class MlpClassifier {
public:
    MlpClassifier(std::size_t input_dim, std::size_t num_classes, const ClassifierConfig& config,
                  RngStream& rng);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    bool binary() const { return num_classes_ == 2; }
    std::vector<ParamTensor*> parameters();
    std::vector<Matrix> snapshot() const;
    void restore(const std::vector<Matrix>& snap);

    Node logits_nodes(Tape& tape, Node x, bool training, RngStream& rng);

    // Eval-mode class scores: N x 1 positive-class probability (binary) or
    // N x C softmax probabilities (multiclass).
    Matrix predict_scores(const Matrix& features);

private:
    std::size_t input_dim_ = 0;
    std::size_t num_classes_ = 0;
    double dropout_p_ = 0.5;
    std::vector<ParamTensor> params_;
    BatchNormState bn_state_;
};

struct ClassifierHistory {
    struct Row {
        std::size_t epoch = 0;  // 1-based
        double train_loss = 0;
        double val_metric = 0;  // AUC-ROC (binary) / micro AUC-ROC (multiclass)
        double lr = 0;          // learning rate used during this epoch
    };
    std::vector<Row> rows;
    std::size_t best_epoch = 0;
    std::optional<std::size_t> early_stop_epoch;
};

// Label-smoothed cross-entropy training with Adam, per-batch gradient
// clipping, plateau LR decay, and early stopping on the validation AUC;
// returns the best-AUC snapshot.
std::pair<MlpClassifier, ClassifierHistory> train_classifier(const Dataset& train,
                                                             const Dataset& val,
                                                             const ClassifierConfig& config,
                                                             RngStream& rng);

}  // namespace leocvae
