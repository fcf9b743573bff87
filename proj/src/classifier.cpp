#include "leocvae/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "leocvae/errors.hpp"
#include "leocvae/metrics.hpp"
#include "leocvae/optim.hpp"

namespace leocvae {

void ClassifierConfig::validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (!(scheduler_factor > 0 && scheduler_factor < 1))
        throw ConfigError("scheduler_factor must lie in (0, 1)");
    if (clip_norm <= 0) throw ConfigError("clip_norm must be positive");
    if (label_smoothing < 0 || label_smoothing >= 1)
        throw ConfigError("label_smoothing must lie in [0, 1)");
    if (hidden == 0) throw ConfigError("hidden width must be positive");
    if (dropout_p < 0 || dropout_p >= 1) throw ConfigError("dropout_p must be in [0, 1)");
}

namespace {

enum ParamIdx { kW1, kB1, kBnGamma, kBnBeta, kW2, kB2, kParamCount };

Matrix kaiming_uniform(std::size_t in, std::size_t out, double gain, RngStream& rng) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    Matrix w(in, out);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    return w;
}

}  // namespace

MlpClassifier::MlpClassifier(std::size_t input_dim, std::size_t num_classes,
                             const ClassifierConfig& config, RngStream& rng)
    : input_dim_(input_dim), num_classes_(num_classes), dropout_p_(config.dropout_p) {
    if (input_dim == 0) throw ConfigError("classifier input_dim must be positive");
    if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
    config.validate();
    const std::size_t out_width = num_classes == 2 ? 1 : num_classes;
    const double relu_gain = std::sqrt(2.0);
    params_.resize(kParamCount);
    params_[kW1] = ParamTensor("w1", kaiming_uniform(input_dim, config.hidden, relu_gain, rng));
    params_[kB1] = ParamTensor("b1", Matrix(1, config.hidden));
    params_[kBnGamma] = ParamTensor("bn_gamma", Matrix::constant(1, config.hidden, 1.0));
    params_[kBnBeta] = ParamTensor("bn_beta", Matrix(1, config.hidden));
    params_[kW2] = ParamTensor("w2", kaiming_uniform(config.hidden, out_width, 1.0, rng));
    params_[kB2] = ParamTensor("b2", Matrix(1, out_width));
    bn_state_ = BatchNormState(config.hidden);
}

std::vector<ParamTensor*> MlpClassifier::parameters() {
    std::vector<ParamTensor*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::vector<Matrix> MlpClassifier::snapshot() const {
    std::vector<Matrix> out;
    out.reserve(params_.size() + 2);
    for (const auto& p : params_) out.push_back(p.value);
    out.push_back(bn_state_.running_mean);
    out.push_back(bn_state_.running_var);
    return out;
}

void MlpClassifier::restore(const std::vector<Matrix>& snap) {
    if (snap.size() != params_.size() + 2) throw DimensionError("snapshot size mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].value = snap[i];
    bn_state_.running_mean = snap[params_.size()];
    bn_state_.running_var = snap[params_.size() + 1];
}

Node MlpClassifier::logits_nodes(Tape& tape, Node x, bool training, RngStream& rng) {
    Node h = tape.affine(x, tape.param(params_[kW1]), tape.param(params_[kB1]));
    h = tape.batchnorm(h, tape.param(params_[kBnGamma]), tape.param(params_[kBnBeta]), bn_state_,
                       training);
    h = tape.leaky_relu(h, 0.0);  // plain ReLU
    h = tape.dropout(h, dropout_p_, training, rng);
    return tape.affine(h, tape.param(params_[kW2]), tape.param(params_[kB2]));
}

Matrix MlpClassifier::predict_scores(const Matrix& features) {
    if (features.cols() != input_dim_)
        throw DimensionError("classifier expects " + std::to_string(input_dim_) +
                             " features, got " + std::to_string(features.cols()));
    Tape tape;
    RngStream unused(0);
    const Matrix logits =
        tape.value(logits_nodes(tape, tape.constant(features), false, unused));
    if (binary()) {
        Matrix scores(logits.rows(), 1);
        for (std::size_t i = 0; i < logits.rows(); ++i)
            scores(i, 0) = 1.0 / (1.0 + std::exp(-logits(i, 0)));
        return scores;
    }
    Matrix scores(logits.rows(), num_classes_);
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = logits(i, 0);
        for (std::size_t c = 1; c < num_classes_; ++c) mx = std::max(mx, logits(i, c));
        double denom = 0;
        for (std::size_t c = 0; c < num_classes_; ++c) {
            scores(i, c) = std::exp(logits(i, c) - mx);
            denom += scores(i, c);
        }
        for (std::size_t c = 0; c < num_classes_; ++c) scores(i, c) /= denom;
    }
    return scores;
}

namespace {

double validation_auc(MlpClassifier& model, const Dataset& val) {
    const Matrix scores = model.predict_scores(val.features);
    if (model.binary()) {
        std::vector<double> col(scores.rows());
        for (std::size_t i = 0; i < scores.rows(); ++i) col[i] = scores(i, 0);
        return auc_roc(col, val.labels);
    }
    return macro_micro(MetricKind::AucRoc, scores, val.labels).micro;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& ids) {
    std::vector<T> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(src[i]);
    return out;
}

}  // namespace

std::pair<MlpClassifier, ClassifierHistory> train_classifier(const Dataset& train,
                                                             const Dataset& val,
                                                             const ClassifierConfig& config,
                                                             RngStream& rng) {
    config.validate();
    train.validate();
    val.validate();
    if (train.dim() != val.dim())
        throw DimensionError("train/val feature width mismatch: " + std::to_string(train.dim()) +
                             " vs " + std::to_string(val.dim()));
    if (train.num_classes != val.num_classes)
        throw DimensionError("train/val class count mismatch");

    MlpClassifier model(train.dim(), train.num_classes, config, rng);
    const auto params = model.parameters();
    const bool binary = model.binary();
    const double smoothing = config.label_smoothing;

    AdamConfig adam;
    adam.lr = config.lr;
    adam.weight_decay = config.weight_decay;

    ClassifierHistory history;
    double best_metric = -std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_snapshot = model.snapshot();
    std::size_t stagnant_stop = 0, stagnant_lr = 0;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const std::vector<std::size_t> batch_ids(order.begin() + start, order.begin() + end);
            const Matrix xb = train.features.take_rows(batch_ids);
            const std::vector<int> yb = gather(train.labels, batch_ids);

            Tape tape;
            Node logits = model.logits_nodes(tape, tape.constant(xb), true, rng);
            Node loss;
            if (binary) {
                Matrix targets(yb.size(), 1);
                for (std::size_t i = 0; i < yb.size(); ++i)
                    targets(i, 0) = yb[i] == 1 ? 1.0 - smoothing / 2 : smoothing / 2;
                loss = tape.bce_with_logits_mean(logits, targets);
            } else {
                Matrix targets(yb.size(), train.num_classes);
                const double off = smoothing / static_cast<double>(train.num_classes);
                for (std::size_t i = 0; i < yb.size(); ++i) {
                    for (std::size_t c = 0; c < train.num_classes; ++c) targets(i, c) = off;
                    targets(i, static_cast<std::size_t>(yb[i])) += 1.0 - smoothing;
                }
                loss = tape.softmax_xent_mean(logits, targets);
            }
            const double loss_value = tape.scalar(loss);
            if (!std::isfinite(loss_value))
                throw NumericError("non-finite classifier loss at epoch " +
                                   std::to_string(epoch) + ", batch starting at sample " +
                                   std::to_string(start));
            for (auto* p : params) p->zero_grad();
            tape.backward(loss);
            clip_global_norm(params, config.clip_norm);
            adam_step(params, adam);
            loss_sum += loss_value * static_cast<double>(batch_ids.size());
        }

        ClassifierHistory::Row row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(train.size());
        row.val_metric = validation_auc(model, val);
        row.lr = adam.lr;
        history.rows.push_back(row);

        if (row.val_metric > best_metric) {
            best_metric = row.val_metric;
            best_snapshot = model.snapshot();
            history.best_epoch = epoch;
            stagnant_stop = 0;
            stagnant_lr = 0;
        } else {
            ++stagnant_stop;
            ++stagnant_lr;
        }
        if (config.scheduler_patience > 0 && stagnant_lr >= config.scheduler_patience) {
            adam.lr *= config.scheduler_factor;
            stagnant_lr = 0;
        }
        // patience == 0 disables early stopping entirely
        if (config.patience > 0 && stagnant_stop >= config.patience) {
            history.early_stop_epoch = epoch;
            break;
        }
    }

    model.restore(best_snapshot);
    return {std::move(model), std::move(history)};
}

}  // namespace leocvae
