#include "leocvae/cvae.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "leocvae/errors.hpp"
#include "leocvae/optim.hpp"

namespace leocvae {

void CvaeArchitecture::validate() const {
    if (input_dim == 0 || num_classes == 0 || enc_hidden1 == 0 || enc_hidden2 == 0 ||
        latent_dim == 0 || dec_hidden1 == 0 || dec_hidden2 == 0)
        throw ConfigError("architecture dimensions must be positive");
    if (dropout_p < 0 || dropout_p >= 1) throw ConfigError("dropout_p must be in [0, 1)");
    if (leaky_slope < 0) throw ConfigError("leaky_slope must be nonnegative");
}

void TrainConfig::validate() const {
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
    if (clip_norm <= 0) throw ConfigError("clip_norm must be positive");
    if (beta < 0) throw ConfigError("beta must be nonnegative");
    if (kld_floor < 0) throw ConfigError("kld_floor must be nonnegative");
    if (gamma < 0) throw ConfigError("gamma must be nonnegative");
    if (!(val_fraction > 0 && val_fraction < 0.5))
        throw ConfigError("val_fraction must lie in (0, 0.5)");
    if (focal_gamma < 0) throw ConfigError("focal_gamma must be nonnegative");
}

namespace {

// Indices into CvaeModel::params_.
enum ParamIdx {
    kEncW1, kEncB1, kEncW2, kEncB2,
    kMuW, kMuB, kLogvarW, kLogvarB,
    kDecW1, kDecB1, kDecW2, kDecB2, kDecW3, kDecB3,
    kParamCount
};

Matrix kaiming_uniform(std::size_t in, std::size_t out, double gain, RngStream& rng) {
    const double bound = gain * std::sqrt(3.0 / static_cast<double>(in));
    Matrix w(in, out);
    for (std::size_t i = 0; i < in; ++i)
        for (std::size_t j = 0; j < out; ++j) w(i, j) = rng.uniform(-bound, bound);
    return w;
}

constexpr double kLogvarClamp = 10.0;

}  // namespace

CvaeModel::CvaeModel(const CvaeArchitecture& arch, RngStream& rng) : arch_(arch) {
    arch.validate();
    const double hidden_gain = std::sqrt(2.0 / (1.0 + arch.leaky_slope * arch.leaky_slope));
    const std::size_t enc_in = arch.input_dim + arch.num_classes;
    const std::size_t dec_in = arch.latent_dim + arch.num_classes;

    params_.resize(kParamCount);
    auto weight = [&](ParamIdx idx, const char* name, std::size_t in, std::size_t out,
                      double gain) {
        params_[idx] = ParamTensor(name, kaiming_uniform(in, out, gain, rng));
    };
    auto bias = [&](ParamIdx idx, const char* name, std::size_t out) {
        params_[idx] = ParamTensor(name, Matrix(1, out));
    };
    weight(kEncW1, "enc_w1", enc_in, arch.enc_hidden1, hidden_gain);
    bias(kEncB1, "enc_b1", arch.enc_hidden1);
    weight(kEncW2, "enc_w2", arch.enc_hidden1, arch.enc_hidden2, hidden_gain);
    bias(kEncB2, "enc_b2", arch.enc_hidden2);
    weight(kMuW, "mu_w", arch.enc_hidden2, arch.latent_dim, 1.0);
    bias(kMuB, "mu_b", arch.latent_dim);
    weight(kLogvarW, "logvar_w", arch.enc_hidden2, arch.latent_dim, 1.0);
    bias(kLogvarB, "logvar_b", arch.latent_dim);
    weight(kDecW1, "dec_w1", dec_in, arch.dec_hidden1, hidden_gain);
    bias(kDecB1, "dec_b1", arch.dec_hidden1);
    weight(kDecW2, "dec_w2", arch.dec_hidden1, arch.dec_hidden2, hidden_gain);
    bias(kDecB2, "dec_b2", arch.dec_hidden2);
    weight(kDecW3, "dec_w3", arch.dec_hidden2, arch.input_dim, 1.0);
    bias(kDecB3, "dec_b3", arch.input_dim);
}

std::vector<ParamTensor*> CvaeModel::parameters() {
    std::vector<ParamTensor*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
}

std::vector<Matrix> CvaeModel::snapshot() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
}

void CvaeModel::restore(const std::vector<Matrix>& snap) {
    if (snap.size() != params_.size()) throw DimensionError("snapshot size mismatch");
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i].value = snap[i];
}

CvaeModel::Encoded CvaeModel::encode_nodes(Tape& tape, Node x, Node class_onehot, bool training,
                                           RngStream& rng) {
    Node h = tape.concat_cols(x, class_onehot);
    h = tape.affine(h, tape.param(params_[kEncW1]), tape.param(params_[kEncB1]));
    h = tape.leaky_relu(h, arch_.leaky_slope);
    h = tape.dropout(h, arch_.dropout_p, training, rng);
    h = tape.affine(h, tape.param(params_[kEncW2]), tape.param(params_[kEncB2]));
    h = tape.leaky_relu(h, arch_.leaky_slope);
    h = tape.dropout(h, arch_.dropout_p, training, rng);
    Node mu = tape.affine(h, tape.param(params_[kMuW]), tape.param(params_[kMuB]));
    Node logvar = tape.affine(h, tape.param(params_[kLogvarW]), tape.param(params_[kLogvarB]));
    logvar = tape.clamp(logvar, -kLogvarClamp, kLogvarClamp);
    return {mu, logvar};
}

Node CvaeModel::decode_nodes(Tape& tape, Node z, Node class_onehot, bool training,
                             RngStream& rng) {
    Node h = tape.concat_cols(z, class_onehot);
    h = tape.affine(h, tape.param(params_[kDecW1]), tape.param(params_[kDecB1]));
    h = tape.leaky_relu(h, arch_.leaky_slope);
    h = tape.dropout(h, arch_.dropout_p, training, rng);
    h = tape.affine(h, tape.param(params_[kDecW2]), tape.param(params_[kDecB2]));
    h = tape.leaky_relu(h, arch_.leaky_slope);
    h = tape.dropout(h, arch_.dropout_p, training, rng);
    return tape.affine(h, tape.param(params_[kDecW3]), tape.param(params_[kDecB3]));
}

std::pair<Matrix, Matrix> CvaeModel::encode(const Matrix& x, const Matrix& class_onehot) {
    Tape tape;
    RngStream unused(0);
    Encoded enc = encode_nodes(tape, tape.constant(x), tape.constant(class_onehot), false, unused);
    return {tape.value(enc.mu), tape.value(enc.logvar)};
}

Matrix CvaeModel::decode(const Matrix& z, const Matrix& class_onehot) {
    Tape tape;
    RngStream unused(0);
    Node out = decode_nodes(tape, tape.constant(z), tape.constant(class_onehot), false, unused);
    return tape.value(out);
}

nlohmann::json CvaeModel::to_json() const {
    nlohmann::json j;
    j["format"] = "leocvae-model";
    j["version"] = 1;
    j["architecture"] = {
        {"input_dim", arch_.input_dim},       {"num_classes", arch_.num_classes},
        {"enc_hidden1", arch_.enc_hidden1},   {"enc_hidden2", arch_.enc_hidden2},
        {"latent_dim", arch_.latent_dim},     {"dec_hidden1", arch_.dec_hidden1},
        {"dec_hidden2", arch_.dec_hidden2},   {"dropout_p", arch_.dropout_p},
        {"leaky_slope", arch_.leaky_slope},
    };
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) {
        nlohmann::json entry;
        entry["name"] = p.name;
        entry["rows"] = p.value.rows();
        entry["cols"] = p.value.cols();
        entry["data"] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
        params.push_back(std::move(entry));
    }
    j["params"] = std::move(params);
    return j;
}

CvaeModel CvaeModel::from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format") != "leocvae-model")
        throw ParseError("not a model document (missing format tag)");
    if (j.at("version").get<int>() != 1)
        throw ParseError("unsupported model version " + j.at("version").dump());
    const auto& a = j.at("architecture");
    CvaeModel model;
    model.arch_.input_dim = a.at("input_dim").get<std::size_t>();
    model.arch_.num_classes = a.at("num_classes").get<std::size_t>();
    model.arch_.enc_hidden1 = a.at("enc_hidden1").get<std::size_t>();
    model.arch_.enc_hidden2 = a.at("enc_hidden2").get<std::size_t>();
    model.arch_.latent_dim = a.at("latent_dim").get<std::size_t>();
    model.arch_.dec_hidden1 = a.at("dec_hidden1").get<std::size_t>();
    model.arch_.dec_hidden2 = a.at("dec_hidden2").get<std::size_t>();
    model.arch_.dropout_p = a.at("dropout_p").get<double>();
    model.arch_.leaky_slope = a.at("leaky_slope").get<double>();
    model.arch_.validate();

    const auto& params = j.at("params");
    if (params.size() != kParamCount)
        throw ParseError("model document has " + std::to_string(params.size()) +
                         " parameters, expected " + std::to_string(int(kParamCount)));
    model.params_.reserve(kParamCount);
    for (const auto& entry : params) {
        const auto rows = entry.at("rows").get<std::size_t>();
        const auto cols = entry.at("cols").get<std::size_t>();
        const auto data = entry.at("data").get<std::vector<double>>();
        if (data.size() != rows * cols)
            throw ParseError("parameter '" + entry.at("name").get<std::string>() +
                             "' data length mismatch");
        Matrix value(rows, cols);
        std::copy(data.begin(), data.end(), value.data());
        model.params_.emplace_back(entry.at("name").get<std::string>(), std::move(value));
    }
    return model;
}

Node reparameterize_nodes(Tape& tape, Node mu, Node logvar, const Matrix& epsilon) {
    Node sigma = tape.exp(tape.scale(logvar, 0.5));
    return tape.add(mu, tape.mul(tape.constant(epsilon), sigma));
}

Matrix reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& epsilon) {
    check_same_shape(mu, logvar, "reparameterize");
    check_same_shape(mu, epsilon, "reparameterize");
    Matrix z(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < mu.size(); ++i)
        z.data()[i] = mu.data()[i] + epsilon.data()[i] * std::exp(0.5 * logvar.data()[i]);
    return z;
}

std::vector<double> kld_term(const Matrix& mu, const Matrix& logvar) {
    check_same_shape(mu, logvar, "kld_term");
    std::vector<double> out(mu.rows());
    for (std::size_t i = 0; i < mu.rows(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < mu.cols(); ++j) {
            const double m = mu(i, j), lv = logvar(i, j);
            s += m * m + std::exp(lv) - 1.0 - lv;
        }
        out[i] = 0.5 * s;
    }
    return out;
}

LossNodes weighted_loss_nodes(Tape& tape, Node x_hat, const Matrix& x,
                              const std::vector<double>& sample_weights, Node mu, Node logvar,
                              double beta, double kld_floor) {
    const std::size_t batch = x.rows();
    if (sample_weights.size() != batch)
        throw DimensionError("sample_weights length " + std::to_string(sample_weights.size()) +
                             " != batch " + std::to_string(batch));
    Matrix w(batch, 1);
    for (std::size_t i = 0; i < batch; ++i) w(i, 0) = sample_weights[i];

    Node diff = tape.sub(x_hat, tape.constant(x));
    Node per_sample = tape.row_sum(tape.mul(diff, diff));
    Node recon = tape.mean_all(tape.mul(per_sample, tape.constant(w)));

    const Matrix& mu_v = tape.value(mu);
    Node inner = tape.sub(tape.sub(tape.add(tape.mul(mu, mu), tape.exp(logvar)),
                                   tape.constant(Matrix::constant(mu_v.rows(), mu_v.cols(), 1.0))),
                          logvar);
    Node kld = tape.mean_all(tape.scale(tape.row_sum(inner), 0.5));
    Node total = tape.add(recon, tape.scale(tape.max_with(kld, kld_floor), beta));
    return {total, recon, kld};
}

std::vector<double> lewl_sample_weights(const std::vector<int>& labels,
                                        const EntropyScores& entropy,
                                        const std::vector<double>& class_w, double gamma,
                                        bool use_entropy, bool use_class_weights) {
    if (entropy.h.size() != labels.size())
        throw DimensionError("entropy scores cover " + std::to_string(entropy.h.size()) +
                             " rows, labels " + std::to_string(labels.size()));
    std::vector<double> w(labels.size(), 1.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= class_w.size())
            throw DimensionError("label id " + std::to_string(y) + " out of range");
        double v = 1.0;
        if (use_class_weights) v *= class_w[static_cast<std::size_t>(y)];
        if (use_entropy) v *= entropy_weight(entropy.h[i], gamma);
        w[i] = v;
    }
    return w;
}

LossValues lewl_loss(const Matrix& x, const Matrix& x_hat, const std::vector<int>& labels,
                     const EntropyScores& entropy, const std::vector<double>& class_w,
                     const Matrix& mu, const Matrix& logvar, double beta, double gamma,
                     double kld_floor) {
    check_same_shape(x, x_hat, "lewl_loss");
    const auto weights = lewl_sample_weights(labels, entropy, class_w, gamma, true, true);
    Tape tape;
    LossNodes nodes = weighted_loss_nodes(tape, tape.constant(x_hat), x, weights,
                                          tape.constant(mu), tape.constant(logvar), beta,
                                          kld_floor);
    return {tape.scalar(nodes.total), tape.scalar(nodes.recon), tape.scalar(nodes.kld)};
}

CorrelationResult reconstruction_correlation(const Matrix& x, const Matrix& x_hat) {
    return pearson_correlation(x, x_hat);
}

void TrainingHistory::to_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << "epoch,train_loss,val_loss,recon,kld,recon_corr\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                      r.train_loss, r.val_loss, r.recon, r.kld, r.recon_corr);
        out << buf;
    }
    if (!out) throw ConfigError("write to '" + path + "' failed");
}

namespace {

struct ValSplit {
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> val_ids;
};

ValSplit stratified_val_split(const std::vector<int>& labels, std::size_t num_classes,
                              double val_fraction, RngStream& rng) {
    ValSplit split;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == static_cast<int>(c)) ids.push_back(i);
        if (ids.empty()) continue;
        rng.shuffle(ids);
        std::size_t n_val = static_cast<std::size_t>(
            std::floor(val_fraction * static_cast<double>(ids.size())));
        if (n_val == 0 && ids.size() >= 2) n_val = 1;  // keep every class monitored
        if (n_val >= ids.size()) n_val = ids.size() - 1;
        for (std::size_t i = 0; i < ids.size(); ++i)
            (i < n_val ? split.val_ids : split.train_ids).push_back(ids[i]);
    }
    if (split.val_ids.empty())
        throw ConfigError("dataset too small for an internal validation split");
    std::sort(split.train_ids.begin(), split.train_ids.end());
    std::sort(split.val_ids.begin(), split.val_ids.end());
    return split;
}

std::vector<double> focal_weights(const Matrix& x, const Matrix& x_hat, double focal_gamma) {
    std::vector<double> err(x.rows());
    double mean = 0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double e = 0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double d = x(i, j) - x_hat(i, j);
            e += d * d;
        }
        err[i] = e;
        mean += e;
    }
    mean /= static_cast<double>(x.rows());
    std::vector<double> w(x.rows(), 1.0);
    if (mean <= 1e-12) return w;  // perfect reconstruction: nothing to focus on
    for (std::size_t i = 0; i < x.rows(); ++i) w[i] = std::pow(err[i] / mean, focal_gamma);
    return w;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& ids) {
    std::vector<T> out;
    out.reserve(ids.size());
    for (std::size_t i : ids) out.push_back(src[i]);
    return out;
}

}  // namespace

std::pair<CvaeModel, TrainingHistory> train_cvae(const Dataset& dataset,
                                                 const EntropyScores& entropy,
                                                 const TrainConfig& config, RngStream& rng) {
    config.validate();
    dataset.validate();
    if (entropy.h.size() != dataset.size())
        throw DimensionError("entropy scores cover " + std::to_string(entropy.h.size()) +
                             " rows, dataset has " + std::to_string(dataset.size()));

    CvaeArchitecture arch;
    arch.input_dim = dataset.dim();
    arch.num_classes = dataset.num_classes;
    CvaeModel model(arch, rng);
    const auto params = model.parameters();

    const auto class_w = class_weights(dataset.labels, dataset.num_classes);
    const bool focal = config.weight_mode == WeightMode::Focal;
    std::vector<double> static_weights;
    if (!focal)
        static_weights = lewl_sample_weights(dataset.labels, entropy, class_w, config.gamma,
                                             config.entropy_loss, config.class_weights);

    const ValSplit split =
        stratified_val_split(dataset.labels, dataset.num_classes, config.val_fraction, rng);
    const Matrix x_val = dataset.features.take_rows(split.val_ids);
    const Matrix onehot_val = one_hot(gather(dataset.labels, split.val_ids), dataset.num_classes);
    const std::vector<double> w_val =
        focal ? std::vector<double>() : gather(static_weights, split.val_ids);

    // Frozen validation epsilon: one draw per (row, latent dim), reused every
    // epoch so val losses are comparable across epochs.
    Matrix eps_val(split.val_ids.size(), arch.latent_dim);
    for (std::size_t i = 0; i < eps_val.size(); ++i) eps_val.data()[i] = rng.normal();

    AdamConfig adam;
    adam.lr = config.lr;
    adam.weight_decay = config.weight_decay;

    TrainingHistory history;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Matrix> best_snapshot = model.snapshot();
    std::size_t stagnant = 0;

    std::vector<std::size_t> order = split.train_ids;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng.shuffle(order);
        double train_loss_sum = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            const std::vector<std::size_t> batch_ids(order.begin() + start, order.begin() + end);
            const std::size_t bsz = batch_ids.size();

            const Matrix xb = dataset.features.take_rows(batch_ids);
            const Matrix ohb = one_hot(gather(dataset.labels, batch_ids), dataset.num_classes);
            Matrix eps(bsz, arch.latent_dim);
            for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();

            Tape tape;
            Node x_node = tape.constant(xb);
            Node oh_node = tape.constant(ohb);
            auto enc = model.encode_nodes(tape, x_node, oh_node, true, rng);
            Node z = reparameterize_nodes(tape, enc.mu, enc.logvar, eps);
            Node x_hat = model.decode_nodes(tape, z, oh_node, true, rng);

            const std::vector<double> wb = focal
                ? focal_weights(xb, tape.value(x_hat), config.focal_gamma)
                : gather(static_weights, batch_ids);
            LossNodes loss = weighted_loss_nodes(tape, x_hat, xb, wb, enc.mu, enc.logvar,
                                                 config.beta, config.kld_floor);
            const double loss_value = tape.scalar(loss.total);
            if (!std::isfinite(loss_value))
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                                   ", batch starting at sample " + std::to_string(start));

            for (auto* p : params) p->zero_grad();
            tape.backward(loss.total);
            clip_global_norm(params, config.clip_norm);
            adam_step(params, adam);
            train_loss_sum += loss_value * static_cast<double>(bsz);
        }

        // Validation pass: eval mode, frozen epsilon.
        Tape vtape;
        RngStream unused(0);
        Node xv = vtape.constant(x_val);
        Node ohv = vtape.constant(onehot_val);
        auto venc = model.encode_nodes(vtape, xv, ohv, false, unused);
        Node vz = reparameterize_nodes(vtape, venc.mu, venc.logvar, eps_val);
        Node vx_hat = model.decode_nodes(vtape, vz, ohv, false, unused);
        const std::vector<double> wv =
            focal ? focal_weights(x_val, vtape.value(vx_hat), config.focal_gamma) : w_val;
        LossNodes vloss = weighted_loss_nodes(vtape, vx_hat, x_val, wv, venc.mu, venc.logvar,
                                              config.beta, config.kld_floor);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_loss_sum / static_cast<double>(order.size());
        rec.val_loss = vtape.scalar(vloss.total);
        rec.recon = vtape.scalar(vloss.recon);
        rec.kld = vtape.scalar(vloss.kld);
        rec.recon_corr = reconstruction_correlation(x_val, vtape.value(vx_hat)).value;
        history.rows.push_back(rec);
        if (!std::isfinite(rec.val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));

        if (rec.val_loss < best_val) {
            best_val = rec.val_loss;
            best_snapshot = model.snapshot();
            history.best_epoch = epoch;
            stagnant = 0;
        } else {
            ++stagnant;
        }
        // patience == 0 disables early stopping entirely
        if (config.patience > 0 && stagnant >= config.patience) {
            history.early_stop_epoch = epoch;
            break;
        }
    }

    model.restore(best_snapshot);
    return {std::move(model), std::move(history)};
}

}  // namespace leocvae
