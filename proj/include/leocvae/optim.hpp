#pragma once

#include <vector>

#include "leocvae/tape.hpp"

namespace leocvae {

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 0.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update over all params. Weight decay is decoupled: values are
// shrunk by (1 - lr*weight_decay) before the moment update, so gradients
// stay equal to the loss gradient. Throws NumericError naming the parameter
// if any gradient entry is non-finite.
void adam_step(const std::vector<ParamTensor*>& params, const AdamConfig& config);

// Scales all gradients so the global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_global_norm(const std::vector<ParamTensor*>& params, double max_norm);

}  // namespace leocvae
