#include "leocvae/optim.hpp"

#include <cmath>

#include "leocvae/errors.hpp"

namespace leocvae {

void adam_step(const std::vector<ParamTensor*>& params, const AdamConfig& config) {
    for (ParamTensor* p : params) {
        if (!p->grad.all_finite()) {
            throw NumericError("adam_step: non-finite gradient in parameter '" + p->name + "'");
        }
    }
    for (ParamTensor* p : params) {
        if (config.weight_decay != 0.0) {
            p->value *= (1.0 - config.lr * config.weight_decay);
        }
        p->step_count += 1;
        const double t = static_cast<double>(p->step_count);
        const double bc1 = 1.0 - std::pow(config.beta1, t);
        const double bc2 = 1.0 - std::pow(config.beta2, t);
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.values()[i];
            double& m = p->adam_m.values()[i];
            double& v = p->adam_v.values()[i];
            m = config.beta1 * m + (1.0 - config.beta1) * g;
            v = config.beta2 * v + (1.0 - config.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            p->value.values()[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

double clip_global_norm(const std::vector<ParamTensor*>& params, double max_norm) {
    if (max_norm <= 0.0) {
        throw ConfigError("clip_global_norm: max_norm must be positive");
    }
    double sq = 0.0;
    for (const ParamTensor* p : params) sq += squared_frobenius(p->grad);
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (ParamTensor* p : params) p->grad *= factor;
    }
    return norm;
}

}  // namespace leocvae
