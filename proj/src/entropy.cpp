#include "leocvae/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "leocvae/errors.hpp"

namespace leocvae {

NeighborIndex build_knn(const Matrix& features, std::size_t k) {
    const std::size_t n = features.rows();
    if (k == 0) throw ConfigError("build_knn: k must be >= 1");
    if (n < k + 1) {
        throw ConfigError("build_knn: need at least k+1 = " + std::to_string(k + 1) +
                          " samples, got " + std::to_string(n));
    }
    const std::size_t d = features.cols();

    NeighborIndex index;
    index.k = k;
    index.neighbor_ids.assign(n, {});

    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = features.data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = features.data() + j * d;
            double sq = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                const double diff = xi[f] - xj[f];
                sq += diff * diff;
            }
            dist[j] = {sq, j};
        }
        dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
        // ties resolved by lower index via the pair's second component
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k),
                          dist.end());
        auto& ids = index.neighbor_ids[i];
        ids.reserve(k);
        for (std::size_t j = 0; j < k; ++j) ids.push_back(dist[j].second);
    }
    return index;
}

EntropyScores local_entropy(const NeighborIndex& neighbors, const std::vector<int>& labels,
                            std::size_t num_classes) {
    const std::size_t n = neighbors.neighbor_ids.size();
    if (labels.size() != n) {
        throw ConfigError("local_entropy: " + std::to_string(labels.size()) + " labels for " +
                          std::to_string(n) + " samples");
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ConfigError("local_entropy: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        }
    }

    EntropyScores scores;
    scores.k = neighbors.k;
    scores.num_classes = num_classes;
    scores.h.resize(n);

    const double inv_k = 1.0 / static_cast<double>(neighbors.k);
    std::vector<std::size_t> counts(num_classes);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t id : neighbors.neighbor_ids[i]) {
            counts[static_cast<std::size_t>(labels[id])] += 1;
        }
        double h = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (counts[c] == 0) continue;  // 0*log(0) := 0
            const double p = static_cast<double>(counts[c]) * inv_k;
            h -= p * std::log2(p);
        }
        scores.h[i] = h < 0.0 ? 0.0 : h;
    }
    return scores;
}

double entropy_weight(double h, double gamma) {
    if (gamma == 0.0) return 1.0;
    return std::pow(1.0 + h, gamma);
}

std::vector<double> class_weights(const std::vector<int>& labels, std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ConfigError("class_weights: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(num_classes) + ")");
        }
        counts[static_cast<std::size_t>(y)] += 1;
    }
    std::vector<double> weights(num_classes);
    const double n = static_cast<double>(labels.size());
    const double c = static_cast<double>(num_classes);
    for (std::size_t i = 0; i < num_classes; ++i) {
        if (counts[i] == 0) {
            throw ConfigError("class_weights: class " + std::to_string(i) + " has no samples");
        }
        weights[i] = n / (c * static_cast<double>(counts[i]));
    }
    return weights;
}

}  // namespace leocvae
