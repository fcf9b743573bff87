#pragma once

#include <cstddef>
#include <vector>

#include "leocvae/matrix.hpp"

namespace leocvae {

// Exact k-nearest-neighbor index over a feature matrix. Neighbors are sorted
// by ascending Euclidean distance, the query sample excluded from its own
// list, distance ties broken by lower sample index.
struct NeighborIndex {
    std::size_t k = 0;
    std::vector<std::vector<std::size_t>> neighbor_ids;  // one list of k ids per sample
};

// Per-sample local entropy scores in bits; bounded by log2(num_classes).
struct EntropyScores {
    std::vector<double> h;
    std::size_t k = 0;
    std::size_t num_classes = 0;
};

// Exact O(N^2) neighbor search. Requires N >= k+1.
NeighborIndex build_knn(const Matrix& features, std::size_t k);

// Shannon entropy of the class distribution in each sample's neighborhood:
// H_i = -sum_j (k_j/k) * log2(k_j/k), with the 0*log0 term taken as 0.
EntropyScores local_entropy(const NeighborIndex& neighbors, const std::vector<int>& labels,
                            std::size_t num_classes);

// Entropy-focus weight (1 + h)^gamma; identically 1 when gamma == 0.
double entropy_weight(double h, double gamma);

// Inverse-frequency class weights w_c = N / (C * N_c), so the mean
// per-sample weight is 1 on balanced data. Every class must be nonempty.
std::vector<double> class_weights(const std::vector<int>& labels, std::size_t num_classes);

}  // namespace leocvae
