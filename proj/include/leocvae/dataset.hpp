#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "leocvae/matrix.hpp"
#include "leocvae/rng.hpp"

namespace leocvae {

// Feature matrix plus aligned integer labels in [0, num_classes). Synthetic
// rows carry a flag and the index of the seed sample they were generated
// from (indices refer to rows of the dataset the resampler was given).
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::size_t num_classes = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> label_names;  // label_names[id] = original label text
    std::vector<std::uint8_t> synthetic;   // empty means all-original
    std::vector<long> provenance_seed_id;  // -1 for original rows

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    bool is_synthetic(std::size_t row) const {
        return !synthetic.empty() && synthetic[row] != 0;
    }
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> indices_of_class(int cls) const;
    Dataset take(const std::vector<std::size_t>& rows) const;
    void validate() const;
};

// Reads a CSV with a header row; label_column names the label, every other
// column must be numeric. Distinct label values are mapped to contiguous ids
// (numeric order when all labels parse as numbers, lexicographic otherwise)
// and the mapping is recorded in label_names.
Dataset load_csv(const std::string& path, const std::string& label_column);

// Writes features + label (+ synthetic/provenance columns when the dataset
// carries them). Values are emitted with round-trip precision.
void save_csv(const Dataset& dataset, const std::string& path);

// Per-feature affine standardization fit on training data only. Constant
// training columns are dropped from every dataset the scaler touches.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std_dev;
    std::vector<std::size_t> kept_columns;
    std::vector<std::string> dropped_columns;

    Matrix apply(const Matrix& features) const;
    Matrix invert(const Matrix& scaled) const;
};

Scaler fit_scaler(const Dataset& train);
// Fits on train and applies the same map to train and every dataset in
// others, in place.
Scaler fit_apply_scaler(Dataset& train, std::vector<Dataset*> others = {});

// Top-m features by plug-in histogram mutual information with the label,
// estimated after equal-frequency discretization into n_bins.
struct FeatureSelector {
    std::vector<std::size_t> selected;  // unique, ascending
    std::size_t n_bins = 10;
    std::vector<double> mi_bits;  // MI per original feature, for reporting

    Dataset apply(const Dataset& dataset) const;
};

FeatureSelector mutual_info_select(const Dataset& dataset, std::size_t top_m,
                                   std::size_t n_bins = 10);

// Equal-frequency discretization of one feature column into n_bins labels;
// bin populations differ by at most 1 (value ties broken by row index).
std::vector<std::size_t> equal_frequency_bins(const std::vector<double>& values,
                                              std::size_t n_bins);

// Synthetic benchmark generator: Gaussian class clusters with optional
// sinusoidal warp, controllable overlap and imbalance.
struct SyntheticSpec {
    std::size_t dim = 64;
    std::vector<std::size_t> class_counts = {900, 100};
    // Distance between adjacent class means, in units of the class std.
    double separation = 6.0;
    double noise_std = 1.0;
    // Explicit per-class means (class_counts.size() x dim); overrides
    // separation-based placement when set.
    std::optional<Matrix> means;
    // Optional full covariance shared by all classes (dim x dim, PSD).
    std::optional<Matrix> covariance;
    // Nonlinear warp applied after sampling: x_j += warp * sin(x_{(j+1)%dim}).
    double warp = 0.0;
};

Dataset make_synthetic_benchmark(const SyntheticSpec& spec, RngStream& rng);

// Unit-diagonal covariance whose first factor_dims coordinates share `rank`
// latent factors (carrying 1 - idio of their variance); the remaining
// coordinates are independent. Gives the data a low intrinsic dimension
// while keeping every feature at unit variance.
Matrix factor_covariance(std::size_t dim, std::size_t factor_dims, std::size_t rank, double idio,
                         RngStream& rng);

// The fixed 900/100 two-class 64-dim benchmark used throughout the tests:
// unit-variance Gaussians driven by two shared latent factors (correlated
// features, low intrinsic dimension), class means 6 apart along a direction
// orthogonal to the factor span so a linear probe separates them cleanly.
Dataset pinned_benchmark_dataset(std::uint64_t seed = 42);

// FNV-1a over the raw bytes of features+labels; used as the leakage guard.
std::uint64_t dataset_checksum(const Dataset& dataset);

// N x num_classes one-hot encoding of integer labels.
Matrix one_hot(const std::vector<int>& labels, std::size_t num_classes);

}  // namespace leocvae
