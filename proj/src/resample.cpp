#include "leocvae/resample.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>

#include "leocvae/errors.hpp"

namespace leocvae {

Strategy strategy_from_string(const std::string& name) {
    static const std::map<std::string, Strategy> table = {
        {"none", Strategy::None},
        {"random", Strategy::Random},
        {"smote", Strategy::Smote},
        {"borderline-smote", Strategy::BorderlineSmote},
        {"adasyn", Strategy::Adasyn},
        {"cvae", Strategy::Cvae},
        {"cvae-focal", Strategy::CvaeFocal},
        {"leo-cvae", Strategy::LeoCvae},
    };
    auto it = table.find(name);
    if (it == table.end()) {
        std::string known;
        for (const auto& [k, v] : table) {
            (void)v;
            if (!known.empty()) known += ", ";
            known += k;
        }
        throw ConfigError("unknown strategy '" + name + "' (known: " + known + ")");
    }
    return it->second;
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::None: return "none";
        case Strategy::Random: return "random";
        case Strategy::Smote: return "smote";
        case Strategy::BorderlineSmote: return "borderline-smote";
        case Strategy::Adasyn: return "adasyn";
        case Strategy::Cvae: return "cvae";
        case Strategy::CvaeFocal: return "cvae-focal";
        case Strategy::LeoCvae: return "leo-cvae";
    }
    throw UsageError("unhandled strategy id");
}

bool strategy_needs_model(Strategy s) {
    return s == Strategy::Cvae || s == Strategy::CvaeFocal || s == Strategy::LeoCvae;
}

std::vector<std::size_t> generation_counts(const std::vector<int>& labels,
                                           std::size_t num_classes) {
    std::vector<std::size_t> counts(num_classes, 0);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw DimensionError("label id " + std::to_string(y) + " out of range");
        ++counts[static_cast<std::size_t>(y)];
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (counts[c] == 0)
            throw ConfigError("class " + std::to_string(c) + " has no samples");
    const std::size_t n_maj = *std::max_element(counts.begin(), counts.end());
    std::vector<std::size_t> gen(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) gen[c] = n_maj - counts[c];
    return gen;
}

std::vector<std::size_t> select_seeds(const std::vector<std::size_t>& minority_ids,
                                      const EntropyScores& entropy, double gamma, std::size_t n,
                                      RngStream& rng) {
    if (n == 0) return {};
    if (minority_ids.empty()) throw ConfigError("cannot draw seeds from an empty class");
    std::vector<double> cumulative(minority_ids.size());
    double total = 0;
    for (std::size_t j = 0; j < minority_ids.size(); ++j) {
        const std::size_t id = minority_ids[j];
        if (id >= entropy.h.size())
            throw DimensionError("minority id " + std::to_string(id) +
                                 " outside entropy scores (" + std::to_string(entropy.h.size()) +
                                 " rows)");
        total += entropy_weight(entropy.h[id], gamma);
        cumulative[j] = total;
    }
    std::vector<std::size_t> seeds(n);
    for (std::size_t d = 0; d < n; ++d) {
        const double u = rng.uniform01() * total;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const std::size_t j = std::min<std::size_t>(it - cumulative.begin(),
                                                    minority_ids.size() - 1);
        seeds[d] = minority_ids[j];
    }
    return seeds;
}

SyntheticBatch generate_cvae(CvaeModel& model, const Matrix& seed_features,
                             const std::vector<std::size_t>& seed_ids, int cls, RngStream& rng) {
    const auto& arch = model.architecture();
    if (cls < 0 || static_cast<std::size_t>(cls) >= arch.num_classes)
        throw ConfigError("class id " + std::to_string(cls) + " out of range [0, " +
                          std::to_string(arch.num_classes) + ")");
    if (seed_features.rows() != seed_ids.size())
        throw DimensionError("seed features/ids length mismatch");

    SyntheticBatch batch;
    batch.label = cls;
    batch.seed_ids = seed_ids;
    if (seed_ids.empty()) {
        batch.features = Matrix(0, arch.input_dim);
        return batch;
    }
    const Matrix onehot = one_hot(std::vector<int>(seed_ids.size(), cls), arch.num_classes);
    auto [mu, logvar] = model.encode(seed_features, onehot);
    Matrix eps(mu.rows(), mu.cols());
    for (std::size_t i = 0; i < eps.size(); ++i) eps.data()[i] = rng.normal();
    batch.features = model.decode(reparameterize(mu, logvar, eps), onehot);
    return batch;
}

namespace {

Dataset assemble(const Dataset& original, const std::vector<SyntheticBatch>& batches) {
    std::size_t extra = 0;
    for (const auto& b : batches) extra += b.features.rows();

    Dataset out;
    out.features = Matrix(original.size() + extra, original.dim());
    out.num_classes = original.num_classes;
    out.feature_names = original.feature_names;
    out.label_names = original.label_names;
    out.labels.reserve(original.size() + extra);
    out.synthetic.reserve(original.size() + extra);
    out.provenance_seed_id.reserve(original.size() + extra);

    for (std::size_t i = 0; i < original.size(); ++i) {
        out.features.set_row(i, original.features.row(i));
        out.labels.push_back(original.labels[i]);
        out.synthetic.push_back(0);
        out.provenance_seed_id.push_back(-1);
    }
    std::size_t row = original.size();
    for (const auto& b : batches) {
        if (b.features.rows() && b.features.cols() != original.dim())
            throw DimensionError("synthetic batch width " + std::to_string(b.features.cols()) +
                                 " != dataset width " + std::to_string(original.dim()));
        for (std::size_t i = 0; i < b.features.rows(); ++i, ++row) {
            out.features.set_row(row, b.features.row(i));
            out.labels.push_back(b.label);
            out.synthetic.push_back(1);
            out.provenance_seed_id.push_back(static_cast<long>(b.seed_ids[i]));
        }
    }
    out.validate();
    return out;
}

std::string class_display(const Dataset& dataset, std::size_t cls) {
    if (cls < dataset.label_names.size()) return "'" + dataset.label_names[cls] + "'";
    return std::to_string(cls);
}

// k nearest same-class neighbors for every member of `ids`, as positions
// into `ids` itself. Requires ids.size() > k.
std::vector<std::vector<std::size_t>> class_knn(const Dataset& dataset,
                                                const std::vector<std::size_t>& ids,
                                                std::size_t k, std::size_t cls) {
    if (ids.size() <= k)
        throw ConfigError("class " + class_display(dataset, cls) + " has " +
                          std::to_string(ids.size()) + " samples; needs more than k=" +
                          std::to_string(k) + " for interpolation");
    const NeighborIndex idx = build_knn(dataset.features.take_rows(ids), k);
    return idx.neighbor_ids;
}

// One SMOTE interpolation: x_seed + u * (x_nn - x_seed), u ~ U(0,1), x_nn
// uniform among the seed's k same-class neighbors.
void interpolate_rows(const Dataset& dataset, const std::vector<std::size_t>& ids,
                      const std::vector<std::vector<std::size_t>>& knn,
                      const std::vector<std::size_t>& seed_positions, SyntheticBatch& batch,
                      RngStream& rng) {
    const std::size_t d = dataset.dim();
    batch.features = Matrix(seed_positions.size(), d);
    batch.seed_ids.clear();
    for (std::size_t s = 0; s < seed_positions.size(); ++s) {
        const std::size_t pos = seed_positions[s];
        const auto& nbrs = knn[pos];
        const std::size_t nn_pos = nbrs[rng.uniform_index(nbrs.size())];
        const double u = rng.uniform01();
        const std::size_t seed_row = ids[pos];
        const std::size_t nn_row = ids[nn_pos];
        for (std::size_t j = 0; j < d; ++j) {
            const double a = dataset.features(seed_row, j);
            batch.features(s, j) = a + u * (dataset.features(nn_row, j) - a);
        }
        batch.seed_ids.push_back(seed_row);
    }
}

// Largest-remainder apportionment of `total` according to nonnegative
// proportions; ties on the fractional part go to the lower index.
std::vector<std::size_t> largest_remainder(const std::vector<double>& proportions,
                                           std::size_t total) {
    const std::size_t n = proportions.size();
    std::vector<std::size_t> alloc(n, 0);
    std::vector<std::pair<double, std::size_t>> remainders(n);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        alloc[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += alloc[i];
        remainders[i] = {exact - std::floor(exact), i};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++alloc[remainders[r % n].second];
    return alloc;
}

}  // namespace

Dataset random_oversample(const Dataset& dataset, RngStream& rng) {
    const auto gen = generation_counts(dataset.labels, dataset.num_classes);
    std::vector<SyntheticBatch> batches;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (gen[c] == 0) continue;
        const auto ids = dataset.indices_of_class(static_cast<int>(c));
        SyntheticBatch b;
        b.label = static_cast<int>(c);
        b.strategy = Strategy::Random;
        b.features = Matrix(gen[c], dataset.dim());
        for (std::size_t s = 0; s < gen[c]; ++s) {
            const std::size_t src = ids[rng.uniform_index(ids.size())];
            b.features.set_row(s, dataset.features.row(src));
            b.seed_ids.push_back(src);
        }
        batches.push_back(std::move(b));
    }
    return assemble(dataset, batches);
}

Dataset smote(const Dataset& dataset, std::size_t k_neighbors, RngStream& rng) {
    if (k_neighbors == 0) throw ConfigError("k_neighbors must be positive");
    const auto gen = generation_counts(dataset.labels, dataset.num_classes);
    std::vector<SyntheticBatch> batches;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (gen[c] == 0) continue;
        const auto ids = dataset.indices_of_class(static_cast<int>(c));
        const auto knn = class_knn(dataset, ids, k_neighbors, c);
        std::vector<std::size_t> seed_positions(gen[c]);
        for (auto& p : seed_positions) p = rng.uniform_index(ids.size());
        SyntheticBatch b;
        b.label = static_cast<int>(c);
        b.strategy = Strategy::Smote;
        interpolate_rows(dataset, ids, knn, seed_positions, b, rng);
        batches.push_back(std::move(b));
    }
    return assemble(dataset, batches);
}

Dataset borderline_smote(const Dataset& dataset, std::size_t k_neighbors,
                         std::size_t m_neighbors, RngStream& rng) {
    if (k_neighbors == 0 || m_neighbors == 0)
        throw ConfigError("k_neighbors and m_neighbors must be positive");
    const auto gen = generation_counts(dataset.labels, dataset.num_classes);
    const NeighborIndex all_knn = build_knn(dataset.features, m_neighbors);
    std::vector<SyntheticBatch> batches;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (gen[c] == 0) continue;
        const auto ids = dataset.indices_of_class(static_cast<int>(c));
        const auto knn = class_knn(dataset, ids, k_neighbors, c);

        // DANGER: at least half but not all of the m-neighborhood belongs to
        // other classes.
        std::vector<std::size_t> danger_positions;
        for (std::size_t pos = 0; pos < ids.size(); ++pos) {
            std::size_t other = 0;
            for (std::size_t nbr : all_knn.neighbor_ids[ids[pos]])
                if (dataset.labels[nbr] != static_cast<int>(c)) ++other;
            if (2 * other >= m_neighbors && other < m_neighbors) danger_positions.push_back(pos);
        }
        const std::vector<std::size_t>* pool = &danger_positions;
        std::vector<std::size_t> all_positions;
        if (danger_positions.empty()) {
            std::cerr << "warning: borderline-smote found no danger samples for class "
                      << class_display(dataset, c) << "; falling back to plain smote\n";
            all_positions.resize(ids.size());
            std::iota(all_positions.begin(), all_positions.end(), 0);
            pool = &all_positions;
        }
        std::vector<std::size_t> seed_positions(gen[c]);
        for (auto& p : seed_positions) p = (*pool)[rng.uniform_index(pool->size())];
        SyntheticBatch b;
        b.label = static_cast<int>(c);
        b.strategy = Strategy::BorderlineSmote;
        interpolate_rows(dataset, ids, knn, seed_positions, b, rng);
        batches.push_back(std::move(b));
    }
    return assemble(dataset, batches);
}

Dataset adasyn(const Dataset& dataset, std::size_t n_neighbors, RngStream& rng) {
    if (n_neighbors == 0) throw ConfigError("n_neighbors must be positive");
    const auto gen = generation_counts(dataset.labels, dataset.num_classes);
    const NeighborIndex all_knn = build_knn(dataset.features, n_neighbors);
    std::vector<SyntheticBatch> batches;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (gen[c] == 0) continue;
        const auto ids = dataset.indices_of_class(static_cast<int>(c));
        const auto knn = class_knn(dataset, ids, n_neighbors, c);

        std::vector<double> r(ids.size());
        double r_sum = 0;
        for (std::size_t pos = 0; pos < ids.size(); ++pos) {
            std::size_t other = 0;
            for (std::size_t nbr : all_knn.neighbor_ids[ids[pos]])
                if (dataset.labels[nbr] != static_cast<int>(c)) ++other;
            r[pos] = static_cast<double>(other) / static_cast<double>(n_neighbors);
            r_sum += r[pos];
        }
        std::vector<double> proportions(ids.size());
        if (r_sum <= 0) {
            std::cerr << "warning: adasyn found no boundary difficulty for class "
                      << class_display(dataset, c) << "; allocating uniformly\n";
            std::fill(proportions.begin(), proportions.end(),
                      1.0 / static_cast<double>(ids.size()));
        } else {
            for (std::size_t pos = 0; pos < ids.size(); ++pos) proportions[pos] = r[pos] / r_sum;
        }
        const auto alloc = largest_remainder(proportions, gen[c]);

        std::vector<std::size_t> seed_positions;
        seed_positions.reserve(gen[c]);
        for (std::size_t pos = 0; pos < ids.size(); ++pos)
            for (std::size_t s = 0; s < alloc[pos]; ++s) seed_positions.push_back(pos);
        SyntheticBatch b;
        b.label = static_cast<int>(c);
        b.strategy = Strategy::Adasyn;
        interpolate_rows(dataset, ids, knn, seed_positions, b, rng);
        batches.push_back(std::move(b));
    }
    return assemble(dataset, batches);
}

Dataset resample(const Dataset& dataset, const EntropyScores& entropy, const ResamplePlan& plan,
                 CvaeModel* model, RngStream& rng) {
    dataset.validate();
    switch (plan.strategy) {
        case Strategy::None:
            return dataset;
        case Strategy::Random:
            return random_oversample(dataset, rng);
        case Strategy::Smote:
            return smote(dataset, plan.k_neighbors, rng);
        case Strategy::BorderlineSmote:
            return borderline_smote(dataset, plan.k_neighbors, plan.k_neighbors, rng);
        case Strategy::Adasyn:
            return adasyn(dataset, plan.k_neighbors, rng);
        case Strategy::Cvae:
        case Strategy::CvaeFocal:
        case Strategy::LeoCvae:
            break;
    }
    if (!model)
        throw ConfigError("strategy '" + strategy_name(plan.strategy) +
                          "' requires a trained model");
    const bool entropy_seeds = plan.strategy == Strategy::LeoCvae && plan.entropy_sampling;
    const double gamma = entropy_seeds ? plan.gamma : 0.0;

    const auto gen = generation_counts(dataset.labels, dataset.num_classes);
    std::vector<SyntheticBatch> batches;
    for (std::size_t c = 0; c < dataset.num_classes; ++c) {
        if (gen[c] == 0) continue;
        const auto ids = dataset.indices_of_class(static_cast<int>(c));
        const auto seeds = select_seeds(ids, entropy, gamma, gen[c], rng);
        SyntheticBatch b =
            generate_cvae(*model, dataset.features.take_rows(seeds), seeds,
                          static_cast<int>(c), rng);
        b.strategy = plan.strategy;
        batches.push_back(std::move(b));
    }
    return assemble(dataset, batches);
}

}  // namespace leocvae
