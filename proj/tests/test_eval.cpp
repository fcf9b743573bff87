#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "leocvae/classifier.hpp"
#include "leocvae/cv.hpp"
#include "leocvae/dataset.hpp"
#include "leocvae/errors.hpp"
#include "leocvae/metrics.hpp"
#include "leocvae/rng.hpp"

using namespace leocvae;

namespace {

struct CerrCapture {
    std::ostringstream buffer;
    std::streambuf* saved;
    CerrCapture() : saved(std::cerr.rdbuf(buffer.rdbuf())) {}
    ~CerrCapture() { std::cerr.rdbuf(saved); }
    std::string text() const { return buffer.str(); }
};

// O(N^2) pairwise oracle: P(score_pos > score_neg) + 0.5 P(tie).
double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double wins = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

// Exhaustive threshold sweep: every distinct score is a threshold, each
// precision/recall computed from scratch, area accumulated over the recall
// steps in descending-threshold order.
double oracle_auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::set<double, std::greater<double>> thresholds(scores.begin(), scores.end());
    std::size_t total_pos = 0;
    for (int l : labels) total_pos += (l == 1);

    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (labels[i] == 1)
                    ++tp;
                else
                    ++fp;
            }
        }
        const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

double oracle_f1(const std::vector<int>& predictions, const std::vector<int>& labels,
                 int positive) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const bool p = predictions[i] == positive, a = labels[i] == positive;
        tp += p && a;
        fp += p && !a;
        fn += !p && a;
    }
    if (tp == 0 && (fp + fn) != 0) return 0.0;
    if (tp + fp + fn == 0) return 0.0;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// Random instance with deliberate score ties and both classes present.
void random_instance(RngStream& rng, std::vector<double>& scores, std::vector<int>& labels) {
    const std::size_t n = 2 + rng.uniform_index(11);
    scores.resize(n);
    labels.resize(n);
    const bool coarse = rng.uniform01() < 0.5;  // coarse grid forces ties
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = coarse ? 0.25 * static_cast<double>(rng.uniform_index(5)) : rng.uniform01();
        labels[i] = static_cast<int>(rng.uniform_index(2));
    }
    labels[0] = 0;
    labels[n - 1] = 1;
}

Dataset blob_dataset(std::size_t n0, std::size_t n1, std::uint64_t seed) {
    RngStream rng(seed);
    Dataset d;
    d.num_classes = 2;
    d.features = Matrix(n0 + n1, 3);
    d.label_names = {"0", "1"};
    d.feature_names = {"a", "b", "c"};
    for (std::size_t i = 0; i < n0 + n1; ++i) {
        const int cls = i < n0 ? 0 : 1;
        d.labels.push_back(cls);
        for (std::size_t j = 0; j < 3; ++j)
            d.features(i, j) = (cls ? 2.0 : -2.0) + 0.5 * rng.normal();
    }
    return d;
}

}  // namespace

TEST_CASE("auc matches its pairwise oracle on the reference example") {
    std::vector<double> scores = {0.1, 0.4, 0.35, 0.8};
    std::vector<int> labels = {0, 0, 1, 1};
    CHECK(auc_roc(scores, labels) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(oracle_auc(scores, labels) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("binary metrics match brute-force oracles on random instances") {
    RngStream rng(700);
    std::vector<double> scores;
    std::vector<int> labels;
    for (int trial = 0; trial < 300; ++trial) {
        random_instance(rng, scores, labels);
        CAPTURE(trial);
        CHECK(std::abs(auc_roc(scores, labels) - oracle_auc(scores, labels)) <= 1e-12);
        CHECK(std::abs(auprc(scores, labels) - oracle_auprc(scores, labels)) <= 1e-12);

        std::vector<int> preds(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= 0.5;
        CHECK(std::abs(f1_score(preds, labels) - oracle_f1(preds, labels, 1)) <= 1e-12);
    }
}

TEST_CASE("auc closed forms and edge cases") {
    SUBCASE("perfect ranking") {
        CHECK(auc_roc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    }
    SUBCASE("inverted ranking") {
        CHECK(auc_roc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    }
    SUBCASE("constant scores score half") {
        CHECK(auc_roc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    }
    SUBCASE("single class is undefined") {
        CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {1, 1}), UndefinedMetricError);
        CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
    }
    SUBCASE("monotone transforms leave auc unchanged") {
        RngStream rng(701);
        std::vector<double> scores(9);
        std::vector<int> labels(9);
        for (std::size_t i = 0; i < 9; ++i) {
            scores[i] = rng.uniform01();
            labels[i] = static_cast<int>(rng.uniform_index(2));
        }
        labels[0] = 0;
        labels[1] = 1;
        const double base = auc_roc(scores, labels);
        std::vector<double> affine(9), squashed(9);
        for (std::size_t i = 0; i < 9; ++i) {
            affine[i] = 3.0 * scores[i] - 7.0;
            squashed[i] = 1.0 / (1.0 + std::exp(-scores[i]));
        }
        CHECK(auc_roc(affine, labels) == base);
        CHECK(auc_roc(squashed, labels) == base);
    }
}

TEST_CASE("auprc closed forms and edge cases") {
    SUBCASE("perfect ranking has unit area") {
        CHECK(auprc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    }
    SUBCASE("single positive ranked last") {
        // Only recall point: TP=1 at the lowest threshold, precision 1/N.
        CHECK(auprc({0.9, 0.8, 0.7, 0.1}, {0, 0, 0, 1}) == doctest::Approx(0.25));
    }
    SUBCASE("constant scores give the prevalence") {
        CHECK(auprc({0.4, 0.4, 0.4, 0.4}, {0, 0, 0, 1}) == doctest::Approx(0.25));
    }
    SUBCASE("no positives is undefined") {
        CHECK_THROWS_AS(auprc({0.1, 0.2}, {0, 0}), UndefinedMetricError);
    }
}

TEST_CASE("f1 conventions") {
    CHECK(f1_score({1, 1, 0, 0}, {1, 1, 0, 0}) == doctest::Approx(1.0));
    CHECK(f1_score({0, 0, 0, 0}, {1, 1, 0, 0}) == 0.0);   // no predicted positives
    CHECK(f1_score({0, 0, 0, 0}, {0, 0, 0, 0}) == 0.0);   // vacuous: P + R = 0
    CHECK(f1_score({1, 0, 1, 0}, {1, 1, 0, 0}) == doctest::Approx(0.5));
}

TEST_CASE("argmax breaks ties toward the lower class index") {
    Matrix scores{{0.2, 0.5, 0.3}, {0.4, 0.4, 0.2}, {0.1, 0.1, 0.8}};
    CHECK(argmax_rows(scores) == std::vector<int>{1, 0, 2});
}

TEST_CASE("macro and micro aggregates match per-class oracles") {
    RngStream rng(702);
    for (int trial = 0; trial < 120; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(2);
        const std::size_t n = c + 2 + rng.uniform_index(9 - c);
        Matrix scores(n, c);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(rng.uniform_index(c));
            for (std::size_t k = 0; k < c; ++k) scores(i, k) = rng.uniform01();
        }
        for (std::size_t k = 0; k < c; ++k) labels[k] = static_cast<int>(k);  // all present

        // AUC: macro = mean of one-vs-rest, micro = flattened pool.
        {
            const MacroMicro got = macro_micro(MetricKind::AucRoc, scores, labels);
            double macro = 0;
            std::vector<double> flat_scores;
            std::vector<int> flat_labels;
            for (std::size_t k = 0; k < c; ++k) {
                std::vector<double> col(n);
                std::vector<int> ovr(n);
                for (std::size_t i = 0; i < n; ++i) {
                    col[i] = scores(i, k);
                    ovr[i] = labels[i] == static_cast<int>(k);
                    flat_scores.push_back(col[i]);
                    flat_labels.push_back(ovr[i]);
                }
                macro += oracle_auc(col, ovr);
            }
            macro /= static_cast<double>(c);
            CAPTURE(trial);
            CHECK(std::abs(got.macro - macro) <= 1e-12);
            CHECK(std::abs(got.micro - oracle_auc(flat_scores, flat_labels)) <= 1e-12);
        }
        // F1: macro over per-class argmax predictions, micro = accuracy.
        {
            const MacroMicro got = macro_micro(MetricKind::F1, scores, labels);
            const auto preds = argmax_rows(scores);
            double macro = 0;
            double correct = 0;
            for (std::size_t k = 0; k < c; ++k)
                macro += oracle_f1(preds, labels, static_cast<int>(k));
            macro /= static_cast<double>(c);
            for (std::size_t i = 0; i < n; ++i) correct += preds[i] == labels[i];
            CHECK(std::abs(got.macro - macro) <= 1e-12);
            CHECK(std::abs(got.micro - correct / static_cast<double>(n)) <= 1e-12);
        }
        // AUPRC micro on the flattened pool.
        {
            const MacroMicro got = macro_micro(MetricKind::Auprc, scores, labels);
            std::vector<double> flat_scores;
            std::vector<int> flat_labels;
            double macro = 0;
            for (std::size_t k = 0; k < c; ++k) {
                std::vector<double> col(n);
                std::vector<int> ovr(n);
                for (std::size_t i = 0; i < n; ++i) {
                    col[i] = scores(i, k);
                    ovr[i] = labels[i] == static_cast<int>(k);
                    flat_scores.push_back(col[i]);
                    flat_labels.push_back(ovr[i]);
                }
                macro += oracle_auprc(col, ovr);
            }
            macro /= static_cast<double>(c);
            CHECK(std::abs(got.macro - macro) <= 1e-12);
            CHECK(std::abs(got.micro - oracle_auprc(flat_scores, flat_labels)) <= 1e-12);
        }
    }
}

TEST_CASE("macro excludes classes whose metric is undefined") {
    // Class 2 never appears: its one-vs-rest AUC has no positives.
    Matrix scores{{0.9, 0.1, 0.2}, {0.2, 0.8, 0.1}, {0.7, 0.3, 0.3}, {0.1, 0.9, 0.4}};
    std::vector<int> labels = {0, 1, 0, 1};
    CerrCapture capture;
    const MacroMicro got = macro_micro(MetricKind::AucRoc, scores, labels);
    CHECK(capture.text().find("undefined") != std::string::npos);

    std::vector<double> col0 = {0.9, 0.2, 0.7, 0.1}, col1 = {0.1, 0.8, 0.3, 0.9};
    std::vector<int> ovr0 = {1, 0, 1, 0}, ovr1 = {0, 1, 0, 1};
    const double expect = 0.5 * (oracle_auc(col0, ovr0) + oracle_auc(col1, ovr1));
    CHECK(got.macro == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("macro with every class undefined rethrows") {
    Matrix scores{{0.9, 0.1}, {0.8, 0.2}};
    std::vector<int> labels = {0, 0};  // class 1 absent, class 0 has no negatives
    CerrCapture capture;
    CHECK_THROWS_AS(macro_micro(MetricKind::AucRoc, scores, labels), UndefinedMetricError);
}

TEST_CASE("mean and population standard deviation") {
    MeanStd ms = mean_std({1.0, 2.0, 3.0, 4.0});
    CHECK(ms.mean == doctest::Approx(2.5).epsilon(1e-15));
    CHECK(ms.std_dev == doctest::Approx(std::sqrt(1.25)).epsilon(1e-15));
    MeanStd single = mean_std({7.0});
    CHECK(single.mean == 7.0);
    CHECK(single.std_dev == 0.0);
}

TEST_CASE("metrics report serializes folds and aggregates") {
    MetricsReport report;
    report.metric_names = {"auc_roc", "f1"};
    MetricsReport::Row a;
    a.strategy = "none";
    a.folds["auc_roc"] = {0.8, 0.9};
    a.folds["f1"] = {0.5, 0.7};
    MetricsReport::Row b;
    b.strategy = "leo-cvae";
    b.folds["auc_roc"] = {0.9, 1.0};
    b.folds["f1"] = {0.6, 0.8};
    report.rows = {a, b};

    nlohmann::json j = report.to_json();
    // Strategies serialize as an array so the report preserves run order.
    REQUIRE(j["strategies"].is_array());
    REQUIRE(j["strategies"].size() == 2);
    auto entry = [&](const std::string& name) -> const nlohmann::json& {
        for (const auto& e : j["strategies"])
            if (e["strategy"] == name) return e;
        throw std::runtime_error("strategy missing from report: " + name);
    };
    CHECK(entry("none")["folds"]["auc_roc"].size() == 2);
    CHECK(entry("leo-cvae")["summary"]["auc_roc"]["mean"].get<double>() ==
          doctest::Approx(0.95));
    CHECK(entry("none")["summary"]["f1"]["std"].get<double>() ==
          doctest::Approx(0.1));

    const std::string table = report.to_table();
    CHECK(table.find("none") != std::string::npos);
    CHECK(table.find("leo-cvae") != std::string::npos);
    CHECK(table.find("auc_roc") != std::string::npos);
    CHECK(table.find('*') != std::string::npos);  // best column mean starred
}

TEST_CASE("stratified k-fold partitions every class evenly") {
    RngStream rng(703);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t c = 2 + rng.uniform_index(2);
        const std::size_t folds = 2 + rng.uniform_index(4);
        std::vector<int> labels;
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t n_k = folds + rng.uniform_index(30);
            labels.insert(labels.end(), n_k, static_cast<int>(k));
        }
        RngStream shuffle_rng(trial + 50);
        shuffle_rng.shuffle(labels);

        const auto fold_of = stratified_kfold(labels, folds, 42);
        REQUIRE(fold_of.size() == labels.size());

        // Every sample lands in a valid fold; per-class fold counts differ
        // by at most one.
        std::map<int, std::vector<std::size_t>> per_class;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            REQUIRE(fold_of[i] < folds);
            auto& counts = per_class[labels[i]];
            counts.resize(folds, 0);
            counts[fold_of[i]]++;
        }
        for (const auto& [cls, counts] : per_class) {
            const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
            CAPTURE(trial);
            CAPTURE(cls);
            CHECK(*hi - *lo <= 1);
        }
    }
}

TEST_CASE("stratified k-fold is deterministic in the seed") {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(i % 2);
    CHECK(stratified_kfold(labels, 5, 42) == stratified_kfold(labels, 5, 42));
    CHECK(stratified_kfold(labels, 5, 42) != stratified_kfold(labels, 5, 43));
}

TEST_CASE("stratified k-fold rejects impossible configurations") {
    std::vector<int> labels = {0, 0, 0, 0, 1, 1};
    CHECK_THROWS_WITH_AS(stratified_kfold(labels, 3, 42),
                         doctest::Contains("needs at least 3"), ConfigError);
    CHECK_THROWS_AS(stratified_kfold(labels, 1, 42), ConfigError);
    CHECK_THROWS_AS(stratified_kfold({}, 2, 42), ConfigError);
}

TEST_CASE("classifier trains to separate blobs and reports its history") {
    Dataset train = blob_dataset(40, 40, 704);
    Dataset val = blob_dataset(12, 12, 705);
    ClassifierConfig config;
    config.max_epochs = 30;
    config.patience = 0;
    config.lr = 1e-2;  // stock lr needs far more than 30 epochs on 80 rows
    RngStream rng(706);
    auto [model, history] = train_classifier(train, val, config, rng);
    REQUIRE(history.rows.size() == 30);
    CHECK(history.rows[0].lr == config.lr);
    CHECK(history.best_epoch >= 1);

    double best = 0;
    for (const auto& row : history.rows) best = std::max(best, row.val_metric);
    CHECK(best > 0.95);

    const Matrix scores = model.predict_scores(val.features);
    REQUIRE(scores.rows() == val.size());
    REQUIRE(scores.cols() == 1);
    for (double s : scores.values()) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("classifier learning rate only ever decays by the scheduler factor") {
    Dataset train = blob_dataset(30, 30, 707);
    Dataset val = blob_dataset(10, 10, 708);
    ClassifierConfig config;
    config.max_epochs = 40;
    config.patience = 0;
    config.scheduler_patience = 3;
    RngStream rng(709);
    auto [model, history] = train_classifier(train, val, config, rng);
    (void)model;

    bool decayed = false;
    for (std::size_t i = 1; i < history.rows.size(); ++i) {
        const double ratio = history.rows[i].lr / history.rows[i - 1].lr;
        const bool flat = std::abs(ratio - 1.0) < 1e-12;
        const bool dropped = std::abs(ratio - config.scheduler_factor) < 1e-12;
        CHECK((flat || dropped));
        decayed = decayed || dropped;
    }
    CHECK(decayed);  // 40 epochs of a converged model must plateau
}

TEST_CASE("classifier early stopping and single-epoch contracts") {
    Dataset train = blob_dataset(30, 30, 710);
    Dataset val = blob_dataset(10, 10, 711);

    SUBCASE("one epoch when asked") {
        ClassifierConfig config;
        config.max_epochs = 1;
        config.patience = 0;
        RngStream rng(712);
        auto [model, history] = train_classifier(train, val, config, rng);
        CHECK(history.rows.size() == 1);
        CHECK_FALSE(history.early_stop_epoch.has_value());
    }
    SUBCASE("stops after the configured stagnation") {
        ClassifierConfig config;
        config.max_epochs = 200;
        config.patience = 4;
        RngStream rng(713);
        auto [model, history] = train_classifier(train, val, config, rng);
        REQUIRE(history.early_stop_epoch.has_value());
        CHECK(*history.early_stop_epoch == history.rows.size());
        CHECK(history.best_epoch + 4 == *history.early_stop_epoch);
    }
}

TEST_CASE("classifier training is deterministic in the seed") {
    Dataset train = blob_dataset(24, 24, 714);
    Dataset val = blob_dataset(8, 8, 715);
    ClassifierConfig config;
    config.max_epochs = 6;
    config.patience = 0;
    RngStream rng1(716), rng2(716);
    auto [m1, h1] = train_classifier(train, val, config, rng1);
    auto [m2, h2] = train_classifier(train, val, config, rng2);
    REQUIRE(h1.rows.size() == h2.rows.size());
    for (std::size_t i = 0; i < h1.rows.size(); ++i) {
        CHECK(h1.rows[i].train_loss == h2.rows[i].train_loss);
        CHECK(h1.rows[i].val_metric == h2.rows[i].val_metric);
    }
    CHECK(m1.predict_scores(val.features) == m2.predict_scores(val.features));
}

TEST_CASE("multiclass classifier emits softmax rows") {
    RngStream data_rng(717);
    Dataset train;
    train.num_classes = 3;
    train.features = Matrix(30, 2);
    train.label_names = {"0", "1", "2"};
    train.feature_names = {"x", "y"};
    for (std::size_t i = 0; i < 30; ++i) {
        const int cls = static_cast<int>(i % 3);
        train.labels.push_back(cls);
        train.features(i, 0) = cls * 3.0 + 0.3 * data_rng.normal();
        train.features(i, 1) = -cls * 3.0 + 0.3 * data_rng.normal();
    }
    Dataset val = train.take({0, 1, 2, 3, 4, 5});

    ClassifierConfig config;
    config.max_epochs = 5;
    config.patience = 0;
    RngStream rng(718);
    auto [model, history] = train_classifier(train, val, config, rng);
    CHECK_FALSE(model.binary());
    const Matrix scores = model.predict_scores(val.features);
    REQUIRE(scores.cols() == 3);
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        double sum = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(scores(i, c) >= 0.0);
            sum += scores(i, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    const auto metrics = evaluate_fold(model, val);
    CHECK(metrics.count("macro_auc_roc"));
    CHECK(metrics.count("micro_f1"));
    CHECK(metrics.size() == 6);
}

TEST_CASE("fold evaluation reports the binary metric set") {
    Dataset train = blob_dataset(20, 20, 719);
    Dataset val = blob_dataset(8, 8, 720);
    ClassifierConfig config;
    config.max_epochs = 10;
    config.patience = 0;
    config.lr = 1e-2;  // stock lr needs far more than 10 epochs on 40 rows
    RngStream rng(721);
    auto [model, history] = train_classifier(train, val, config, rng);
    const auto metrics = evaluate_fold(model, val);
    REQUIRE(metrics.size() == 3);
    CHECK(metrics.count("auc_roc"));
    CHECK(metrics.count("auprc"));
    CHECK(metrics.count("f1"));
    CHECK(metrics.at("auc_roc") > 0.9);
}

TEST_CASE("metric name sets") {
    CHECK(metric_names_for(2) == std::vector<std::string>{"auc_roc", "auprc", "f1"});
    CHECK(metric_names_for(3).size() == 6);
}
