#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "leocvae/matrix.hpp"

namespace leocvae {

// Binary metrics take labels in {0, 1} with 1 the positive class.

// Mann-Whitney formulation: P(score+ > score-) + 0.5 P(tie), via average
// ranks. Throws UndefinedMetricError when a class is absent.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under the precision-recall step curve: descending-score sweep, ties
// grouped at one threshold, precision x recall-increment summation. Throws
// UndefinedMetricError when there are no positives.
double auprc(const std::vector<double>& scores, const std::vector<int>& labels);

// 2PR/(P+R); 0 when P + R = 0.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels);

std::vector<double> per_class_f1(const std::vector<int>& predictions,
                                 const std::vector<int>& labels, std::size_t num_classes);

// argmax per row, ties to the lower class index.
std::vector<int> argmax_rows(const Matrix& scores);

enum class MetricKind { AucRoc, Auprc, F1 };

struct MacroMicro {
    double macro = 0;
    double micro = 0;
};

// scores: N x C class scores. macro = unweighted mean of one-vs-rest
// per-class values (classes with an undefined metric are excluded with a
// warning); micro = the metric on the flattened N*C one-vs-rest pool, except
// micro-F1 which comes from pooled TP/FP/FN (= accuracy for argmax
// predictions).
MacroMicro macro_micro(MetricKind kind, const Matrix& scores, const std::vector<int>& labels);

struct MeanStd {
    double mean = 0;
    double std_dev = 0;  // population (ddof = 0) over folds
};

MeanStd mean_std(const std::vector<double>& values);

// Per-strategy, per-fold metric values plus mean +/- std aggregation.
struct MetricsReport {
    std::vector<std::string> metric_names;  // column order

    struct Row {
        std::string strategy;
        std::map<std::string, std::vector<double>> folds;
    };
    std::vector<Row> rows;

    nlohmann::json to_json() const;
    // "mean ± std" cells; the best mean per column is starred.
    std::string to_table() const;
};

}  // namespace leocvae
