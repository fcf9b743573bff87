#include "leocvae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>

#include "leocvae/errors.hpp"

namespace leocvae {

namespace {

void check_binary_inputs(const std::vector<double>& scores, const std::vector<int>& labels,
                         const char* what) {
    if (scores.size() != labels.size())
        throw DimensionError(std::string(what) + ": scores/labels length mismatch");
    if (scores.empty()) throw UndefinedMetricError(std::string(what) + ": empty input");
    for (double s : scores)
        if (!std::isfinite(s)) throw NumericError(std::string(what) + ": non-finite score");
    for (int y : labels)
        if (y != 0 && y != 1)
            throw DimensionError(std::string(what) + ": labels must be 0/1, got " +
                                 std::to_string(y));
}

}  // namespace

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary_inputs(scores, labels, "auc_roc");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<std::size_t>(y);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw UndefinedMetricError("auc_roc undefined: only one class present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Average ranks within tie groups, then the Mann-Whitney U statistic.
    double rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum_pos += avg_rank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_binary_inputs(scores, labels, "auprc");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += static_cast<std::size_t>(y);
    if (n_pos == 0) throw UndefinedMetricError("auprc undefined: no positive samples");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double area = 0, prev_recall = 0;
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t)
            labels[order[t]] == 1 ? ++tp : ++fp;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        area += precision * (recall - prev_recall);
        prev_recall = recall;
        i = j;
    }
    return area;
}

double f1_score(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw DimensionError("f1_score: predictions/labels length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (predictions[i] == 1 && labels[i] == 1) ++tp;
        else if (predictions[i] == 1) ++fp;
        else if (labels[i] == 1) ++fn;
    }
    const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

std::vector<double> per_class_f1(const std::vector<int>& predictions,
                                 const std::vector<int>& labels, std::size_t num_classes) {
    if (predictions.size() != labels.size())
        throw DimensionError("per_class_f1: predictions/labels length mismatch");
    std::vector<double> out(num_classes);
    std::vector<int> ovr_pred(labels.size()), ovr_label(labels.size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        for (std::size_t i = 0; i < labels.size(); ++i) {
            ovr_pred[i] = predictions[i] == static_cast<int>(c);
            ovr_label[i] = labels[i] == static_cast<int>(c);
        }
        out[c] = f1_score(ovr_pred, ovr_label);
    }
    return out;
}

std::vector<int> argmax_rows(const Matrix& scores) {
    std::vector<int> out(scores.rows());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.cols(); ++c)
            if (scores(i, c) > scores(i, best)) best = c;
        out[i] = static_cast<int>(best);
    }
    return out;
}

MacroMicro macro_micro(MetricKind kind, const Matrix& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.rows(), c_count = scores.cols();
    if (n != labels.size()) throw DimensionError("macro_micro: scores/labels length mismatch");
    if (c_count < 2) throw ConfigError("macro_micro needs at least 2 classes");

    MacroMicro result;
    if (kind == MetricKind::F1) {
        const std::vector<int> preds = argmax_rows(scores);
        const auto per_class = per_class_f1(preds, labels, c_count);
        result.macro =
            std::accumulate(per_class.begin(), per_class.end(), 0.0) / static_cast<double>(c_count);
        // Pooled one-vs-rest TP/FP/FN; for single-label argmax predictions
        // this reduces to plain accuracy.
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t c = 0; c < c_count; ++c)
            for (std::size_t i = 0; i < n; ++i) {
                const bool pred_c = preds[i] == static_cast<int>(c);
                const bool is_c = labels[i] == static_cast<int>(c);
                if (pred_c && is_c) ++tp;
                else if (pred_c) ++fp;
                else if (is_c) ++fn;
            }
        const double p = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        result.micro = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        return result;
    }

    auto metric = kind == MetricKind::AucRoc ? auc_roc : auprc;
    double macro_sum = 0;
    std::size_t defined = 0;
    std::vector<double> col(n);
    std::vector<int> ovr(n);
    for (std::size_t c = 0; c < c_count; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores(i, c);
            ovr[i] = labels[i] == static_cast<int>(c);
        }
        try {
            macro_sum += metric(col, ovr);
            ++defined;
        } catch (const UndefinedMetricError&) {
            std::cerr << "warning: macro average skips class " << c
                      << " (metric undefined on this fold)\n";
        }
    }
    if (defined == 0) throw UndefinedMetricError("macro average undefined for every class");
    result.macro = macro_sum / static_cast<double>(defined);

    std::vector<double> pool_scores;
    std::vector<int> pool_labels;
    pool_scores.reserve(n * c_count);
    pool_labels.reserve(n * c_count);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < c_count; ++c) {
            pool_scores.push_back(scores(i, c));
            pool_labels.push_back(labels[i] == static_cast<int>(c));
        }
    result.micro = metric(pool_scores, pool_labels);
    return result;
}

MeanStd mean_std(const std::vector<double>& values) {
    if (values.empty()) throw ConfigError("mean_std of empty vector");
    MeanStd out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) /
               static_cast<double>(values.size());
    double var = 0;
    for (double v : values) var += (v - out.mean) * (v - out.mean);
    out.std_dev = std::sqrt(var / static_cast<double>(values.size()));
    return out;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["metric_names"] = metric_names;
    nlohmann::json strategies = nlohmann::json::array();
    for (const auto& row : rows) {
        nlohmann::json entry;
        entry["strategy"] = row.strategy;
        nlohmann::json folds, summary;
        for (const auto& name : metric_names) {
            const auto it = row.folds.find(name);
            if (it == row.folds.end()) continue;
            folds[name] = it->second;
            const MeanStd ms = mean_std(it->second);
            summary[name] = {{"mean", ms.mean}, {"std", ms.std_dev}};
        }
        entry["folds"] = std::move(folds);
        entry["summary"] = std::move(summary);
        strategies.push_back(std::move(entry));
    }
    j["strategies"] = std::move(strategies);
    return j;
}

std::string MetricsReport::to_table() const {
    // Best (highest) mean per metric column gets a star.
    std::map<std::string, double> best;
    for (const auto& name : metric_names) {
        for (const auto& row : rows) {
            const auto it = row.folds.find(name);
            if (it == row.folds.end()) continue;
            const double m = mean_std(it->second).mean;
            if (!best.count(name) || m > best[name]) best[name] = m;
        }
    }

    std::size_t width = 8;
    for (const auto& row : rows) width = std::max(width, row.strategy.size());

    std::ostringstream out;
    out << std::string(width, ' ');
    for (const auto& name : metric_names) {
        out << "  ";
        out.width(17);
        out << std::left << name;
    }
    out << '\n';
    char cell[64];
    for (const auto& row : rows) {
        out.width(static_cast<std::streamsize>(width));
        out << std::left << row.strategy;
        for (const auto& name : metric_names) {
            const auto it = row.folds.find(name);
            if (it == row.folds.end()) {
                out << "  " << std::string(17, '-');
                continue;
            }
            const MeanStd ms = mean_std(it->second);
            const bool starred = best.count(name) && ms.mean == best[name];
            std::snprintf(cell, sizeof cell, "%c%.3f ± %.3f", starred ? '*' : ' ', ms.mean,
                          ms.std_dev);
            out << "  ";
            out.width(17);
            out << std::left << cell;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace leocvae
