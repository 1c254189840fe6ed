#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "enk/error.hpp"
#include "enk/format.hpp"

namespace enk {

// Rows index the true class, columns the predicted class.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::uint64_t> counts;

    std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
    std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (std::uint64_t c : counts) n += c;
        return n;
    }
};

inline ConfusionMatrix confusion(const std::vector<std::uint16_t>& labels,
                                 const std::vector<std::uint16_t>& predictions,
                                 std::size_t class_count) {
    if (labels.size() != predictions.size()) {
        throw ParamError("labels and predictions must have equal length");
    }
    if (class_count == 0) throw ParamError("class_count must be >= 1");
    ConfusionMatrix cm{class_count, std::vector<std::uint64_t>(class_count * class_count, 0)};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count || predictions[i] >= class_count) {
            throw ParamError("entry " + std::to_string(i) + " exceeds class_count");
        }
        cm.at(labels[i], predictions[i]) += 1;
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ParamError("empty confusion matrix");
    std::uint64_t hit = 0;
    for (std::size_t c = 0; c < cm.classes; ++c) hit += cm.at(c, c);
    return static_cast<double>(hit) / static_cast<double>(total);
}

// Per-class F1 with the explicit zero-division convention: a class nobody
// predicted takes precision 0, a class with no true instances takes recall 0,
// and P+R = 0 yields F1 = 0.
inline double f1_class(const ConfusionMatrix& cm, std::size_t c) {
    if (cm.total() == 0) throw ParamError("empty confusion matrix");
    if (c >= cm.classes) throw ParamError("class index out of range");
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (std::size_t o = 0; o < cm.classes; ++o) {
        if (o == c) continue;
        fp += cm.at(o, c);
        fn += cm.at(c, o);
    }
    const double precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// Support-weighted mean of per-class F1. Classes without true instances have
// zero support and drop out of the average.
inline double f1_weighted(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw ParamError("empty confusion matrix");
    double acc = 0.0;
    for (std::size_t c = 0; c < cm.classes; ++c) {
        std::uint64_t support = 0;
        for (std::size_t p = 0; p < cm.classes; ++p) support += cm.at(c, p);
        if (support > 0) acc += static_cast<double>(support) * f1_class(cm, c);
    }
    return acc / static_cast<double>(total);
}

// One result row of the metrics CSV. For binary runs f1_class1 carries the
// positive-class F1 alongside the weighted figure; multiclass runs leave the
// column empty.
struct RunMetricsRow {
    std::string run_id;
    std::string dataset;
    std::string family;
    std::string variant;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    double f1_weighted = 0.0;
    bool binary = false;
    double f1_class1 = 0.0;
    std::size_t epochs_run = 0;
    std::size_t param_count = 0;
};

inline std::string metrics_csv_header() {
    return "run_id,dataset,family,variant,seed,accuracy,f1_weighted,f1_class1,epochs_run,param_count";
}

inline std::string metrics_csv_row(const RunMetricsRow& r) {
    std::string row = r.run_id + "," + r.dataset + "," + r.family + "," + r.variant + "," +
                      std::to_string(r.seed) + "," + format_g9(r.accuracy) + "," +
                      format_g9(r.f1_weighted) + ",";
    if (r.binary) row += format_g9(r.f1_class1);
    row += "," + std::to_string(r.epochs_run) + "," + std::to_string(r.param_count);
    return row;
}

}  // namespace enk
