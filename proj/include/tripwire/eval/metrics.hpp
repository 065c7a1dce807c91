#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>

namespace tripwire::eval {

// Drone is the positive class.
struct confusion_counts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }
    confusion_counts& operator+=(const confusion_counts& o) {
        tp += o.tp; fp += o.fp; fn += o.fn; tn += o.tn;
        return *this;
    }
    bool operator==(const confusion_counts&) const = default;
};

inline void tally(confusion_counts& c, label predicted, label truth) {
    const bool p = predicted == label::drone, t = truth == label::drone;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
}

inline confusion_counts confusion(std::span<const label> predictions, std::span<const label> labels) {
    if (predictions.size() != labels.size()) {
        throw config_error("confusion: " + std::to_string(predictions.size()) + " predictions for " +
            std::to_string(labels.size()) + " labels");
    }
    confusion_counts c;
    for (std::size_t i = 0; i < labels.size(); ++i) tally(c, predictions[i], labels[i]);
    return c;
}

// A ratio whose denominator was zero is empty.
using ratio = std::optional<double>;

struct detection_metrics {
    ratio recall;
    ratio fdr;
    ratio f1;
    ratio accuracy;
};

inline ratio safe_ratio(double num, double den) {
    if (den == 0) return std::nullopt;
    return num/den;
}

inline detection_metrics metrics(const confusion_counts& c) {
    const double tp = double(c.tp), fp = double(c.fp), fn = double(c.fn), tn = double(c.tn);
    return {
        safe_ratio(tp, tp + fn),
        safe_ratio(fp, tp + fp),
        safe_ratio(2*tp, 2*tp + fp + fn),
        safe_ratio(tp + tn, tp + fp + fn + tn),
    };
}

inline std::string format_ratio(const ratio& r, int precision = 6) {
    if (!r) return "undefined";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, *r);
    return buf;
}

} // namespace tripwire::eval
