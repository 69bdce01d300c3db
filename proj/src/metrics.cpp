#include "nest/eval.hpp"

#include "nest/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace nest {

Confusion confusion(std::span<const Label> predictions, std::span<const Label> labels) {
    if (predictions.size() != labels.size()) {
        throw InputError("predictions and labels differ in length");
    }
    if (labels.empty()) throw InputError("confusion of no predictions");
    Confusion c;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool pred = predictions[i] == Label::Ransomware;
        if (labels[i] == Label::Ransomware) {
            ++(pred ? c.tp : c.fn);
        } else {
            ++(pred ? c.fp : c.tn);
        }
    }
    return c;
}

Metrics metrics(const Confusion& c) {
    if (c.total() == 0) throw InputError("metrics of an empty confusion");
    const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    Metrics m;
    // Written so that accuracy == 1 - (fp + fn) / N holds bit for bit.
    m.accuracy = 1.0 - (fp + fn) / static_cast<double>(c.total());
    m.precision = c.tp + c.fp == 0 ? 0.0 : tp / (tp + fp);
    m.recall = c.tp + c.fn == 0 ? 0.0 : tp / (tp + fn);
    m.f1 = m.precision + m.recall == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    return m;
}

Rates rates(const Confusion& c) {
    if (c.tn + c.fp == 0) throw InputError("false positive rate needs benign traces");
    if (c.tp + c.fn == 0) throw InputError("false negative rate needs ransomware traces");
    return {static_cast<double>(c.fp) / static_cast<double>(c.fp + c.tn),
            static_cast<double>(c.fn) / static_cast<double>(c.fn + c.tp)};
}

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string format_fixed(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

} // namespace nest
