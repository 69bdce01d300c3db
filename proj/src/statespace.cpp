#include "nest/statespace.hpp"

#include "nest/error.hpp"
#include "nest/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nest {

std::string_view to_string(Label label) noexcept {
    return label == Label::Benign ? "benign" : "ransomware";
}

Label parse_label(std::string_view text) {
    if (text == "benign") return Label::Benign;
    if (text == "ransomware") return Label::Ransomware;
    throw InputError("unknown label '" + std::string(text) + "'");
}

bool ValidationResult::has(std::string_view kind) const noexcept {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.kind == kind; });
}

ValidationResult validate_trace(const StateTrace& trace, int action_alphabet_size) {
    ValidationResult result;
    auto add = [&](std::string kind, std::string message) {
        result.violations.push_back({std::move(kind), std::move(message)});
    };

    if (trace.dim == 0) {
        add("dimension", "state dimension is zero");
        return result;
    }
    if (trace.features.size() % trace.dim != 0) {
        add("dimension", "feature buffer of size " + std::to_string(trace.features.size()) +
                             " is not a multiple of dimension " + std::to_string(trace.dim));
    }
    const std::size_t n = trace.length();
    if (n < 2) add("length", "trace has " + std::to_string(n) + " states, need at least 2");
    if (trace.actions.size() + 1 != n) {
        add("action count", "expected " + std::to_string(n == 0 ? 0 : n - 1) + " actions, got " +
                                std::to_string(trace.actions.size()));
    }
    for (std::size_t i = 0; i < trace.actions.size(); ++i) {
        const int a = trace.actions[i];
        if (a < 0 || a >= action_alphabet_size) {
            add("action code", "action " + std::to_string(a) + " out of range at " +
                                   std::to_string(i));
        }
    }
    if (!(trace.window_dt > 0.0) || !std::isfinite(trace.window_dt)) {
        add("window_dt", "window_dt must be positive and finite");
    }
    const bool benign_family = trace.family == kBenignFamily;
    if (benign_family != (trace.label == Label::Benign)) {
        add("label/family", "family '" + trace.family + "' inconsistent with label " +
                                std::string(to_string(trace.label)));
    }
    for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t j = 0; j < trace.dim; ++j) {
            if (!std::isfinite(trace.at(t, j))) {
                add("non-finite feature", "non-finite feature at (" + std::to_string(t) + "," +
                                              std::to_string(j) + ")");
            }
        }
    }
    return result;
}

std::vector<ChannelStats> trace_stats(const StateTrace& trace) {
    if (!validate_trace(trace).ok()) throw InputError("invalid trace");
    const std::size_t n = trace.length();
    const std::size_t d = trace.dim;
    std::vector<ChannelStats> stats(d);
    for (std::size_t j = 0; j < d; ++j) {
        double lo = trace.at(0, j), hi = lo, sum = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double x = trace.at(t, j);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            sum += x;
        }
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            const double e = trace.at(t, j) - mean;
            ss += e * e;
        }
        stats[j] = {lo, hi, mean, ss / static_cast<double>(n)};
    }
    return stats;
}

std::map<std::string, std::size_t> count_families(std::span<const StateTrace> traces) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : traces) ++counts[t.family];
    return counts;
}

ValidationResult validate_dataset(const Dataset& dataset) {
    ValidationResult result;
    for (const auto& trace : dataset.traces) {
        if (trace.dim != dataset.dim) {
            result.violations.push_back(
                {"dimension", "trace " + trace.id + " has dimension " + std::to_string(trace.dim)});
        }
        for (auto& v : validate_trace(trace, dataset.action_alphabet_size).violations) {
            v.message = trace.id + ": " + v.message;
            result.violations.push_back(std::move(v));
        }
    }
    if (count_families(dataset.traces) != dataset.manifest) {
        result.violations.push_back({"manifest", "manifest counts differ from trace counts"});
    }
    return result;
}

std::uint64_t id_digest(std::span<const StateTrace> traces) {
    // XOR of mixed hashes is independent of order.
    std::uint64_t acc = splitmix64(traces.size());
    for (const auto& t : traces) acc ^= splitmix64(fnv1a64(t.id));
    return acc;
}

} // namespace nest
