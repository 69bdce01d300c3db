#include "nest/preprocess.hpp"

#include "nest/error.hpp"
#include "nest/generator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace nest {

namespace {

void check_range(NormalizationRange r) {
    if (!(r.lo < r.hi)) throw InputError("normalization range needs lo < hi");
}

} // namespace

NormalizationStats compute_stats(std::span<const StateTrace> traces, NormalizationRange range,
                                 std::string provenance) {
    check_range(range);
    if (traces.empty()) throw InputError("cannot compute normalization stats of no traces");
    const std::size_t d = traces.front().dim;
    NormalizationStats stats;
    stats.range = range;
    stats.mins.assign(d, INFINITY);
    stats.maxs.assign(d, -INFINITY);
    for (const auto& t : traces) {
        if (t.dim != d) throw InputError("traces disagree on dimension");
        for (std::size_t s = 0; s < t.length(); ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                stats.mins[j] = std::min(stats.mins[j], t.at(s, j));
                stats.maxs[j] = std::max(stats.maxs[j], t.at(s, j));
            }
        }
    }
    stats.provenance = std::move(provenance);
    stats.source_count = traces.size();
    stats.source_digest = id_digest(traces);
    return stats;
}

bool audit_stats(const NormalizationStats& stats, std::span<const StateTrace> split) {
    return stats.source_count == split.size() && stats.source_digest == id_digest(split);
}

StateTrace normalize(const StateTrace& trace, const NormalizationStats& stats) {
    return normalize(trace, stats, stats.range);
}

StateTrace normalize(const StateTrace& trace, const NormalizationStats& stats,
                     NormalizationRange range) {
    if (stats.empty()) throw InputError("stats required");
    check_range(range);
    if (stats.mins.size() != trace.dim || stats.maxs.size() != trace.dim) {
        throw InputError("stats dimension does not match trace " + trace.id);
    }
    StateTrace out = trace;
    const double mid = 0.5 * (range.lo + range.hi);
    for (std::size_t j = 0; j < trace.dim; ++j) {
        const double lo = stats.mins[j], hi = stats.maxs[j];
        const bool degenerate = !(hi > lo);
        const double scale = degenerate ? 0.0 : (range.hi - range.lo) / (hi - lo);
        for (std::size_t t = 0; t < trace.length(); ++t) {
            double& x = out.at(t, j);
            x = degenerate ? mid : std::clamp(range.lo + (x - lo) * scale, range.lo, range.hi);
        }
    }
    return out;
}

StateTrace denoise(const StateTrace& trace, std::size_t window) {
    if (window == 0 || window % 2 == 0) throw InputError("denoise window must be odd and >= 1");
    const std::size_t n = trace.length();
    if (window > n) throw InputError("denoise window longer than trace " + trace.id);
    if (window == 1) return trace;
    const std::size_t half = window / 2;
    StateTrace out = trace;
    for (std::size_t j = 0; j < trace.dim; ++j) {
        for (std::size_t t = 0; t < n; ++t) {
            const std::size_t a = t >= half ? t - half : 0;
            const std::size_t b = std::min(n - 1, t + half);
            double sum = 0.0, lo = trace.at(a, j), hi = lo;
            for (std::size_t k = a; k <= b; ++k) {
                sum += trace.at(k, j);
                lo = std::min(lo, trace.at(k, j));
                hi = std::max(hi, trace.at(k, j));
            }
            // Rounding must not carry the mean outside the window's values.
            out.at(t, j) = std::clamp(sum / static_cast<double>(b - a + 1), lo, hi);
        }
    }
    return out;
}

bool family_skips_denoise(std::string_view family) {
    const FamilyTemplate* t = find_template(family);
    return t != nullptr && !t->denoise;
}

NormalizationRange family_range(std::string_view family) {
    const FamilyTemplate* t = find_template(family);
    if (t == nullptr) return {-1.0, 1.0};
    return {t->range_lo, t->range_hi};
}

StateTrace prepare_denoise(const StateTrace& trace, const PrepSettings& settings) {
    if (settings.table_faithful && family_skips_denoise(trace.family)) return trace;
    std::size_t window = settings.denoise_window;
    const std::size_t n = trace.length();
    if (window > n) window = n % 2 == 1 ? n : n - 1; // short traces get the widest odd window
    return denoise(trace, window);
}

StateTrace Preprocessor::apply(const StateTrace& trace) const {
    StateTrace smooth = prepare_denoise(trace, settings);
    if (settings.table_faithful) return normalize(smooth, stats, family_range(trace.family));
    return normalize(smooth, stats);
}

std::vector<StateTrace> Preprocessor::apply(std::span<const StateTrace> traces) const {
    std::vector<StateTrace> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(apply(t));
    return out;
}

void validate_split_spec(const SplitSpec& spec) {
    if (!(spec.train > 0.0 && spec.val > 0.0 && spec.test > 0.0)) {
        throw InputError("split ratios must all be positive");
    }
    if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-12) {
        throw InputError("split ratios must sum to 1");
    }
}

std::array<std::size_t, 3> apportion(std::size_t n, const SplitSpec& spec) {
    validate_split_spec(spec);
    const std::array<double, 3> ratios{spec.train, spec.val, spec.test};
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = static_cast<double>(n) * ratios[k];
        counts[k] = static_cast<std::size_t>(std::floor(quota));
        remainder[k] = quota - static_cast<double>(counts[k]);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 3]];
    return counts;
}

Split stratified_split(std::span<const StateTrace> traces, const SplitSpec& spec) {
    validate_split_spec(spec);
    // Family order of first appearance keeps the output deterministic.
    std::vector<std::string> families;
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        auto [it, inserted] = members.try_emplace(traces[i].family);
        if (inserted) families.push_back(traces[i].family);
        it->second.push_back(i);
    }
    Split split;
    for (const auto& family : families) {
        const auto& idx = members[family];
        if (idx.size() < 3) {
            throw InputError("family " + family + " has " + std::to_string(idx.size()) +
                             " traces; stratified split needs at least 3");
        }
        const auto counts = apportion(idx.size(), spec);
        std::size_t k = 0;
        for (std::size_t c = 0; c < counts[0]; ++c) split.train.push_back(traces[idx[k++]]);
        for (std::size_t c = 0; c < counts[1]; ++c) split.val.push_back(traces[idx[k++]]);
        for (std::size_t c = 0; c < counts[2]; ++c) split.test.push_back(traces[idx[k++]]);
    }
    return split;
}

} // namespace nest
