#pragma once

// Normalization, noise reduction and stratified splitting.
//
// Normalization is per-channel min-max with statistics taken from the
// training split only; the stats object records where it came from
// (provenance tag, trace count and an id digest) so an audit can prove it
// was not computed over validation or test traces.

#include "nest/statespace.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nest {

struct NormalizationRange {
    double lo = -1.0;
    double hi = 1.0;
};

struct NormalizationStats {
    NormalizationRange range;
    std::vector<double> mins; // per channel, over the source traces
    std::vector<double> maxs;
    std::string provenance;   // "train" for pipeline stats
    std::size_t source_count = 0;
    std::uint64_t source_digest = 0;

    bool empty() const noexcept { return mins.empty(); }
};

NormalizationStats compute_stats(std::span<const StateTrace> traces, NormalizationRange range,
                                 std::string provenance);

/// True iff `stats` were computed over exactly the traces in `split`.
bool audit_stats(const NormalizationStats& stats, std::span<const StateTrace> split);

/// Affine map: source min -> lo, source max -> hi; out-of-range values are
/// clipped; a degenerate channel (min == max) maps to (lo + hi) / 2.
/// Throws InputError("stats required") when `stats` is empty.
StateTrace normalize(const StateTrace& trace, const NormalizationStats& stats);
StateTrace normalize(const StateTrace& trace, const NormalizationStats& stats,
                     NormalizationRange range);

/// Centered moving average per channel; windows shrink (truncate) at the
/// boundaries. `window` must be odd and no longer than the trace.
StateTrace denoise(const StateTrace& trace, std::size_t window);

/// Conti and Babuk traces are left unsmoothed in table-faithful mode.
bool family_skips_denoise(std::string_view family);
/// Table-faithful normalization range for a family ([0,1] for Conti/Babuk).
NormalizationRange family_range(std::string_view family);

struct PrepSettings {
    std::size_t denoise_window = 3;
    NormalizationRange range{-1.0, 1.0};
    bool table_faithful = false;
};

/// Denoise step of the pipeline (honors table-faithful skipping).
StateTrace prepare_denoise(const StateTrace& trace, const PrepSettings& settings);

/// Applies a fitted pipeline to any trace.
struct Preprocessor {
    PrepSettings settings;
    NormalizationStats stats;

    StateTrace apply(const StateTrace& trace) const;
    std::vector<StateTrace> apply(std::span<const StateTrace> traces) const;
};

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

void validate_split_spec(const SplitSpec& spec);

/// Largest-remainder apportionment of n items over the three ratios.
/// Ties in the fractional remainder go to the earlier split.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitSpec& spec);

struct Split {
    std::vector<StateTrace> train;
    std::vector<StateTrace> val;
    std::vector<StateTrace> test;
};

/// Per family, traces in generation order are cut into consecutive
/// train / val / test blocks sized by apportion(). Throws InputError if a
/// family has fewer than 3 traces.
Split stratified_split(std::span<const StateTrace> traces, const SplitSpec& spec);

} // namespace nest
