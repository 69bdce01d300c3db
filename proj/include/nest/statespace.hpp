#pragma once

// Core domain types: encrypted behavioral states, traces and datasets.
//
// An encrypted state is one time window of a process's cryptographic
// behavior, summarized as a fixed-dimension vector of normalized channels.
// The default layout has eight channels (see Channel). Traces store their
// states row-major in one flat buffer; `state(t)` returns a view.

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nest {

inline constexpr std::size_t kDefaultDim = 8;
inline constexpr int kActionAlphabetSize = 5;

enum class Channel : std::size_t {
    ByteEntropy = 0,
    Uniformity,
    WriteBurst,
    ReadWriteRatio,
    FileTouch,
    CryptoCalls,
    MemoryEntropy,
    NetEgress,
};

constexpr std::size_t idx(Channel c) noexcept { return static_cast<std::size_t>(c); }

inline constexpr std::array<std::string_view, kDefaultDim> kChannelNames = {
    "byte_entropy", "uniformity",     "write_burst",   "read_write_ratio",
    "file_touch",   "crypto_calls",   "memory_entropy", "net_egress",
};

/// Transition action alphabet.
enum class ActionCode : int { Idle = 0, FileIo = 1, Crypto = 2, Net = 3, Mem = 4 };

enum class Label { Benign, Ransomware };

std::string_view to_string(Label label) noexcept;
Label parse_label(std::string_view text);

inline constexpr std::string_view kBenignFamily = "benign";

using EncryptedState = std::span<const double>;

struct StateTrace {
    std::string id;
    std::size_t dim = kDefaultDim;
    std::vector<double> features; // length() * dim, row-major
    std::vector<int> actions;     // length() - 1
    double window_dt = 0.025;     // seconds per window
    Label label = Label::Benign;
    std::string family{kBenignFamily};

    std::size_t length() const noexcept { return dim == 0 ? 0 : features.size() / dim; }
    EncryptedState state(std::size_t t) const noexcept {
        return {features.data() + t * dim, dim};
    }
    double at(std::size_t t, std::size_t j) const noexcept { return features[t * dim + j]; }
    double& at(std::size_t t, std::size_t j) noexcept { return features[t * dim + j]; }
};

struct Violation {
    std::string kind;    // short machine-readable tag, e.g. "action count"
    std::string message; // includes the offending index where there is one
};

struct ValidationResult {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
    bool has(std::string_view kind) const noexcept;
};

/// Checks every StateTrace invariant. Never throws; violations are listed.
ValidationResult validate_trace(const StateTrace& trace,
                                int action_alphabet_size = kActionAlphabetSize);

struct ChannelStats {
    double min = 0.0;
    double max = 0.0;
    double mean = 0.0;
    double variance = 0.0; // population variance (divides by n)
};

/// Exact per-channel statistics over all states. Throws InputError
/// ("invalid trace") when the trace fails validation.
std::vector<ChannelStats> trace_stats(const StateTrace& trace);

struct Dataset {
    std::vector<StateTrace> traces;
    std::size_t dim = kDefaultDim;
    int action_alphabet_size = kActionAlphabetSize;
    std::map<std::string, std::size_t> manifest; // family -> trace count
    std::uint64_t seed = 0;
};

/// Recounts families from the traces.
std::map<std::string, std::size_t> count_families(std::span<const StateTrace> traces);

/// Dataset invariants plus per-trace validation; returns all violations.
ValidationResult validate_dataset(const Dataset& dataset);

/// Order-independent digest of a set of trace ids (used for provenance).
std::uint64_t id_digest(std::span<const StateTrace> traces);

} // namespace nest
