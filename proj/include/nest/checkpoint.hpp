#pragma once

// Model artifact files: the checkpoint, the normalization stats sidecar and
// the fitted baseline. All are JSON; doubles are written in shortest
// round-trip form so save/load is bit-exact.
//
// checkpoint.json
//   {"format": "nest-checkpoint", "version": 1,
//    "d", "blocks", "width", "action_alphabet_size",
//    "tensors": {name: [row-major values]},
//    "normalization": {"file", "provenance", "source_count", "source_digest"},
//    "threshold": {"tau", "provenance"}}

#include "nest/eval.hpp"
#include "nest/model.hpp"
#include "nest/preprocess.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace nest {

inline constexpr int kCheckpointVersion = 1;

struct StatsRef {
    std::string file = "stats.json";
    std::string provenance;
    std::size_t source_count = 0;
    std::uint64_t source_digest = 0;
};

struct Checkpoint {
    ModelParams params;
    Threshold threshold;
    StatsRef normalization;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
/// Throws InputError on a wrong format tag, version, shape or tensor size.
Checkpoint checkpoint_from_json(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Stats sidecar: the fitted normalization plus the preprocessing settings
/// needed to apply it to freshly generated traces.
std::string preprocessor_to_json(const Preprocessor& pre);
Preprocessor preprocessor_from_json(std::string_view text);

std::string baseline_to_json(const BaselineParams& params);
BaselineParams baseline_from_json(std::string_view text);

std::string hex64(std::uint64_t x);
std::uint64_t parse_hex64(std::string_view text);

} // namespace nest
