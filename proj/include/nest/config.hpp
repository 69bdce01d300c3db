#pragma once

// Run configuration shared by every pipeline command.
//
// One JSON document mirrors RunConfig; missing keys keep their defaults and
// unknown keys are rejected. Module seeds come from the single top-level
// seed:  gen = derive_seed(seed, "gen"), train = derive_seed(seed, "train"),
// eval = derive_seed(seed, "eval").

#include "nest/model.hpp"
#include "nest/preprocess.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nest {

struct PathsConfig {
    std::filesystem::path data_dir = "data";
    std::filesystem::path prep_dir = "prep";
    std::filesystem::path model_dir = "model";
    std::filesystem::path report_dir = "report";
};

struct GenerateConfig {
    double scale = 0.1;
    double window_dt = 0.025;
    std::size_t onset_shift = 0;
};

struct PrepConfig {
    SplitSpec split;
    PrepSettings settings;
};

struct EvalConfig {
    std::vector<double> sweep_speeds = {1.0, 5.0, 10.0, 25.0, 50.0};
    std::size_t sweep_count = 40; // ransomware traces per speed (plus as many benign)
    std::size_t sweep_length = 2048;
    std::vector<std::string> unseen_families = {"royal", "quantum", "play"};
    std::size_t unseen_count = 60;
    std::size_t unseen_length = 2048;
    std::size_t stride = 8;
    std::size_t persistence = 3;
};

struct RunConfig {
    std::uint64_t seed = 7;
    PathsConfig paths;
    GenerateConfig generator;
    PrepConfig preprocess;
    ModelShape model;
    TrainConfig train; // train.seed is overwritten by the derived seed
    EvalConfig eval;
};

/// Throws InputError on any out-of-range field.
void validate_config(const RunConfig& cfg);

RunConfig config_from_json(std::string_view text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

std::uint64_t gen_seed(const RunConfig& cfg);
std::uint64_t train_seed(const RunConfig& cfg);
std::uint64_t eval_seed(const RunConfig& cfg);

} // namespace nest
