#pragma once

// Seeded synthesizer of benign and ransomware traces.
//
// Benign process (per channel j, stationary AR(1) around a baseline):
//   x_t = phi * x_{t-1} + sqrt(1 - phi^2) * sd_j * eps_t,   value = mu_j + x_t
// plus occasional "activity bursts" (archiving/backup-like: high entropy and
// write volume, no crypto-API traffic) of 16..64 windows.
//
// Ransomware trace = benign process + an additive overlay that starts at the
// profile's onset window:
//   rho(tau)   = min(1, slope * (tau + 1))           while the payload is being encrypted
//   slope      = enc_speed * window_dt / ramp_mb     (fraction of full amplitude per window)
//   duration   = payload_mb / (enc_speed * window_dt) windows
// after which the overlay decays exponentially. Faster encryption therefore
// ramps up sooner and finishes sooner.
//
// The benign part, the bursts and the action draws come from three separate
// seeded streams, so moving the onset never changes the pre-onset windows.
//
// Per-trace seeds: derive_seed(global_seed, family_name, index).

#include "nest/statespace.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace nest {

enum class Evasion { None, Delayed, EntropyObfuscated, MemoryResident };

std::string_view to_string(Evasion e) noexcept;
Evasion parse_evasion(std::string_view text);
inline constexpr std::array<Evasion, 4> kAllEvasions = {
    Evasion::None, Evasion::Delayed, Evasion::EntropyObfuscated, Evasion::MemoryResident};

struct GeneratorConfig {
    std::vector<double> baseline = {0.45, 0.40, 0.30, 0.50, 0.20, 0.10, 0.15, 0.20};
    std::vector<double> noise_sd = {0.04, 0.04, 0.05, 0.05, 0.04, 0.03, 0.04, 0.05};
    double ar_coeff = 0.7;
    double noise_scale = 1.0; // scales all benign variability (AR noise and bursts)
    double ramp_mb = 1.25;
    double decay_windows = 8.0;
    double entropy_clamp_sigma = 2.0; // obfuscated traces: entropy <= mu + clamp * sd
    double obfuscated_gain = 0.6;
    double memory_resident_gain = 2.0;
    double bursts_per_1000 = 1.0;
    std::size_t burst_min = 16;
    std::size_t burst_max = 64;
    std::vector<double> burst_sigma = {7.0, 6.0, 5.0, -2.0, 1.0, 0.0, 0.5, 0.0};
    std::array<double, 5> benign_actions = {0.35, 0.35, 0.05, 0.15, 0.10};
    std::array<double, 5> burst_actions = {0.15, 0.65, 0.02, 0.08, 0.10};
    std::array<double, 5> active_actions = {0.10, 0.40, 0.35, 0.05, 0.10};
    std::array<double, 5> memory_actions = {0.15, 0.10, 0.35, 0.10, 0.30};

    std::size_t dim() const noexcept { return baseline.size(); }
};

/// Concrete behavior of one ransomware trace.
struct FamilyProfile {
    std::string name;
    std::size_t onset_window = 0;
    std::vector<double> channel_amplitudes; // raw offsets at full intensity, size d
    double enc_speed = 10.0;                // MB/s
    double payload_mb = 60.0;               // data encrypted before the overlay decays
    Evasion evasion = Evasion::None;
    std::vector<double> periodicity;        // per-channel period in windows, 0 = none; may be empty
};

/// Throws InputError if the profile is unusable for a trace of `length`.
void validate_profile(const FamilyProfile& profile, std::size_t length, std::size_t dim);

/// Family-level parameters from which per-trace profiles are drawn.
struct FamilyTemplate {
    std::string name;
    std::array<double, kDefaultDim> amplitude_sigma{}; // offsets in units of the channel sd
    double enc_speed = 10.0;
    std::array<double, 4> evasion_mix{1.0, 0.0, 0.0, 0.0}; // order of kAllEvasions
    std::array<double, kDefaultDim> period{};
    bool denoise = true;        // false: skipped by table-faithful denoising
    double range_lo = -1.0;     // table-faithful normalization range
    double range_hi = 1.0;
    std::size_t full_count = 0;
    std::size_t full_length = 0;
};

/// Parameter ranges used when drawing profiles from a template. The
/// training and unseen ranges are disjoint in amplitude and onset.
struct ProfileRanges {
    double amp_lo, amp_hi;             // multiplier on amplitude_sigma
    double onset_lo, onset_hi;         // fraction of trace length
    double delayed_onset_lo, delayed_onset_hi;
    double speed_lo, speed_hi;         // multiplier on enc_speed
    double payload_lo, payload_hi;     // MB
};

ProfileRanges training_ranges() noexcept;
ProfileRanges unseen_ranges() noexcept;

/// LockBit 3.0, BlackCat, Hive, Conti, Babuk with their full-scale counts and lengths.
const std::vector<FamilyTemplate>& training_templates();
/// Royal, Quantum, Play; used only for generalization tests.
const std::vector<FamilyTemplate>& unseen_templates();
/// Searches both template sets; nullptr if unknown.
const FamilyTemplate* find_template(std::string_view name);
bool is_training_family(std::string_view name);

FamilyProfile instantiate_profile(const FamilyTemplate& tmpl, std::size_t length,
                                  const ProfileRanges& ranges, const GeneratorConfig& cfg,
                                  std::uint64_t seed);

StateTrace gen_benign(std::size_t length, std::size_t dim, double window_dt, std::uint64_t seed,
                      const GeneratorConfig& cfg = {}, std::string id = "benign");

StateTrace gen_ransomware(const FamilyProfile& profile, std::size_t length, std::size_t dim,
                          double window_dt, std::uint64_t seed, const GeneratorConfig& cfg = {},
                          std::string id = "");

/// Overlay intensity in [0, 1] at window t (0 before onset).
double overlay_intensity(const FamilyProfile& profile, double window_dt,
                         const GeneratorConfig& cfg, std::size_t t);

struct FamilyCount {
    std::string name;
    std::size_t count = 0;  // before scaling
    std::size_t length = 0;
};

struct CompositionSpec {
    std::vector<FamilyCount> families;
    std::size_t benign_count = 0; // before scaling
    std::size_t benign_length_min = 1856;
    std::size_t benign_length_max = 2112;
    double scale = 1.0;
    std::uint64_t seed = 0;
    double window_dt = 0.025;
    std::size_t dim = kDefaultDim;
    std::size_t onset_shift = 0; // added to every ransomware onset (paired latency runs)
};

/// Benchmark composition: five families plus benign (counts unscaled; `scale` applied at generation).
CompositionSpec benchmark_composition(double scale = 1.0, std::uint64_t seed = 0);

/// floor(count * scale + 0.5)
std::size_t scaled_count(std::size_t count, double scale) noexcept;

/// Per-family trace counts after scaling; validates the spec.
std::map<std::string, std::size_t> planned_counts(const CompositionSpec& spec);

void validate_composition(const CompositionSpec& spec);

/// Trace ids are "<family>-<index:05>-<evasion>".
std::string make_trace_id(std::string_view family, std::size_t index, Evasion evasion);
/// Evasion mode encoded in a generated trace id.
Evasion evasion_of(const StateTrace& trace);

Dataset gen_dataset(const CompositionSpec& spec, const GeneratorConfig& cfg = {});

/// Held-out families differ from every training family by at least this
/// many benign noise standard deviations on some channel, measured on the
/// per-channel mean of active states (entropy above benign mean + 3 sd).
inline constexpr double kUnseenShiftFloor = 1.0;

struct UnseenSpec {
    std::size_t count_per_family = 60;
    std::size_t length = 2048;
    double window_dt = 0.025;
    std::size_t dim = kDefaultDim;
    std::size_t onset_shift = 0;
};

/// Traces for held-out families; throws InputError on a name that is a
/// training family or not a known unseen family.
Dataset gen_unseen_families(const std::vector<std::string>& names, const UnseenSpec& spec,
                            std::uint64_t seed, const GeneratorConfig& cfg = {});

/// Speed-controlled evaluation set: `count` non-evasive ransomware traces
/// cycling through the training families, all encrypting at `speed` MB/s,
/// plus `count` benign traces.
std::vector<StateTrace> gen_speed_set(double speed, std::size_t count, std::size_t length,
                                      double window_dt, std::uint64_t seed,
                                      const GeneratorConfig& cfg = {});

} // namespace nest
