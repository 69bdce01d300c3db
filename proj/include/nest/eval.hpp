#pragma once

// Metrics, the heuristic baseline detector and the experiment suite.
//
// Baseline: a trace is flagged when
//   (a) the entropy channel's mean over some run of w consecutive windows
//       exceeds theta, or
//   (b) its post-peak profile has cosine >= 0.95 with a stored family
//       signature.
// The post-peak profile is the per-channel mean from the entropy peak to the
// end of the trace minus the training benign mean; a family signature is the
// mean profile of that family's training traces. (theta, w) come from a grid
// search maximizing training balanced accuracy.

#include "nest/model.hpp"
#include "nest/statespace.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace nest {

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

/// Ransomware is the positive class.
Confusion confusion(std::span<const Label> predictions, std::span<const Label> labels);

struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0; // 0 when tp + fp = 0
    double recall = 0.0;    // 0 when tp + fn = 0
    double f1 = 0.0;        // 0 when precision + recall = 0
};
Metrics metrics(const Confusion& c);

struct Rates {
    double fpr = 0.0;
    double fnr = 0.0;
};
/// Throws InputError if either class is absent.
Rates rates(const Confusion& c);

double median(std::vector<double> values);

// ---- baseline -------------------------------------------------------------

struct BaselineGrid {
    std::vector<double> thetas;
    std::vector<std::size_t> windows;
};
/// theta in {-1.00, -0.95, ..., 1.00}, w in {4, 8, ..., 256}.
BaselineGrid default_baseline_grid();

struct FamilySignature {
    std::string family;
    std::vector<double> profile;
};

struct BaselineParams {
    double theta = 0.0;
    std::size_t window = 0; // 0 = unfitted
    double cosine_threshold = 0.95;
    std::size_t entropy_channel = 0;
    std::vector<double> benign_mean;
    std::vector<FamilySignature> signatures;

    bool fitted() const noexcept { return window > 0; }
};

/// Largest mean of `channel` over any run of w consecutive windows (the
/// whole trace when w exceeds its length).
double max_run_mean(const StateTrace& trace, std::size_t channel, std::size_t w);
/// Per-channel mean from the first entropy maximum to the end, minus `reference`.
std::vector<double> post_peak_profile(const StateTrace& trace, std::size_t entropy_channel,
                                      std::span<const double> reference);
/// 0 when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);
/// Largest cosine between the trace's profile and any signature.
double signature_match(const StateTrace& trace, const BaselineParams& params);

/// Grid order: windows outer, thetas inner; the first best cell wins.
BaselineParams fit_baseline(std::span<const StateTrace> train, const BaselineGrid& grid = default_baseline_grid());

/// Score is max(run mean - theta, match - cosine threshold); the label
/// follows the two clauses directly. Throws InputError if unfitted.
Classification baseline_detect(const StateTrace& trace, const BaselineParams& params);

// ---- experiment suite -----------------------------------------------------

struct SweepSet {
    double speed_mbps = 0.0;
    std::vector<StateTrace> traces;
};

struct ExperimentInputs {
    std::span<const StateTrace> train;
    std::span<const StateTrace> val;
    std::span<const StateTrace> test;
    std::span<const StateTrace> unseen; // ransomware traces of held-out families
    std::span<const SweepSet> sweep;
    const ModelParams* model = nullptr;
    Threshold threshold;
    const BaselineParams* baseline = nullptr;
    std::size_t stride = 8;
    std::size_t persistence = 3;
};

struct ModelSummary {
    std::string model;
    Confusion confusion;
    Metrics metrics;
    Rates rates;
};

struct FamilyRate {
    std::string family; // training family, "evasion:<mode>", "evasive" or "non_evasive"
    std::string model;
    double rate = 0.0;
    std::size_t traces = 0;
};

struct LatencyRow {
    std::string family;
    double median_s = 0.0; // NaN when nothing was detected
    std::size_t detected = 0;
    std::size_t missed = 0;
};

struct SweepPoint {
    double speed_mbps = 0.0;
    std::string model;
    double accuracy = 0.0;
    std::size_t traces = 0;
};

struct UnseenRow {
    std::string family;
    std::string model;
    double accuracy = 0.0; // on that family's traces plus the benign test traces
    std::size_t traces = 0;
};

struct EvalReport {
    std::vector<ModelSummary> models; // "nest", "baseline"
    std::vector<FamilyRate> families;
    std::vector<LatencyRow> latency;  // NEST only
    std::vector<SweepPoint> sweep;
    std::vector<UnseenRow> unseen;
    Threshold threshold;

    const ModelSummary& summary(std::string_view model) const;
    double family_rate(std::string_view family, std::string_view model) const;
    double unseen_accuracy(std::string_view family, std::string_view model) const;
    double sweep_accuracy(double speed, std::string_view model) const;
};

/// Throws LeakageError if any evaluation id (test, unseen or sweep) was in
/// the train or validation split.
void check_leakage(const ExperimentInputs& in);

EvalReport run_experiments(const ExperimentInputs& in);

/// metrics.csv, latency.csv, sweep.csv, families.csv, unseen.csv and report.json.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

/// "%.6f", or "nan".
std::string format_fixed(double x);

} // namespace nest
