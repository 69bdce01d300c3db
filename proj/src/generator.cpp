#include "nest/generator.hpp"

#include "nest/error.hpp"
#include "nest/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace nest {

std::string_view to_string(Evasion e) noexcept {
    switch (e) {
    case Evasion::None: return "none";
    case Evasion::Delayed: return "delayed";
    case Evasion::EntropyObfuscated: return "entropy_obfuscated";
    case Evasion::MemoryResident: return "memory_resident";
    }
    return "none";
}

Evasion parse_evasion(std::string_view text) {
    for (Evasion e : kAllEvasions) {
        if (to_string(e) == text) return e;
    }
    throw InputError("unknown evasion mode '" + std::string(text) + "'");
}

ProfileRanges training_ranges() noexcept {
    return {0.80, 1.20, 0.10, 0.45, 0.50, 0.70, 0.80, 1.25, 40.0, 80.0};
}

ProfileRanges unseen_ranges() noexcept {
    return {1.25, 1.50, 0.04, 0.09, 0.50, 0.70, 0.80, 1.25, 40.0, 80.0};
}

namespace {

FamilyTemplate make_template(std::string name, std::array<double, kDefaultDim> amp, double speed,
                             std::array<double, 4> mix, bool denoise, double lo, std::size_t count,
                             std::size_t length) {
    FamilyTemplate t;
    t.name = std::move(name);
    t.amplitude_sigma = amp;
    t.enc_speed = speed;
    t.evasion_mix = mix;
    t.denoise = denoise;
    t.range_lo = lo;
    t.range_hi = 1.0;
    t.full_count = count;
    t.full_length = length;
    return t;
}

} // namespace

const std::vector<FamilyTemplate>& training_templates() {
    static const std::vector<FamilyTemplate> templates = [] {
        std::vector<FamilyTemplate> v;
        //                      entropy unif write  rw  touch crypto mem net
        v.push_back(make_template("lockbit3", {7, 6, 6, -3, 6, 7, 2, 1}, 12.0,
                                  {0.80, 0.10, 0.10, 0.00}, true, -1.0, 750, 2048));
        v.push_back(make_template("blackcat", {7, 6, 5, -2, 5, 6, 3, 2}, 8.0,
                                  {0.40, 0.10, 0.35, 0.15}, true, -1.0, 620, 1984));
        v.push_back(make_template("hive", {7, 5, 5, -2, 4, 6, 3, 3}, 6.0,
                                  {0.40, 0.10, 0.15, 0.35}, true, -1.0, 580, 2112));
        v.back().period[idx(Channel::NetEgress)] = 40.0;
        v.push_back(make_template("conti", {6, 6, 6, -3, 7, 6, 2, 1}, 10.0,
                                  {0.80, 0.20, 0.00, 0.00}, false, 0.0, 500, 1920));
        v.push_back(make_template("babuk", {7, 6, 5, -2, 5, 5, 2, 1}, 5.0,
                                  {0.60, 0.30, 0.10, 0.00}, false, 0.0, 450, 1856));
        return v;
    }();
    return templates;
}

const std::vector<FamilyTemplate>& unseen_templates() {
    static const std::vector<FamilyTemplate> templates = [] {
        std::vector<FamilyTemplate> v;
        v.push_back(make_template("royal", {8, 6, 7, -3, 5, 8, 2, 2}, 15.0,
                                  {1.0, 0.0, 0.0, 0.0}, true, -1.0, 0, 2048));
        v.push_back(make_template("quantum", {6, 7, 5, -2, 8, 6, 3, 1}, 20.0,
                                  {1.0, 0.0, 0.0, 0.0}, true, -1.0, 0, 2048));
        v.push_back(make_template("play", {7, 5, 6, -4, 6, 7, 4, 2}, 9.0,
                                  {1.0, 0.0, 0.0, 0.0}, true, -1.0, 0, 2048));
        return v;
    }();
    return templates;
}

const FamilyTemplate* find_template(std::string_view name) {
    for (const auto* set : {&training_templates(), &unseen_templates()}) {
        for (const auto& t : *set) {
            if (t.name == name) return &t;
        }
    }
    return nullptr;
}

bool is_training_family(std::string_view name) {
    return std::any_of(training_templates().begin(), training_templates().end(),
                       [&](const FamilyTemplate& t) { return t.name == name; });
}

void validate_profile(const FamilyProfile& p, std::size_t length, std::size_t dim) {
    if (p.name.empty() || p.name == kBenignFamily) {
        throw InputError("profile needs a ransomware family name");
    }
    if (!(p.enc_speed > 0.0) || !std::isfinite(p.enc_speed)) {
        throw InputError("profile " + p.name + ": enc_speed must be positive");
    }
    if (!(p.payload_mb > 0.0) || !std::isfinite(p.payload_mb)) {
        throw InputError("profile " + p.name + ": payload_mb must be positive");
    }
    if (p.onset_window >= length) {
        throw InputError("profile " + p.name + ": onset_window " + std::to_string(p.onset_window) +
                         " not below trace length " + std::to_string(length));
    }
    if (p.evasion == Evasion::Delayed && 2 * p.onset_window < length) {
        throw InputError("profile " + p.name + ": delayed evasion needs onset >= half the length");
    }
    if (p.channel_amplitudes.size() != dim) {
        throw InputError("profile " + p.name + ": amplitude vector has wrong dimension");
    }
    if (!p.periodicity.empty() && p.periodicity.size() != dim) {
        throw InputError("profile " + p.name + ": periodicity vector has wrong dimension");
    }
    for (double a : p.channel_amplitudes) {
        if (!std::isfinite(a)) throw InputError("profile " + p.name + ": non-finite amplitude");
    }
    for (double period : p.periodicity) {
        if (!(period >= 0.0) || !std::isfinite(period)) {
            throw InputError("profile " + p.name + ": periodicity must be >= 0");
        }
    }
}

FamilyProfile instantiate_profile(const FamilyTemplate& tmpl, std::size_t length,
                                  const ProfileRanges& r, const GeneratorConfig& cfg,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    FamilyProfile p;
    p.name = tmpl.name;

    const double u = unit(rng);
    double acc = 0.0;
    p.evasion = Evasion::None;
    for (std::size_t k = 0; k < kAllEvasions.size(); ++k) {
        acc += tmpl.evasion_mix[k];
        if (u < acc) {
            p.evasion = kAllEvasions[k];
            break;
        }
    }

    const std::size_t d = cfg.dim();
    p.channel_amplitudes.resize(d, 0.0);
    for (std::size_t j = 0; j < d && j < kDefaultDim; ++j) {
        p.channel_amplitudes[j] = tmpl.amplitude_sigma[j] * between(r.amp_lo, r.amp_hi) * cfg.noise_sd[j];
    }
    p.enc_speed = tmpl.enc_speed * between(r.speed_lo, r.speed_hi);
    p.payload_mb = between(r.payload_lo, r.payload_hi);
    const double frac = p.evasion == Evasion::Delayed ? between(r.delayed_onset_lo, r.delayed_onset_hi)
                                                      : between(r.onset_lo, r.onset_hi);
    p.onset_window = static_cast<std::size_t>(std::ceil(frac * static_cast<double>(length)));
    if (std::any_of(tmpl.period.begin(), tmpl.period.end(), [](double x) { return x > 0.0; })) {
        p.periodicity.assign(tmpl.period.begin(), tmpl.period.begin() + std::min(d, kDefaultDim));
        p.periodicity.resize(d, 0.0);
    }
    return p;
}

namespace {

void check_config(const GeneratorConfig& cfg, std::size_t dim) {
    if (dim != cfg.dim() || cfg.noise_sd.size() != dim || cfg.burst_sigma.size() != dim) {
        throw InputError("generator is configured for " + std::to_string(cfg.dim()) +
                         " channels, requested " + std::to_string(dim));
    }
    if (!(cfg.ar_coeff > -1.0 && cfg.ar_coeff < 1.0)) throw InputError("ar_coeff must lie in (-1, 1)");
    if (cfg.noise_scale < 0.0) throw InputError("noise_scale must be >= 0");
    if (cfg.burst_min == 0 || cfg.burst_min > cfg.burst_max) throw InputError("bad burst length range");
}

struct BenignBase {
    std::vector<double> features;
    std::vector<double> burst; // burst intensity per window
    std::vector<double> action_u;
};

BenignBase benign_base(std::size_t length, const GeneratorConfig& cfg, std::uint64_t seed) {
    const std::size_t d = cfg.dim();
    BenignBase base;
    base.features.resize(length * d);
    base.burst.assign(length, 0.0);
    base.action_u.resize(length > 0 ? length - 1 : 0);

    std::mt19937_64 noise_rng(derive_seed(seed, "noise"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double phi = cfg.ar_coeff;
    const double innov = std::sqrt(1.0 - phi * phi);
    std::vector<double> x(d);
    for (std::size_t j = 0; j < d; ++j) x[j] = cfg.noise_sd[j] * normal(noise_rng);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t j = 0; j < d; ++j) {
            if (t > 0) x[j] = phi * x[j] + innov * cfg.noise_sd[j] * normal(noise_rng);
            base.features[t * d + j] = cfg.baseline[j] + cfg.noise_scale * x[j];
        }
    }

    std::mt19937_64 burst_rng(derive_seed(seed, "bursts"));
    const double expected = cfg.bursts_per_1000 * static_cast<double>(length) / 1000.0;
    if (expected > 0.0 && length > 0) {
        const int count = std::poisson_distribution<int>(expected)(burst_rng);
        std::uniform_int_distribution<std::size_t> start_dist(0, length - 1);
        std::uniform_int_distribution<std::size_t> len_dist(cfg.burst_min, cfg.burst_max);
        std::uniform_real_distribution<double> scale_dist(0.8, 1.2);
        constexpr double kEdge = 4.0;
        for (int b = 0; b < count; ++b) {
            const std::size_t start = start_dist(burst_rng);
            const std::size_t len = len_dist(burst_rng);
            const double scale = scale_dist(burst_rng);
            for (std::size_t t = start; t < std::min(length, start + len); ++t) {
                const double rise = static_cast<double>(t - start + 1) / kEdge;
                const double fall = static_cast<double>(start + len - t) / kEdge;
                base.burst[t] = std::max(base.burst[t], scale * std::min({1.0, rise, fall}));
            }
        }
        for (std::size_t t = 0; t < length; ++t) {
            if (base.burst[t] == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                base.features[t * d + j] +=
                    cfg.noise_scale * base.burst[t] * cfg.burst_sigma[j] * cfg.noise_sd[j];
            }
        }
    }

    std::mt19937_64 action_rng(derive_seed(seed, "actions"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& u : base.action_u) u = unit(action_rng);
    return base;
}

using ActionDist = std::array<double, 5>;

ActionDist mix(const ActionDist& a, const ActionDist& b, double w) {
    ActionDist out;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - w) * a[k] + w * b[k];
    return out;
}

int sample_action(const ActionDist& p, double u) {
    double acc = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        acc += p[k];
        if (u < acc) return static_cast<int>(k);
    }
    return static_cast<int>(p.size()) - 1;
}

ActionDist benign_action_dist(const GeneratorConfig& cfg, double burst) {
    return burst > 0.0 ? mix(cfg.benign_actions, cfg.burst_actions, std::min(1.0, burst))
                       : cfg.benign_actions;
}

void check_length_dt(std::size_t length, double window_dt) {
    if (length < 2) throw InputError("trace length must be at least 2");
    if (!(window_dt > 0.0) || !std::isfinite(window_dt)) throw InputError("window_dt must be positive");
}

} // namespace

StateTrace gen_benign(std::size_t length, std::size_t dim, double window_dt, std::uint64_t seed,
                      const GeneratorConfig& cfg, std::string id) {
    check_length_dt(length, window_dt);
    check_config(cfg, dim);
    BenignBase base = benign_base(length, cfg, seed);

    StateTrace trace;
    trace.id = std::move(id);
    trace.dim = dim;
    trace.window_dt = window_dt;
    trace.label = Label::Benign;
    trace.family = std::string(kBenignFamily);
    trace.features = std::move(base.features);
    trace.actions.resize(length - 1);
    for (std::size_t t = 0; t + 1 < length; ++t) {
        trace.actions[t] = sample_action(benign_action_dist(cfg, base.burst[t]), base.action_u[t]);
    }
    return trace;
}

double overlay_intensity(const FamilyProfile& p, double window_dt, const GeneratorConfig& cfg,
                         std::size_t t) {
    if (t < p.onset_window) return 0.0;
    const double tau = static_cast<double>(t - p.onset_window);
    const double mb_per_window = p.enc_speed * window_dt;
    const double slope = mb_per_window / cfg.ramp_mb;
    const double duration = std::max(1.0, std::ceil(p.payload_mb / mb_per_window));
    if (tau < duration) return std::min(1.0, slope * (tau + 1.0));
    const double last = std::min(1.0, slope * duration);
    return last * std::exp(-(tau - duration + 1.0) / cfg.decay_windows);
}

StateTrace gen_ransomware(const FamilyProfile& profile, std::size_t length, std::size_t dim,
                          double window_dt, std::uint64_t seed, const GeneratorConfig& cfg,
                          std::string id) {
    check_length_dt(length, window_dt);
    check_config(cfg, dim);
    validate_profile(profile, length, dim);
    BenignBase base = benign_base(length, cfg, seed);

    std::vector<double> amp = profile.channel_amplitudes;
    ActionDist active = cfg.active_actions;
    double action_gain = 1.0;
    const bool have_file_channels = dim >= kDefaultDim;
    switch (profile.evasion) {
    case Evasion::None:
    case Evasion::Delayed:
        break;
    case Evasion::EntropyObfuscated:
        for (double& a : amp) a *= cfg.obfuscated_gain;
        if (have_file_channels) {
            amp[idx(Channel::ByteEntropy)] = 0.0;
            amp[idx(Channel::Uniformity)] = 0.0;
        }
        action_gain = cfg.obfuscated_gain;
        break;
    case Evasion::MemoryResident:
        if (have_file_channels) {
            for (Channel c : {Channel::ByteEntropy, Channel::Uniformity, Channel::WriteBurst,
                              Channel::ReadWriteRatio, Channel::FileTouch}) {
                amp[idx(c)] = 0.0;
            }
            amp[idx(Channel::MemoryEntropy)] *= cfg.memory_resident_gain;
        }
        active = cfg.memory_actions;
        break;
    }

    StateTrace trace;
    trace.id = id.empty() ? profile.name : std::move(id);
    trace.dim = dim;
    trace.window_dt = window_dt;
    trace.label = Label::Ransomware;
    trace.family = profile.name;
    trace.features = std::move(base.features);
    trace.actions.resize(length - 1);

    for (std::size_t t = profile.onset_window; t < length; ++t) {
        const double rho = overlay_intensity(profile, window_dt, cfg, t);
        const double tau = static_cast<double>(t - profile.onset_window);
        for (std::size_t j = 0; j < dim; ++j) {
            double m = 1.0;
            if (!profile.periodicity.empty() && profile.periodicity[j] > 0.0) {
                m = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * tau / profile.periodicity[j]));
            }
            trace.at(t, j) += rho * amp[j] * m;
        }
    }
    if (profile.evasion == Evasion::EntropyObfuscated && have_file_channels) {
        const std::size_t e = idx(Channel::ByteEntropy);
        const double cap = cfg.baseline[e] + cfg.entropy_clamp_sigma * cfg.noise_sd[e];
        for (std::size_t t = 0; t < length; ++t) trace.at(t, e) = std::min(trace.at(t, e), cap);
    }
    for (std::size_t t = 0; t + 1 < length; ++t) {
        const double rho = overlay_intensity(profile, window_dt, cfg, t);
        ActionDist p = benign_action_dist(cfg, base.burst[t]);
        if (rho > 0.0) p = mix(p, active, rho * action_gain);
        trace.actions[t] = sample_action(p, base.action_u[t]);
    }
    return trace;
}

CompositionSpec benchmark_composition(double scale, std::uint64_t seed) {
    CompositionSpec spec;
    for (const auto& t : training_templates()) spec.families.push_back({t.name, t.full_count, t.full_length});
    spec.benign_count = 2500;
    spec.scale = scale;
    spec.seed = seed;
    return spec;
}

std::size_t scaled_count(std::size_t count, double scale) noexcept {
    return static_cast<std::size_t>(std::floor(static_cast<double>(count) * scale + 0.5));
}

void validate_composition(const CompositionSpec& spec) {
    if (!(spec.scale > 0.0) || !std::isfinite(spec.scale)) throw InputError("scale must be positive");
    if (!(spec.window_dt > 0.0)) throw InputError("window_dt must be positive");
    if (spec.dim != kDefaultDim) {
        throw InputError("generator supports the " + std::to_string(kDefaultDim) +
                         " documented channels only");
    }
    for (const auto& f : spec.families) {
        if (!is_training_family(f.name)) throw InputError("unknown training family '" + f.name + "'");
        if (scaled_count(f.count, spec.scale) < 1) {
            throw InputError("family " + f.name + " has no traces after scaling");
        }
        if (f.length < 64) throw InputError("family " + f.name + " length below 64");
    }
    if (scaled_count(spec.benign_count, spec.scale) < 1) {
        throw InputError("no benign traces after scaling");
    }
    if (spec.benign_length_min < 64 || spec.benign_length_min > spec.benign_length_max) {
        throw InputError("bad benign length range");
    }
}

std::map<std::string, std::size_t> planned_counts(const CompositionSpec& spec) {
    validate_composition(spec);
    std::map<std::string, std::size_t> counts;
    for (const auto& f : spec.families) counts[f.name] += scaled_count(f.count, spec.scale);
    counts[std::string(kBenignFamily)] += scaled_count(spec.benign_count, spec.scale);
    return counts;
}

std::string make_trace_id(std::string_view family, std::size_t index, Evasion evasion) {
    char num[16];
    std::snprintf(num, sizeof num, "%05zu", index);
    return std::string(family) + "-" + num + "-" + std::string(to_string(evasion));
}

Evasion evasion_of(const StateTrace& trace) {
    const auto pos = trace.id.rfind('-');
    if (pos == std::string::npos) return Evasion::None;
    return parse_evasion(std::string_view(trace.id).substr(pos + 1));
}

namespace {

StateTrace ransomware_from_template(const FamilyTemplate& tmpl, std::size_t index, std::size_t length,
                                    const ProfileRanges& ranges, std::size_t onset_shift,
                                    double window_dt, std::uint64_t family_seed,
                                    const GeneratorConfig& cfg) {
    const std::uint64_t trace_seed = derive_seed(family_seed, tmpl.name, index);
    FamilyProfile profile =
        instantiate_profile(tmpl, length, ranges, cfg, derive_seed(trace_seed, "profile"));
    profile.onset_window += onset_shift;
    return gen_ransomware(profile, length, cfg.dim(), window_dt, trace_seed, cfg,
                          make_trace_id(tmpl.name, index, profile.evasion));
}

} // namespace

Dataset gen_dataset(const CompositionSpec& spec, const GeneratorConfig& cfg) {
    validate_composition(spec);
    check_config(cfg, spec.dim);
    Dataset ds;
    ds.dim = spec.dim;
    ds.seed = spec.seed;
    for (const auto& f : spec.families) {
        const FamilyTemplate& tmpl = *find_template(f.name);
        const std::size_t n = scaled_count(f.count, spec.scale);
        for (std::size_t i = 0; i < n; ++i) {
            ds.traces.push_back(ransomware_from_template(tmpl, i, f.length, training_ranges(),
                                                         spec.onset_shift, spec.window_dt,
                                                         spec.seed, cfg));
        }
    }
    const std::size_t nb = scaled_count(spec.benign_count, spec.scale);
    for (std::size_t i = 0; i < nb; ++i) {
        const std::uint64_t trace_seed = derive_seed(spec.seed, kBenignFamily, i);
        std::uniform_int_distribution<std::size_t> len_dist(spec.benign_length_min,
                                                            spec.benign_length_max);
        std::mt19937_64 len_rng(derive_seed(trace_seed, "length"));
        ds.traces.push_back(gen_benign(len_dist(len_rng), spec.dim, spec.window_dt, trace_seed, cfg,
                                       make_trace_id(kBenignFamily, i, Evasion::None)));
    }
    ds.manifest = count_families(ds.traces);
    return ds;
}

Dataset gen_unseen_families(const std::vector<std::string>& names, const UnseenSpec& spec,
                            std::uint64_t seed, const GeneratorConfig& cfg) {
    check_config(cfg, spec.dim);
    if (spec.count_per_family == 0) throw InputError("unseen count must be positive");
    Dataset ds;
    ds.dim = spec.dim;
    ds.seed = seed;
    for (const auto& name : names) {
        if (is_training_family(name)) {
            throw InputError("unseen family '" + name + "' collides with a training family");
        }
        const auto& ut = unseen_templates();
        const auto it = std::find_if(ut.begin(), ut.end(),
                                     [&](const FamilyTemplate& t) { return t.name == name; });
        if (it == ut.end()) throw InputError("unknown unseen family '" + name + "'");
        for (std::size_t i = 0; i < spec.count_per_family; ++i) {
            ds.traces.push_back(ransomware_from_template(*it, i, spec.length, unseen_ranges(),
                                                         spec.onset_shift, spec.window_dt, seed, cfg));
        }
    }
    ds.manifest = count_families(ds.traces);
    return ds;
}

std::vector<StateTrace> gen_speed_set(double speed, std::size_t count, std::size_t length,
                                      double window_dt, std::uint64_t seed,
                                      const GeneratorConfig& cfg) {
    if (!(speed > 0.0)) throw InputError("sweep speed must be positive");
    std::vector<StateTrace> out;
    out.reserve(2 * count);
    const auto& templates = training_templates();
    for (std::size_t i = 0; i < count; ++i) {
        const FamilyTemplate& tmpl = templates[i % templates.size()];
        const std::uint64_t trace_seed = derive_seed(seed, tmpl.name, i);
        FamilyProfile profile = instantiate_profile(tmpl, length, training_ranges(), cfg,
                                                    derive_seed(trace_seed, "profile"));
        profile.evasion = Evasion::None;
        if (2 * profile.onset_window >= length) {
            profile.onset_window = static_cast<std::size_t>(0.45 * static_cast<double>(length));
        }
        profile.enc_speed = speed;
        out.push_back(gen_ransomware(profile, length, cfg.dim(), window_dt, trace_seed, cfg,
                                     tmpl.name + "-sweep-" + std::to_string(i) + "-none"));
    }
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(gen_benign(length, cfg.dim(), window_dt, derive_seed(seed, kBenignFamily, i), cfg,
                                 "benign-sweep-" + std::to_string(i) + "-none"));
    }
    return out;
}

} // namespace nest
