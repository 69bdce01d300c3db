#include "nest/error.hpp"
#include "nest/generator.hpp"
#include "nest/trace_io.hpp"

#include <doctest.h>

#include <cmath>

using namespace nest;

namespace {

GeneratorConfig quiet_bursts() {
    GeneratorConfig cfg;
    cfg.bursts_per_1000 = 0.0;
    return cfg;
}

FamilyProfile plain_profile(std::size_t onset, double speed = 5.0) {
    FamilyProfile p;
    p.name = "lockbit3";
    p.onset_window = onset;
    p.channel_amplitudes = {0.28, 0.24, 0.30, -0.15, 0.24, 0.21, 0.08, 0.05};
    p.enc_speed = speed;
    p.payload_mb = 60.0;
    return p;
}

// Standard deviation of the mean of n samples of a stationary AR(1) process
// with marginal deviation sigma and coefficient phi.
double ar1_mean_sd(double sigma, double phi, std::size_t n) {
    const double nn = static_cast<double>(n);
    const double factor = (1.0 + phi) / (1.0 - phi) -
                          2.0 * phi * (1.0 - std::pow(phi, nn)) / (nn * (1.0 - phi) * (1.0 - phi));
    return sigma * std::sqrt(factor / nn);
}

std::vector<double> channel_means(const StateTrace& t, std::size_t from, std::size_t to) {
    std::vector<double> m(t.dim, 0.0);
    for (std::size_t s = from; s < to; ++s) {
        for (std::size_t j = 0; j < t.dim; ++j) m[j] += t.at(s, j);
    }
    for (double& x : m) x /= static_cast<double>(to - from);
    return m;
}

} // namespace

TEST_CASE("gen_benign is deterministic in its seed") {
    const auto a = gen_benign(300, 8, 0.025, 42);
    const auto b = gen_benign(300, 8, 0.025, 42);
    const auto c = gen_benign(300, 8, 0.025, 43);
    CHECK(a.features == b.features);
    CHECK(a.actions == b.actions);
    CHECK(a.features != c.features);
    CHECK(a.label == Label::Benign);
    CHECK(validate_trace(a).ok());
}

TEST_CASE("gen_benign with zero noise is the constant baseline") {
    GeneratorConfig cfg;
    cfg.noise_scale = 0.0;
    const auto t = gen_benign(2000, 8, 0.025, 5, cfg);
    for (std::size_t s = 0; s < t.length(); ++s) {
        for (std::size_t j = 0; j < 8; ++j) REQUIRE(t.at(s, j) == cfg.baseline[j]);
    }
}

TEST_CASE("gen_benign channel means agree with the AR(1) closed form") {
    const GeneratorConfig cfg = quiet_bursts();
    const auto t = gen_benign(256, 8, 0.025, 1, cfg);
    const auto means = channel_means(t, 0, t.length());
    for (std::size_t j = 0; j < 8; ++j) {
        const double sd = ar1_mean_sd(cfg.noise_sd[j], cfg.ar_coeff, 256);
        CHECK(std::abs(means[j] - cfg.baseline[j]) < 3.0 * sd);
    }

    // Across many seeds the spread of the mean matches the formula too.
    constexpr int kSeeds = 400;
    std::vector<double> sum(8, 0.0), sq(8, 0.0);
    for (int s = 0; s < kSeeds; ++s) {
        const auto m = channel_means(gen_benign(256, 8, 0.025, 1000 + s, cfg), 0, 256);
        for (std::size_t j = 0; j < 8; ++j) {
            sum[j] += m[j];
            sq[j] += m[j] * m[j];
        }
    }
    for (std::size_t j = 0; j < 8; ++j) {
        const double mean = sum[j] / kSeeds;
        const double sd = std::sqrt(sq[j] / kSeeds - mean * mean);
        const double expected = ar1_mean_sd(cfg.noise_sd[j], cfg.ar_coeff, 256);
        CHECK(sd == doctest::Approx(expected).epsilon(0.15));
    }
}

TEST_CASE("gen_benign rejects traces shorter than two windows") {
    CHECK_THROWS_AS(gen_benign(1, 8, 0.025, 1), InputError);
    CHECK_THROWS_AS(gen_benign(10, 8, 0.0, 1), InputError);
    CHECK_THROWS_AS(gen_benign(10, 4, 0.025, 1), InputError);
}

TEST_CASE("ransomware traces are the benign process before onset") {
    const std::size_t n = 512;
    const auto benign = gen_benign(n, 8, 0.025, 77);
    const auto rw = gen_ransomware(plain_profile(n - 2), n, 8, 0.025, 77);
    for (std::size_t s = 0; s < n - 2; ++s) {
        for (std::size_t j = 0; j < 8; ++j) REQUIRE(rw.at(s, j) == benign.at(s, j));
    }
    for (std::size_t s = 0; s + 1 < n - 2; ++s) REQUIRE(rw.actions[s] == benign.actions[s]);
    CHECK(rw.label == Label::Ransomware);
    CHECK(rw.family == "lockbit3");
}

TEST_CASE("pre-onset segments pass the benign mean check") {
    // A 3-sigma check fails 0.27% of the time on benign data; allow up to 2%.
    const GeneratorConfig cfg = quiet_bursts();
    std::size_t outside = 0, checks = 0;
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const auto rw = gen_ransomware(plain_profile(600), 1000, 8, 0.025, seed, cfg);
        const auto m = channel_means(rw, 0, 600);
        for (std::size_t j = 0; j < 8; ++j) {
            ++checks;
            if (std::abs(m[j] - cfg.baseline[j]) >= 3.0 * ar1_mean_sd(cfg.noise_sd[j], cfg.ar_coeff, 600)) {
                ++outside;
            }
        }
    }
    CHECK(static_cast<double>(outside) <= 0.02 * static_cast<double>(checks));
}

TEST_CASE("doubling the encryption speed doubles the post-onset slope") {
    GeneratorConfig cfg;
    cfg.noise_scale = 0.0;
    const std::size_t onset = 100;
    const auto slow = gen_ransomware(plain_profile(onset, 5.0), 400, 8, 0.025, 3, cfg);
    const auto fast = gen_ransomware(plain_profile(onset, 10.0), 400, 8, 0.025, 3, cfg);
    const std::size_t w = idx(Channel::WriteBurst);
    const double slow_slope = slow.at(onset + 1, w) - slow.at(onset, w);
    const double fast_slope = fast.at(onset + 1, w) - fast.at(onset, w);
    CHECK(slow_slope > 0.0);
    CHECK(fast_slope == doctest::Approx(2.0 * slow_slope).epsilon(1e-12));
}

TEST_CASE("faster encryption never lowers the write-burst slope") {
    GeneratorConfig cfg;
    cfg.noise_scale = 0.0;
    double previous = 0.0;
    for (double speed : {0.5, 1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0, 500.0}) {
        const auto t = gen_ransomware(plain_profile(50, speed), 400, 8, 0.025, 9, cfg);
        const std::size_t w = idx(Channel::WriteBurst);
        const double slope = t.at(50, w) - t.at(49, w); // first post-onset step
        CHECK(slope >= previous - 1e-15);
        previous = slope;
    }
}

TEST_CASE("overlay intensity ramps, saturates and decays") {
    const GeneratorConfig cfg;
    auto p = plain_profile(10, 10.0);
    CHECK(overlay_intensity(p, 0.025, cfg, 9) == 0.0);
    CHECK(overlay_intensity(p, 0.025, cfg, 10) == doctest::Approx(0.2));
    CHECK(overlay_intensity(p, 0.025, cfg, 14) == doctest::Approx(1.0));
    // 60 MB at 0.25 MB per window lasts 240 windows, then decays.
    CHECK(overlay_intensity(p, 0.025, cfg, 10 + 239) == 1.0);
    CHECK(overlay_intensity(p, 0.025, cfg, 10 + 240) == doctest::Approx(std::exp(-1.0 / 8.0)));
}

TEST_CASE("entropy-obfuscated traces stay under the entropy clamp") {
    const GeneratorConfig cfg;
    const std::size_t e = idx(Channel::ByteEntropy);
    const double cap = cfg.baseline[e] + cfg.entropy_clamp_sigma * cfg.noise_sd[e];
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto p = plain_profile(200, 10.0);
        p.evasion = Evasion::EntropyObfuscated;
        const auto t = gen_ransomware(p, 1500, 8, 0.025, seed, cfg);
        double worst = -INFINITY;
        for (std::size_t s = 0; s < t.length(); ++s) worst = std::max(worst, t.at(s, e));
        CHECK(worst <= cap);
        // Crypto-call activity still rises.
        const std::size_t c = idx(Channel::CryptoCalls);
        CHECK(t.at(300, c) > cfg.baseline[c]);
    }
}

TEST_CASE("memory-resident traces leave the file channels benign") {
    const GeneratorConfig cfg;
    auto p = plain_profile(100, 10.0);
    p.evasion = Evasion::MemoryResident;
    const auto t = gen_ransomware(p, 600, 8, 0.025, 21, cfg);
    const auto b = gen_benign(600, 8, 0.025, 21, cfg);
    for (std::size_t s = 0; s < 600; ++s) {
        for (Channel ch : {Channel::ByteEntropy, Channel::Uniformity, Channel::WriteBurst,
                           Channel::ReadWriteRatio, Channel::FileTouch}) {
            REQUIRE(t.at(s, idx(ch)) == b.at(s, idx(ch)));
        }
    }
    CHECK(t.at(200, idx(Channel::MemoryEntropy)) > b.at(200, idx(Channel::MemoryEntropy)));
}

TEST_CASE("post-onset actions shift toward crypto and file io") {
    auto p = plain_profile(1000, 10.0);
    std::size_t before = 0, after = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto t = gen_ransomware(p, 2000, 8, 0.025, seed);
        for (std::size_t s = 0; s < 1999; ++s) {
            const bool crypto = t.actions[s] == static_cast<int>(ActionCode::Crypto);
            if (crypto && s < 1000) ++before;
            if (crypto && s >= 1000 && s < 1240) ++after;
        }
    }
    // 240 windows after onset carry far more crypto actions than 1000 before.
    CHECK(after > before);
}

TEST_CASE("invalid profiles are rejected") {
    auto p = plain_profile(10);
    p.enc_speed = 0.0;
    CHECK_THROWS_AS(gen_ransomware(p, 100, 8, 0.025, 1), InputError);
    p = plain_profile(100);
    CHECK_THROWS_AS(gen_ransomware(p, 100, 8, 0.025, 1), InputError);
    p = plain_profile(10);
    p.evasion = Evasion::Delayed;
    CHECK_THROWS_AS(gen_ransomware(p, 100, 8, 0.025, 1), InputError);
    p.onset_window = 50;
    CHECK_NOTHROW(gen_ransomware(p, 100, 8, 0.025, 1));
}

TEST_CASE("scaled counts round half up") {
    CHECK(scaled_count(750, 0.1) == 75);
    CHECK(scaled_count(5, 0.5) == 3);
    CHECK(scaled_count(450, 0.01) == 5);
    CHECK(scaled_count(620, 0.0025) == 2);
}

TEST_CASE("full-scale composition reproduces the family counts") {
    const auto counts = planned_counts(benchmark_composition(1.0, 0));
    const std::map<std::string, std::size_t> expected = {
        {"lockbit3", 750}, {"blackcat", 620}, {"hive", 580}, {"conti", 500}, {"babuk", 450}, {"benign", 2500}};
    CHECK(counts == expected);

    const std::map<std::string, std::size_t> lengths = {
        {"lockbit3", 2048}, {"blackcat", 1984}, {"hive", 2112}, {"conti", 1920}, {"babuk", 1856}};
    for (const auto& f : benchmark_composition(1.0, 0).families) CHECK(f.length == lengths.at(f.name));

    for (const auto& t : training_templates()) {
        const bool conti_or_babuk = t.name == "conti" || t.name == "babuk";
        CHECK(t.denoise == !conti_or_babuk);
        CHECK(t.range_lo == (conti_or_babuk ? 0.0 : -1.0));
        CHECK(t.range_hi == 1.0);
    }
}

TEST_CASE("gen_dataset at a tenth of full scale") {
    const auto ds = gen_dataset(benchmark_composition(0.1, 7));
    CHECK(ds.manifest.at("lockbit3") == 75);
    CHECK(ds.manifest.at("benign") == 250);
    CHECK(ds.manifest == count_families(ds.traces));
    CHECK(validate_dataset(ds).ok());
    for (const auto& t : ds.traces) {
        if (t.family == "benign") {
            CHECK(t.length() >= 1856);
            CHECK(t.length() <= 2112);
        } else {
            CHECK(t.length() == find_template(t.family)->full_length);
        }
    }
}

TEST_CASE("gen_dataset is byte-identical across runs") {
    const auto spec = benchmark_composition(0.02, 11);
    const auto a = gen_dataset(spec);
    const auto b = gen_dataset(spec);
    REQUIRE(a.traces.size() == b.traces.size());
    for (std::size_t i = 0; i < a.traces.size(); ++i) {
        REQUIRE(trace_to_json_line(a.traces[i]) == trace_to_json_line(b.traces[i]));
    }
    auto other = spec;
    other.seed = 12;
    CHECK(trace_to_json_line(gen_dataset(other).traces[0]) != trace_to_json_line(a.traces[0]));
}

TEST_CASE("invalid compositions are rejected before generation") {
    auto spec = benchmark_composition(0.0005, 1);
    CHECK_THROWS_AS(planned_counts(spec), InputError);
    spec = benchmark_composition(-1.0, 1);
    CHECK_THROWS_AS(gen_dataset(spec), InputError);
    spec = benchmark_composition(0.1, 1);
    spec.families[0].length = 10;
    CHECK_THROWS_AS(gen_dataset(spec), InputError);
    spec = benchmark_composition(0.1, 1);
    spec.dim = 4;
    CHECK_THROWS_AS(gen_dataset(spec), InputError);
}

TEST_CASE("trace ids carry the evasion mode") {
    for (Evasion e : kAllEvasions) {
        StateTrace t;
        t.id = make_trace_id("hive", 12, e);
        CHECK(evasion_of(t) == e);
    }
    CHECK(make_trace_id("hive", 12, Evasion::Delayed) == "hive-00012-delayed");
}

TEST_CASE("training families produce evasive traces") {
    const auto ds = gen_dataset(benchmark_composition(0.05, 3));
    std::size_t evasive = 0;
    for (const auto& t : ds.traces) {
        if (t.label == Label::Benign) continue;
        if (evasion_of(t) != Evasion::None) ++evasive;
    }
    CHECK(evasive > 0);
}

TEST_CASE("unseen families draw amplitudes from the held-out range") {
    const GeneratorConfig cfg;
    const auto r = unseen_ranges();
    const auto tr = training_ranges();
    CHECK(r.amp_lo > tr.amp_hi);
    CHECK(r.onset_hi < tr.onset_lo);
    for (const auto& tmpl : unseen_templates()) {
        for (std::uint64_t s = 0; s < 50; ++s) {
            const auto p = instantiate_profile(tmpl, 2048, r, cfg, s);
            for (std::size_t j = 0; j < 8; ++j) {
                if (tmpl.amplitude_sigma[j] == 0.0) continue;
                const double mult = p.channel_amplitudes[j] / (tmpl.amplitude_sigma[j] * cfg.noise_sd[j]);
                CHECK(mult >= r.amp_lo - 1e-12);
                CHECK(mult <= r.amp_hi + 1e-12);
            }
        }
    }
}

TEST_CASE("gen_unseen_families tags and validation") {
    UnseenSpec spec;
    spec.count_per_family = 4;
    spec.length = 512;
    const auto ds = gen_unseen_families({"royal", "quantum", "play"}, spec, 5);
    CHECK(ds.traces.size() == 12);
    for (const auto& t : ds.traces) {
        CHECK((t.family == "royal" || t.family == "quantum" || t.family == "play"));
        CHECK(t.label == Label::Ransomware);
    }
    CHECK_THROWS_AS(gen_unseen_families({"lockbit3"}, spec, 5), InputError);
    CHECK_THROWS_AS(gen_unseen_families({"wannacry"}, spec, 5), InputError);
}

TEST_CASE("unseen families are shifted away from every training family") {
    // Per-channel mean over the active states of each family, compared in
    // units of the channel's benign noise sd.
    const GeneratorConfig cfg;
    const double active = cfg.baseline[0] + 3.0 * cfg.noise_sd[0];
    auto active_mean = [&](const std::vector<StateTrace>& traces, const std::string& family) {
        std::vector<double> m(8, 0.0);
        double n = 0.0;
        for (const auto& t : traces) {
            if (t.family != family) continue;
            for (std::size_t s = 0; s < t.length(); ++s) {
                if (t.at(s, 0) < active) continue;
                for (std::size_t j = 0; j < 8; ++j) m[j] += t.at(s, j);
                n += 1.0;
            }
        }
        REQUIRE(n > 0.0);
        for (double& x : m) x /= n;
        return m;
    };
    const auto seen = gen_dataset(benchmark_composition(0.04, 2)).traces;
    UnseenSpec spec;
    spec.count_per_family = 30;
    const auto unseen = gen_unseen_families({"royal", "quantum", "play"}, spec, 9).traces;
    for (const char* u : {"royal", "quantum", "play"}) {
        const auto mu = active_mean(unseen, u);
        for (const auto& tmpl : training_templates()) {
            const auto mt = active_mean(seen, tmpl.name);
            double shift = 0.0;
            for (std::size_t j = 0; j < 8; ++j) shift = std::max(shift, std::abs(mu[j] - mt[j]) / cfg.noise_sd[j]);
            CHECK_MESSAGE(shift > kUnseenShiftFloor, u, " vs ", tmpl.name);
        }
    }
}

TEST_CASE("speed sets hold the requested speed and class balance") {
    const auto set = gen_speed_set(25.0, 10, 512, 0.025, 4);
    CHECK(set.size() == 20);
    std::size_t pos = 0;
    for (const auto& t : set) {
        CHECK(validate_trace(t).ok());
        CHECK(evasion_of(t) == Evasion::None);
        pos += t.label == Label::Ransomware ? 1 : 0;
    }
    CHECK(pos == 10);
    CHECK_THROWS_AS(gen_speed_set(0.0, 10, 512, 0.025, 4), InputError);
}
