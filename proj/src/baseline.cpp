#include "nest/eval.hpp"

#include "nest/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace nest {

BaselineGrid default_baseline_grid() {
    BaselineGrid g;
    for (int k = -20; k <= 20; ++k) g.thetas.push_back(static_cast<double>(k) * 0.05);
    g.windows = {4, 8, 16, 32, 48, 64, 96, 128, 192, 256};
    return g;
}

double max_run_mean(const StateTrace& trace, std::size_t channel, std::size_t w) {
    const std::size_t n = trace.length();
    if (n == 0) throw InputError("empty trace");
    if (channel >= trace.dim) throw InputError("channel out of range");
    if (w == 0) throw InputError("run length must be positive");
    w = std::min(w, n);
    double sum = 0.0;
    for (std::size_t t = 0; t < w; ++t) sum += trace.at(t, channel);
    double best = sum;
    for (std::size_t t = w; t < n; ++t) {
        sum += trace.at(t, channel) - trace.at(t - w, channel);
        best = std::max(best, sum);
    }
    return best / static_cast<double>(w);
}

std::vector<double> post_peak_profile(const StateTrace& trace, std::size_t entropy_channel,
                                      std::span<const double> reference) {
    const std::size_t n = trace.length(), d = trace.dim;
    if (n == 0) throw InputError("empty trace");
    if (reference.size() != d) throw InputError("reference dimension mismatch");
    std::size_t peak = 0;
    for (std::size_t t = 1; t < n; ++t) {
        if (trace.at(t, entropy_channel) > trace.at(peak, entropy_channel)) peak = t;
    }
    std::vector<double> profile(d, 0.0);
    for (std::size_t t = peak; t < n; ++t) {
        for (std::size_t j = 0; j < d; ++j) profile[j] += trace.at(t, j);
    }
    const auto count = static_cast<double>(n - peak);
    for (std::size_t j = 0; j < d; ++j) profile[j] = profile[j] / count - reference[j];
    return profile;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("cosine of vectors of different length");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double signature_match(const StateTrace& trace, const BaselineParams& params) {
    if (params.signatures.empty()) return -1.0;
    const auto profile = post_peak_profile(trace, params.entropy_channel, params.benign_mean);
    double best = -1.0;
    for (const auto& sig : params.signatures) best = std::max(best, cosine(profile, sig.profile));
    return best;
}

BaselineParams fit_baseline(std::span<const StateTrace> train, const BaselineGrid& grid) {
    if (grid.thetas.empty() || grid.windows.empty()) throw InputError("empty baseline grid");
    std::size_t pos = 0, neg = 0;
    for (const auto& t : train) ++(t.label == Label::Ransomware ? pos : neg);
    if (pos == 0 || neg == 0) throw InputError("baseline fit needs benign and ransomware traces");
    const std::size_t d = train.front().dim;

    BaselineParams params;
    params.benign_mean.assign(d, 0.0);
    double states = 0.0;
    for (const auto& t : train) {
        if (t.dim != d) throw InputError("traces disagree on dimension");
        if (t.label != Label::Benign) continue;
        for (std::size_t s = 0; s < t.length(); ++s) {
            for (std::size_t j = 0; j < d; ++j) params.benign_mean[j] += t.at(s, j);
        }
        states += static_cast<double>(t.length());
    }
    for (double& m : params.benign_mean) m /= states;

    // Signatures in order of first appearance.
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, double>> sums;
    for (const auto& t : train) {
        if (t.label != Label::Ransomware) continue;
        auto [it, inserted] = sums.try_emplace(t.family, std::vector<double>(d, 0.0), 0.0);
        if (inserted) order.push_back(t.family);
        const auto profile = post_peak_profile(t, params.entropy_channel, params.benign_mean);
        for (std::size_t j = 0; j < d; ++j) it->second.first[j] += profile[j];
        it->second.second += 1.0;
    }
    for (const auto& fam : order) {
        auto& [sum, count] = sums[fam];
        for (double& x : sum) x /= count;
        params.signatures.push_back({fam, sum});
    }

    std::vector<bool> matched(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        matched[i] = signature_match(train[i], params) >= params.cosine_threshold;
    }

    double best = -1.0;
    std::vector<double> runs(train.size());
    for (std::size_t w : grid.windows) {
        for (std::size_t i = 0; i < train.size(); ++i) {
            runs[i] = max_run_mean(train[i], params.entropy_channel, w);
        }
        for (double theta : grid.thetas) {
            std::size_t tp = 0, tn = 0;
            for (std::size_t i = 0; i < train.size(); ++i) {
                const bool flagged = matched[i] || runs[i] > theta;
                if (train[i].label == Label::Ransomware) {
                    tp += flagged ? 1 : 0;
                } else {
                    tn += flagged ? 0 : 1;
                }
            }
            const double bal = 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                                      static_cast<double>(tn) / static_cast<double>(neg));
            if (bal > best) {
                best = bal;
                params.theta = theta;
                params.window = w;
            }
        }
    }
    return params;
}

Classification baseline_detect(const StateTrace& trace, const BaselineParams& params) {
    if (!params.fitted()) throw InputError("baseline is not fitted");
    if (trace.dim != params.benign_mean.size()) throw InputError("trace dimension does not match baseline");
    const double run = max_run_mean(trace, params.entropy_channel, params.window);
    const double match = signature_match(trace, params);
    const bool flagged = run > params.theta || match >= params.cosine_threshold;
    return {flagged ? Label::Ransomware : Label::Benign,
            std::max(run - params.theta, match - params.cosine_threshold)};
}

} // namespace nest
