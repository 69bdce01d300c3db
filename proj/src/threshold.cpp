#include "nest/model.hpp"

#include "nest/error.hpp"

#include <algorithm>
#include <numeric>
#include <cstdio>

namespace nest {

namespace {

void check_scores(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw InputError("scores and labels differ in length");
}

} // namespace

Threshold select_threshold(std::span<const double> scores, std::span<const Label> labels,
                           std::string provenance) {
    check_scores(scores, labels);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (labels[i] == Label::Ransomware ? pos : neg).push_back(scores[i]);
    }
    if (pos.empty() || neg.empty()) {
        throw InputError("threshold selection needs both benign and ransomware scores");
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    std::vector<double> all(scores.begin(), scores.end());
    std::sort(all.begin(), all.end());

    // J(tau) = tp/P - fp/N; compare tp*N - fp*P exactly in integers.
    const auto P = static_cast<long long>(pos.size());
    const auto N = static_cast<long long>(neg.size());
    auto above = [](const std::vector<double>& v, double tau) {
        return static_cast<long long>(v.end() - std::upper_bound(v.begin(), v.end(), tau));
    };
    bool found = false;
    long long best_j = 0;
    double best_tau = 0.0;
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        if (!(all[i] < all[i + 1])) continue;
        const double tau = std::midpoint(all[i], all[i + 1]);
        const long long j = above(pos, tau) * N - above(neg, tau) * P;
        if (!found || j > best_j) {
            found = true;
            best_j = j;
            best_tau = tau;
        }
    }
    if (!found) {
        // Every score is identical; any threshold below it flags everything.
        best_tau = all.front();
    }
    return {best_tau, std::move(provenance)};
}

double balanced_accuracy(std::span<const double> scores, std::span<const Label> labels, double tau) {
    check_scores(scores, labels);
    double tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool flagged = decide(scores[i], tau) == Label::Ransomware;
        if (labels[i] == Label::Ransomware) {
            (flagged ? tp : fn) += 1;
        } else {
            (flagged ? fp : tn) += 1;
        }
    }
    const double tpr = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double tnr = tn + fp > 0 ? tn / (tn + fp) : 0.0;
    return 0.5 * (tpr + tnr);
}

std::string split_provenance(std::string_view tag, std::span<const StateTrace> traces) {
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(id_digest(traces)));
    return std::string(tag) + ":" + hex;
}

} // namespace nest
