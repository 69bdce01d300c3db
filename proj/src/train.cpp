#include "nest/model.hpp"

#include "nest/error.hpp"
#include "nest/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace nest {

StateTrace crop(const StateTrace& trace, std::size_t max_window, std::uint64_t seed) {
    const std::size_t n = trace.length();
    if (max_window == 0 || n <= max_window) return trace;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - max_window);
    const std::size_t start = pick(rng);
    StateTrace out;
    out.id = trace.id;
    out.dim = trace.dim;
    out.window_dt = trace.window_dt;
    out.label = trace.label;
    out.family = trace.family;
    const auto first = trace.features.begin() + static_cast<std::ptrdiff_t>(start * trace.dim);
    out.features.assign(first, first + static_cast<std::ptrdiff_t>(max_window * trace.dim));
    const auto a = trace.actions.begin() + static_cast<std::ptrdiff_t>(start);
    out.actions.assign(a, a + static_cast<std::ptrdiff_t>(max_window - 1));
    return out;
}

namespace {

bool has_both_classes(std::span<const StateTrace> traces) {
    bool pos = false, neg = false;
    for (const auto& t : traces) (t.label == Label::Ransomware ? pos : neg) = true;
    return pos && neg;
}

struct ValResult {
    double tau = 0.5;
    double balanced = 0.0;
};

ValResult validate_epoch(std::span<const StateTrace> val, const ModelParams& params) {
    std::vector<double> scores;
    std::vector<Label> labels;
    scores.reserve(val.size());
    labels.reserve(val.size());
    for (const auto& t : val) {
        scores.push_back(forward(t, params).score);
        labels.push_back(t.label);
    }
    const Threshold th = select_threshold(scores, labels, "val");
    return {th.tau, balanced_accuracy(scores, labels, th.tau)};
}

} // namespace

TrainResult train(std::span<const StateTrace> train_set, std::span<const StateTrace> val_set,
                  const ModelShape& shape, const TrainConfig& cfg) {
    return train_from(train_set, val_set, init_params(shape, derive_seed(cfg.seed, "init")), cfg);
}

TrainResult train_from(std::span<const StateTrace> train_set, std::span<const StateTrace> val_set,
                       ModelParams initial, const TrainConfig& cfg) {
    validate_train_config(cfg);
    validate_params(initial);
    if (train_set.empty()) throw InputError("training split is empty");
    if (!has_both_classes(val_set)) {
        throw InputError("validation split needs both benign and ransomware traces");
    }

    ModelParams params = std::move(initial);
    const std::size_t P = params.size();
    std::vector<double> m(P, 0.0), v(P, 0.0);
    std::uint64_t step = 0;

    TrainResult result;
    result.params = params;
    double best = -1.0;

    std::vector<std::size_t> order(train_set.size());
    std::vector<StateTrace> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffler(derive_seed(cfg.seed, "shuffle", epoch));
        std::shuffle(order.begin(), order.end(), shuffler);
        const std::uint64_t crop_seed = derive_seed(cfg.seed, "crop", epoch);
        const std::uint64_t drop_seed = derive_seed(cfg.seed, "dropout", epoch);

        EpochLog log;
        log.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
            batch.clear();
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t idx = order[k];
                batch.push_back(crop(train_set[idx], cfg.max_window, derive_seed(crop_seed, "trace", idx)));
            }
            const DropoutSpec dropout{cfg.dropout_p, derive_seed(drop_seed, "batch", batches)};
            LossGrad lg = grad_with_dropout(batch, params, cfg, dropout);
            if (!std::isfinite(lg.loss.total)) {
                throw DivergenceError("non-finite loss in epoch " + std::to_string(epoch), epoch);
            }

            ++step;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < P; ++k) {
                const double g = lg.grad[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                params.values[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
            }
            for (double x : params.values) {
                if (!std::isfinite(x)) {
                    throw DivergenceError("non-finite parameters in epoch " + std::to_string(epoch), epoch);
                }
            }

            log.loss.bce += lg.loss.bce;
            log.loss.prediction += lg.loss.prediction;
            log.loss.regularizer += lg.loss.regularizer;
            log.loss.weight_decay += lg.loss.weight_decay;
            log.loss.total += lg.loss.total;
            ++batches;
        }
        const double nb = static_cast<double>(batches);
        log.loss.bce /= nb;
        log.loss.prediction /= nb;
        log.loss.regularizer /= nb;
        log.loss.weight_decay /= nb;
        log.loss.total /= nb;

        const ValResult val = validate_epoch(val_set, params);
        log.val_balanced_accuracy = val.balanced;
        log.val_tau = val.tau;
        result.log.push_back(log);
        if (val.balanced > best) {
            best = val.balanced;
            result.params = params;
            result.best_epoch = epoch;
            result.threshold = {val.tau, split_provenance("val", val_set)};
        }
    }
    return result;
}

} // namespace nest
