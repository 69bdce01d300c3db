#include "nest/model.hpp"

#include "nest/error.hpp"
#include "nest/seeds.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace nest {

ParamLayout::ParamLayout(const ModelShape& shape) : shape_(shape) {
    if (shape.dim == 0 || shape.actions == 0 || shape.width == 0) {
        throw InputError("model dimensions must be positive");
    }
    const std::size_t m = shape.stream(), w = shape.width, d = shape.dim;
    std::size_t off = 0;
    auto slot = [&](std::string name, std::size_t rows, std::size_t cols) {
        tensors_.push_back({std::move(name), off, rows, cols});
        const std::size_t at = off;
        off += rows * cols;
        return at;
    };
    for (std::size_t b = 0; b < shape.blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        Block blk{};
        blk.w1 = slot(p + "w1", w, m);
        blk.b1 = slot(p + "b1", w, 1);
        blk.w2 = slot(p + "w2", m, w);
        blk.b2 = slot(p + "b2", m, 1);
        blocks_.push_back(blk);
    }
    flow_w1_ = slot("flow.w1", w, d);
    flow_b1_ = slot("flow.b1", w, 1);
    flow_w2_ = slot("flow.w2", d, w);
    flow_b2_ = slot("flow.b2", d, 1);
    head_w_ = slot("head.w", 2 * d, 1);
    head_b_ = slot("head.b", 1, 1);
    total_ = off;
}

ModelParams zero_params(const ModelShape& shape) {
    return {shape, std::vector<double>(ParamLayout(shape).total(), 0.0)};
}

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
    const ParamLayout layout(shape);
    ModelParams p = zero_params(shape);
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t rows, std::size_t cols, double gain) {
        const double a = gain * std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (std::size_t i = 0; i < rows * cols; ++i) p.values[off + i] = u(rng);
    };
    const std::size_t m = shape.stream(), w = shape.width, d = shape.dim;
    for (std::size_t b = 0; b < shape.blocks; ++b) {
        fill(layout.block(b).w1, w, m, 1.0);
        fill(layout.block(b).w2, m, w, 0.1);
    }
    fill(layout.flow_w1(), w, d, 1.0);
    fill(layout.flow_w2(), d, w, 0.1);
    fill(layout.head_w(), 2 * d, 1, 0.1);
    return p;
}

void validate_params(const ModelParams& params) {
    if (params.values.size() != ParamLayout(params.shape).total()) {
        throw InputError("parameter vector does not match the model shape");
    }
    for (double x : params.values) {
        if (!std::isfinite(x)) throw InputError("non-finite model parameter");
    }
}

double squash(double logit) noexcept {
    constexpr double kLo = 1e-15;
    constexpr double kHi = 1.0 - 1e-15;
    double s;
    if (logit >= 0.0) {
        s = 1.0 / (1.0 + std::exp(-logit));
    } else {
        const double e = std::exp(logit);
        s = e / (1.0 + e);
    }
    return std::clamp(s, kLo, kHi);
}

namespace {

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sign(double x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_trace(const StateTrace& trace, const ModelShape& shape) {
    if (trace.dim != shape.dim) {
        throw InputError("trace " + trace.id + " has dimension " + std::to_string(trace.dim) +
                         ", model expects " + std::to_string(shape.dim));
    }
    if (trace.length() < 2 || trace.actions.size() + 1 != trace.length()) {
        throw InputError("trace " + trace.id + " is not a valid trace");
    }
    for (int a : trace.actions) {
        if (a < 0 || static_cast<std::size_t>(a) >= shape.actions) {
            throw InputError("trace " + trace.id + " has an action outside the model alphabet");
        }
    }
}

// Per-trace forward/backward through the dynamics net, the head and the
// flow regularizer. Buffers are reused across traces.
class TracePass {
public:
    TracePass(const ModelParams& params, const ParamLayout& layout)
        : p_(params.values.data()), layout_(layout), shape_(layout.shape()) {}

    struct Weights {
        double bce = 0.0;  // d total / d bce_i
        double pred = 0.0; // d total / d mse_i   (0 for ransomware traces)
        double reg = 0.0;  // d total / d flowvar_i
    };

    struct Terms {
        double logit = 0.0;
        double bce = 0.0;
        double mse = 0.0;     // mean_t |r_t|^2
        double flowvar = 0.0; // mean_t |H(s_{t+1}) - H(s_t)|^2
    };

    // Runs the dynamics net over every transition; fills residuals_.
    void run_dynamics(const StateTrace& trace, const DropoutSpec* dropout, std::uint64_t mask_seed) {
        const std::size_t d = shape_.dim, m = shape_.stream(), w = shape_.width, R = shape_.blocks;
        steps_ = trace.length() - 1;
        h_in_.resize(steps_ * R * m);
        u_.resize(steps_ * R * w);
        keep_.resize(dropout ? steps_ * R * w : 0);
        residuals_.resize(steps_ * d);
        predictions_.resize(steps_ * d);
        const double keep_scale = dropout ? 1.0 / (1.0 - dropout->p) : 1.0;
        SplitMixStream masks(mask_seed);

        std::vector<double> h(m), z(w);
        for (std::size_t t = 0; t < steps_; ++t) {
            const auto s = trace.state(t);
            std::copy(s.begin(), s.end(), h.begin());
            std::fill(h.begin() + static_cast<std::ptrdiff_t>(d), h.end(), 0.0);
            h[d + static_cast<std::size_t>(trace.actions[t])] = 1.0;
            for (std::size_t b = 0; b < R; ++b) {
                const auto& blk = layout_.block(b);
                double* hin = &h_in_[(t * R + b) * m];
                std::copy(h.begin(), h.end(), hin);
                double* u = &u_[(t * R + b) * w];
                const double* W1 = p_ + blk.w1;
                for (std::size_t k = 0; k < w; ++k) {
                    double acc = p_[blk.b1 + k];
                    const double* row = W1 + k * m;
                    for (std::size_t i = 0; i < m; ++i) acc += row[i] * hin[i];
                    u[k] = std::tanh(acc);
                    z[k] = u[k];
                }
                if (dropout) {
                    double* keep = &keep_[(t * R + b) * w];
                    for (std::size_t k = 0; k < w; ++k) {
                        keep[k] = masks.uniform() >= dropout->p ? keep_scale : 0.0;
                        z[k] *= keep[k];
                    }
                }
                const double* W2 = p_ + blk.w2;
                for (std::size_t i = 0; i < m; ++i) {
                    double acc = p_[blk.b2 + i];
                    const double* row = W2 + i * w;
                    for (std::size_t k = 0; k < w; ++k) acc += row[k] * z[k];
                    h[i] += acc;
                }
            }
            const auto next = trace.state(t + 1);
            for (std::size_t j = 0; j < d; ++j) {
                predictions_[t * d + j] = h[j];
                residuals_[t * d + j] = next[j] - h[j];
            }
        }
    }

    // Pools residual magnitudes and applies the head.
    double pool_and_score() {
        const std::size_t d = shape_.dim;
        pooled_.assign(2 * d, 0.0);
        argmax_.assign(d, 0);
        for (std::size_t j = 0; j < d; ++j) {
            double sum = 0.0, best = -1.0;
            for (std::size_t t = 0; t < steps_; ++t) {
                const double a = std::abs(residuals_[t * d + j]);
                sum += a;
                if (a > best) {
                    best = a;
                    argmax_[j] = t;
                }
            }
            pooled_[j] = sum / static_cast<double>(steps_);
            pooled_[d + j] = best;
        }
        double logit = p_[layout_.head_b()];
        for (std::size_t k = 0; k < 2 * d; ++k) logit += p_[layout_.head_w() + k] * pooled_[k];
        return logit;
    }

    double residual_mse() const {
        const std::size_t d = shape_.dim;
        double acc = 0.0;
        for (std::size_t t = 0; t < steps_; ++t) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) sq += residuals_[t * d + j] * residuals_[t * d + j];
            acc += sq;
        }
        return acc / static_cast<double>(steps_);
    }

    // H(s_t) for every state; returns mean_t |H_{t+1} - H_t|^2.
    double run_flow(const StateTrace& trace) {
        const std::size_t d = shape_.dim, w = shape_.width, n = trace.length();
        flow_q_.resize(n * w);
        flow_h_.resize(n * d);
        const double* V1 = p_ + layout_.flow_w1();
        const double* V2 = p_ + layout_.flow_w2();
        for (std::size_t t = 0; t < n; ++t) {
            const auto s = trace.state(t);
            double* q = &flow_q_[t * w];
            for (std::size_t k = 0; k < w; ++k) {
                double acc = p_[layout_.flow_b1() + k];
                for (std::size_t j = 0; j < d; ++j) acc += V1[k * d + j] * s[j];
                q[k] = std::tanh(acc);
            }
            for (std::size_t j = 0; j < d; ++j) {
                double acc = p_[layout_.flow_b2() + j];
                for (std::size_t k = 0; k < w; ++k) acc += V2[j * w + k] * q[k];
                flow_h_[t * d + j] = acc;
            }
        }
        double acc = 0.0;
        for (std::size_t t = 0; t + 1 < n; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                const double e = flow_h_[(t + 1) * d + j] - flow_h_[t * d + j];
                acc += e * e;
            }
        }
        return acc / static_cast<double>(n - 1);
    }

    Terms evaluate(const StateTrace& trace, const DropoutSpec* dropout, std::uint64_t mask_seed,
                   bool with_flow) {
        run_dynamics(trace, dropout, mask_seed);
        Terms terms;
        terms.logit = pool_and_score();
        const double y = trace.label == Label::Ransomware ? 1.0 : 0.0;
        terms.bce = softplus(terms.logit) - y * terms.logit;
        terms.mse = residual_mse();
        if (with_flow) terms.flowvar = run_flow(trace);
        return terms;
    }

    // Accumulates d total / d theta for this trace into g. evaluate() must
    // have run on the same trace with the same dropout.
    void backward(const StateTrace& trace, const Terms& terms, const Weights& wt, bool has_dropout,
                  double* g) {
        const std::size_t d = shape_.dim, m = shape_.stream(), w = shape_.width, R = shape_.blocks;
        const double y = trace.label == Label::Ransomware ? 1.0 : 0.0;
        const double g_logit = wt.bce * (sigmoid(terms.logit) - y);
        const double T = static_cast<double>(steps_);

        for (std::size_t k = 0; k < 2 * d; ++k) g[layout_.head_w() + k] += g_logit * pooled_[k];
        g[layout_.head_b()] += g_logit;
        std::vector<double> g_mean(d), g_max(d);
        for (std::size_t j = 0; j < d; ++j) {
            g_mean[j] = g_logit * p_[layout_.head_w() + j] / T;
            g_max[j] = g_logit * p_[layout_.head_w() + d + j];
        }
        const double g_sq = wt.pred * 2.0 / T;

        std::vector<double> gh(m), gz(w);
        for (std::size_t t = 0; t < steps_; ++t) {
            // gh = d total / d h_out = -d total / d r on the state part
            for (std::size_t j = 0; j < d; ++j) {
                const double r = residuals_[t * d + j];
                double gr = g_mean[j] * sign(r) + g_sq * r;
                if (argmax_[j] == t) gr += g_max[j] * sign(r);
                gh[j] = -gr;
            }
            std::fill(gh.begin() + static_cast<std::ptrdiff_t>(d), gh.end(), 0.0);
            for (std::size_t bb = R; bb-- > 0;) {
                const auto& blk = layout_.block(bb);
                const double* hin = &h_in_[(t * R + bb) * m];
                const double* u = &u_[(t * R + bb) * w];
                const double* keep = has_dropout ? &keep_[(t * R + bb) * w] : nullptr;
                const double* W1 = p_ + blk.w1;
                const double* W2 = p_ + blk.w2;
                double* gW1 = g + blk.w1;
                double* gW2 = g + blk.w2;
                for (std::size_t i = 0; i < m; ++i) g[blk.b2 + i] += gh[i];
                std::fill(gz.begin(), gz.end(), 0.0);
                for (std::size_t i = 0; i < m; ++i) {
                    const double gi = gh[i];
                    if (gi == 0.0) continue;
                    double* grow = gW2 + i * w;
                    const double* row = W2 + i * w;
                    for (std::size_t k = 0; k < w; ++k) {
                        const double zk = keep ? u[k] * keep[k] : u[k];
                        grow[k] += gi * zk;
                        gz[k] += row[k] * gi;
                    }
                }
                for (std::size_t k = 0; k < w; ++k) {
                    if (keep) gz[k] *= keep[k];
                    gz[k] *= 1.0 - u[k] * u[k];
                }
                for (std::size_t k = 0; k < w; ++k) {
                    const double gk = gz[k];
                    g[blk.b1 + k] += gk;
                    double* grow = gW1 + k * m;
                    const double* row = W1 + k * m;
                    for (std::size_t i = 0; i < m; ++i) {
                        grow[i] += gk * hin[i];
                        gh[i] += row[i] * gk;
                    }
                }
            }
        }

        if (wt.reg != 0.0) flow_backward(trace, wt.reg, g);
    }

    const std::vector<double>& residuals() const noexcept { return residuals_; }
    const std::vector<double>& predictions() const noexcept { return predictions_; }
    const std::vector<double>& pooled() const noexcept { return pooled_; }
    std::size_t steps() const noexcept { return steps_; }

private:
    void flow_backward(const StateTrace& trace, double weight, double* g) {
        const std::size_t d = shape_.dim, w = shape_.width, n = trace.length();
        const double* V1 = p_ + layout_.flow_w1();
        const double* V2 = p_ + layout_.flow_w2();
        const double c = weight * 2.0 / static_cast<double>(n - 1);
        std::vector<double> gH(d), gq(w);
        for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                if (t > 0) acc += flow_h_[t * d + j] - flow_h_[(t - 1) * d + j];
                if (t + 1 < n) acc -= flow_h_[(t + 1) * d + j] - flow_h_[t * d + j];
                gH[j] = c * acc;
            }
            const double* q = &flow_q_[t * w];
            std::fill(gq.begin(), gq.end(), 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                g[layout_.flow_b2() + j] += gH[j];
                for (std::size_t k = 0; k < w; ++k) {
                    g[layout_.flow_w2() + j * w + k] += gH[j] * q[k];
                    gq[k] += V2[j * w + k] * gH[j];
                }
            }
            const auto s = trace.state(t);
            for (std::size_t k = 0; k < w; ++k) {
                const double gk = gq[k] * (1.0 - q[k] * q[k]);
                g[layout_.flow_b1() + k] += gk;
                for (std::size_t j = 0; j < d; ++j) g[layout_.flow_w1() + k * d + j] += gk * s[j];
            }
            (void)V1;
        }
    }

    const double* p_;
    const ParamLayout& layout_;
    ModelShape shape_;
    std::size_t steps_ = 0;
    std::vector<double> h_in_, u_, keep_, residuals_, predictions_, pooled_;
    std::vector<std::size_t> argmax_;
    std::vector<double> flow_q_, flow_h_;
};

LossGrad loss_and_grad(std::span<const StateTrace> batch, const ModelParams& params,
                       const TrainConfig& cfg, const DropoutSpec* dropout, bool want_grad) {
    if (batch.empty()) throw InputError("empty batch");
    validate_params(params);
    const ParamLayout layout(params.shape);
    for (const auto& t : batch) check_trace(t, params.shape);

    const double B = static_cast<double>(batch.size());
    const auto benign = static_cast<double>(std::count_if(
        batch.begin(), batch.end(), [](const StateTrace& t) { return t.label == Label::Benign; }));

    LossGrad out;
    if (want_grad) out.grad.assign(params.size(), 0.0);
    TracePass pass(params, layout);
    const bool with_flow = cfg.alpha != 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& trace = batch[i];
        const std::uint64_t mask_seed = dropout ? derive_seed(dropout->seed, "trace", i) : 0;
        const auto terms = pass.evaluate(trace, dropout, mask_seed, with_flow);
        const bool is_benign = trace.label == Label::Benign;
        out.loss.bce += terms.bce / B;
        if (is_benign) out.loss.prediction += cfg.beta * terms.mse / benign;
        out.loss.regularizer += cfg.alpha * terms.flowvar / B;
        if (want_grad) {
            TracePass::Weights wt;
            wt.bce = 1.0 / B;
            wt.pred = is_benign ? cfg.beta / benign : 0.0;
            wt.reg = cfg.alpha / B;
            pass.backward(trace, terms, wt, dropout != nullptr, out.grad.data());
        }
    }
    double sq = 0.0;
    for (double x : params.values) sq += x * x;
    out.loss.weight_decay = cfg.weight_decay * sq;
    if (want_grad && cfg.weight_decay != 0.0) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            out.grad[k] += 2.0 * cfg.weight_decay * params.values[k];
        }
    }
    out.loss.total = out.loss.bce + out.loss.prediction + out.loss.regularizer + out.loss.weight_decay;
    return out;
}

} // namespace

ForwardResult forward(const StateTrace& trace, const ModelParams& params, Mode mode,
                      const DropoutSpec& dropout) {
    validate_params(params);
    check_trace(trace, params.shape);
    const ParamLayout layout(params.shape);
    TracePass pass(params, layout);
    const bool use_dropout = mode == Mode::Train && dropout.p > 0.0;
    pass.run_dynamics(trace, use_dropout ? &dropout : nullptr, derive_seed(dropout.seed, "trace", 0));
    ForwardResult r;
    r.logit = pass.pool_and_score();
    r.score = squash(r.logit);
    r.steps = pass.steps();
    r.predictions = pass.predictions();
    r.residuals = pass.residuals();
    r.pooled = pass.pooled();
    return r;
}

void validate_train_config(const TrainConfig& cfg) {
    auto bad = [](const char* what) { throw InputError(std::string("train config: ") + what); };
    if (!(cfg.alpha >= 0.0)) bad("alpha must be >= 0");
    if (!(cfg.beta >= 0.0)) bad("beta must be >= 0");
    if (!(cfg.learning_rate >= 0.0)) bad("learning_rate must be >= 0");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0)) bad("beta1 must lie in [0, 1)");
    if (!(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) bad("beta2 must lie in [0, 1)");
    if (!(cfg.epsilon > 0.0)) bad("epsilon must be positive");
    if (!(cfg.weight_decay >= 0.0)) bad("weight_decay must be >= 0");
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) bad("dropout_p must lie in [0, 1)");
    if (cfg.epochs < 1) bad("epochs must be >= 1");
    if (cfg.batch_size < 1) bad("batch_size must be >= 1");
    if (cfg.max_window == 1) bad("max_window must be 0 (full) or >= 2");
}

LossComponents loss(std::span<const StateTrace> batch, const ModelParams& params,
                    const TrainConfig& cfg) {
    return loss_and_grad(batch, params, cfg, nullptr, false).loss;
}

LossGrad grad(std::span<const StateTrace> batch, const ModelParams& params, const TrainConfig& cfg) {
    return loss_and_grad(batch, params, cfg, nullptr, true);
}

LossGrad grad_with_dropout(std::span<const StateTrace> batch, const ModelParams& params,
                           const TrainConfig& cfg, const DropoutSpec& dropout) {
    return loss_and_grad(batch, params, cfg, dropout.p > 0.0 ? &dropout : nullptr, true);
}

Label decide(double score, double tau) noexcept {
    return score > tau ? Label::Ransomware : Label::Benign;
}

Classification classify(const StateTrace& trace, const ModelParams& params, double tau) {
    const double score = forward(trace, params).score;
    return {decide(score, tau), score};
}

std::vector<Classification> classify_batch(std::span<const StateTrace> traces,
                                           const ModelParams& params, double tau) {
    std::vector<Classification> out;
    out.reserve(traces.size());
    for (const auto& t : traces) out.push_back(classify(t, params, tau));
    return out;
}

std::vector<double> prefix_scores(const StateTrace& trace, const ModelParams& params,
                                  std::size_t stride) {
    if (stride == 0) throw InputError("stride must be positive");
    const ForwardResult full = forward(trace, params);
    const std::size_t d = params.shape.dim;
    const ParamLayout layout(params.shape);
    const double* head = params.values.data() + layout.head_w();
    const double bias = params.values[layout.head_b()];

    std::vector<double> sums(d, 0.0), maxs(d, -1.0), scores;
    std::size_t used = 0; // residuals folded into sums/maxs
    for (std::size_t len = stride; len <= trace.length(); len += stride) {
        if (len < 2) continue;
        // Same accumulation order as a forward pass over the prefix.
        for (; used < len - 1; ++used) {
            for (std::size_t j = 0; j < d; ++j) {
                const double a = std::abs(full.residuals[used * d + j]);
                sums[j] += a;
                if (a > maxs[j]) maxs[j] = a;
            }
        }
        double logit = bias;
        for (std::size_t j = 0; j < d; ++j) {
            logit += head[j] * (sums[j] / static_cast<double>(len - 1));
        }
        for (std::size_t j = 0; j < d; ++j) logit += head[d + j] * maxs[j];
        scores.push_back(squash(logit));
    }
    return scores;
}

std::optional<std::size_t> first_persistent_detection(std::span<const double> scores, double tau,
                                                      std::size_t stride, std::size_t persistence) {
    if (persistence == 0) throw InputError("persistence must be positive");
    std::size_t run = 0;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        run = scores[k] > tau ? run + 1 : 0;
        if (run == persistence) return (k + 1) * stride;
    }
    return std::nullopt;
}

std::optional<std::size_t> classify_prefix(const StateTrace& trace, const ModelParams& params,
                                           double tau, std::size_t stride, std::size_t persistence) {
    const auto scores = prefix_scores(trace, params, stride);
    return first_persistent_detection(scores, tau, stride, persistence);
}

} // namespace nest
