#pragma once

// Learnable transduction classifier.
//
// dynamics net f : R residual blocks over the stream h = [state ; onehot(action)]
//     h <- h + W2 * drop(tanh(W1 h + b1)) + b2
//   predicted next state = first d components of h, so with zero weights the
//   state passes through unchanged.
// flow net H     : d -> w -> d, H(s) = V2 tanh(V1 s + c1) + c2
// head g         : logit = u . [mean_t |r_t| ; max_t |r_t|] + u0, score = sigmoid(logit)
//
// residual r_t = s_{t+1} - f(s_t, a_t)
//
// Loss over a batch of B traces (Bb of them benign):
//   bce          = mean_i BCE(score_i, y_i)
//   prediction   = beta  * mean_{benign i} mean_t |r_t|^2
//   regularizer  = alpha * mean_i mean_t |H(s_{t+1}) - H(s_t)|^2
//   weight_decay = weight_decay * |theta|^2
// All parameters live in one flat vector; ParamLayout gives the offsets.

#include "nest/statespace.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nest {

struct ModelShape {
    std::size_t dim = kDefaultDim;
    std::size_t actions = kActionAlphabetSize;
    std::size_t blocks = 3;
    std::size_t width = 32;

    std::size_t stream() const noexcept { return dim + actions; }
    bool operator==(const ModelShape&) const = default;
};

struct TensorSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0; // 1 for vectors
    std::size_t size() const noexcept { return rows * cols; }
};

class ParamLayout {
public:
    struct Block {
        std::size_t w1, b1, w2, b2;
    };

    explicit ParamLayout(const ModelShape& shape);

    const ModelShape& shape() const noexcept { return shape_; }
    const Block& block(std::size_t b) const { return blocks_[b]; }
    std::size_t flow_w1() const noexcept { return flow_w1_; }
    std::size_t flow_b1() const noexcept { return flow_b1_; }
    std::size_t flow_w2() const noexcept { return flow_w2_; }
    std::size_t flow_b2() const noexcept { return flow_b2_; }
    std::size_t head_w() const noexcept { return head_w_; }
    std::size_t head_b() const noexcept { return head_b_; }
    std::size_t total() const noexcept { return total_; }
    const std::vector<TensorSlot>& tensors() const noexcept { return tensors_; }

private:
    ModelShape shape_;
    std::vector<Block> blocks_;
    std::size_t flow_w1_ = 0, flow_b1_ = 0, flow_w2_ = 0, flow_b2_ = 0;
    std::size_t head_w_ = 0, head_b_ = 0, total_ = 0;
    std::vector<TensorSlot> tensors_;
};

struct ModelParams {
    ModelShape shape;
    std::vector<double> values;

    std::size_t size() const noexcept { return values.size(); }
};

ModelParams zero_params(const ModelShape& shape);
/// Glorot-uniform input layers, small residual outputs, zero biases.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);
/// Throws InputError on size mismatch or non-finite weights.
void validate_params(const ModelParams& params);

enum class Mode { Eval, Train };

struct DropoutSpec {
    double p = 0.0;
    std::uint64_t seed = 0;
};

struct ForwardResult {
    std::size_t steps = 0;           // n - 1
    std::vector<double> predictions; // steps x d, row t predicts state t + 1
    std::vector<double> residuals;   // steps x d
    std::vector<double> pooled;      // [mean |r| ; max |r|], 2d
    double logit = 0.0;
    double score = 0.5;
};

/// Logistic squash kept strictly inside (0, 1).
double squash(double logit) noexcept;

ForwardResult forward(const StateTrace& trace, const ModelParams& params, Mode mode = Mode::Eval,
                      const DropoutSpec& dropout = {});

struct TrainConfig {
    double alpha = 0.01;
    double beta = 1.0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
    double dropout_p = 0.1;
    std::size_t epochs = 30;
    std::size_t batch_size = 16;
    std::size_t max_window = 256; // 0 = use full traces
    std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

struct LossComponents {
    double bce = 0.0;
    double prediction = 0.0;
    double regularizer = 0.0;
    double weight_decay = 0.0;
    double total = 0.0;
};

struct LossGrad {
    LossComponents loss;
    std::vector<double> grad;
};

/// Eval-mode loss. Throws InputError on an empty batch.
LossComponents loss(std::span<const StateTrace> batch, const ModelParams& params,
                    const TrainConfig& cfg);

/// Exact gradient of the eval-mode loss.
LossGrad grad(std::span<const StateTrace> batch, const ModelParams& params, const TrainConfig& cfg);

/// Training-path loss and gradient with seeded dropout masks.
LossGrad grad_with_dropout(std::span<const StateTrace> batch, const ModelParams& params,
                           const TrainConfig& cfg, const DropoutSpec& dropout);

struct Threshold {
    double tau = 0.5;
    std::string provenance;
};

/// Maximizes Youden's J over midpoints of adjacent sorted scores; ties go to
/// the smallest candidate. Throws InputError unless both classes occur.
Threshold select_threshold(std::span<const double> scores, std::span<const Label> labels,
                           std::string provenance);

/// (TPR + TNR) / 2 for "score > tau" predictions.
double balanced_accuracy(std::span<const double> scores, std::span<const Label> labels, double tau);

struct Classification {
    Label label = Label::Benign;
    double score = 0.5;
};

/// Ransomware iff score > tau (a score equal to tau is benign).
Label decide(double score, double tau) noexcept;
Classification classify(const StateTrace& trace, const ModelParams& params, double tau);
std::vector<Classification> classify_batch(std::span<const StateTrace> traces,
                                           const ModelParams& params, double tau);

/// Score of every prefix of length stride, 2*stride, ... (<= n).
std::vector<double> prefix_scores(const StateTrace& trace, const ModelParams& params,
                                  std::size_t stride);

/// Given prefix scores at lengths stride, 2*stride, ..., returns the prefix
/// length that completes the first run of `persistence` scores above tau.
std::optional<std::size_t> first_persistent_detection(std::span<const double> scores, double tau,
                                                      std::size_t stride, std::size_t persistence);

std::optional<std::size_t> classify_prefix(const StateTrace& trace, const ModelParams& params,
                                           double tau, std::size_t stride = 8,
                                           std::size_t persistence = 3);

struct EpochLog {
    std::size_t epoch = 0; // 1-based
    LossComponents loss;   // mean over the epoch's batches
    double val_balanced_accuracy = 0.0;
    double val_tau = 0.5;
};

struct TrainResult {
    ModelParams params;
    Threshold threshold;
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
};

/// Adam on shuffled mini-batches of seeded crops; keeps the parameters of
/// the epoch with the best validation balanced accuracy (earliest on ties).
/// Throws DivergenceError (where() = epoch) on a non-finite loss.
TrainResult train(std::span<const StateTrace> train_set, std::span<const StateTrace> val_set,
                  const ModelShape& shape, const TrainConfig& cfg);
TrainResult train_from(std::span<const StateTrace> train_set, std::span<const StateTrace> val_set,
                       ModelParams initial, const TrainConfig& cfg);

/// Contiguous window of `max_window` states starting at a seeded offset.
StateTrace crop(const StateTrace& trace, std::size_t max_window, std::uint64_t seed);

/// "<tag>:<hex digest of ids>"
std::string split_provenance(std::string_view tag, std::span<const StateTrace> traces);

} // namespace nest
