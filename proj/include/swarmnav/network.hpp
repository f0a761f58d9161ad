#pragma once

// Policy / value networks: a recurrent neighbor encoder (or an occupancy-grid
// encoder for the baseline) feeding a two-layer tanh MLP.
//
// All parameters of one network live in a single flat vector so the optimizer,
// gradient clipping and checkpointing can treat them uniformly. Blocks, in
// order (matrices column-major inside the flat vector):
//
//   LSTM encoder only:
//     W   (4n x m)   input weights, gate row blocks ordered i, f, o, c
//     U   (4n x n)   recurrent weights, same row blocks
//     b   (4n)       biases, same blocks
//   MLP:
//     W1  (l1 x in)  in = encoding width + 1 (encoding stacked with bearing to destination)
//     b1  (l1)
//     W2  (l2 x l1)
//     b2  (l2)
//     W3  (out x l2)
//     b3  (out)
//   policy only:
//     log_std (out)

#include "swarmnav/sim.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace swarmnav {

class Rng;

enum class EncoderKind : std::uint32_t { Lstm = 0, Occupancy = 1 };

std::string to_string(EncoderKind kind);
EncoderKind encoder_from_string(const std::string& name);

struct NetworkDims {
    EncoderKind encoder = EncoderKind::Lstm;
    int hidden = 63;  // LSTM state size
    int input = 3;    // per-neighbor features
    int layer1 = 64;
    int layer2 = 64;
    int outputs = 2;
    int grid_radial = 8;
    int grid_angular = 25;
    bool log_std = true;

    int encoding_width() const noexcept {
        return encoder == EncoderKind::Lstm ? hidden : grid_radial * grid_angular;
    }
    int mlp_input() const noexcept { return encoding_width() + 1; }
    bool operator==(const NetworkDims&) const = default;

    static NetworkDims policy(EncoderKind encoder = EncoderKind::Lstm, int hidden = 63);
    static NetworkDims value(EncoderKind encoder = EncoderKind::Lstm, int hidden = 63);
};

std::string describe(const NetworkDims& dims);

/// Normalization applied to raw observations before they reach a network.
struct InputScaling {
    double distance = 30.0;  // meters mapped to 1.0
    double r_max = 30.0;     // occupancy sensing range, meters
};

/// Offsets of every parameter block inside the flat vector.
struct ParamLayout {
    explicit ParamLayout(const NetworkDims& dims);

    Eigen::Index lstm_w = 0, lstm_u = 0, lstm_b = 0;
    Eigen::Index w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0;
    Eigen::Index log_std = 0;
    Eigen::Index size = 0;
};

using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;

/// Read-only view of LSTM weights. Gate k occupies rows [k*n, (k+1)*n).
struct LstmWeights {
    ConstMatMap W;
    ConstMatMap U;
    ConstVecMap b;
    int hidden() const noexcept { return static_cast<int>(U.cols()); }
};

struct MlpWeights {
    ConstMatMap W1;
    ConstVecMap b1;
    ConstMatMap W2;
    ConstVecMap b2;
    ConstMatMap W3;
    ConstVecMap b3;
};

/// A network's architecture plus its flat parameter vector.
class Network {
public:
    explicit Network(const NetworkDims& dims);

    const NetworkDims& dims() const noexcept { return dims_; }
    const ParamLayout& layout() const noexcept { return layout_; }

    Eigen::VectorXd& params() noexcept { return params_; }
    const Eigen::VectorXd& params() const noexcept { return params_; }

    LstmWeights lstm() const;
    MlpWeights mlp() const;
    Eigen::Ref<const Eigen::VectorXd> log_std() const;
    Eigen::Ref<Eigen::VectorXd> log_std();

    /// Mutable views, used by initialization and tests.
    MatMap lstm_W();
    MatMap lstm_U();
    VecMap lstm_b();
    MatMap W1();
    VecMap b1();
    MatMap W2();
    VecMap b2();
    MatMap W3();
    VecMap b3();

private:
    NetworkDims dims_;
    ParamLayout layout_;
    Eigen::VectorXd params_;
};

struct InitOptions {
    double forget_bias = 1.0;
    double log_std = -0.6931471805599453;  // ln 0.5
    /// Added to the first output bias (forward body-frame command) of policy nets.
    double forward_bias = 0.0;
};

/// Uniform(-k, k) with k = 1/sqrt(fan_in) per matrix, forget-gate bias set,
/// remaining biases zero (except the optional forward bias).
void initialize(Network& net, Rng& rng, const InitOptions& opts = {});

// ---------------------------------------------------------------------------
// LSTM primitives

struct LstmStepResult {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
    Eigen::VectorXd gates;  // activated i, f, o, g stacked (4n)
};

/// One cell update. Throws NumericError naming the gate that went non-finite.
LstmStepResult lstm_step(const LstmWeights& w, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& h_prev,
                         const Eigen::Ref<const Eigen::VectorXd>& c_prev);

/// Cached intermediate values of a sequence encoding. Column t of `gates`,
/// `tanh_c` and `inputs` belongs to sequence element t; `hidden` and `cell`
/// carry one extra leading column holding the zero initial state.
struct LstmTape {
    Eigen::MatrixXd inputs;  // m x T
    Eigen::MatrixXd gates;   // 4n x T
    Eigen::MatrixXd cell;    // n x (T+1)
    Eigen::MatrixXd hidden;  // n x (T+1)
    Eigen::MatrixXd tanh_c;  // n x T

    Eigen::Index length() const noexcept { return inputs.cols(); }
};

/// Runs the cell over the columns of `sequence` from a zero state and returns
/// the final hidden state (zero for an empty sequence).
Eigen::VectorXd encode_neighbors(const LstmWeights& w, const Eigen::Ref<const Eigen::MatrixXd>& sequence,
                                 LstmTape* tape = nullptr);

/// Gradient of sum(dh_final . h_final) w.r.t. W, U, b, accumulated into the
/// given blocks. Returns the gradient w.r.t. nothing else (inputs are data).
void encode_neighbors_backward(const LstmWeights& w, const LstmTape& tape,
                               const Eigen::Ref<const Eigen::VectorXd>& dh_final, MatMap dW,
                               MatMap dU, VecMap db);

// ---------------------------------------------------------------------------
// Full network

/// Network-ready input for one ego observation.
struct NetworkInput {
    Eigen::MatrixXd sequence;  // LSTM: m x T, farthest neighbor first
    Eigen::VectorXd grid;      // occupancy: flattened grid
    double bearing = 0.0;      // bearing to destination / pi
};

/// Features of one neighbor: (distance / scale, bearing / pi, relative heading / pi).
Eigen::Vector3d neighbor_features(const ObservationTuple& t, const InputScaling& s) noexcept;

/// Neighbors sorted by distance, farthest first, as feature columns.
Eigen::MatrixXd neighbor_sequence(std::span<const ObservationTuple> neighbors,
                                  const InputScaling& s);

NetworkInput make_input(const NetworkDims& dims, const EgoObservation& obs, const InputScaling& s);

struct ForwardTape {
    LstmTape lstm;
    Eigen::VectorXd mlp_in;
    Eigen::VectorXd a1;
    Eigen::VectorXd a2;
    Eigen::VectorXd out;
};

/// Forward pass through encoder and MLP. Throws NumericError on non-finite output.
Eigen::VectorXd forward(const Network& net, const NetworkInput& in, ForwardTape* tape = nullptr);

/// Accumulates d(grad_out . output)/d(params) into `grad` (same layout as params).
void backward(const Network& net, const ForwardTape& tape,
              const Eigen::Ref<const Eigen::VectorXd>& grad_out, Eigen::VectorXd& grad);

/// Mean body-frame command (forward, right) for an observation.
Eigen::Vector2d policy_forward(const Network& policy, const EgoObservation& obs,
                               const InputScaling& s, ForwardTape* tape = nullptr);

/// Full parameter gradient of grad_out . mean_action. The log_std block is zero.
Eigen::VectorXd policy_backward(const Network& policy, const ForwardTape& tape,
                                const Eigen::Vector2d& grad_out);

double value_forward(const Network& value, const EgoObservation& obs, const InputScaling& s,
                     ForwardTape* tape = nullptr);

// ---------------------------------------------------------------------------
// Batched evaluation
//
// Same math as forward/backward, evaluated for many inputs at once with
// matrix-matrix products. Samples are processed internally in order of
// decreasing sequence length so that at encoder step t the samples still
// running form a leading block of columns.

struct BatchTape {
    std::vector<Eigen::Index> order;    // sorted position -> caller index
    std::vector<Eigen::Index> active;   // encoder step t -> number of running samples
    std::vector<Eigen::MatrixXd> inputs, gates, cell_prev, hidden_prev, tanh_c;  // per step
    Eigen::MatrixXd mlp_in, a1, a2;     // columns in sorted order
};

/// Outputs (outputs x B), columns in caller order.
Eigen::MatrixXd forward_batch(const Network& net, std::span<const NetworkInput* const> inputs,
                              BatchTape* tape = nullptr);

/// Accumulates sum_b grad_out.col(b) . d output_b / d params into `grad`.
void backward_batch(const Network& net, const BatchTape& tape,
                    const Eigen::Ref<const Eigen::MatrixXd>& grad_out, Eigen::VectorXd& grad);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::int64_t step = 0;

    explicit AdamState(Eigen::Index n = 0) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam step; advances state.step. Throws NumericError on a
/// non-finite gradient, leaving params and state untouched.
void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
                 const AdamConfig& cfg);

/// Scales `grad` down so its L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm);

// ---------------------------------------------------------------------------

/// Floating point operations for one policy evaluation with `n_agents` agents
/// in view (n_agents - 1 encoder iterations).
std::int64_t count_flops(std::int64_t n_agents, const NetworkDims& dims);
std::int64_t flops_per_neighbor(const NetworkDims& dims);
std::int64_t flops_fixed(const NetworkDims& dims);

}  // namespace swarmnav
