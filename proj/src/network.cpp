#include "swarmnav/network.hpp"

#include "swarmnav/error.hpp"
#include "swarmnav/occupancy.hpp"
#include "swarmnav/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace swarmnav {

namespace {

constexpr const char* kGateNames[4] = {"input", "forget", "output", "cell"};

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

template <class Derived>
void fill_uniform(Eigen::MatrixBase<Derived>&& m, Rng& rng, double k) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-k, k);
}

// Activates the stacked pre-activations in place: sigmoid on i, f, o; tanh on g.
void activate_gates(Eigen::Ref<Eigen::VectorXd> z, Eigen::Index n) {
    for (Eigen::Index k = 0; k < 3 * n; ++k) z[k] = sigmoid(z[k]);
    for (Eigen::Index k = 3 * n; k < 4 * n; ++k) z[k] = std::tanh(z[k]);
}

void check_gates(const Eigen::Ref<const Eigen::VectorXd>& gates, Eigen::Index n) {
    for (int g = 0; g < 4; ++g) {
        if (!gates.segment(g * n, n).allFinite()) {
            throw NumericError(std::string("lstm: non-finite ") + kGateNames[g] + " gate");
        }
    }
}

}  // namespace

std::string to_string(EncoderKind kind) {
    return kind == EncoderKind::Lstm ? "lstm" : "occupancy";
}

EncoderKind encoder_from_string(const std::string& name) {
    if (name == "lstm") return EncoderKind::Lstm;
    if (name == "occupancy") return EncoderKind::Occupancy;
    throw ConfigError("encoder", "expected 'lstm' or 'occupancy', got '" + name + "'");
}

NetworkDims NetworkDims::policy(EncoderKind encoder, int hidden) {
    NetworkDims d;
    d.encoder = encoder;
    d.hidden = hidden;
    d.outputs = 2;
    d.log_std = true;
    return d;
}

NetworkDims NetworkDims::value(EncoderKind encoder, int hidden) {
    NetworkDims d = policy(encoder, hidden);
    d.outputs = 1;
    d.log_std = false;
    return d;
}

std::string describe(const NetworkDims& d) {
    std::string s = to_string(d.encoder);
    if (d.encoder == EncoderKind::Lstm) {
        s += " h=" + std::to_string(d.hidden) + " x=" + std::to_string(d.input);
    } else {
        s += " grid=" + std::to_string(d.grid_radial) + "x" + std::to_string(d.grid_angular);
    }
    s += " l1=" + std::to_string(d.layer1) + " l2=" + std::to_string(d.layer2) +
         " out=" + std::to_string(d.outputs) + (d.log_std ? " +log_std" : "");
    return s;
}

ParamLayout::ParamLayout(const NetworkDims& d) {
    Eigen::Index at = 0;
    auto take = [&at](Eigen::Index count) {
        const Eigen::Index start = at;
        at += count;
        return start;
    };
    if (d.encoder == EncoderKind::Lstm) {
        const Eigen::Index n = d.hidden;
        lstm_w = take(4 * n * d.input);
        lstm_u = take(4 * n * n);
        lstm_b = take(4 * n);
    }
    w1 = take(Eigen::Index{d.layer1} * d.mlp_input());
    b1 = take(d.layer1);
    w2 = take(Eigen::Index{d.layer2} * d.layer1);
    b2 = take(d.layer2);
    w3 = take(Eigen::Index{d.outputs} * d.layer2);
    b3 = take(d.outputs);
    log_std = take(d.log_std ? d.outputs : 0);
    size = at;
}

Network::Network(const NetworkDims& dims)
    : dims_(dims), layout_(dims), params_(Eigen::VectorXd::Zero(layout_.size)) {
    if (dims.hidden < 1 || dims.input < 1 || dims.layer1 < 1 || dims.layer2 < 1 ||
        dims.outputs < 1 || dims.grid_radial < 1 || dims.grid_angular < 1) {
        throw ContractViolation("Network: all dimensions must be positive (" + describe(dims) + ")");
    }
}

LstmWeights Network::lstm() const {
    if (dims_.encoder != EncoderKind::Lstm) throw ContractViolation("network has no LSTM encoder");
    const Eigen::Index n = dims_.hidden;
    const double* p = params_.data();
    return {ConstMatMap(p + layout_.lstm_w, 4 * n, dims_.input),
            ConstMatMap(p + layout_.lstm_u, 4 * n, n), ConstVecMap(p + layout_.lstm_b, 4 * n)};
}

MlpWeights Network::mlp() const {
    const double* p = params_.data();
    const auto& d = dims_;
    return {ConstMatMap(p + layout_.w1, d.layer1, d.mlp_input()),
            ConstVecMap(p + layout_.b1, d.layer1),
            ConstMatMap(p + layout_.w2, d.layer2, d.layer1),
            ConstVecMap(p + layout_.b2, d.layer2),
            ConstMatMap(p + layout_.w3, d.outputs, d.layer2),
            ConstVecMap(p + layout_.b3, d.outputs)};
}

Eigen::Ref<const Eigen::VectorXd> Network::log_std() const {
    return params_.segment(layout_.log_std, dims_.log_std ? dims_.outputs : 0);
}

Eigen::Ref<Eigen::VectorXd> Network::log_std() {
    return params_.segment(layout_.log_std, dims_.log_std ? dims_.outputs : 0);
}

MatMap Network::lstm_W() {
    return MatMap(params_.data() + layout_.lstm_w, 4 * dims_.hidden, dims_.input);
}
MatMap Network::lstm_U() {
    return MatMap(params_.data() + layout_.lstm_u, 4 * dims_.hidden, dims_.hidden);
}
VecMap Network::lstm_b() { return VecMap(params_.data() + layout_.lstm_b, 4 * dims_.hidden); }
MatMap Network::W1() { return MatMap(params_.data() + layout_.w1, dims_.layer1, dims_.mlp_input()); }
VecMap Network::b1() { return VecMap(params_.data() + layout_.b1, dims_.layer1); }
MatMap Network::W2() { return MatMap(params_.data() + layout_.w2, dims_.layer2, dims_.layer1); }
VecMap Network::b2() { return VecMap(params_.data() + layout_.b2, dims_.layer2); }
MatMap Network::W3() { return MatMap(params_.data() + layout_.w3, dims_.outputs, dims_.layer2); }
VecMap Network::b3() { return VecMap(params_.data() + layout_.b3, dims_.outputs); }

void initialize(Network& net, Rng& rng, const InitOptions& opts) {
    net.params().setZero();
    const auto& d = net.dims();
    if (d.encoder == EncoderKind::Lstm) {
        fill_uniform(net.lstm_W(), rng, 1.0 / std::sqrt(double(d.input)));
        fill_uniform(net.lstm_U(), rng, 1.0 / std::sqrt(double(d.hidden)));
        net.lstm_b().segment(d.hidden, d.hidden).setConstant(opts.forget_bias);
    }
    fill_uniform(net.W1(), rng, 1.0 / std::sqrt(double(d.mlp_input())));
    fill_uniform(net.W2(), rng, 1.0 / std::sqrt(double(d.layer1)));
    fill_uniform(net.W3(), rng, 1.0 / std::sqrt(double(d.layer2)));
    if (d.log_std) {
        net.log_std().setConstant(opts.log_std);
        net.b3()[0] += opts.forward_bias;
    }
}

// ---------------------------------------------------------------------------

LstmStepResult lstm_step(const LstmWeights& w, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& h_prev,
                         const Eigen::Ref<const Eigen::VectorXd>& c_prev) {
    const Eigen::Index n = w.hidden();
    if (x.size() != w.W.cols() || h_prev.size() != n || c_prev.size() != n) {
        throw ContractViolation("lstm_step: input/state size mismatch");
    }
    LstmStepResult r;
    r.gates = w.b;
    r.gates.noalias() += w.W * x;
    r.gates.noalias() += w.U * h_prev;
    activate_gates(r.gates, n);
    check_gates(r.gates, n);
    const auto i = r.gates.segment(0, n).array();
    const auto f = r.gates.segment(n, n).array();
    const auto o = r.gates.segment(2 * n, n).array();
    const auto g = r.gates.segment(3 * n, n).array();
    r.c = f * c_prev.array() + i * g;
    r.h = o * r.c.array().tanh();
    if (!r.c.allFinite() || !r.h.allFinite()) throw NumericError("lstm: non-finite cell state");
    return r;
}

Eigen::VectorXd encode_neighbors(const LstmWeights& w, const Eigen::Ref<const Eigen::MatrixXd>& seq,
                                 LstmTape* tape) {
    const Eigen::Index n = w.hidden();
    const Eigen::Index T = seq.cols();
    if (T > 0 && seq.rows() != w.W.cols()) {
        throw ContractViolation("encode_neighbors: feature size mismatch");
    }
    Eigen::VectorXd h = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
    if (tape) {
        tape->inputs = seq;
        tape->gates.resize(4 * n, T);
        tape->cell.resize(n, T + 1);
        tape->hidden.resize(n, T + 1);
        tape->tanh_c.resize(n, T);
        tape->cell.col(0).setZero();
        tape->hidden.col(0).setZero();
    }
    Eigen::VectorXd z(4 * n);
    for (Eigen::Index t = 0; t < T; ++t) {
        z = w.b;
        z.noalias() += w.W * seq.col(t);
        z.noalias() += w.U * h;
        activate_gates(z, n);
        check_gates(z, n);
        c = z.segment(n, n).cwiseProduct(c) + z.segment(0, n).cwiseProduct(z.segment(3 * n, n));
        Eigen::VectorXd tc = c.array().tanh();
        h = z.segment(2 * n, n).cwiseProduct(tc);
        if (tape) {
            tape->gates.col(t) = z;
            tape->cell.col(t + 1) = c;
            tape->hidden.col(t + 1) = h;
            tape->tanh_c.col(t) = tc;
        }
    }
    return h;
}

void encode_neighbors_backward(const LstmWeights& w, const LstmTape& tape,
                               const Eigen::Ref<const Eigen::VectorXd>& dh_final, MatMap dW,
                               MatMap dU, VecMap db) {
    const Eigen::Index n = w.hidden();
    const Eigen::Index T = tape.length();
    if (dh_final.size() != n || tape.gates.rows() != 4 * n) {
        throw ContractViolation("encode_neighbors_backward: tape does not match weights");
    }
    Eigen::VectorXd dh = dh_final;
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd dz(4 * n);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
        const auto gates = tape.gates.col(t);
        const auto i = gates.segment(0, n).array();
        const auto f = gates.segment(n, n).array();
        const auto o = gates.segment(2 * n, n).array();
        const auto g = gates.segment(3 * n, n).array();
        const auto tc = tape.tanh_c.col(t).array();
        const auto c_prev = tape.cell.col(t).array();

        dc.array() += dh.array() * o * (1.0 - tc * tc);
        dz.segment(0, n).array() = dc.array() * g * i * (1.0 - i);
        dz.segment(n, n).array() = dc.array() * c_prev * f * (1.0 - f);
        dz.segment(2 * n, n).array() = dh.array() * tc * o * (1.0 - o);
        dz.segment(3 * n, n).array() = dc.array() * i * (1.0 - g * g);

        dW.noalias() += dz * tape.inputs.col(t).transpose();
        dU.noalias() += dz * tape.hidden.col(t).transpose();
        db += dz;

        dh.noalias() = w.U.transpose() * dz;
        dc.array() *= f;
    }
}

// ---------------------------------------------------------------------------

Eigen::Vector3d neighbor_features(const ObservationTuple& t, const InputScaling& s) noexcept {
    return {t.distance / s.distance, t.bearing_to_other / std::numbers::pi,
            t.other_relative_heading / std::numbers::pi};
}

Eigen::MatrixXd neighbor_sequence(std::span<const ObservationTuple> neighbors, const InputScaling& s) {
    std::vector<std::size_t> order(neighbors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Farthest first; ties keep agent order.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return neighbors[a].distance > neighbors[b].distance;
    });
    Eigen::MatrixXd seq(3, static_cast<Eigen::Index>(neighbors.size()));
    for (std::size_t k = 0; k < order.size(); ++k) {
        seq.col(static_cast<Eigen::Index>(k)) = neighbor_features(neighbors[order[k]], s);
    }
    return seq;
}

NetworkInput make_input(const NetworkDims& dims, const EgoObservation& obs, const InputScaling& s) {
    NetworkInput in;
    in.bearing = obs.bearing_to_destination / std::numbers::pi;
    if (dims.encoder == EncoderKind::Lstm) {
        if (dims.input != 3) throw ContractViolation("make_input: LSTM input size must be 3");
        in.sequence = neighbor_sequence(obs.neighbors, s);
    } else {
        in.grid = encode_occupancy(obs.neighbors, s.r_max, dims.grid_radial, dims.grid_angular).bins;
    }
    return in;
}

Eigen::VectorXd forward(const Network& net, const NetworkInput& in, ForwardTape* tape) {
    const auto& d = net.dims();
    Eigen::VectorXd z0(d.mlp_input());
    if (d.encoder == EncoderKind::Lstm) {
        z0.head(d.hidden) = encode_neighbors(net.lstm(), in.sequence, tape ? &tape->lstm : nullptr);
    } else {
        if (in.grid.size() != d.encoding_width()) {
            throw ContractViolation("forward: occupancy grid size mismatch");
        }
        z0.head(d.encoding_width()) = in.grid;
    }
    z0[d.encoding_width()] = in.bearing;

    const MlpWeights m = net.mlp();
    Eigen::VectorXd a1 = m.b1;
    a1.noalias() += m.W1 * z0;
    a1 = a1.array().tanh();
    Eigen::VectorXd a2 = m.b2;
    a2.noalias() += m.W2 * a1;
    a2 = a2.array().tanh();
    Eigen::VectorXd out = m.b3;
    out.noalias() += m.W3 * a2;
    if (!out.allFinite()) throw NumericError("forward: non-finite network output");
    if (tape) {
        tape->mlp_in = std::move(z0);
        tape->a1 = std::move(a1);
        tape->a2 = std::move(a2);
        tape->out = out;
    }
    return out;
}

void backward(const Network& net, const ForwardTape& tape,
              const Eigen::Ref<const Eigen::VectorXd>& grad_out, Eigen::VectorXd& grad) {
    const auto& d = net.dims();
    const auto& L = net.layout();
    if (grad.size() != L.size) throw ContractViolation("backward: gradient buffer size mismatch");
    if (grad_out.size() != d.outputs || tape.a2.size() != d.layer2 || tape.a1.size() != d.layer1 ||
        tape.mlp_in.size() != d.mlp_input()) {
        throw ContractViolation("backward: tape does not match network " + describe(d));
    }
    const MlpWeights m = net.mlp();
    double* g = grad.data();

    MatMap(g + L.w3, d.outputs, d.layer2).noalias() += grad_out * tape.a2.transpose();
    VecMap(g + L.b3, d.outputs) += grad_out;

    Eigen::VectorXd dpre2 = m.W3.transpose() * grad_out;
    dpre2.array() *= 1.0 - tape.a2.array().square();
    MatMap(g + L.w2, d.layer2, d.layer1).noalias() += dpre2 * tape.a1.transpose();
    VecMap(g + L.b2, d.layer2) += dpre2;

    Eigen::VectorXd dpre1 = m.W2.transpose() * dpre2;
    dpre1.array() *= 1.0 - tape.a1.array().square();
    MatMap(g + L.w1, d.layer1, d.mlp_input()).noalias() += dpre1 * tape.mlp_in.transpose();
    VecMap(g + L.b1, d.layer1) += dpre1;

    if (d.encoder == EncoderKind::Lstm && tape.lstm.length() > 0) {
        const Eigen::VectorXd dh = m.W1.leftCols(d.hidden).transpose() * dpre1;
        const Eigen::Index n = d.hidden;
        encode_neighbors_backward(net.lstm(), tape.lstm, dh, MatMap(g + L.lstm_w, 4 * n, d.input),
                                  MatMap(g + L.lstm_u, 4 * n, n), VecMap(g + L.lstm_b, 4 * n));
    }
}

Eigen::Vector2d policy_forward(const Network& policy, const EgoObservation& obs,
                               const InputScaling& s, ForwardTape* tape) {
    if (policy.dims().outputs != 2) throw ContractViolation("policy_forward: expected 2 outputs");
    return forward(policy, make_input(policy.dims(), obs, s), tape);
}

Eigen::VectorXd policy_backward(const Network& policy, const ForwardTape& tape,
                                const Eigen::Vector2d& grad_out) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.layout().size);
    backward(policy, tape, grad_out, grad);
    return grad;
}

double value_forward(const Network& value, const EgoObservation& obs, const InputScaling& s,
                     ForwardTape* tape) {
    if (value.dims().outputs != 1) throw ContractViolation("value_forward: expected 1 output");
    return forward(value, make_input(value.dims(), obs, s), tape)[0];
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd forward_batch(const Network& net, std::span<const NetworkInput* const> inputs,
                              BatchTape* tape) {
    const auto& d = net.dims();
    const Eigen::Index B = static_cast<Eigen::Index>(inputs.size());
    const Eigen::Index enc = d.encoding_width();
    std::vector<Eigen::Index> order(inputs.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    if (d.encoder == EncoderKind::Lstm) {
        std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            return inputs[a]->sequence.cols() > inputs[b]->sequence.cols();
        });
    }

    Eigen::MatrixXd z0(d.mlp_input(), B);
    if (d.encoder == EncoderKind::Lstm) {
        const LstmWeights w = net.lstm();
        const Eigen::Index n = d.hidden;
        const Eigen::Index T = B > 0 ? inputs[order[0]]->sequence.cols() : 0;
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(n, B);
        Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, B);
        if (tape) {
            tape->active.assign(static_cast<std::size_t>(T), 0);
            for (auto* v : {&tape->inputs, &tape->gates, &tape->cell_prev, &tape->hidden_prev, &tape->tanh_c}) {
                v->resize(static_cast<std::size_t>(T));
            }
        }
        Eigen::MatrixXd X, Z;
        for (Eigen::Index t = 0; t < T; ++t) {
            Eigen::Index k = 0;
            while (k < B && inputs[order[k]]->sequence.cols() > t) ++k;
            X.resize(d.input, k);
            for (Eigen::Index j = 0; j < k; ++j) {
                const auto& seq = inputs[order[j]]->sequence;
                if (seq.rows() != d.input) throw ContractViolation("forward_batch: feature size mismatch");
                X.col(j) = seq.col(t);
            }
            Z.noalias() = w.W * X;
            Z.noalias() += w.U * H.leftCols(k);
            Z.colwise() += w.b;
            Z.topRows(3 * n) = (1.0 + (-Z.topRows(3 * n).array()).exp()).inverse();
            Z.bottomRows(n) = Z.bottomRows(n).array().tanh();
            if (!Z.allFinite()) {
                for (int g = 0; g < 4; ++g) {
                    if (!Z.middleRows(g * n, n).allFinite()) {
                        throw NumericError(std::string("lstm: non-finite ") + kGateNames[g] + " gate");
                    }
                }
            }
            if (tape) {
                tape->active[t] = k;
                tape->inputs[t] = X;
                tape->cell_prev[t] = C.leftCols(k);
                tape->hidden_prev[t] = H.leftCols(k);
            }
            C.leftCols(k) = Z.middleRows(n, n).cwiseProduct(C.leftCols(k)) +
                            Z.topRows(n).cwiseProduct(Z.bottomRows(n));
            Eigen::MatrixXd tc = C.leftCols(k).array().tanh();
            H.leftCols(k) = Z.middleRows(2 * n, n).cwiseProduct(tc);
            if (tape) {
                tape->gates[t] = Z;
                tape->tanh_c[t] = std::move(tc);
            }
        }
        z0.topRows(n) = H;
    } else {
        for (Eigen::Index j = 0; j < B; ++j) {
            if (inputs[order[j]]->grid.size() != enc) {
                throw ContractViolation("forward_batch: occupancy grid size mismatch");
            }
            z0.col(j).head(enc) = inputs[order[j]]->grid;
        }
    }
    for (Eigen::Index j = 0; j < B; ++j) z0(enc, j) = inputs[order[j]]->bearing;

    const MlpWeights m = net.mlp();
    Eigen::MatrixXd a1 = m.W1 * z0;
    a1.colwise() += m.b1;
    a1 = a1.array().tanh();
    Eigen::MatrixXd a2 = m.W2 * a1;
    a2.colwise() += m.b2;
    a2 = a2.array().tanh();
    Eigen::MatrixXd out_sorted = m.W3 * a2;
    out_sorted.colwise() += m.b3;
    if (!out_sorted.allFinite()) throw NumericError("forward: non-finite network output");

    Eigen::MatrixXd out(d.outputs, B);
    for (Eigen::Index j = 0; j < B; ++j) out.col(order[j]) = out_sorted.col(j);
    if (tape) {
        tape->order = std::move(order);
        tape->mlp_in = std::move(z0);
        tape->a1 = std::move(a1);
        tape->a2 = std::move(a2);
    }
    return out;
}

void backward_batch(const Network& net, const BatchTape& tape,
                    const Eigen::Ref<const Eigen::MatrixXd>& grad_out, Eigen::VectorXd& grad) {
    const auto& d = net.dims();
    const auto& L = net.layout();
    const Eigen::Index B = static_cast<Eigen::Index>(tape.order.size());
    if (grad.size() != L.size) throw ContractViolation("backward_batch: gradient buffer size mismatch");
    if (grad_out.rows() != d.outputs || grad_out.cols() != B || tape.a2.cols() != B) {
        throw ContractViolation("backward_batch: tape does not match network " + describe(d));
    }
    Eigen::MatrixXd G(d.outputs, B);
    for (Eigen::Index j = 0; j < B; ++j) G.col(j) = grad_out.col(tape.order[j]);

    const MlpWeights m = net.mlp();
    double* g = grad.data();
    MatMap(g + L.w3, d.outputs, d.layer2).noalias() += G * tape.a2.transpose();
    VecMap(g + L.b3, d.outputs) += G.rowwise().sum();

    Eigen::MatrixXd dpre2 = m.W3.transpose() * G;
    dpre2.array() *= 1.0 - tape.a2.array().square();
    MatMap(g + L.w2, d.layer2, d.layer1).noalias() += dpre2 * tape.a1.transpose();
    VecMap(g + L.b2, d.layer2) += dpre2.rowwise().sum();

    Eigen::MatrixXd dpre1 = m.W2.transpose() * dpre2;
    dpre1.array() *= 1.0 - tape.a1.array().square();
    MatMap(g + L.w1, d.layer1, d.mlp_input()).noalias() += dpre1 * tape.mlp_in.transpose();
    VecMap(g + L.b1, d.layer1) += dpre1.rowwise().sum();

    if (d.encoder != EncoderKind::Lstm || tape.active.empty()) return;

    const LstmWeights w = net.lstm();
    const Eigen::Index n = d.hidden;
    MatMap dW(g + L.lstm_w, 4 * n, d.input);
    MatMap dU(g + L.lstm_u, 4 * n, n);
    VecMap db(g + L.lstm_b, 4 * n);

    Eigen::MatrixXd dH = m.W1.leftCols(n).transpose() * dpre1;
    Eigen::MatrixXd dC = Eigen::MatrixXd::Zero(n, B);
    Eigen::MatrixXd dZ;
    for (Eigen::Index t = static_cast<Eigen::Index>(tape.active.size()) - 1; t >= 0; --t) {
        const Eigen::Index k = tape.active[t];
        const auto& Z = tape.gates[t];
        const auto i = Z.topRows(n).array();
        const auto f = Z.middleRows(n, n).array();
        const auto o = Z.middleRows(2 * n, n).array();
        const auto gg = Z.bottomRows(n).array();
        const auto tc = tape.tanh_c[t].array();

        auto dh = dH.leftCols(k).array();
        auto dc = dC.leftCols(k).array();
        dc += dh * o * (1.0 - tc * tc);
        dZ.resize(4 * n, k);
        dZ.topRows(n).array() = dc * gg * i * (1.0 - i);
        dZ.middleRows(n, n).array() = dc * tape.cell_prev[t].array() * f * (1.0 - f);
        dZ.middleRows(2 * n, n).array() = dh * tc * o * (1.0 - o);
        dZ.bottomRows(n).array() = dc * i * (1.0 - gg * gg);

        dW.noalias() += dZ * tape.inputs[t].transpose();
        dU.noalias() += dZ * tape.hidden_prev[t].transpose();
        db += dZ.rowwise().sum();

        dH.leftCols(k).noalias() = w.U.transpose() * dZ;
        dc *= f;
    }
}

// ---------------------------------------------------------------------------

void adam_update(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& st,
                 const AdamConfig& cfg) {
    if (grads.size() != params.size() || st.m.size() != params.size() ||
        st.v.size() != params.size()) {
        throw ContractViolation("adam_update: size mismatch");
    }
    if (!grads.allFinite()) throw NumericError("adam_update: non-finite gradient");
    st.step += 1;
    st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grads;
    st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grads.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(st.step));
    params.array() -= cfg.lr * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + cfg.eps);
}

double clip_grad_norm(Eigen::VectorXd& grad, double max_norm) {
    const double norm = grad.norm();
    if (max_norm > 0.0 && norm > max_norm) grad *= max_norm / norm;
    return norm;
}

// ---------------------------------------------------------------------------

std::int64_t flops_per_neighbor(const NetworkDims& d) {
    if (d.encoder != EncoderKind::Lstm) return 0;
    const std::int64_t h = d.hidden, x = d.input;
    return 8 * h * h + 8 * h * x + 26 * h;
}

std::int64_t flops_fixed(const NetworkDims& d) {
    const std::int64_t enc = d.encoding_width(), l1 = d.layer1, l2 = d.layer2, a = d.outputs;
    return 2 * (enc + 1) * l1 + 4 * l1 + 2 * l1 * l2 + 4 * l2 + 2 * l2 * a + 4 * a;
}

std::int64_t count_flops(std::int64_t n_agents, const NetworkDims& dims) {
    if (n_agents < 1) throw ContractViolation("count_flops: need at least one agent");
    return (n_agents - 1) * flops_per_neighbor(dims) + flops_fixed(dims);
}

}  // namespace swarmnav
