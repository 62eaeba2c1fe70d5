#pragma once

// Two-branch instance embedding network with hand-written forward and
// backward passes.
//
//   environment branch: shared per-point perceptron, coordinate-wise max
//     pool over points -> M_E
//   foreground branch: shared per-point perceptron, a scalar weight head
//     per point, softmax across points, weighted feature sum -> M_F
//   fusion: perceptron on [M_F ; M_E ; M_P] -> embedding
//
// Per-point feature matrices hold points as columns (width x N), which
// keeps every layer a single matrix product.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mots/common.hpp"
#include "mots/pointcloud.hpp"

namespace mots {

inline constexpr double kLeakySlope = 0.1;

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void leaky_relu_inplace(Matrix& m) {
    m = m.array().max(0.0) + kLeakySlope * m.array().min(0.0);
}

/// Layer widths of the four perceptrons. Entry i of each vector is the
/// input width of layer i; the last entry is the output width.
struct NetShape {
    std::vector<int> fg;      // per-point foreground branch
    std::vector<int> head;    // point weight head, ends in width 1
    std::vector<int> env;     // per-point environment branch
    std::vector<int> fusion;  // embedding head

    static NetShape standard(int num_classes) {
        NetShape s;
        s.fg = {5, 64, 128, 256};
        s.head = {256, 64, 1};
        s.env = {5 + num_classes, 64, 128, 256};
        s.fusion = {256 + 256 + kPositionDims, 256, 64, 32};
        return s;
    }

    /// Reference tiny configuration used by gradient checking.
    static NetShape tiny(int num_classes) {
        NetShape s;
        s.fg = {5, 8, 8};
        s.head = {8, 4, 1};
        s.env = {5 + num_classes, 8, 8};
        s.fusion = {8 + 8 + kPositionDims, 16, 8};
        return s;
    }

    void validate(int num_classes) const {
        auto chain_ok = [](const std::vector<int>& w) {
            if (w.size() < 2) return false;
            for (int v : w)
                if (v < 1) return false;
            return true;
        };
        if (!chain_ok(fg) || !chain_ok(head) || !chain_ok(env) || !chain_ok(fusion))
            throw ShapeMismatch("net shape: every chain needs >= 2 positive widths");
        if (fg.front() != 5) throw ShapeMismatch("fg branch must take 5 inputs");
        if (env.front() != 5 + num_classes)
            throw ShapeMismatch("env branch must take 5+Z inputs");
        if (head.front() != fg.back() || head.back() != 1)
            throw ShapeMismatch("weight head must map fg features to a scalar");
        if (fusion.front() != fg.back() + env.back() + kPositionDims)
            throw ShapeMismatch("fusion input must be fg + env + position widths");
    }

    bool operator==(const NetShape&) const = default;
};

/// Shared perceptron: affine layers with leaky activations; the final
/// activation is skipped when output_linear is set (weight head, fusion).
struct Mlp {
    std::vector<Matrix> weights;  // out x in
    std::vector<Vector> biases;
    bool output_linear = false;

    size_t layer_count() const { return weights.size(); }
    int input_width() const { return static_cast<int>(weights.front().cols()); }
    int output_width() const { return static_cast<int>(weights.back().rows()); }
};

struct NetworkParams {
    int num_classes = 0;
    Mlp fg_mlp;
    Mlp weight_head;
    Mlp env_mlp;
    Mlp fusion;

    int embedding_dim() const { return fusion.output_width(); }

    NetShape shape() const {
        auto widths = [](const Mlp& m) {
            std::vector<int> w{m.input_width()};
            for (const auto& weight : m.weights) w.push_back(static_cast<int>(weight.rows()));
            return w;
        };
        return NetShape{widths(fg_mlp), widths(weight_head), widths(env_mlp), widths(fusion)};
    }
};

using EmbeddingVector = Vector;

/// Everything backward needs from one forward evaluation. acts[0] is the
/// layer input, acts[i] the post-activation output of layer i. Reusing
/// one trace across calls avoids re-allocation.
struct ForwardTrace {
    std::vector<Matrix> fg_acts;
    std::vector<Matrix> head_acts;
    std::vector<Matrix> env_acts;
    std::vector<Matrix> fusion_acts;  // single-column matrices
    Vector softmax_weights;           // per foreground point, sums to 1
    std::vector<int> env_argmax;      // pooled point index per env feature
    Vector fg_pooled;                 // M_F
    Vector env_pooled;                // M_E
    Vector position;                  // M_P
    Vector embedding;
};

namespace detail {

inline void mlp_forward(const Mlp& mlp, const Matrix& input, std::vector<Matrix>& acts) {
    acts.resize(mlp.layer_count() + 1);
    acts[0] = input;
    for (size_t i = 0; i < mlp.layer_count(); ++i) {
        acts[i + 1].noalias() = mlp.weights[i] * acts[i];
        acts[i + 1].colwise() += mlp.biases[i];
        if (i + 1 < mlp.layer_count() || !mlp.output_linear) leaky_relu_inplace(acts[i + 1]);
    }
}

inline double leaky_derivative(double post_activation) {
    // leaky is sign-preserving, so the post-activation sign recovers the
    // branch taken in forward
    return post_activation > 0 ? 1.0 : kLeakySlope;
}

/// Backpropagates delta (w.r.t. the mlp output) through every layer.
/// Returns the delta w.r.t. the input; accumulates parameter gradients.
inline Matrix mlp_backward(const Mlp& mlp, const std::vector<Matrix>& acts, Matrix delta,
                           Mlp& grads) {
    for (size_t i = mlp.layer_count(); i-- > 0;) {
        bool activated = (i + 1 < mlp.layer_count()) || !mlp.output_linear;
        if (activated)
            delta.array() *= acts[i + 1].unaryExpr(&leaky_derivative).array();
        grads.weights[i].noalias() += delta * acts[i].transpose();
        grads.biases[i].noalias() += delta.rowwise().sum();
        if (i > 0)
            delta = mlp.weights[i].transpose() * delta;
        else
            return mlp.weights[0].transpose() * delta;
    }
    return {};
}

}  // namespace detail

/// Forward pass for one instance. Returns the embedding; the trace keeps
/// every intermediate needed by backward().
inline EmbeddingVector forward(const NetworkParams& params, const ModalityTensors& mod,
                               ForwardTrace& trace) {
    if (mod.fg_features.rows() != params.fg_mlp.input_width())
        throw ShapeMismatch("forward: foreground feature rows");
    if (mod.env_features.rows() != params.env_mlp.input_width())
        throw ShapeMismatch("forward: environment feature rows");
    if (mod.position_embedding.size() != kPositionDims)
        throw ShapeMismatch("forward: position embedding size");
    if (mod.fg_features.cols() < 1 || mod.env_features.cols() < 1)
        throw ShapeMismatch("forward: need at least one point per cloud");

    detail::mlp_forward(params.fg_mlp, mod.fg_features, trace.fg_acts);
    const Matrix& fg_feat = trace.fg_acts.back();

    detail::mlp_forward(params.weight_head, fg_feat, trace.head_acts);
    Eigen::RowVectorXd scores = trace.head_acts.back().row(0);
    Vector& w = trace.softmax_weights;
    w = (scores.array() - scores.maxCoeff()).exp().transpose();
    w /= w.sum();
    trace.fg_pooled.noalias() = fg_feat * w;

    detail::mlp_forward(params.env_mlp, mod.env_features, trace.env_acts);
    const Matrix& env_feat = trace.env_acts.back();
    int env_dim = static_cast<int>(env_feat.rows());
    int env_points = static_cast<int>(env_feat.cols());
    trace.env_pooled.resize(env_dim);
    trace.env_argmax.assign(env_dim, 0);
    trace.env_pooled = env_feat.col(0);
    for (int j = 1; j < env_points; ++j)
        for (int r = 0; r < env_dim; ++r)
            if (env_feat(r, j) > trace.env_pooled[r]) {  // ties keep the lowest index
                trace.env_pooled[r] = env_feat(r, j);
                trace.env_argmax[r] = j;
            }

    trace.position = mod.position_embedding;
    Matrix fused(params.fusion.input_width(), 1);
    fused << trace.fg_pooled, trace.env_pooled, trace.position;
    detail::mlp_forward(params.fusion, fused, trace.fusion_acts);
    trace.embedding = trace.fusion_acts.back().col(0);
    return trace.embedding;
}

inline EmbeddingVector forward(const NetworkParams& params, const ModalityTensors& mod) {
    ForwardTrace trace;
    return forward(params, mod, trace);
}

inline Mlp zeros_like(const Mlp& mlp) {
    Mlp z;
    z.output_linear = mlp.output_linear;
    for (size_t i = 0; i < mlp.layer_count(); ++i) {
        z.weights.push_back(Matrix::Zero(mlp.weights[i].rows(), mlp.weights[i].cols()));
        z.biases.push_back(Vector::Zero(mlp.biases[i].size()));
    }
    return z;
}

inline NetworkParams zeros_like(const NetworkParams& params) {
    return NetworkParams{params.num_classes, zeros_like(params.fg_mlp),
                         zeros_like(params.weight_head), zeros_like(params.env_mlp),
                         zeros_like(params.fusion)};
}

/// Analytic gradients of every parameter for d(loss)/d(embedding) =
/// grad_out. Accumulates into grads, which must be zero-initialized by
/// the caller (zeros_like) or hold a running sum.
inline void backward(const NetworkParams& params, const ForwardTrace& trace,
                     const Vector& grad_out, NetworkParams& grads) {
    if (grad_out.size() != trace.embedding.size())
        throw ShapeMismatch("backward: grad_out size");

    // fusion
    Matrix fusion_delta =
        detail::mlp_backward(params.fusion, trace.fusion_acts, grad_out, grads.fusion);
    int fg_dim = static_cast<int>(trace.fg_pooled.size());
    int env_dim = static_cast<int>(trace.env_pooled.size());
    Vector d_fg_pooled = fusion_delta.col(0).segment(0, fg_dim);
    Vector d_env_pooled = fusion_delta.col(0).segment(fg_dim, env_dim);
    // the position block has no upstream parameters

    // environment branch: gradient routed to the argmax point per feature
    const Matrix& env_feat = trace.env_acts.back();
    Matrix env_delta = Matrix::Zero(env_feat.rows(), env_feat.cols());
    for (int r = 0; r < env_dim; ++r) env_delta(r, trace.env_argmax[r]) = d_env_pooled[r];
    detail::mlp_backward(params.env_mlp, trace.env_acts, std::move(env_delta), grads.env_mlp);

    // foreground branch: M_F = F w with w = softmax(scores)
    const Matrix& fg_feat = trace.fg_acts.back();
    const Vector& w = trace.softmax_weights;
    Matrix fg_delta = d_fg_pooled * w.transpose();          // from the weighted sum
    Vector d_w = fg_feat.transpose() * d_fg_pooled;         // dL/dw_i
    double mixed = w.dot(d_w);
    Matrix d_scores = (w.array() * (d_w.array() - mixed)).matrix().transpose();
    fg_delta.noalias() +=
        detail::mlp_backward(params.weight_head, trace.head_acts, std::move(d_scores),
                             grads.weight_head);
    detail::mlp_backward(params.fg_mlp, trace.fg_acts, std::move(fg_delta), grads.fg_mlp);
}

/// Glorot-uniform initialization; the weight head's final layer starts at
/// zero so point weights begin uniform.
inline NetworkParams init_params(uint64_t seed, int num_classes,
                                 const NetShape& shape_in = {}) {
    NetShape shape = shape_in.fg.empty() ? NetShape::standard(num_classes) : shape_in;
    shape.validate(num_classes);
    Rng rng(seed);
    auto make_mlp = [&rng](const std::vector<int>& widths, bool output_linear,
                           bool zero_last) {
        Mlp mlp;
        mlp.output_linear = output_linear;
        for (size_t i = 0; i + 1 < widths.size(); ++i) {
            int fan_in = widths[i], fan_out = widths[i + 1];
            Matrix w(fan_out, fan_in);
            bool zero = zero_last && i + 2 == widths.size();
            double bound = std::sqrt(6.0 / (fan_in + fan_out));
            for (int r = 0; r < fan_out; ++r)
                for (int c = 0; c < fan_in; ++c)
                    w(r, c) = zero ? 0.0 : uniform_range(rng, -bound, bound);
            mlp.weights.push_back(std::move(w));
            mlp.biases.push_back(Vector::Zero(fan_out));
        }
        return mlp;
    };
    NetworkParams params;
    params.num_classes = num_classes;
    params.fg_mlp = make_mlp(shape.fg, false, false);
    params.weight_head = make_mlp(shape.head, true, true);
    params.env_mlp = make_mlp(shape.env, false, false);
    params.fusion = make_mlp(shape.fusion, true, false);
    return params;
}

// ---------------------------------------------------------------------------
// Parameter file: magic, version, Z, widths, then row-major doubles.
// ---------------------------------------------------------------------------

inline constexpr char kParamMagic[8] = {'M', 'O', 'T', 'S', 'E', 'M', 'B', '\0'};
inline constexpr uint32_t kParamVersion = 1;

inline void save_params(const std::string& path, const NetworkParams& params) {
    auto out = open_output(path, std::ios::binary);
    out.write(kParamMagic, sizeof(kParamMagic));
    write_le<uint32_t>(out, kParamVersion);
    write_le<uint32_t>(out, static_cast<uint32_t>(params.num_classes));
    auto write_mlp = [&out](const Mlp& mlp) {
        write_le<uint32_t>(out, static_cast<uint32_t>(mlp.layer_count()));
        write_le<uint32_t>(out, static_cast<uint32_t>(mlp.input_width()));
        for (const auto& w : mlp.weights) write_le<uint32_t>(out, static_cast<uint32_t>(w.rows()));
        for (size_t i = 0; i < mlp.layer_count(); ++i) {
            const Matrix& w = mlp.weights[i];
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) write_le<double>(out, w(r, c));
            for (Eigen::Index r = 0; r < mlp.biases[i].size(); ++r)
                write_le<double>(out, mlp.biases[i][r]);
        }
    };
    write_mlp(params.fg_mlp);
    write_mlp(params.weight_head);
    write_mlp(params.env_mlp);
    write_mlp(params.fusion);
    if (!out) throw IoError("short write: " + path);
}

inline NetworkParams load_params(const std::string& path) {
    auto in = open_input(path, std::ios::binary);
    char magic[sizeof(kParamMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kParamMagic, sizeof(magic)) != 0)
        throw CorruptFile("not a parameter file: " + path);
    uint32_t version = read_le<uint32_t>(in);
    if (version != kParamVersion)
        throw VersionMismatch("parameter file version " + std::to_string(version));
    NetworkParams params;
    params.num_classes = static_cast<int>(read_le<uint32_t>(in));
    auto read_mlp = [&in, &path](bool output_linear) {
        Mlp mlp;
        mlp.output_linear = output_linear;
        uint32_t layers = read_le<uint32_t>(in);
        if (layers == 0 || layers > 64) throw CorruptFile("bad layer count: " + path);
        std::vector<int> widths{static_cast<int>(read_le<uint32_t>(in))};
        for (uint32_t i = 0; i < layers; ++i)
            widths.push_back(static_cast<int>(read_le<uint32_t>(in)));
        for (int w : widths)
            if (w < 1 || w > (1 << 20)) throw CorruptFile("bad width: " + path);
        for (uint32_t i = 0; i < layers; ++i) {
            Matrix w(widths[i + 1], widths[i]);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = read_le<double>(in);
            Vector b(widths[i + 1]);
            for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = read_le<double>(in);
            mlp.weights.push_back(std::move(w));
            mlp.biases.push_back(std::move(b));
        }
        return mlp;
    };
    params.fg_mlp = read_mlp(false);
    params.weight_head = read_mlp(true);
    params.env_mlp = read_mlp(false);
    params.fusion = read_mlp(true);
    char extra;
    if (in.get(extra)) throw CorruptFile("trailing bytes: " + path);
    params.shape().validate(params.num_classes);
    return params;
}

inline NetworkParams load_params(const std::string& path, int expected_num_classes) {
    NetworkParams params = load_params(path);
    if (params.num_classes != expected_num_classes)
        throw VersionMismatch("parameter file built for Z=" +
                              std::to_string(params.num_classes) + ", expected Z=" +
                              std::to_string(expected_num_classes));
    return params;
}

}  // namespace mots
