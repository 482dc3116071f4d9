#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bosc/common.hpp"
#include "bosc/rng.hpp"
#include "bosc/tensor.hpp"

// Minimal deterministic neural-network engine: forward pass, reverse-mode
// gradients, weighted cross-entropy, Adam, and the step learning-rate
// schedule. Enough to train a small convolutional classifier with N+1
// outputs; no graphs, no GPU, no threading inside a batch.
namespace bosc::nn {

enum class LayerKind { Conv, ReLU, MaxPool, Dense };

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

inline LayerKind layer_kind_from_name(const std::string& s) {
    if (s == "conv") return LayerKind::Conv;
    if (s == "relu") return LayerKind::ReLU;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "dense") return LayerKind::Dense;
    fail(Errc::format_error, "unknown layer kind: " + s);
}

struct LayerDesc {
    LayerKind kind = LayerKind::ReLU;
    int out_ch = 0;  // Conv
    int kernel = 0;  // Conv
    int stride = 1;  // Conv
    int pad = 0;     // Conv
    int units = 0;   // Dense

    static LayerDesc conv(int out_ch, int kernel, int stride, int pad) {
        LayerDesc d;
        d.kind = LayerKind::Conv;
        d.out_ch = out_ch;
        d.kernel = kernel;
        d.stride = stride;
        d.pad = pad;
        return d;
    }
    static LayerDesc relu() { return LayerDesc{}; }
    static LayerDesc maxpool() {
        LayerDesc d;
        d.kind = LayerKind::MaxPool;
        return d;
    }
    static LayerDesc dense(int units) {
        LayerDesc d;
        d.kind = LayerKind::Dense;
        d.units = units;
        return d;
    }
};

template <typename T>
struct Classifier {
    std::array<int, 3> input_shape{0, 0, 0};  // C,H,W
    std::vector<LayerDesc> layers;
    std::vector<Tensor<T>> weights;  // parallel to layers, empty for non-parametric ones
    std::vector<Tensor<T>> biases;
    std::vector<std::array<int, 3>> out_shapes;  // per layer; dense outputs are {units,1,1}
    int num_outputs = 0;                         // N+1

    int num_classes() const { return num_outputs - 1; }
};

using ClassifierF = Classifier<float>;
using ClassifierD = Classifier<double>;

struct ModelConfig {
    std::array<int, 3> input_shape{3, 32, 32};
    std::vector<int> conv_channels{8, 16};
    int kernel = 3;
    int dense_hidden = 64;  // 0 = linear readout; a hidden layer lets the
                            // head form trigger/class conjunction features
    int num_outputs = 6;    // N+1
};

namespace detail {

inline std::array<int, 3> conv_out_shape(const std::array<int, 3>& in, const LayerDesc& d) {
    const int h = (in[1] + 2 * d.pad - d.kernel) / d.stride + 1;
    const int w = (in[2] + 2 * d.pad - d.kernel) / d.stride + 1;
    if (h <= 0 || w <= 0) fail(Errc::invalid_config, "conv layer collapses spatial dims");
    return {d.out_ch, h, w};
}

}  // namespace detail

// Builds the layer/shape chain with zeroed parameters.
template <typename T>
Classifier<T> assemble_classifier(std::array<int, 3> input_shape, std::vector<LayerDesc> layers) {
    Classifier<T> m;
    m.input_shape = input_shape;
    m.layers = std::move(layers);
    if (m.layers.empty() || m.layers.back().kind != LayerKind::Dense)
        fail(Errc::invalid_config, "classifier must end with a dense layer");
    std::array<int, 3> cur = input_shape;
    for (const LayerDesc& d : m.layers) {
        switch (d.kind) {
            case LayerKind::Conv:
                m.weights.push_back(Tensor<T>({d.out_ch, cur[0], d.kernel, d.kernel}));
                m.biases.push_back(Tensor<T>({d.out_ch}));
                cur = detail::conv_out_shape(cur, d);
                break;
            case LayerKind::ReLU:
                m.weights.emplace_back();
                m.biases.emplace_back();
                break;
            case LayerKind::MaxPool:
                m.weights.emplace_back();
                m.biases.emplace_back();
                cur = {cur[0], cur[1] / 2, cur[2] / 2};
                if (cur[1] == 0 || cur[2] == 0) fail(Errc::invalid_config, "maxpool collapses spatial dims");
                break;
            case LayerKind::Dense: {
                const int in_features = cur[0] * cur[1] * cur[2];
                m.weights.push_back(Tensor<T>({d.units, in_features}));
                m.biases.push_back(Tensor<T>({d.units}));
                cur = {d.units, 1, 1};
                break;
            }
        }
        m.out_shapes.push_back(cur);
    }
    m.num_outputs = m.layers.back().units;
    return m;
}

// Fan-in-scaled uniform init, deterministic in the rng stream.
template <typename T>
void init_params(Classifier<T>& m, Rng& rng) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        if (m.weights[i].numel() == 0) continue;
        std::int64_t fan_in = 1;
        for (std::size_t d = 1; d < m.weights[i].shape.size(); ++d) fan_in *= m.weights[i].shape[d];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : m.weights[i].data) v = static_cast<T>(rng.uniform(-bound, bound));
        for (auto& v : m.biases[i].data) v = static_cast<T>(rng.uniform(-bound, bound));
    }
}

template <typename T>
Classifier<T> build_classifier(const ModelConfig& cfg, Rng& rng) {
    if (cfg.num_outputs < 2) fail(Errc::invalid_config, "classifier needs at least 2 outputs");
    std::vector<LayerDesc> layers;
    for (int ch : cfg.conv_channels) {
        layers.push_back(LayerDesc::conv(ch, cfg.kernel, 1, cfg.kernel / 2));
        layers.push_back(LayerDesc::relu());
        layers.push_back(LayerDesc::maxpool());
    }
    if (cfg.dense_hidden > 0) {
        layers.push_back(LayerDesc::dense(cfg.dense_hidden));
        layers.push_back(LayerDesc::relu());
    }
    layers.push_back(LayerDesc::dense(cfg.num_outputs));
    auto m = assemble_classifier<T>(cfg.input_shape, std::move(layers));
    init_params(m, rng);
    return m;
}

template <typename T>
struct ForwardTrace {
    std::vector<Tensor<T>> acts;                       // acts[0] = input, acts[i+1] = output of layer i
    std::vector<std::vector<std::int64_t>> pool_argmax;  // per layer, flat input indices
};

namespace detail {

template <typename T>
void conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, const LayerDesc& d,
                  const std::array<int, 3>& out_shape, Tensor<T>& out) {
    const int batch = x.shape[0];
    const int in_ch = x.shape[1], in_h = x.shape[2], in_w = x.shape[3];
    const int out_ch = out_shape[0], out_h = out_shape[1], out_w = out_shape[2];
    const int k = d.kernel, s = d.stride, p = d.pad;
    for (int n = 0; n < batch; ++n) {
        const T* xb = x.data.data() + static_cast<std::size_t>(n) * in_ch * in_h * in_w;
        T* ob = out.data.data() + static_cast<std::size_t>(n) * out_ch * out_h * out_w;
        for (int oc = 0; oc < out_ch; ++oc) {
            T* oplane = ob + static_cast<std::size_t>(oc) * out_h * out_w;
            const T bias = b.data[oc];
            for (int i = 0; i < out_h * out_w; ++i) oplane[i] = bias;
            for (int ic = 0; ic < in_ch; ++ic) {
                const T* xplane = xb + static_cast<std::size_t>(ic) * in_h * in_w;
                const T* wk = w.data.data() + ((static_cast<std::size_t>(oc) * in_ch + ic) * k) * k;
                for (int oy = 0; oy < out_h; ++oy) {
                    for (int ox = 0; ox < out_w; ++ox) {
                        T acc = 0;
                        const int iy0 = oy * s - p, ix0 = ox * s - p;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            const T* xrow = xplane + static_cast<std::size_t>(iy) * in_w;
                            const T* wrow = wk + static_cast<std::size_t>(ky) * k;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= in_w) continue;
                                acc += wrow[kx] * xrow[ix];
                            }
                        }
                        oplane[oy * out_w + ox] += acc;
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const LayerDesc& d,
                   const std::array<int, 3>& out_shape, const Tensor<T>& dout, Tensor<T>& dx,
                   Tensor<T>& dw, Tensor<T>& db) {
    const int batch = x.shape[0];
    const int in_ch = x.shape[1], in_h = x.shape[2], in_w = x.shape[3];
    const int out_ch = out_shape[0], out_h = out_shape[1], out_w = out_shape[2];
    const int k = d.kernel, s = d.stride, p = d.pad;
    for (int n = 0; n < batch; ++n) {
        const T* xb = x.data.data() + static_cast<std::size_t>(n) * in_ch * in_h * in_w;
        const T* gb = dout.data.data() + static_cast<std::size_t>(n) * out_ch * out_h * out_w;
        T* dxb = dx.data.data() + static_cast<std::size_t>(n) * in_ch * in_h * in_w;
        for (int oc = 0; oc < out_ch; ++oc) {
            const T* gplane = gb + static_cast<std::size_t>(oc) * out_h * out_w;
            T dbias = 0;
            for (int i = 0; i < out_h * out_w; ++i) dbias += gplane[i];
            db.data[oc] += dbias;
            for (int ic = 0; ic < in_ch; ++ic) {
                const T* xplane = xb + static_cast<std::size_t>(ic) * in_h * in_w;
                T* dxplane = dxb + static_cast<std::size_t>(ic) * in_h * in_w;
                T* dwk = dw.data.data() + ((static_cast<std::size_t>(oc) * in_ch + ic) * k) * k;
                const T* wk = w.data.data() + ((static_cast<std::size_t>(oc) * in_ch + ic) * k) * k;
                for (int oy = 0; oy < out_h; ++oy) {
                    for (int ox = 0; ox < out_w; ++ox) {
                        const T g = gplane[oy * out_w + ox];
                        if (g == T(0)) continue;
                        const int iy0 = oy * s - p, ix0 = ox * s - p;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= in_h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= in_w) continue;
                                dwk[ky * k + kx] += g * xplane[iy * in_w + ix];
                                dxplane[iy * in_w + ix] += g * wk[ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Forward pass with optional trace capture; pure function of (weights, input).
template <typename T>
Tensor<T> forward_trace(const Classifier<T>& m, const Tensor<T>& batch, ForwardTrace<T>* trace) {
    if (batch.shape.size() != 4 || batch.shape[1] != m.input_shape[0] ||
        batch.shape[2] != m.input_shape[1] || batch.shape[3] != m.input_shape[2]) {
        fail(Errc::invalid_shape, "input batch shape " + batch.shape_str() + " does not match model input");
    }
    const int n = batch.shape[0];
    if (trace) {
        trace->acts.clear();
        trace->pool_argmax.assign(m.layers.size(), {});
        trace->acts.push_back(batch);
    }
    Tensor<T> cur = batch;
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        const LayerDesc& d = m.layers[li];
        const auto& os = m.out_shapes[li];
        Tensor<T> out;
        switch (d.kind) {
            case LayerKind::Conv: {
                out = Tensor<T>({n, os[0], os[1], os[2]});
                detail::conv_forward(cur, m.weights[li], m.biases[li], d, os, out);
                break;
            }
            case LayerKind::ReLU: {
                out = cur;
                for (auto& v : out.data)
                    if (v < T(0)) v = T(0);
                break;
            }
            case LayerKind::MaxPool: {
                const int ch = cur.shape[1], ih = cur.shape[2], iw = cur.shape[3];
                const int oh = os[1], ow = os[2];
                out = Tensor<T>({n, ch, oh, ow});
                std::vector<std::int64_t>* argmax = nullptr;
                if (trace) {
                    trace->pool_argmax[li].assign(out.data.size(), 0);
                    argmax = &trace->pool_argmax[li];
                }
                for (int b = 0; b < n; ++b) {
                    for (int c = 0; c < ch; ++c) {
                        const std::size_t ibase = (static_cast<std::size_t>(b) * ch + c) * ih * iw;
                        const std::size_t obase = (static_cast<std::size_t>(b) * ch + c) * oh * ow;
                        for (int oy = 0; oy < oh; ++oy) {
                            for (int ox = 0; ox < ow; ++ox) {
                                std::int64_t best_idx = ibase + (2 * oy) * iw + 2 * ox;
                                T best = cur.data[best_idx];
                                for (int dy = 0; dy < 2; ++dy) {
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const std::int64_t idx = ibase + (2 * oy + dy) * iw + (2 * ox + dx);
                                        if (cur.data[idx] > best) {
                                            best = cur.data[idx];
                                            best_idx = idx;
                                        }
                                    }
                                }
                                out.data[obase + oy * ow + ox] = best;
                                if (argmax) (*argmax)[obase + oy * ow + ox] = best_idx;
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::Dense: {
                const int in_features = m.weights[li].shape[1];
                const int units = d.units;
                out = Tensor<T>({n, units, 1, 1});
                for (int b = 0; b < n; ++b) {
                    const T* xb = cur.data.data() + static_cast<std::size_t>(b) * in_features;
                    T* ob = out.data.data() + static_cast<std::size_t>(b) * units;
                    for (int u = 0; u < units; ++u) {
                        const T* wrow = m.weights[li].data.data() + static_cast<std::size_t>(u) * in_features;
                        T acc = m.biases[li].data[u];
                        for (int f = 0; f < in_features; ++f) acc += wrow[f] * xb[f];
                        ob[u] = acc;
                    }
                }
                break;
            }
        }
        cur = std::move(out);
        if (trace) trace->acts.push_back(cur);
    }
    Tensor<T> logits;
    logits.shape = {n, m.num_outputs};
    logits.data = cur.data;
    return logits;
}

// Pre-softmax logits, {B, N+1}.
template <typename T>
Tensor<T> forward(const Classifier<T>& m, const Tensor<T>& batch) {
    return forward_trace(m, batch, static_cast<ForwardTrace<T>*>(nullptr));
}

// Max-subtracted softmax; rejects non-finite input.
template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
    if (logits.empty()) fail(Errc::invalid_argument, "softmax of empty vector");
    T mx = logits[0];
    for (T v : logits) {
        if (!std::isfinite(static_cast<double>(v))) fail(Errc::numeric_error, "softmax input not finite");
        if (v > mx) mx = v;
    }
    std::vector<T> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double e = std::exp(static_cast<double>(logits[i] - mx));
        out[i] = static_cast<T>(e);
        sum += e;
    }
    for (auto& v : out) v = static_cast<T>(static_cast<double>(v) / sum);
    return out;
}

template <typename T>
struct Gradients {
    std::vector<Tensor<T>> weights, biases;

    static Gradients zeros_like(const Classifier<T>& m) {
        Gradients g;
        for (std::size_t i = 0; i < m.layers.size(); ++i) {
            Tensor<T> w, b;
            w.shape = m.weights[i].shape;
            w.data.assign(m.weights[i].data.size(), T(0));
            b.shape = m.biases[i].shape;
            b.data.assign(m.biases[i].data.size(), T(0));
            g.weights.push_back(std::move(w));
            g.biases.push_back(std::move(b));
        }
        return g;
    }
};

template <typename T>
struct CeResult {
    double loss = 0.0;
    Tensor<T> logits;  // {B, N+1}, kept for loss-term bookkeeping
    Gradients<T> grads;
};

// loss = sum_s weights[s] * (-log softmax(forward(x_s))[target_s]); grads are
// the exact reverse-mode derivatives. Targets are 1-based (1..N+1).
template <typename T>
CeResult<T> weighted_ce_grad(const Classifier<T>& m, const Tensor<T>& batch,
                             const std::vector<int>& targets, const std::vector<double>& sample_weights) {
    const int n = batch.shape.empty() ? 0 : batch.shape[0];
    if (static_cast<int>(targets.size()) != n || static_cast<int>(sample_weights.size()) != n)
        fail(Errc::invalid_argument, "targets/weights size does not match batch");
    for (int t : targets)
        if (t < 1 || t > m.num_outputs) fail(Errc::invalid_label, "target out of range: " + std::to_string(t));

    ForwardTrace<T> trace;
    Tensor<T> logits = forward_trace(m, batch, &trace);

    CeResult<T> res;
    res.grads = Gradients<T>::zeros_like(m);

    // dL/dlogits and the loss itself.
    Tensor<T> dlogits({n, m.num_outputs, 1, 1});
    for (int s = 0; s < n; ++s) {
        const T* row = logits.data.data() + static_cast<std::size_t>(s) * m.num_outputs;
        double mx = row[0];
        for (int j = 1; j < m.num_outputs; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < m.num_outputs; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        const double lse = mx + std::log(sum);
        const int tgt = targets[s] - 1;
        const double w = sample_weights[s];
        res.loss += w * (lse - static_cast<double>(row[tgt]));
        T* drow = dlogits.data.data() + static_cast<std::size_t>(s) * m.num_outputs;
        for (int j = 0; j < m.num_outputs; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - lse);
            drow[j] = static_cast<T>(w * (p - (j == tgt ? 1.0 : 0.0)));
        }
    }

    res.logits = logits;

    // Reverse pass.
    Tensor<T> grad = std::move(dlogits);
    for (int li = static_cast<int>(m.layers.size()) - 1; li >= 0; --li) {
        const LayerDesc& d = m.layers[li];
        const Tensor<T>& input = trace.acts[li];
        Tensor<T> dinput;
        switch (d.kind) {
            case LayerKind::Conv: {
                dinput = Tensor<T>(input.shape);
                detail::conv_backward(input, m.weights[li], d, m.out_shapes[li], grad, dinput,
                                      res.grads.weights[li], res.grads.biases[li]);
                break;
            }
            case LayerKind::ReLU: {
                dinput = grad;
                for (std::size_t i = 0; i < input.data.size(); ++i)
                    if (input.data[i] <= T(0)) dinput.data[i] = T(0);
                dinput.shape = input.shape;
                break;
            }
            case LayerKind::MaxPool: {
                dinput = Tensor<T>(input.shape);
                const auto& argmax = trace.pool_argmax[li];
                for (std::size_t i = 0; i < grad.data.size(); ++i)
                    dinput.data[argmax[i]] += grad.data[i];
                break;
            }
            case LayerKind::Dense: {
                const int in_features = m.weights[li].shape[1];
                const int units = d.units;
                dinput = Tensor<T>(input.shape);
                for (int b = 0; b < n; ++b) {
                    const T* xb = input.data.data() + static_cast<std::size_t>(b) * in_features;
                    const T* gb = grad.data.data() + static_cast<std::size_t>(b) * units;
                    T* dxb = dinput.data.data() + static_cast<std::size_t>(b) * in_features;
                    for (int u = 0; u < units; ++u) {
                        const T g = gb[u];
                        res.grads.biases[li].data[u] += g;
                        T* dwrow = res.grads.weights[li].data.data() + static_cast<std::size_t>(u) * in_features;
                        const T* wrow = m.weights[li].data.data() + static_cast<std::size_t>(u) * in_features;
                        for (int f = 0; f < in_features; ++f) {
                            dwrow[f] += g * xb[f];
                            dxb[f] += g * wrow[f];
                        }
                    }
                }
                break;
            }
        }
        grad = std::move(dinput);
    }
    return res;
}

struct LossConfig {
    double lambda1 = 0.1;  // matched-tainted term weight
    double lambda2 = 0.1;  // mismatched-tainted term weight

    void validate() const {
        if (lambda1 < 0 || lambda2 < 0) fail(Errc::invalid_config, "loss weights must be >= 0");
    }
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct OptimState {
    Gradients<T> m, v;
    long step = 0;
    double base_lr = 1e-4;
    AdamConfig adam;

    static OptimState make(const Classifier<T>& model, double base_lr, AdamConfig cfg = {}) {
        OptimState s;
        s.m = Gradients<T>::zeros_like(model);
        s.v = Gradients<T>::zeros_like(model);
        s.base_lr = base_lr;
        s.adam = cfg;
        return s;
    }
};

namespace detail {

template <typename T>
void adam_update(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v,
                 const AdamConfig& cfg, double lr, double bc1, double bc2) {
    for (std::size_t i = 0; i < param.data.size(); ++i) {
        const double g = grad.data[i];
        const double mi = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
        const double vi = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
        m.data[i] = static_cast<T>(mi);
        v.data[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        param.data[i] = static_cast<T>(param.data[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

}  // namespace detail

// Bias-corrected Adam step, in place.
template <typename T>
void optimizer_step(Classifier<T>& model, const Gradients<T>& grads, OptimState<T>& state, double lr) {
    if (grads.weights.size() != model.weights.size())
        fail(Errc::invalid_shape, "gradient/model layer count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.adam.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.adam.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < model.weights.size(); ++i) {
        if (model.weights[i].numel() == 0) continue;
        if (!grads.weights[i].same_shape(model.weights[i]))
            fail(Errc::invalid_shape, "gradient shape mismatch at layer " + std::to_string(i));
        detail::adam_update(model.weights[i], grads.weights[i], state.m.weights[i], state.v.weights[i],
                            state.adam, lr, bc1, bc2);
        detail::adam_update(model.biases[i], grads.biases[i], state.m.biases[i], state.v.biases[i],
                            state.adam, lr, bc1, bc2);
    }
}

// base_lr * 0.1^floor(epoch/5)
inline double lr_schedule(int epoch, double base_lr) {
    if (epoch < 0) fail(Errc::invalid_argument, "negative epoch");
    return base_lr * std::pow(0.1, epoch / 5);
}

template <typename T>
std::int64_t num_params(const Classifier<T>& m) {
    std::int64_t n = 0;
    for (std::size_t i = 0; i < m.weights.size(); ++i) n += m.weights[i].numel() + m.biases[i].numel();
    return n;
}

}  // namespace bosc::nn
