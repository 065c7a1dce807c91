#pragma once

// Network description shared by the spiking and ReLU paths.
//
// Weights are stored per layer in row-major order:
//   conv: [out_channels][in_channels][kernel_h][kernel_w]
//   fc:   [out_features][in_features]
// Layers carry no bias. Pooling is an attribute of a conv layer and is applied
// to its activations (spikes or ReLU outputs) before the next layer.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <tripwire/error.hpp>

namespace tripwire::snn {

enum class layer_kind { conv, fc };
enum class net_mode { spiking, relu };

inline constexpr int max_layers = 9;
inline constexpr std::size_t max_neurons = 328'000;

struct shape3 {
    int c = 0;
    int h = 1;
    int w = 1;

    std::size_t size() const { return std::size_t(c)*h*w; }
    friend bool operator==(const shape3&, const shape3&) = default;
};

template <typename Real>
struct basic_layer_spec {
    layer_kind kind = layer_kind::conv;
    int in_channels = 0;     // in_features for fc
    int out_channels = 0;    // out_features for fc
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    int padding = 0;
    int pool = 1;
    Real threshold = 1;
    std::vector<Real> weights;

    std::size_t weight_count() const {
        return kind == layer_kind::conv
            ? std::size_t(out_channels)*in_channels*kernel_h*kernel_w
            : std::size_t(out_channels)*in_channels;
    }
};

template <typename Real>
struct basic_network_spec {
    shape3 input{2, 128, 128};
    std::vector<basic_layer_spec<Real>> layers;
    net_mode mode = net_mode::spiking;
};

using layer_spec = basic_layer_spec<float>;
using network_spec = basic_network_spec<float>;

template <typename To, typename From>
basic_network_spec<To> convert_spec(const basic_network_spec<From>& src) {
    basic_network_spec<To> out;
    out.input = src.input;
    out.mode = src.mode;
    for (const auto& l: src.layers) {
        basic_layer_spec<To> d;
        d.kind = l.kind;
        d.in_channels = l.in_channels;
        d.out_channels = l.out_channels;
        d.kernel_h = l.kernel_h;
        d.kernel_w = l.kernel_w;
        d.stride = l.stride;
        d.padding = l.padding;
        d.pool = l.pool;
        d.threshold = To(l.threshold);
        d.weights.assign(l.weights.begin(), l.weights.end());
        out.layers.push_back(std::move(d));
    }
    return out;
}

inline basic_layer_spec<float> conv_layer(int in, int out, int k, int stride, int pad, int pool) {
    basic_layer_spec<float> l;
    l.kind = layer_kind::conv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_h = l.kernel_w = k;
    l.stride = stride;
    l.padding = pad;
    l.pool = pool;
    l.weights.assign(l.weight_count(), 0.f);
    return l;
}

inline basic_layer_spec<float> fc_layer(int in, int out) {
    basic_layer_spec<float> l;
    l.kind = layer_kind::fc;
    l.in_channels = in;
    l.out_channels = out;
    l.weights.assign(l.weight_count(), 0.f);
    return l;
}

// Shapes seen by one layer. `out` is the pre-pool activation shape, `pooled`
// what the next layer receives. fc shapes are (features, 1, 1).
struct layer_geometry {
    shape3 in;
    shape3 out;
    shape3 pooled;
};

struct violation {
    std::string what;
    double quantity = 0;
};

namespace detail {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2*pad - k)/stride + 1;
}

// Shape propagation; records problems instead of throwing.
template <typename Real>
std::vector<layer_geometry> propagate(const basic_network_spec<Real>& spec, std::vector<violation>* problems) {
    std::vector<layer_geometry> geo;
    shape3 cur = spec.input;
    bool flat = false;
    auto fail = [&](std::size_t i, const std::string& msg, double q) {
        if (problems) problems->push_back({"layer " + std::to_string(i) + ": " + msg, q});
    };

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const auto& l = spec.layers[i];
        layer_geometry g;
        g.in = cur;
        if (l.weights.size() != l.weight_count()) {
            fail(i, "weight array holds " + std::to_string(l.weights.size()) + " values, expected " +
                std::to_string(l.weight_count()), double(l.weights.size()));
        }
        if (spec.mode == net_mode::spiking && !(l.threshold > 0)) {
            fail(i, "threshold must be positive", double(l.threshold));
        }
        if (l.kind == layer_kind::conv) {
            if (flat) fail(i, "conv layer after flatten", 0);
            if (l.in_channels != cur.c) {
                fail(i, "shape mismatch: in_channels " + std::to_string(l.in_channels) + " but input has " +
                    std::to_string(cur.c), l.in_channels);
            }
            if (l.kernel_h <= 0 || l.kernel_w <= 0 || l.stride <= 0 || l.padding < 0 || l.out_channels <= 0) {
                fail(i, "invalid conv parameters", 0);
                return geo;
            }
            const int oh = conv_out_dim(cur.h, l.kernel_h, l.stride, l.padding);
            const int ow = conv_out_dim(cur.w, l.kernel_w, l.stride, l.padding);
            if (oh <= 0 || ow <= 0) {
                fail(i, "shape mismatch: kernel larger than padded input", 0);
                return geo;
            }
            g.out = {l.out_channels, oh, ow};
            if (l.pool < 1 || oh % l.pool != 0 || ow % l.pool != 0) {
                fail(i, "pool factor " + std::to_string(l.pool) + " does not divide " + std::to_string(oh) + "x" +
                    std::to_string(ow), l.pool);
                g.pooled = g.out;
            }
            else {
                g.pooled = {l.out_channels, oh/l.pool, ow/l.pool};
            }
        }
        else {
            if (l.pool != 1) fail(i, "pooling on a fully connected layer", l.pool);
            const auto flat_in = int(cur.size());
            if (l.in_channels != flat_in) {
                fail(i, "shape mismatch: in_features " + std::to_string(l.in_channels) + " but input has " +
                    std::to_string(flat_in), l.in_channels);
            }
            if (l.out_channels <= 0) {
                fail(i, "invalid fc parameters", 0);
                return geo;
            }
            g.in = {flat_in, 1, 1};
            g.out = g.pooled = {l.out_channels, 1, 1};
            flat = true;
        }
        geo.push_back(g);
        cur = g.pooled;
    }
    return geo;
}

} // namespace detail

// Throws config_error if the layers do not compose.
template <typename Real>
std::vector<layer_geometry> geometry(const basic_network_spec<Real>& spec) {
    std::vector<violation> problems;
    auto geo = detail::propagate(spec, &problems);
    if (!problems.empty()) throw config_error(problems.front().what);
    return geo;
}

// Sum of all layers' pre-pool output element counts.
template <typename Real>
std::size_t neuron_count(const basic_network_spec<Real>& spec) {
    std::size_t n = 0;
    for (const auto& g: detail::propagate(spec, nullptr)) n += g.out.size();
    return n;
}

// Reports every violated hardware or shape constraint; empty means ok.
template <typename Real>
std::vector<violation> validate_network(const basic_network_spec<Real>& spec) {
    std::vector<violation> out;
    if (spec.input.c <= 0 || spec.input.h <= 0 || spec.input.w <= 0) {
        out.push_back({"input shape must be positive", 0});
        return out;
    }
    if (spec.layers.empty()) out.push_back({"network has no layers", 0});
    if (spec.layers.size() > std::size_t(max_layers)) {
        out.push_back({"layer count " + std::to_string(spec.layers.size()) + " > " + std::to_string(max_layers),
                       double(spec.layers.size())});
    }
    auto geo = detail::propagate(spec, &out);
    std::size_t neurons = 0;
    for (const auto& g: geo) neurons += g.out.size();
    if (neurons > max_neurons) {
        out.push_back({"neuron budget: " + std::to_string(neurons) + " > " + std::to_string(max_neurons),
                       double(neurons)});
    }
    return out;
}

// FLOPs for one inference: 2 per multiply-accumulate, plus one per activation
// output element and one per pooled output element.
template <typename Real>
double count_flops(const basic_network_spec<Real>& spec) {
    const auto geo = geometry(spec);
    double flops = 0;
    for (std::size_t i = 0; i < geo.size(); ++i) {
        const auto& l = spec.layers[i];
        const auto& g = geo[i];
        double macs = l.kind == layer_kind::conv
            ? double(l.kernel_h)*l.kernel_w*l.in_channels*l.out_channels*g.out.h*g.out.w
            : double(l.in_channels)*l.out_channels;
        flops += 2*macs + double(g.out.size());
        if (l.pool > 1) flops += double(g.pooled.size());
    }
    return flops;
}

// Four 3x3 convolutions (sum-pooled by 2 after the first three), then four
// fully connected layers down to two outputs. Works for any input whose
// sides are divisible by 8. Weights are zero.
inline network_spec default_architecture(int height, int width, net_mode mode) {
    if (height <= 0 || width <= 0 || height % 8 || width % 8) {
        throw config_error("default architecture needs input sides divisible by 8");
    }
    network_spec s;
    s.mode = mode;
    const int in_c = mode == net_mode::spiking ? 2 : 1;
    s.input = {in_c, height, width};
    s.layers.push_back(conv_layer(in_c, 4, 3, 1, 1, 2));
    s.layers.push_back(conv_layer(4, 8, 3, 1, 1, 2));
    s.layers.push_back(conv_layer(8, 8, 3, 1, 1, 2));
    s.layers.push_back(conv_layer(8, 8, 3, 1, 1, 1));
    const int flat = 8*(height/8)*(width/8);
    s.layers.push_back(fc_layer(flat, 256));
    s.layers.push_back(fc_layer(256, 64));
    s.layers.push_back(fc_layer(64, 16));
    s.layers.push_back(fc_layer(16, 2));
    return s;
}

inline std::size_t fan_in(const layer_spec& l) {
    return l.kind == layer_kind::conv ? std::size_t(l.in_channels)*l.kernel_h*l.kernel_w : std::size_t(l.in_channels);
}

// Kaiming-style normal init with std = gain*sqrt(2/fan_in); thresholds reset to 1.
inline void init_weights(network_spec& spec, std::uint64_t seed, double gain = 1.0) {
    std::mt19937_64 rng(seed);
    for (auto& l: spec.layers) {
        std::normal_distribution<double> d(0.0, gain*std::sqrt(2.0/double(fan_in(l))));
        l.weights.resize(l.weight_count());
        for (auto& w: l.weights) w = float(d(rng));
        l.threshold = 1.f;
    }
}

} // namespace tripwire::snn
