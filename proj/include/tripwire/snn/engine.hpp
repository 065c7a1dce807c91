#pragma once

// Time-stepped spiking inference and the single-pass ReLU equivalent.
//
// Per time step every layer computes its synaptic drive from the spikes (or
// input counts) it receives, integrates it into the membrane, emits MultiSpike
// counts, and sum-pools them for the next layer. Synaptic operations are
// counted as received spikes times their fan-out.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>
#include <tripwire/snn/layers.hpp>
#include <tripwire/snn/network.hpp>
#include <tripwire/snn/spike_fn.hpp>

namespace tripwire::snn {

enum class spike_mode { hard, soft };

struct engine_options {
    // Membrane floor as a multiple of each layer's threshold; -inf disables it.
    double clamp_factor = -1.0;
    spike_mode mode = spike_mode::hard;
    double surrogate_beta = 10.0;   // soft mode only
};

// Everything the backward pass needs, per layer, laid out [step][element].
template <typename Real>
struct spike_tape {
    int steps = 0;
    std::vector<std::vector<Real>> input;          // what the layer received
    std::vector<std::vector<Real>> membrane;       // clamped, before reset
    std::vector<std::vector<std::uint8_t>> open;   // 1 where the clamp was inactive
    std::vector<std::vector<Real>> spikes;         // pre-pool
};

template <typename Real>
struct spike_run {
    std::vector<std::array<Real, 2>> output;    // per step
    std::vector<double> sops_per_layer;
    std::vector<double> spikes_per_layer;       // pre-pool totals
};

template <typename Real>
class spiking_net {
public:
    spiking_net(const basic_network_spec<Real>& spec, engine_options opt = {}):
        spec_(spec), opt_(opt), geo_(geometry(spec))
    {
        if (spec.mode != net_mode::spiking) throw config_error("spiking_net needs a spiking-mode spec");
        if (geo_.empty() || geo_.back().pooled.size() != 2) throw config_error("network must end in 2 output neurons");
        for (std::size_t l = 0; l < geo_.size(); ++l) {
            fanout_.push_back(fanout(spec.layers[l], geo_[l]));
        }
    }

    const std::vector<layer_geometry>& layers() const { return geo_; }
    const std::vector<std::uint32_t>& layer_fanout(std::size_t l) const { return fanout_[l]; }
    const basic_network_spec<Real>& spec() const { return spec_; }
    const engine_options& options() const { return opt_; }

    Real clamp_min(std::size_t l) const {
        if (std::isinf(opt_.clamp_factor)) return -std::numeric_limits<Real>::infinity();
        return Real(opt_.clamp_factor)*spec_.layers[l].threshold;
    }

    // Runs `steps` steps from a fresh state. fill_input(t, dst) writes the
    // dense layer-0 input of step t.
    spike_run<Real> run(int steps, const std::function<void(int, std::span<Real>)>& fill_input,
                        spike_tape<Real>* tape = nullptr) const
    {
        const std::size_t L = geo_.size();
        std::vector<std::vector<Real>> membrane(L), pooled(L), drive(L), spikes(L);
        for (std::size_t l = 0; l < L; ++l) {
            membrane[l].assign(geo_[l].out.size(), Real(0));
            drive[l].resize(geo_[l].out.size());
            spikes[l].resize(geo_[l].out.size());
            pooled[l].resize(geo_[l].pooled.size());
        }
        std::vector<Real> input(geo_[0].in.size());
        std::vector<std::uint32_t> nz;

        if (tape) {
            tape->steps = steps;
            tape->input.resize(L);
            tape->membrane.resize(L);
            tape->open.resize(L);
            tape->spikes.resize(L);
            for (std::size_t l = 0; l < L; ++l) {
                tape->input[l].resize(std::size_t(steps)*geo_[l].in.size());
                tape->membrane[l].resize(std::size_t(steps)*geo_[l].out.size());
                tape->open[l].resize(std::size_t(steps)*geo_[l].out.size());
                tape->spikes[l].resize(std::size_t(steps)*geo_[l].out.size());
            }
        }

        spike_run<Real> res;
        res.output.resize(steps);
        res.sops_per_layer.assign(L, 0.0);
        res.spikes_per_layer.assign(L, 0.0);

        for (int t = 0; t < steps; ++t) {
            std::fill(input.begin(), input.end(), Real(0));
            fill_input(t, input);
            for (std::size_t l = 0; l < L; ++l) {
                const auto& layer = spec_.layers[l];
                const auto& g = geo_[l];
                std::span<const Real> x = l == 0 ? std::span<const Real>(input) : std::span<const Real>(pooled[l - 1]);

                detail::nonzeros(x, nz);
                double sops = 0;
                for (auto i: nz) sops += double(x[i])*fanout_[l][i];
                res.sops_per_layer[l] += sops;

                std::fill(drive[l].begin(), drive[l].end(), Real(0));
                detail::scatter_forward(layer, g, x, nz, std::span<Real>(drive[l]));

                const Real theta = layer.threshold;
                const Real floor_v = clamp_min(l);
                const Real beta = Real(opt_.surrogate_beta);
                auto& v = membrane[l];
                for (std::size_t j = 0; j < v.size(); ++j) {
                    if (!std::isfinite(drive[l][j])) throw numeric_error("non-finite synaptic drive");
                    Real u = v[j] + drive[l][j];
                    const bool open = u > floor_v;
                    if (!open) u = floor_v;
                    const Real n = opt_.mode == spike_mode::hard ? hard_spike(u, theta) : soft_spike(u, theta, beta);
                    v[j] = u - n*theta;
                    spikes[l][j] = n;
                    if (tape) {
                        const std::size_t k = std::size_t(t)*v.size() + j;
                        tape->membrane[l][k] = u;
                        tape->open[l][k] = open;
                        tape->spikes[l][k] = n;
                    }
                    res.spikes_per_layer[l] += double(n);
                }
                if (tape) {
                    std::copy(x.begin(), x.end(), tape->input[l].begin() + std::size_t(t)*x.size());
                }
                detail::sum_pool_into(std::span<const Real>(spikes[l]), g.out, layer.pool, std::span<Real>(pooled[l]));
            }
            res.output[t] = {pooled[L - 1][0], pooled[L - 1][1]};
        }
        return res;
    }

private:
    basic_network_spec<Real> spec_;
    engine_options opt_;
    std::vector<layer_geometry> geo_;
    std::vector<std::vector<std::uint32_t>> fanout_;
};

// Output spike counts per step and synaptic operations per layer for one
// inference from a fresh state.
struct forward_trace {
    std::vector<std::array<std::int64_t, 2>> output_spikes;   // [step] {drone, no-drone}
    std::vector<std::uint64_t> sops_per_layer;
    std::uint64_t total_sops = 0;
    std::vector<std::uint64_t> spikes_per_layer;

    int steps() const { return int(output_spikes.size()); }
    std::array<std::int64_t, 2> totals() const {
        std::array<std::int64_t, 2> s{0, 0};
        for (const auto& o: output_spikes) { s[0] += o[0]; s[1] += o[1]; }
        return s;
    }
};

template <typename Real>
void check_input(const basic_network_spec<Real>& spec, int channels, int height, int width) {
    if (spec.input.c != channels || spec.input.h != height || spec.input.w != width) {
        throw config_error("sample geometry " + std::to_string(channels) + "x" + std::to_string(height) + "x" +
            std::to_string(width) + " does not match network input " + std::to_string(spec.input.c) + "x" +
            std::to_string(spec.input.h) + "x" + std::to_string(spec.input.w));
    }
}

template <typename Real>
forward_trace to_trace(const spike_run<Real>& r) {
    forward_trace tr;
    for (const auto& o: r.output) tr.output_spikes.push_back({std::int64_t(o[0]), std::int64_t(o[1])});
    for (double s: r.sops_per_layer) {
        tr.sops_per_layer.push_back(std::uint64_t(std::llround(s)));
        tr.total_sops += tr.sops_per_layer.back();
    }
    for (double s: r.spikes_per_layer) tr.spikes_per_layer.push_back(std::uint64_t(std::llround(s)));
    return tr;
}

template <typename Real>
forward_trace snn_forward(const spiking_net<Real>& net, const binned_sample& sample) {
    check_input(net.spec(), sample.channels, sample.height, sample.width);
    const std::size_t n = sample.step_size();
    auto r = net.run(sample.steps, [&](int t, std::span<Real> dst) {
        const count_t* src = sample.counts.data() + std::size_t(t)*n;
        for (std::size_t i = 0; i < n; ++i) dst[i] = Real(src[i]);
    });
    return to_trace(r);
}

template <typename Real>
forward_trace snn_forward(const basic_network_spec<Real>& spec, const binned_sample& sample,
                          engine_options opt = {})
{
    return snn_forward(spiking_net<Real>(spec, opt), sample);
}

// Larger total output spike count wins; an exact tie is no-drone.
inline label classify_window(const forward_trace& trace) {
    auto s = trace.totals();
    return s[0] > s[1] ? label::drone : label::no_drone;
}

inline label classify_scores(float drone, float no_drone) {
    return drone > no_drone ? label::drone : label::no_drone;
}

// Per-layer record of a ReLU pass for backpropagation.
template <typename Real>
struct relu_tape {
    std::vector<std::vector<Real>> input;   // what each layer received
    std::vector<std::vector<Real>> pre;     // pre-activation
};

// Conv/fc, then ReLU and sum pooling on every layer but the last, whose
// pre-activations are the two class scores {drone, no-drone}.
template <typename Real>
std::array<Real, 2> relu_forward(const basic_network_spec<Real>& spec, const std::vector<layer_geometry>& geo,
                                 std::span<const Real> input, relu_tape<Real>* tape = nullptr)
{
    const std::size_t L = geo.size();
    if (tape) {
        tape->input.resize(L);
        tape->pre.resize(L);
    }
    std::vector<Real> x(input.begin(), input.end()), z, a;
    std::vector<std::uint32_t> nz;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& g = geo[l];
        z.assign(g.out.size(), Real(0));
        detail::nonzeros(std::span<const Real>(x), nz);
        detail::scatter_forward(spec.layers[l], g, std::span<const Real>(x), nz, std::span<Real>(z));
        if (tape) {
            tape->input[l] = x;
            tape->pre[l] = z;
        }
        if (l + 1 == L) break;
        for (auto& v: z) v = v > 0 ? v : Real(0);
        x.resize(g.pooled.size());
        detail::sum_pool_into(std::span<const Real>(z), g.out, spec.layers[l].pool, std::span<Real>(x));
    }
    if (z.size() != 2) throw config_error("network must end in 2 output neurons");
    return {z[0], z[1]};
}

template <typename Real>
std::array<Real, 2> ann_forward(const basic_network_spec<Real>& spec, const aggregate_frame& frame) {
    if (spec.mode != net_mode::relu) throw config_error("ann_forward needs a relu-mode spec");
    check_input(spec, 1, frame.height, frame.width);
    std::vector<Real> in(frame.counts.begin(), frame.counts.end());
    return relu_forward(spec, geometry(spec), std::span<const Real>(in));
}

} // namespace tripwire::snn
