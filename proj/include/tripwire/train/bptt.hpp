#pragma once

// Backpropagation through time for the spiking network and plain
// backpropagation for the ReLU network.
//
// Spiking backward recurrence, per layer and step t (u = clamped membrane
// before reset, g = surrogate_grad(u)):
//
//   dL/du     = dL/dn * g + dL/dv_t * (1 - theta * g)
//   dL/dz_t   = dL/du  where the clamp was inactive, else 0
//   dL/dv_t-1 = dL/dz_t
//
// The synaptic-operation count of layer l is sum_i x_i * fanout_i over the
// spikes it receives, so the SOP penalty adds c * fanout_i to the gradient of
// every received spike x_i, with c the derivative of the penalty by S.
//
// Batches are accumulated in sample order: per-sample gradients are computed
// into separate buffers (possibly on several threads) and then summed from
// index 0 upwards, so the result does not depend on the thread count.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <thread>
#include <vector>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>
#include <tripwire/snn/engine.hpp>
#include <tripwire/snn/network.hpp>
#include <tripwire/snn/spike_fn.hpp>
#include <tripwire/train/backprop.hpp>
#include <tripwire/train/losses.hpp>

namespace tripwire::train {

template <typename Real>
using layer_grads = std::vector<std::vector<Real>>;

template <typename Real>
layer_grads<Real> zero_grads(const snn::basic_network_spec<Real>& spec) {
    layer_grads<Real> g;
    for (const auto& l: spec.layers) g.emplace_back(l.weight_count(), Real(0));
    return g;
}

struct bptt_options {
    snn::engine_options engine;
    spike_targets targets;
    bool regularize = false;
    double target_sops = 1e5;
    double alpha = 1e-9;
};

struct sample_stats {
    double mse = 0;
    double sops = 0;
    label predicted = label::no_drone;
};

template <typename Real>
struct batch_gradient {
    layer_grads<Real> grads;        // d(total loss)/dW, batch mean plus weight penalty
    layer_grads<Real> sample_sum;   // per-sample gradients summed, before averaging
    double loss = 0;
    double mse = 0;
    double sop = 0;
    double weight = 0;
    double mean_sops = 0;
    std::size_t correct = 0;
    std::vector<sample_stats> samples;
};

namespace detail {

template <typename Real>
struct snn_workspace {
    snn::spike_run<Real> run;
    snn::spike_tape<Real> tape;
    std::vector<std::vector<Real>> dv, gp;
    std::vector<Real> dn, dz;
    std::vector<std::uint32_t> nz;
};

template <typename Real>
void clear(layer_grads<Real>& g) {
    for (auto& v: g) std::fill(v.begin(), v.end(), Real(0));
}

template <typename Real>
void add_into(layer_grads<Real>& dst, const layer_grads<Real>& src) {
    for (std::size_t l = 0; l < dst.size(); ++l) {
        for (std::size_t k = 0; k < dst[l].size(); ++k) dst[l][k] += src[l][k];
    }
}

// Runs fn(i, worker) for i in [0, n) over `threads` workers.
template <typename F>
void parallel_for(std::size_t n, int threads, F&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, std::size_t(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i, w);
            }
            catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t: pool) t.join();
    for (auto& e: errors) {
        if (e) std::rethrow_exception(e);
    }
}

} // namespace detail

// Forward pass of one sample, recorded for snn_sample_backward.
template <typename Real>
sample_stats snn_sample_forward(const snn::spiking_net<Real>& net, const binned_sample& sample,
                                const bptt_options& opt, detail::snn_workspace<Real>& ws)
{
    snn::check_input(net.spec(), sample.channels, sample.height, sample.width);
    const std::size_t n_in = sample.step_size();
    ws.run = net.run(sample.steps, [&](int t, std::span<Real> dst) {
        const count_t* src = sample.counts.data() + std::size_t(t)*n_in;
        for (std::size_t i = 0; i < n_in; ++i) dst[i] = Real(src[i]);
    }, &ws.tape);

    sample_stats st;
    st.mse = double(mse_step_loss<Real>(ws.run.output, sample.lbl, opt.targets));
    for (double s: ws.run.sops_per_layer) st.sops += s;
    std::array<Real, 2> tot{0, 0};
    for (const auto& o: ws.run.output) { tot[0] += o[0]; tot[1] += o[1]; }
    st.predicted = tot[0] > tot[1] ? label::drone : label::no_drone;
    return st;
}

// Adds d(L_MSE)/dW + c_sop * d(S)/dW of the recorded sample into `grads`,
// where S is the sample's total SOP count.
template <typename Real>
void snn_sample_backward(const snn::spiking_net<Real>& net, const binned_sample& sample, const bptt_options& opt,
                         double c_sop, layer_grads<Real>& grads, detail::snn_workspace<Real>& ws)
{
    const auto& spec = net.spec();
    const auto& geo = net.layers();
    const std::size_t L = geo.size();
    const int T = sample.steps;
    if (T == 0) return;

    ws.dv.resize(L);
    ws.gp.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        ws.dv[l].assign(geo[l].out.size(), Real(0));
        ws.gp[l].assign(geo[l].pooled.size(), Real(0));
    }
    const auto target = target_for<Real>(sample.lbl, opt.targets);
    const Real beta = Real(opt.engine.surrogate_beta);
    const Real inv_t = Real(1)/Real(T);
    const auto& out = ws.run.output;

    for (int t = T - 1; t >= 0; --t) {
        ws.gp[L - 1][0] = (out[t][0] - target[0])*inv_t;
        ws.gp[L - 1][1] = (out[t][1] - target[1])*inv_t;
        for (std::size_t l = L; l-- > 0;) {
            const auto& layer = spec.layers[l];
            const auto& g = geo[l];
            const std::size_t n_out = g.out.size();
            const Real theta = layer.threshold;
            ws.dn.resize(n_out);
            ws.dz.resize(n_out);
            detail::unpool(std::span<const Real>(ws.gp[l]), g.out, layer.pool, std::span<Real>(ws.dn));

            const Real* u = ws.tape.membrane[l].data() + std::size_t(t)*n_out;
            const std::uint8_t* open = ws.tape.open[l].data() + std::size_t(t)*n_out;
            auto& dv = ws.dv[l];
            for (std::size_t j = 0; j < n_out; ++j) {
                const Real sg = snn::surrogate_grad(u[j], theta, beta);
                const Real du = ws.dn[j]*sg + dv[j]*(Real(1) - theta*sg);
                const Real dpre = open[j] ? du : Real(0);
                dv[j] = dpre;
                ws.dz[j] = dpre;
            }

            const std::size_t n_x = g.in.size();
            std::span<const Real> x(ws.tape.input[l].data() + std::size_t(t)*n_x, n_x);
            snn::detail::nonzeros(x, ws.nz);
            detail::weight_grad(layer, g, x, std::span<const std::uint32_t>(ws.nz), std::span<const Real>(ws.dz),
                                std::span<Real>(grads[l]));
            if (l == 0) continue;
            auto& below = ws.gp[l - 1];
            std::fill(below.begin(), below.end(), Real(0));
            detail::input_grad(layer, g, std::span<const Real>(ws.dz), std::span<Real>(below));
            if (c_sop != 0) {
                const auto& fo = net.layer_fanout(l);
                for (std::size_t i = 0; i < below.size(); ++i) below[i] += Real(c_sop)*Real(fo[i]);
            }
        }
    }
}

// The SOP penalty acts on the batch mean S of the per-sample totals,
// alpha (S0 - S)^2, so each sample's SOP gradient is scaled by
// -2 alpha (S0 - S) / B.
template <typename Real>
batch_gradient<Real> bptt_grad(const snn::basic_network_spec<Real>& spec, std::span<const binned_sample* const> batch,
                               const bptt_options& opt, int threads = 1)
{
    if (spec.mode != snn::net_mode::spiking) throw config_error("bptt_grad needs a spiking-mode spec");
    if (batch.empty()) throw config_error("bptt_grad: empty batch");
    const snn::spiking_net<Real> net(spec, opt.engine);

    const std::size_t B = batch.size();
    std::vector<sample_stats> stats(B);
    std::vector<detail::snn_workspace<Real>> ws(B);
    detail::parallel_for(B, threads, [&](std::size_t i, std::size_t) {
        stats[i] = snn_sample_forward(net, *batch[i], opt, ws[i]);
    });

    batch_gradient<Real> r;
    for (std::size_t i = 0; i < B; ++i) {
        r.mse += stats[i].mse;
        r.mean_sops += stats[i].sops;
        r.correct += stats[i].predicted == batch[i]->lbl;
    }
    r.mse /= double(B);
    r.mean_sops /= double(B);
    double c_sop = 0;
    if (opt.regularize) {
        r.sop = sop_loss(r.mean_sops, opt.target_sops, opt.alpha);
        c_sop = -2*opt.alpha*(opt.target_sops - r.mean_sops);
    }

    // Every sample uses the full c_sop; dividing the sum by B below turns the
    // summed d(S_i)/dW into d(mean S)/dW.
    std::vector<layer_grads<Real>> per_sample(B);
    detail::parallel_for(B, threads, [&](std::size_t i, std::size_t) {
        per_sample[i] = zero_grads(spec);
        snn_sample_backward(net, *batch[i], opt, c_sop, per_sample[i], ws[i]);
        ws[i] = {};
    });

    r.sample_sum = zero_grads(spec);
    for (std::size_t i = 0; i < B; ++i) detail::add_into(r.sample_sum, per_sample[i]);
    r.grads = r.sample_sum;
    for (auto& layer: r.grads) {
        for (auto& v: layer) v /= Real(B);
    }
    if (opt.regularize) {
        r.weight = double(weight_loss(spec));
        add_weight_loss_grad(spec, r.grads);
    }
    r.loss = total_loss(r.mse, r.sop, r.weight);
    r.samples = std::move(stats);
    if (!std::isfinite(r.loss)) throw numeric_error("non-finite loss");
    return r;
}

template <typename Real>
batch_gradient<Real> bptt_grad(const snn::basic_network_spec<Real>& spec, const std::vector<binned_sample>& batch,
                               const bptt_options& opt, int threads = 1)
{
    std::vector<const binned_sample*> ptrs;
    for (const auto& s: batch) ptrs.push_back(&s);
    return bptt_grad(spec, std::span<const binned_sample* const>(ptrs), opt, threads);
}

namespace detail {

template <typename Real>
struct ann_workspace {
    snn::relu_tape<Real> tape;
    std::vector<std::vector<Real>> gp;
    std::vector<Real> input, dn, dz;
    std::vector<std::uint32_t> nz;
};

} // namespace detail

// Cross-entropy gradient for one aggregate frame, added into `grads`.
template <typename Real>
sample_stats ann_sample_grad(const snn::basic_network_spec<Real>& spec, const std::vector<snn::layer_geometry>& geo,
                             const aggregate_frame& frame, layer_grads<Real>& grads, detail::ann_workspace<Real>& ws)
{
    snn::check_input(spec, 1, frame.height, frame.width);
    ws.input.assign(frame.counts.begin(), frame.counts.end());
    const auto scores = snn::relu_forward(spec, geo, std::span<const Real>(ws.input), &ws.tape);

    sample_stats st;
    st.mse = double(cross_entropy(scores, frame.lbl));
    st.predicted = scores[0] > scores[1] ? label::drone : label::no_drone;

    const std::size_t L = geo.size();
    ws.gp.resize(L);
    const Real m = std::max(scores[0], scores[1]);
    const Real e0 = std::exp(scores[0] - m), e1 = std::exp(scores[1] - m);
    const Real p0 = e0/(e0 + e1);
    ws.dz = {p0, Real(1) - p0};
    ws.dz[std::size_t(frame.lbl)] -= Real(1);

    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = spec.layers[l];
        const auto& g = geo[l];
        if (l + 1 < L) {
            const std::size_t n_out = g.out.size();
            ws.dn.resize(n_out);
            ws.dz.resize(n_out);
            detail::unpool(std::span<const Real>(ws.gp[l]), g.out, layer.pool, std::span<Real>(ws.dn));
            const auto& pre = ws.tape.pre[l];
            for (std::size_t j = 0; j < n_out; ++j) ws.dz[j] = pre[j] > 0 ? ws.dn[j] : Real(0);
        }
        std::span<const Real> x(ws.tape.input[l]);
        snn::detail::nonzeros(x, ws.nz);
        detail::weight_grad(layer, g, x, std::span<const std::uint32_t>(ws.nz), std::span<const Real>(ws.dz),
                            std::span<Real>(grads[l]));
        if (l == 0) continue;
        ws.gp[l - 1].assign(g.in.size(), Real(0));
        detail::input_grad(layer, g, std::span<const Real>(ws.dz), std::span<Real>(ws.gp[l - 1]));
    }
    return st;
}

template <typename Real>
batch_gradient<Real> ann_grad(const snn::basic_network_spec<Real>& spec, std::span<const aggregate_frame* const> batch,
                              int threads = 1)
{
    if (spec.mode != snn::net_mode::relu) throw config_error("ann_grad needs a relu-mode spec");
    if (batch.empty()) throw config_error("ann_grad: empty batch");
    const auto geo = snn::geometry(spec);
    const std::size_t B = batch.size();
    std::vector<layer_grads<Real>> per_sample(B);
    std::vector<sample_stats> stats(B);
    const int workers = int(std::min<std::size_t>(B, std::size_t(std::max(1, threads))));
    std::vector<detail::ann_workspace<Real>> ws(workers);
    detail::parallel_for(B, workers, [&](std::size_t i, std::size_t w) {
        per_sample[i] = zero_grads(spec);
        stats[i] = ann_sample_grad(spec, geo, *batch[i], per_sample[i], ws[w]);
    });

    batch_gradient<Real> r;
    r.sample_sum = zero_grads(spec);
    for (std::size_t i = 0; i < B; ++i) {
        detail::add_into(r.sample_sum, per_sample[i]);
        r.mse += stats[i].mse;
        r.correct += stats[i].predicted == batch[i]->lbl;
    }
    r.mse /= double(B);
    r.grads = r.sample_sum;
    for (auto& layer: r.grads) {
        for (auto& v: layer) v /= Real(B);
    }
    r.loss = r.mse;
    r.samples = std::move(stats);
    if (!std::isfinite(r.loss)) throw numeric_error("non-finite loss");
    return r;
}

} // namespace tripwire::train
