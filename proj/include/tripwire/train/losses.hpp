#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <tripwire/events.hpp>
#include <tripwire/snn/engine.hpp>
#include <tripwire/snn/network.hpp>

namespace tripwire::train {

struct spike_targets {
    double correct = 1.0;
    double incorrect = 0.0;
};

template <typename Real>
std::array<Real, 2> target_for(label lbl, spike_targets tg) {
    std::array<Real, 2> t{Real(tg.incorrect), Real(tg.incorrect)};
    t[std::size_t(lbl)] = Real(tg.correct);
    return t;
}

// Mean over steps of the mean over the two output neurons of the squared
// spike-count error.
template <typename Real>
Real mse_step_loss(std::span<const std::array<Real, 2>> output, label lbl, spike_targets tg = {}) {
    if (output.empty()) return Real(0);
    const auto target = target_for<Real>(lbl, tg);
    Real acc = 0;
    for (const auto& o: output) {
        const Real a = o[0] - target[0], b = o[1] - target[1];
        acc += (a*a + b*b)/2;
    }
    return acc/Real(output.size());
}

inline double mse_step_loss(const snn::forward_trace& trace, label lbl, spike_targets tg = {}) {
    std::vector<std::array<double, 2>> out;
    for (const auto& o: trace.output_spikes) out.push_back({double(o[0]), double(o[1])});
    return mse_step_loss<double>(out, lbl, tg);
}

inline double default_sop_alpha(double target_sops) {
    return 10.0/(target_sops*target_sops);
}

// alpha * (S0 - total)^2
inline double sop_loss(double total_sops, double target_sops, double alpha) {
    const double d = target_sops - total_sops;
    return alpha*d*d;
}

// Sum over layers of the largest absolute weight.
template <typename Real>
Real weight_loss(const snn::basic_network_spec<Real>& spec) {
    Real acc = 0;
    for (const auto& l: spec.layers) {
        Real m = 0;
        for (Real w: l.weights) m = std::max(m, std::abs(w));
        acc += m;
    }
    return acc;
}

// Subgradient of weight_loss: sign(w) at each layer's largest-magnitude
// weight, lowest flat index on ties, zero for an all-zero layer.
template <typename Real>
void add_weight_loss_grad(const snn::basic_network_spec<Real>& spec, std::vector<std::vector<Real>>& grads) {
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& w = spec.layers[l].weights;
        std::size_t best = 0;
        Real m = 0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            if (std::abs(w[k]) > m) { m = std::abs(w[k]); best = k; }
        }
        if (m > 0) grads[l][best] += w[best] > 0 ? Real(1) : Real(-1);
    }
}

inline double total_loss(double mse, double sop, double weight) {
    return mse + sop + weight;
}

// Softmax cross entropy on two class scores.
template <typename Real>
Real cross_entropy(std::array<Real, 2> scores, label lbl) {
    const Real m = std::max(scores[0], scores[1]);
    const Real lse = m + std::log(std::exp(scores[0] - m) + std::exp(scores[1] - m));
    return lse - scores[std::size_t(lbl)];
}

} // namespace tripwire::train
