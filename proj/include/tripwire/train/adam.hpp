#pragma once

#include <cmath>
#include <vector>

#include <tripwire/error.hpp>

namespace tripwire::train {

template <typename Real>
struct adam_state {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<Real>> m;
    std::vector<std::vector<Real>> v;
};

// One bias-corrected Adam update over per-layer parameter arrays. Moments are
// created on the first call.
template <typename Real>
void adam_step(std::vector<std::vector<Real>*> params, const std::vector<std::vector<Real>>& grads,
               adam_state<Real>& s, double lr)
{
    if (params.size() != grads.size()) throw config_error("adam_step: parameter/gradient count mismatch");
    if (s.m.empty()) {
        for (auto* p: params) {
            s.m.emplace_back(p->size(), Real(0));
            s.v.emplace_back(p->size(), Real(0));
        }
    }
    if (s.m.size() != params.size()) throw config_error("adam_step: state shape mismatch");
    for (std::size_t l = 0; l < params.size(); ++l) {
        if (params[l]->size() != grads[l].size() || s.m[l].size() != grads[l].size()) {
            throw config_error("adam_step: shape mismatch in layer " + std::to_string(l));
        }
    }

    ++s.step;
    const double c1 = 1 - std::pow(s.beta1, double(s.step));
    const double c2 = 1 - std::pow(s.beta2, double(s.step));
    for (std::size_t l = 0; l < params.size(); ++l) {
        auto& p = *params[l];
        auto& m = s.m[l];
        auto& v = s.v[l];
        const auto& g = grads[l];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = double(g[k]);
            const double mk = s.beta1*double(m[k]) + (1 - s.beta1)*gk;
            const double vk = s.beta2*double(v[k]) + (1 - s.beta2)*gk*gk;
            m[k] = Real(mk);
            v[k] = Real(vk);
            const double mhat = mk/c1, vhat = vk/c2;
            p[k] = Real(double(p[k]) - lr*mhat/(std::sqrt(vhat) + s.eps));
        }
    }
}

} // namespace tripwire::train
