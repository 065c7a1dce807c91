#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <tripwire/events.hpp>
#include <tripwire/snn/engine.hpp>

namespace tripwire::power {

struct sop_summary {
    std::size_t count = 0;
    double min = 0;
    double median = 0;
    double max = 0;
    double mean = 0;
};

inline sop_summary summarize(std::vector<double> v) {
    sop_summary s;
    s.count = v.size();
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    s.min = v.front();
    s.max = v.back();
    const std::size_t m = v.size()/2;
    s.median = v.size() % 2 ? v[m] : (v[m - 1] + v[m])/2;
    for (double x: v) s.mean += x;
    s.mean /= double(v.size());
    return s;
}

struct sop_distribution {
    std::vector<double> drone;
    std::vector<double> no_drone;

    sop_summary drone_summary() const { return summarize(drone); }
    sop_summary no_drone_summary() const { return summarize(no_drone); }
};

// Per-sample total SOPs of a fresh-state inference, grouped by true label.
inline sop_distribution measure_sops(const snn::network_spec& spec, const std::vector<binned_sample>& test) {
    sop_distribution d;
    if (test.empty()) return d;
    const snn::spiking_net<float> net(spec);
    for (const auto& s: test) {
        const double sops = double(snn::snn_forward(net, s).total_sops);
        (s.lbl == label::drone ? d.drone : d.no_drone).push_back(sops);
    }
    return d;
}

} // namespace tripwire::power
