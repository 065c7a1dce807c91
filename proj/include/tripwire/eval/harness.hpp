#pragma once

// Model evaluation over sample sets, cross-condition score matrices, and
// sliding-window output traces.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>
#include <tripwire/eval/metrics.hpp>
#include <tripwire/snn/engine.hpp>
#include <tripwire/snn/network.hpp>

namespace tripwire::eval {

struct evaluation {
    confusion_counts counts;
    double mean_sops = 0;     // spiking models only
    std::vector<label> predictions;
};

inline evaluation evaluate_snn(const snn::network_spec& spec, const std::vector<binned_sample>& samples) {
    evaluation ev;
    if (samples.empty()) return ev;
    const snn::spiking_net<float> net(spec);
    for (const auto& s: samples) {
        const auto tr = snn::snn_forward(net, s);
        const auto p = snn::classify_window(tr);
        tally(ev.counts, p, s.lbl);
        ev.predictions.push_back(p);
        ev.mean_sops += double(tr.total_sops);
    }
    ev.mean_sops /= double(samples.size());
    return ev;
}

inline evaluation evaluate_ann(const snn::network_spec& spec, const std::vector<aggregate_frame>& frames) {
    evaluation ev;
    for (const auto& f: frames) {
        const auto sc = snn::ann_forward(spec, f);
        const auto p = snn::classify_scores(sc[0], sc[1]);
        tally(ev.counts, p, f.lbl);
        ev.predictions.push_back(p);
    }
    return ev;
}

// Test data for one condition; only the member matching the model's mode is used.
struct condition_set {
    std::vector<binned_sample> samples;
    std::vector<aggregate_frame> frames;
};

inline evaluation evaluate(const snn::network_spec& spec, const condition_set& set) {
    return spec.mode == snn::net_mode::spiking ? evaluate_snn(spec, set.samples) : evaluate_ann(spec, set.frames);
}

struct score_table {
    std::vector<std::string> conditions;
    std::vector<std::vector<ratio>> f1;     // [trained on][evaluated on]
};

// F1 of the model trained on condition i evaluated on condition j. Every
// model condition needs a test set and vice versa.
inline score_table score_matrix(const std::map<std::string, snn::network_spec>& models,
                                const std::map<std::string, condition_set>& tests)
{
    for (const auto& [k, _]: models) {
        if (!tests.count(k)) throw config_error("no test set for condition '" + k + "'");
    }
    for (const auto& [k, _]: tests) {
        if (!models.count(k)) throw config_error("no model for condition '" + k + "'");
    }
    score_table t;
    for (const auto& [k, _]: models) t.conditions.push_back(k);
    for (const auto& [mk, spec]: models) {
        std::vector<ratio> row;
        for (const auto& [tk, set]: tests) row.push_back(metrics(evaluate(spec, set).counts).f1);
        t.f1.push_back(std::move(row));
    }
    return t;
}

inline void write_score_csv(const score_table& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "trained_on";
    for (const auto& c: t.conditions) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < t.conditions.size(); ++i) {
        out << t.conditions[i];
        for (const auto& v: t.f1[i]) out << ',' << format_ratio(v);
        out << '\n';
    }
}

struct trace_point {
    time_us t_us = 0;             // window start
    std::int64_t spikes_drone = 0;
    std::int64_t spikes_nodrone = 0;
    label decision = label::no_drone;
};

// Fresh-state inference on every window [k*stride, k*stride + len) that fits
// inside the stream.
inline std::vector<trace_point> spike_rate_trace(const snn::network_spec& spec, const event_stream& stream,
                                                 time_us window_len_us, time_us stride_us, time_us step_us = 1000)
{
    if (window_len_us <= 0 || stride_us <= 0) throw config_error("window length and stride must be positive");
    const snn::spiking_net<float> net(spec);
    std::vector<trace_point> out;
    for (time_us start = 0; start + window_len_us <= stream.duration_us; start += stride_us) {
        const auto tr = snn::snn_forward(net, bin_events(stream, start, window_len_us, step_us));
        const auto tot = tr.totals();
        out.push_back({start, tot[0], tot[1], snn::classify_window(tr)});
    }
    return out;
}

inline void write_trace_csv(const std::vector<trace_point>& trace, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "t_us,spikes_drone,spikes_nodrone,decision\n";
    for (const auto& p: trace) {
        out << p.t_us << ',' << p.spikes_drone << ',' << p.spikes_nodrone << ',' << to_string(p.decision) << '\n';
    }
}

} // namespace tripwire::eval
