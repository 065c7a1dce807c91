#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>
#include <tripwire/snn/engine.hpp>
#include <tripwire/snn/network.hpp>
#include <tripwire/train/adam.hpp>
#include <tripwire/train/bptt.hpp>
#include <tripwire/train/losses.hpp>

namespace tripwire::train {

struct regularization_config {
    bool enabled = false;
    double target_sops = 1e5;
    std::optional<double> alpha;   // defaults to 10 / target_sops^2

    double effective_alpha() const { return alpha ? *alpha : default_sop_alpha(target_sops); }
};

struct train_config {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    regularization_config regularization;
    double surrogate_beta = 10.0;
    spike_targets targets;
    double validation_fraction = 0.05;
    int threads = 1;
};

inline void validate(const train_config& c) {
    if (c.epochs < 0) throw config_error("epochs must be >= 0");
    if (c.batch_size < 1) throw config_error("batch_size must be >= 1");
    if (!(c.learning_rate >= 0) || !std::isfinite(c.learning_rate)) {
        throw config_error("learning_rate must be a finite non-negative number");
    }
    if (c.regularization.enabled && !(c.regularization.target_sops > 0)) {
        throw config_error("regularization.S0 must be > 0");
    }
    if (c.regularization.alpha && !(*c.regularization.alpha >= 0)) throw config_error("regularization.alpha must be >= 0");
    if (!(c.surrogate_beta > 0)) throw config_error("surrogate_beta must be > 0");
    if (!(c.validation_fraction > 0 && c.validation_fraction < 1)) {
        throw config_error("validation_fraction must lie in (0, 1)");
    }
    if (c.threads < 1) throw config_error("threads must be >= 1");
}

inline void to_json(nlohmann::json& j, const train_config& c) {
    nlohmann::json reg = {{"enabled", c.regularization.enabled}, {"S0", c.regularization.target_sops}};
    if (c.regularization.alpha) reg["alpha"] = *c.regularization.alpha;
    j = {
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"seed", c.seed},
        {"regularization", reg},
        {"surrogate_beta", c.surrogate_beta},
        {"target_spikes", {{"correct", c.targets.correct}, {"incorrect", c.targets.incorrect}}},
        {"validation_fraction", c.validation_fraction},
        {"threads", c.threads},
    };
}

inline void from_json(const nlohmann::json& j, train_config& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
    if (j.contains("regularization")) {
        const auto& r = j.at("regularization");
        c.regularization.enabled = r.value("enabled", c.regularization.enabled);
        c.regularization.target_sops = r.value("S0", c.regularization.target_sops);
        if (r.contains("alpha") && !r.at("alpha").is_null()) c.regularization.alpha = r.at("alpha").get<double>();
    }
    c.surrogate_beta = j.value("surrogate_beta", c.surrogate_beta);
    if (j.contains("target_spikes")) {
        c.targets.correct = j.at("target_spikes").value("correct", c.targets.correct);
        c.targets.incorrect = j.at("target_spikes").value("incorrect", c.targets.incorrect);
    }
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.threads = j.value("threads", c.threads);
}

struct split_indices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

// Stratified split. The validation size is round(fraction * n); it is shared
// out between labels in proportion to their counts (largest remainder, ties
// to the lower label). Each label's members are shuffled with the seed.
inline split_indices split_dataset(std::span<const label> labels, std::uint64_t seed, double fraction = 0.05) {
    if (labels.size() < 20) {
        throw config_error("split_dataset needs at least 20 samples, got " + std::to_string(labels.size()));
    }
    const std::size_t n = labels.size();
    std::array<std::vector<std::size_t>, 2> groups;
    for (std::size_t i = 0; i < n; ++i) groups[std::size_t(labels[i])].push_back(i);

    const auto n_val = std::max<std::size_t>(1, std::size_t(std::llround(fraction*double(n))));
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> rem{};
    std::size_t given = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double exact = double(n_val)*double(groups[c].size())/double(n);
        quota[c] = std::size_t(std::floor(exact));
        rem[c] = exact - double(quota[c]);
        given += quota[c];
    }
    while (given < n_val) {
        std::size_t c = rem[0] >= rem[1] ? 0 : 1;
        if (quota[c] >= groups[c].size()) c = 1 - c;
        ++quota[c];
        rem[c] = -1;
        ++given;
    }

    std::mt19937_64 rng(seed);
    split_indices out;
    for (std::size_t c = 0; c < 2; ++c) {
        auto g = groups[c];
        std::shuffle(g.begin(), g.end(), rng);
        out.validation.insert(out.validation.end(), g.begin(), g.begin() + std::ptrdiff_t(quota[c]));
        out.train.insert(out.train.end(), g.begin() + std::ptrdiff_t(quota[c]), g.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.validation.begin(), out.validation.end());
    return out;
}

template <typename Sample>
split_indices split_dataset(const std::vector<Sample>& samples, std::uint64_t seed, double fraction = 0.05) {
    std::vector<label> labels;
    for (const auto& s: samples) labels.push_back(s.lbl);
    return split_dataset(std::span<const label>(labels), seed, fraction);
}

struct epoch_record {
    int epoch = 0;
    double loss = 0;
    double val_acc = 0;
    double mean_sops = 0;
};

struct train_result {
    snn::network_spec spec;
    std::vector<epoch_record> history;
    int best_epoch = 0;          // 0 when no epoch ran
    double best_val_acc = 0;
    split_indices split;
};

using epoch_callback = std::function<void(const epoch_record&)>;

inline void write_history_csv(const std::vector<epoch_record>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(9);
    out << "epoch,loss,val_acc,mean_sops\n";
    for (const auto& r: history) out << r.epoch << ',' << r.loss << ',' << r.val_acc << ',' << r.mean_sops << '\n';
}

namespace detail {

inline std::vector<std::vector<float>*> weight_refs(snn::network_spec& spec) {
    std::vector<std::vector<float>*> p;
    for (auto& l: spec.layers) p.push_back(&l.weights);
    return p;
}

inline void check_finite(const snn::network_spec& spec, int epoch) {
    for (const auto& l: spec.layers) {
        for (float w: l.weights) {
            if (!std::isfinite(w)) throw numeric_error("training diverged at epoch " + std::to_string(epoch));
        }
    }
}

// Shared epoch loop. grad_fn(spec, batch indices) returns the batch gradient;
// eval_fn(spec) returns {validation accuracy, mean SOPs}.
template <typename GradFn, typename EvalFn>
train_result train_loop(snn::network_spec spec, const train_config& cfg, split_indices split, GradFn&& grad_fn,
                        EvalFn&& eval_fn, const epoch_callback& on_epoch)
{
    train_result res;
    res.split = std::move(split);
    res.spec = spec;
    adam_state<float> adam;
    std::mt19937_64 rng(cfg.seed ^ 0x5deece66dULL);
    auto order = res.split.train;
    bool have_best = false;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0;
        for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
            const auto e = std::min(order.size(), b + std::size_t(cfg.batch_size));
            std::span<const std::size_t> idx(order.data() + b, e - b);
            batch_gradient<float> g;
            try {
                g = grad_fn(spec, idx);
            }
            catch (const numeric_error&) {
                throw numeric_error("training diverged at epoch " + std::to_string(epoch));
            }
            loss_sum += g.loss*double(idx.size());
            for (const auto& layer: g.grads) {
                for (float v: layer) {
                    if (!std::isfinite(v)) throw numeric_error("training diverged at epoch " + std::to_string(epoch));
                }
            }
            adam_step(weight_refs(spec), g.grads, adam, cfg.learning_rate);
            check_finite(spec, epoch);
        }
        epoch_record rec;
        rec.epoch = epoch;
        rec.loss = order.empty() ? 0.0 : loss_sum/double(order.size());
        if (!std::isfinite(rec.loss)) throw numeric_error("training diverged at epoch " + std::to_string(epoch));
        std::tie(rec.val_acc, rec.mean_sops) = eval_fn(spec);
        res.history.push_back(rec);
        if (!have_best || rec.val_acc > res.best_val_acc) {
            have_best = true;
            res.best_val_acc = rec.val_acc;
            res.best_epoch = epoch;
            res.spec = spec;
        }
        if (on_epoch) on_epoch(rec);
    }
    return res;
}

} // namespace detail

inline bptt_options make_bptt_options(const train_config& cfg) {
    bptt_options o;
    o.engine.surrogate_beta = cfg.surrogate_beta;
    o.targets = cfg.targets;
    o.regularize = cfg.regularization.enabled;
    o.target_sops = cfg.regularization.target_sops;
    o.alpha = cfg.regularization.effective_alpha();
    return o;
}

// Trains with BPTT and Adam from the weights already in `spec`, returning the
// weights of the epoch with the best validation accuracy (earliest on ties).
inline train_result train_snn(const std::vector<binned_sample>& data, const snn::network_spec& spec,
                              const train_config& cfg, const epoch_callback& on_epoch = {})
{
    validate(cfg);
    if (spec.mode != snn::net_mode::spiking) throw config_error("train_snn needs a spiking-mode network");
    auto split = split_dataset(data, cfg.seed, cfg.validation_fraction);
    const auto opt = make_bptt_options(cfg);

    auto grad_fn = [&](const snn::network_spec& s, std::span<const std::size_t> idx) {
        std::vector<const binned_sample*> batch;
        for (auto i: idx) batch.push_back(&data[i]);
        return bptt_grad(s, std::span<const binned_sample* const>(batch), opt, cfg.threads);
    };
    auto eval_fn = [&](const snn::network_spec& s) {
        const snn::spiking_net<float> net(s, opt.engine);
        std::size_t correct = 0;
        double sops = 0;
        for (auto i: split.validation) {
            const auto tr = snn::snn_forward(net, data[i]);
            correct += snn::classify_window(tr) == data[i].lbl;
            sops += double(tr.total_sops);
        }
        const double n = double(split.validation.size());
        return std::pair<double, double>{double(correct)/n, sops/n};
    };
    return detail::train_loop(spec, cfg, split, grad_fn, eval_fn, on_epoch);
}

// Cross-entropy training of the ReLU network; regularization settings are
// ignored.
inline train_result train_ann(const std::vector<aggregate_frame>& data, const snn::network_spec& spec,
                              const train_config& cfg, const epoch_callback& on_epoch = {})
{
    validate(cfg);
    if (spec.mode != snn::net_mode::relu) throw config_error("train_ann needs a relu-mode network");
    if (spec.input.c != 1) throw config_error("train_ann needs a single-channel input");
    auto split = split_dataset(data, cfg.seed, cfg.validation_fraction);

    auto grad_fn = [&](const snn::network_spec& s, std::span<const std::size_t> idx) {
        std::vector<const aggregate_frame*> batch;
        for (auto i: idx) batch.push_back(&data[i]);
        return ann_grad(s, std::span<const aggregate_frame* const>(batch), cfg.threads);
    };
    auto eval_fn = [&](const snn::network_spec& s) {
        std::size_t correct = 0;
        for (auto i: split.validation) {
            const auto sc = snn::ann_forward(s, data[i]);
            correct += snn::classify_scores(sc[0], sc[1]) == data[i].lbl;
        }
        return std::pair<double, double>{double(correct)/double(split.validation.size()), 0.0};
    };
    return detail::train_loop(spec, cfg, split, grad_fn, eval_fn, on_epoch);
}

} // namespace tripwire::train
