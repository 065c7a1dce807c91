#pragma once

// The `tripwire` command line: gen, train, eval, power, convert.
//
// Exit codes: 0 success, 1 configuration or validation error, 2 missing
// input, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/event_io.hpp>
#include <tripwire/events.hpp>
#include <tripwire/eval/harness.hpp>
#include <tripwire/eval/metrics.hpp>
#include <tripwire/power/model.hpp>
#include <tripwire/power/sops.hpp>
#include <tripwire/snn/network.hpp>
#include <tripwire/snn/serialize.hpp>
#include <tripwire/synth/dataset.hpp>
#include <tripwire/synth/dataset_io.hpp>
#include <tripwire/train/trainer.hpp>

namespace tripwire::cli {

namespace fs = std::filesystem;

enum exit_code: int { ok = 0, config_failure = 1, missing_input = 2, numeric_failure = 3 };

struct missing_input_error: std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw missing_input_error(what + " not found: " + p.string());
}

inline nlohmann::json read_json(const fs::path& p) {
    require_file(p, "config");
    std::ifstream in(p);
    try {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e) {
        throw config_error(p.string() + ": " + e.what());
    }
}

inline void write_json(const nlohmann::json& j, const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

inline nlohmann::json ratio_json(const eval::ratio& r) {
    if (!r) return "undefined";
    return *r;
}

inline nlohmann::json metrics_json(const eval::confusion_counts& c) {
    const auto m = eval::metrics(c);
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}, {"recall", ratio_json(m.recall)},
            {"fdr", ratio_json(m.fdr)}, {"f1", ratio_json(m.f1)}, {"accuracy", ratio_json(m.accuracy)}};
}

inline std::string scale_key(double s) {
    std::ostringstream o;
    o << s;
    return o.str();
}

inline snn::network_spec load_model(const fs::path& p) {
    require_file(p, "model");
    require_file(snn::weights_path(p), "model weights");
    return snn::load_network(p);
}

inline synth::stored_dataset load_data(const fs::path& dir) {
    require_file(dir/"dataset.json", "dataset");
    require_file(dir/"manifest.json", "dataset manifest");
    return synth::load_dataset(dir);
}

} // namespace detail

struct gen_options {
    fs::path config;
    fs::path out;
    std::uint64_t seed = 0;
};

// Config keys: "sampler" (randomized scene families) or "scenes" (explicit
// scene list), plus optional "dataset" window parameters and "balance".
inline int cmd_gen(const gen_options& o, std::ostream& log) {
    const auto j = detail::read_json(o.config);
    std::vector<synth::scene_config> scenes;
    synth::dataset_params params;
    bool balanced = true;
    try {
        if (j.contains("dataset")) params = j.at("dataset").get<synth::dataset_params>();
        balanced = j.value("balance", true);
        if (j.contains("sampler")) {
            auto s = j.at("sampler").get<synth::sampler_config>();
            s.seed = o.seed;
            scenes = synth::sample_scenes(s);
        }
        if (j.contains("scenes")) {
            std::size_t i = 0;
            for (const auto& sj: j.at("scenes")) {
                auto c = sj.get<synth::scene_config>();
                if (!sj.contains("seed")) c.seed = o.seed + i;
                scenes.push_back(c);
                ++i;
            }
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw config_error(o.config.string() + ": " + e.what());
    }
    if (scenes.empty()) throw config_error("config defines no scenes (need \"sampler\" or \"scenes\")");
    for (const auto& c: scenes) synth::validate(c);

    synth::write_dataset(o.out, scenes, params, balanced, o.seed);
    const auto m = synth::read_manifest(o.out/"manifest.json");
    std::size_t drones = 0;
    for (const auto& e: m) drones += e.lbl == label::drone;
    log << "wrote " << scenes.size() << " scenes, " << m.size() << " samples (" << drones << " drone) to "
        << o.out.string() << '\n';
    return ok;
}

struct train_options {
    fs::path data;
    fs::path out;
    std::uint64_t seed = 0;
    std::string mode = "snn";
    std::optional<std::string> regularize;
    std::optional<int> epochs;
    std::optional<fs::path> config;
    std::optional<int> threads;
    std::optional<double> learning_rate;
    std::optional<double> target_sops;
    std::optional<double> init_gain;
};

inline constexpr double default_snn_gain = 0.7;
inline constexpr double default_ann_gain = 1.0;

inline int cmd_train(const train_options& o, std::ostream& log) {
    if (o.mode != "snn" && o.mode != "ann") throw config_error("--mode must be snn or ann");
    const bool spiking = o.mode == "snn";
    if (!spiking && o.regularize) throw config_error("--regularize is not accepted with --mode ann");
    if (o.regularize && *o.regularize != "on" && *o.regularize != "off") {
        throw config_error("--regularize must be on or off");
    }

    train::train_config cfg;
    if (o.config) {
        try {
            cfg = detail::read_json(*o.config).get<train::train_config>();
        }
        catch (const nlohmann::json::exception& e) {
            throw config_error(o.config->string() + ": " + e.what());
        }
    }
    cfg.seed = o.seed;
    if (o.epochs) cfg.epochs = *o.epochs;
    if (o.threads) cfg.threads = *o.threads;
    if (o.learning_rate) cfg.learning_rate = *o.learning_rate;
    if (o.regularize) cfg.regularization.enabled = *o.regularize == "on";
    if (o.target_sops) cfg.regularization.target_sops = *o.target_sops;
    if (!spiking) cfg.regularization.enabled = false;
    train::validate(cfg);

    const auto sd = detail::load_data(o.data);
    if (sd.data.samples.empty()) throw config_error("dataset has no samples");
    const auto& s0 = sd.data.samples.front();

    auto spec = snn::default_architecture(s0.height, s0.width, spiking ? snn::net_mode::spiking : snn::net_mode::relu);
    snn::init_weights(spec, cfg.seed, o.init_gain.value_or(spiking ? default_snn_gain : default_ann_gain));

    fs::create_directories(o.out);
    auto progress = [&](const train::epoch_record& r) {
        log << "epoch " << r.epoch << " loss " << r.loss << " val_acc " << r.val_acc;
        if (spiking) log << " mean_sops " << r.mean_sops;
        log << '\n';
    };
    train::train_result res;
    if (cfg.epochs == 0) {
        res.spec = spec;
    }
    else {
        res = spiking ? train::train_snn(sd.data.samples, spec, cfg, progress)
                      : train::train_ann(sd.data.frames, spec, cfg, progress);
    }
    snn::save_network(res.spec, o.out/"model.json");
    train::write_history_csv(res.history, o.out/"history.csv");
    nlohmann::json used = cfg;
    used["mode"] = o.mode;
    used["init_gain"] = o.init_gain.value_or(spiking ? default_snn_gain : default_ann_gain);
    detail::write_json(used, o.out/"train_config.json");
    log << "saved " << (o.out/"model.json").string();
    if (res.best_epoch > 0) log << " (best epoch " << res.best_epoch << ", val_acc " << res.best_val_acc << ")";
    log << '\n';
    return ok;
}

struct eval_options {
    std::vector<std::string> models;     // PATH or CONDITION=PATH
    fs::path data;
    fs::path out;
    std::optional<fs::path> trace;
    time_us window_us = 50'000;
    std::optional<time_us> stride_us;
};

inline int cmd_eval(const eval_options& o, std::ostream& log) {
    if (o.models.empty()) throw config_error("at least one --model is required");
    std::map<std::string, fs::path> keyed;
    std::vector<fs::path> plain;
    for (const auto& m: o.models) {
        const auto eq = m.find('=');
        if (eq == std::string::npos) plain.emplace_back(m);
        else keyed[m.substr(0, eq)] = m.substr(eq + 1);
    }
    if (!keyed.empty() && !plain.empty()) throw config_error("mix of keyed and plain --model arguments");
    if (plain.size() > 1) throw config_error("several models need CONDITION=PATH keys");

    std::map<std::string, snn::network_spec> specs;
    for (const auto& [k, p]: keyed) specs[k] = detail::load_model(p);
    if (!plain.empty()) specs[""] = detail::load_model(plain.front());
    if (o.trace) detail::require_file(*o.trace, "trace events");

    fs::create_directories(o.out);
    const auto sd = detail::load_data(o.data);

    // Conditions are drone scales; background windows join every condition.
    std::map<std::string, eval::condition_set> by_scale;
    eval::condition_set background, all;
    for (std::size_t i = 0; i < sd.data.samples.size(); ++i) {
        const auto& m = sd.data.manifest[i];
        all.samples.push_back(sd.data.samples[i]);
        all.frames.push_back(sd.data.frames[i]);
        auto& dst = m.scale_px > 0 ? by_scale[detail::scale_key(m.scale_px)] : background;
        dst.samples.push_back(sd.data.samples[i]);
        dst.frames.push_back(sd.data.frames[i]);
    }
    for (auto& [k, set]: by_scale) {
        set.samples.insert(set.samples.end(), background.samples.begin(), background.samples.end());
        set.frames.insert(set.frames.end(), background.frames.begin(), background.frames.end());
    }

    nlohmann::json report = nlohmann::json::object();
    for (const auto& [key, spec]: specs) {
        nlohmann::json r;
        const auto ev = eval::evaluate(spec, all);
        r["overall"] = detail::metrics_json(ev.counts);
        if (spec.mode == snn::net_mode::spiking) r["mean_sops"] = ev.mean_sops;
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [k, set]: by_scale) per[k] = detail::metrics_json(eval::evaluate(spec, set).counts);
        r["by_scale"] = per;
        report[key.empty() ? "model" : key] = r;
        const auto m = eval::metrics(ev.counts);
        log << (key.empty() ? "model" : key) << ": recall " << eval::format_ratio(m.recall, 4) << " fdr "
            << eval::format_ratio(m.fdr, 4) << " f1 " << eval::format_ratio(m.f1, 4) << '\n';
    }
    detail::write_json(report, o.out/"metrics.json");

    if (!keyed.empty()) {
        std::map<std::string, eval::condition_set> tests;
        for (const auto& [k, _]: specs) {
            auto it = by_scale.find(k);
            if (it == by_scale.end()) throw config_error("no test windows for condition '" + k + "'");
            tests[k] = it->second;
        }
        eval::write_score_csv(eval::score_matrix(specs, tests), o.out/"score_matrix.csv");
    }

    if (o.trace) {
        const auto& spec = specs.begin()->second;
        if (spec.mode != snn::net_mode::spiking) throw config_error("--trace needs a spiking model");
        const auto stream = read_events(*o.trace);
        const auto tr = eval::spike_rate_trace(spec, stream, o.window_us, o.stride_us.value_or(o.window_us),
                                               sd.params.step_us);
        eval::write_trace_csv(tr, o.out/"trace.csv");
        log << "trace: " << tr.size() << " windows\n";
    }
    return ok;
}

struct power_options {
    fs::path out;
    std::optional<fs::path> model;
    std::optional<fs::path> data;
    std::optional<double> sop_drone;
    std::optional<double> sop_nodrone;
    std::optional<double> flops;
    std::optional<fs::path> ann_model;
    std::optional<fs::path> measurements;
    double rate_hz = 20.0;
    double battery_wh = 37.0;
    double self_discharge = 0.03;
    int points = 101;
};

inline int cmd_power(const power_options& o, std::ostream& log) {
    power::scenario_config sc;
    sc.inference_rate_hz = o.rate_hz;
    sc.battery_wh = o.battery_wh;
    sc.self_discharge_per_month = o.self_discharge;

    nlohmann::json report;
    if (o.sop_drone && o.sop_nodrone) {
        sc.sop_drone = *o.sop_drone;
        sc.sop_nodrone = *o.sop_nodrone;
        report["sop_source"] = "explicit";
    }
    else if (o.model && o.data) {
        const auto spec = detail::load_model(*o.model);
        const auto sd = detail::load_data(*o.data);
        const auto d = power::measure_sops(spec, sd.data.samples);
        const auto ds = d.drone_summary(), ns = d.no_drone_summary();
        auto summ = [](const power::sop_summary& s) {
            return nlohmann::json{{"count", s.count}, {"min", s.min}, {"median", s.median}, {"max", s.max},
                                  {"mean", s.mean}};
        };
        report["sops"] = {{"drone", summ(ds)}, {"no_drone", summ(ns)}};
        sc.sop_drone = ds.median;
        sc.sop_nodrone = ns.median;
        report["sop_source"] = "measured median";
    }
    else {
        throw missing_input_error("need --sop-drone and --sop-nodrone, or --model with --data");
    }

    double flops = 0;
    if (o.flops) flops = *o.flops;
    else if (o.ann_model) flops = snn::count_flops(detail::load_model(*o.ann_model));
    else throw missing_input_error("need --flops or --ann-model");

    power::speck_params sp;
    if (o.measurements) {
        detail::require_file(*o.measurements, "measurements");
        const auto fit = power::fit_affine(power::read_measurements(*o.measurements));
        sp = fit.params;
        report["fit"] = {{"p_idle_mw", sp.p_idle}, {"k_mw_per_sop_s", sp.k}, {"rmse_mw", fit.rmse}};
    }
    power::validate(sc);

    const power::tx1_params tx;
    const double tx1_dyn = power::tx1_dynamic_power(flops, sc.inference_rate_hz, tx);
    const double tx1_total = power::tx1_total_power(flops, sc.inference_rate_hz, tx);
    const double sp_nd = power::scenario_load(0, sc, sp), sp_d = power::scenario_load(1, sc, sp);

    report["speck"] = {
        {"p_idle_mw", sp.p_idle},
        {"k_mw_per_sop_s", sp.k},
        {"sop_per_inference", {{"drone", sc.sop_drone}, {"no_drone", sc.sop_nodrone}}},
        {"dynamic_mw", {{"drone", sp_d - sp.p_idle}, {"no_drone", sp_nd - sp.p_idle}}},
        {"total_mw", {{"drone", sp_d}, {"no_drone", sp_nd}}},
    };
    report["tx1"] = {{"flops_per_inference", flops}, {"dynamic_mw", tx1_dyn}, {"total_mw", tx1_total}};
    report["battery_hours"] = {
        {"tx1", power::battery_life(tx1_total, sc)},
        {"speck_no_drone", power::battery_life(sp_nd, sc)},
        {"speck_drone", power::battery_life(sp_d, sc)},
    };
    report["scenario"] = {{"battery_wh", sc.battery_wh}, {"self_discharge_per_month", sc.self_discharge_per_month},
                          {"inference_rate_hz", sc.inference_rate_hz}};

    fs::create_directories(o.out);
    detail::write_json(report, o.out/"power_report.json");
    power::write_sweep_csv(power::scenario_sweep(sc, sp, o.points), o.out/"sweep.csv");

    log.setf(std::ios::fixed);
    log.precision(2);
    log << "speck total: " << sp_nd << " mW (no drone) .. " << sp_d << " mW (drone)\n"
        << "tx1 total:   " << tx1_total << " mW (dynamic " << tx1_dyn << " mW)\n"
        << "battery:     tx1 " << power::battery_life(tx1_total, sc) << " h, speck "
        << power::battery_life(sp_d, sc) << " .. " << power::battery_life(sp_nd, sc) << " h\n";
    log.unsetf(std::ios::fixed);
    return ok;
}

struct convert_options {
    fs::path events;
    fs::path out;
    time_us start_us = 0;
    time_us len_us = 50'000;
    time_us step_us = 1'000;
    bool aggregate = false;
};

inline int cmd_convert(const convert_options& o, std::ostream& log) {
    detail::require_file(o.events, "events");
    const auto s = read_events(o.events);
    nlohmann::json j;
    if (o.aggregate) {
        const auto f = aggregate_window(s, o.start_us, o.len_us);
        j = {{"height", f.height}, {"width", f.width}, {"counts", f.counts}};
    }
    else {
        const auto b = bin_events(s, o.start_us, o.len_us, o.step_us);
        j = {{"steps", b.steps}, {"channels", b.channels}, {"height", b.height}, {"width", b.width},
             {"step_us", b.step_us}, {"counts", b.counts}};
    }
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    detail::write_json(j, o.out);
    log << "wrote " << o.out.string() << '\n';
    return ok;
}

// Parses and dispatches; never throws.
inline int run(int argc, const char* const* argv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Event-camera drone detection with spiking networks"};
    app.require_subcommand(1);

    gen_options g;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic event dataset");
    gen->add_option("--config", g.config, "Generation config JSON")->required();
    gen->add_option("--out", g.out, "Output directory")->required();
    gen->add_option("--seed", g.seed, "Random seed")->required();

    train_options t;
    auto* train = app.add_subcommand("train", "Train a spiking or ReLU network");
    train->add_option("--data", t.data, "Dataset directory")->required();
    train->add_option("--out", t.out, "Output directory")->required();
    train->add_option("--seed", t.seed, "Random seed")->required();
    train->add_option("--mode", t.mode, "snn or ann")->check(CLI::IsMember({"snn", "ann"}));
    train->add_option("--regularize", t.regularize, "on or off (snn only)");
    train->add_option("--epochs", t.epochs, "Epoch count");
    train->add_option("--config", t.config, "Training config JSON");
    train->add_option("--threads", t.threads, "Worker threads");
    train->add_option("--lr", t.learning_rate, "Learning rate");
    train->add_option("--s0", t.target_sops, "SOP target per sample");
    train->add_option("--init-gain", t.init_gain, "Weight init gain");

    eval_options e;
    std::optional<time_us> window;
    auto* ev = app.add_subcommand("eval", "Evaluate models and emit traces");
    ev->add_option("--model", e.models, "Model JSON, or CONDITION=PATH (repeatable)")->required();
    ev->add_option("--data", e.data, "Test dataset directory")->required();
    ev->add_option("--out", e.out, "Output directory")->required();
    ev->add_option("--trace", e.trace, "Events CSV to trace");
    ev->add_option("--window-us", window, "Trace window length");
    ev->add_option("--stride-us", e.stride_us, "Trace window stride");

    power_options p;
    auto* pw = app.add_subcommand("power", "Power and battery-life report");
    pw->add_option("--out", p.out, "Output directory")->required();
    pw->add_option("--model", p.model, "Spiking model for SOP measurement");
    pw->add_option("--data", p.data, "Test dataset for SOP measurement");
    pw->add_option("--sop-drone", p.sop_drone, "SOPs per inference, drone in view");
    pw->add_option("--sop-nodrone", p.sop_nodrone, "SOPs per inference, no drone");
    pw->add_option("--flops", p.flops, "FLOPs per inference of the GPU model");
    pw->add_option("--ann-model", p.ann_model, "ReLU model to count FLOPs from");
    pw->add_option("--measurements", p.measurements, "CSV sop_per_s,power_mw to fit");
    pw->add_option("--rate", p.rate_hz, "Inferences per second");
    pw->add_option("--battery-wh", p.battery_wh, "Battery capacity");
    pw->add_option("--self-discharge", p.self_discharge, "Fraction lost per month");
    pw->add_option("--points", p.points, "Sweep points");

    convert_options c;
    auto* cv = app.add_subcommand("convert", "Bin an event window into a tensor");
    cv->add_option("--events", c.events, "Events CSV")->required();
    cv->add_option("--out", c.out, "Output JSON file")->required();
    cv->add_option("--start-us", c.start_us, "Window start");
    cv->add_option("--len-us", c.len_us, "Window length");
    cv->add_option("--step-us", c.step_us, "Time step");
    cv->add_flag("--aggregate", c.aggregate, "Single-channel event-count frame instead of a binned tensor");

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& ex) {
        return app.exit(ex, log, err);
    }
    catch (const CLI::ParseError& ex) {
        app.exit(ex, log, err);
        return config_failure;
    }

    try {
        if (*gen) return cmd_gen(g, log);
        if (*train) return cmd_train(t, log);
        if (*ev) {
            if (window) e.window_us = *window;
            return cmd_eval(e, log);
        }
        if (*pw) return cmd_power(p, log);
        if (*cv) return cmd_convert(c, log);
    }
    catch (const missing_input_error& ex) {
        err << "error: " << ex.what() << '\n';
        return missing_input;
    }
    catch (const numeric_error& ex) {
        err << "error: " << ex.what() << '\n';
        return numeric_failure;
    }
    catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return config_failure;
    }
    return config_failure;
}

} // namespace tripwire::cli
