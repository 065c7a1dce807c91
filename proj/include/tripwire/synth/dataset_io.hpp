#pragma once

// On-disk dataset layout:
//
//   DIR/dataset.json          generation parameters and the scene list
//   DIR/manifest.json         one entry per window sample
//   DIR/scenes/scene_NNNN.csv events of scene NNNN (+ .json sidecar)
//
// Samples are rebuilt from the event files when the dataset is loaded.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/event_io.hpp>
#include <tripwire/events.hpp>
#include <tripwire/synth/dataset.hpp>

namespace tripwire::synth {

inline constexpr const char* dataset_format_tag = "tripwire-dataset/1";

inline void to_json(nlohmann::json& j, const converter_params& p) {
    j = {{"contrast", p.contrast}, {"eps", p.eps}, {"refractory_us", p.refractory_us}};
}

inline void from_json(const nlohmann::json& j, converter_params& p) {
    p.contrast = j.value("contrast", p.contrast);
    p.eps = j.value("eps", p.eps);
    p.refractory_us = j.value("refractory_us", p.refractory_us);
}

inline void to_json(nlohmann::json& j, const dataset_params& p) {
    j = {{"window_len_us", p.window_len_us}, {"step_us", p.step_us}, {"stride_us", p.stride_us},
         {"converter", p.converter}};
}

inline void from_json(const nlohmann::json& j, dataset_params& p) {
    p.window_len_us = j.value("window_len_us", p.window_len_us);
    p.step_us = j.value("step_us", p.step_us);
    p.stride_us = j.value("stride_us", p.stride_us);
    if (j.contains("converter")) p.converter = j.at("converter").get<converter_params>();
    if (p.window_len_us <= 0 || p.step_us <= 0 || p.stride_us <= 0 || p.window_len_us % p.step_us) {
        throw config_error("window length, step and stride must be positive with step dividing the window");
    }
}

struct stored_scene {
    scene_config config;
    std::string events_file;               // relative to the dataset directory
    std::vector<interval> drone_visible;
};

struct stored_dataset {
    dataset_params params;
    std::vector<stored_scene> scenes;
    dataset data;
};

inline std::string scene_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04zu.csv", i);
    return std::string("scenes/") + buf;
}

inline void to_json(nlohmann::json& j, const manifest_entry& e) {
    j = {{"id", e.id}, {"label", to_string(e.lbl)}, {"scale_px", e.scale_px}, {"seed", e.seed},
         {"propellers", e.propellers}, {"scene", e.scene}, {"window_start_us", e.window_start_us}};
}

inline void from_json(const nlohmann::json& j, manifest_entry& e) {
    e.id = j.at("id").get<std::size_t>();
    e.lbl = label_from_string(j.at("label").get<std::string>());
    e.scale_px = j.at("scale_px").get<double>();
    e.seed = j.at("seed").get<std::uint64_t>();
    e.propellers = j.at("propellers").get<bool>();
    e.scene = j.at("scene").get<std::size_t>();
    e.window_start_us = j.at("window_start_us").get<time_us>();
}

inline void write_manifest(const std::vector<manifest_entry>& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json{{"samples", m}}.dump(1) << '\n';
}

inline std::vector<manifest_entry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in).at("samples").get<std::vector<manifest_entry>>();
    }
    catch (const nlohmann::json::exception& e) {
        throw parse_error(path.string() + ": " + e.what());
    }
}

// Simulates every scene and writes its events. The manifest lists every
// window, or a seeded class-balanced subset when `balanced` is set.
inline void write_dataset(const std::filesystem::path& dir, const std::vector<scene_config>& configs,
                          const dataset_params& p, bool balanced, std::uint64_t seed)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir/"scenes");
    nlohmann::json scenes = nlohmann::json::array();
    dataset all;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        validate(configs[i]);
        const auto sc = simulate_scene(configs[i], p.converter);
        const auto file = scene_file_name(i);
        write_events(sc.stream, dir/file);
        nlohmann::json vis = nlohmann::json::array();
        for (const auto& iv: sc.drone_visible) vis.push_back({iv.start_us, iv.end_us});
        scenes.push_back({{"events", file}, {"drone_visible", vis}, {"config", configs[i]}});
        append_scene(all, configs[i], i, sc, p);
    }
    const auto& kept = balanced ? balance(all, seed) : all;
    write_manifest(kept.manifest, dir/"manifest.json");

    const nlohmann::json meta = {
        {"format", dataset_format_tag},
        {"params", p},
        {"balanced", balanced},
        {"seed", seed},
        {"scenes", scenes},
    };
    std::ofstream out(dir/"dataset.json");
    if (!out) throw std::runtime_error("cannot write " + (dir/"dataset.json").string());
    out << meta.dump(2) << '\n';
}

inline stored_dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream in(dir/"dataset.json");
    if (!in) throw std::runtime_error("cannot open " + (dir/"dataset.json").string());
    stored_dataset sd;
    try {
        nlohmann::json j;
        in >> j;
        if (j.at("format").get<std::string>() != dataset_format_tag) throw parse_error("unknown dataset format");
        sd.params = j.at("params").get<dataset_params>();
        for (const auto& s: j.at("scenes")) {
            stored_scene st;
            st.config = s.at("config").get<scene_config>();
            st.events_file = s.at("events").get<std::string>();
            for (const auto& iv: s.at("drone_visible")) {
                st.drone_visible.push_back({iv.at(0).get<time_us>(), iv.at(1).get<time_us>()});
            }
            sd.scenes.push_back(std::move(st));
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw parse_error((dir/"dataset.json").string() + ": " + e.what());
    }

    const auto manifest = read_manifest(dir/"manifest.json");
    std::vector<event_stream> streams;
    for (const auto& s: sd.scenes) streams.push_back(read_events(dir/s.events_file));
    for (const auto& m: manifest) {
        if (m.scene >= streams.size()) throw parse_error("manifest references unknown scene " + std::to_string(m.scene));
        const auto& st = streams[m.scene];
        auto b = bin_events(st, m.window_start_us, sd.params.window_len_us, sd.params.step_us);
        b.lbl = m.lbl;
        auto f = aggregate_window(st, m.window_start_us, sd.params.window_len_us);
        f.lbl = m.lbl;
        sd.data.samples.push_back(std::move(b));
        sd.data.frames.push_back(std::move(f));
        sd.data.manifest.push_back(m);
    }
    return sd;
}

} // namespace tripwire::synth
