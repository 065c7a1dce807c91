#pragma once

// Scene simulation and labeled dataset assembly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include <tripwire/events.hpp>
#include <tripwire/synth/converter.hpp>
#include <tripwire/synth/scene.hpp>

namespace tripwire::synth {

struct scene_events {
    event_stream stream;
    std::vector<interval> drone_visible;   // merged, half-open
};

// Renders and converts a scene frame by frame without holding the whole
// sequence in memory, then adds Poisson background noise.
inline scene_events simulate_scene(const scene_config& config, const converter_params& params) {
    scene_renderer r(config);
    event_converter conv(config.width, config.height, config.fps, params);

    scene_events out;
    out.stream.width = config.width;
    out.stream.height = config.height;

    const double dt = 1e6/config.fps;
    std::vector<float> frame;
    const auto n = r.frame_count();
    for (std::size_t k = 0; k < n; ++k) {
        bool visible = false;
        r.render_frame(k, frame, &visible);
        conv.push(frame, out.stream.events);
        if (visible) {
            // Frame k affects the transitions on either side of it.
            const time_us lo = time_us(std::llround(double(k == 0 ? 0 : k - 1)*dt));
            const time_us hi = time_us(std::llround(double(k + 1)*dt));
            if (!out.drone_visible.empty() && out.drone_visible.back().end_us >= lo) {
                out.drone_visible.back().end_us = std::max(out.drone_visible.back().end_us, hi);
            }
            else {
                out.drone_visible.push_back({lo, hi});
            }
        }
    }
    out.stream.duration_us = conv.now_us();
    for (auto& iv: out.drone_visible) iv.end_us = std::min(iv.end_us, out.stream.duration_us);
    std::erase_if(out.drone_visible, [](const interval& iv) { return iv.end_us <= iv.start_us; });

    out.stream = inject_noise(std::move(out.stream), config.noise_rate, config.seed ^ 0x9e3779b97f4a7c15ull);
    return out;
}

struct dataset_params {
    time_us window_len_us = 50'000;
    time_us step_us = 1'000;
    time_us stride_us = 50'000;
    converter_params converter;
};

struct manifest_entry {
    std::size_t id = 0;
    label lbl = label::no_drone;
    double scale_px = 0;           // drone span; 0 for scenes without a drone
    std::uint64_t seed = 0;
    bool propellers = true;
    std::size_t scene = 0;         // index into the config list
    time_us window_start_us = 0;
};

struct dataset {
    std::vector<binned_sample> samples;
    std::vector<aggregate_frame> frames;
    std::vector<manifest_entry> manifest;
};

inline std::vector<window_desc> scene_windows(const scene_events& sc, const dataset_params& p) {
    return label_windows(sc.stream, sc.drone_visible, p.window_len_us, p.stride_us);
}

// Appends the windows of one simulated scene to the dataset.
inline void append_scene(dataset& ds, const scene_config& config, std::size_t scene_index,
                         const scene_events& sc, const dataset_params& p)
{
    for (const auto& w: scene_windows(sc, p)) {
        auto b = bin_events(sc.stream, w.start_us, w.len_us, p.step_us);
        b.lbl = w.lbl;
        auto f = aggregate_window(sc.stream, w.start_us, w.len_us);
        f.lbl = w.lbl;

        manifest_entry m;
        m.id = ds.samples.size();
        m.lbl = w.lbl;
        m.scale_px = config.drone.present ? config.drone.body_px : 0;
        m.seed = config.seed;
        m.propellers = config.drone.present && config.drone.propellers_enabled;
        m.scene = scene_index;
        m.window_start_us = w.start_us;

        ds.samples.push_back(std::move(b));
        ds.frames.push_back(std::move(f));
        ds.manifest.push_back(m);
    }
}

inline dataset generate_dataset(const std::vector<scene_config>& configs, const dataset_params& p) {
    dataset ds;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        append_scene(ds, configs[i], i, simulate_scene(configs[i], p.converter), p);
    }
    return ds;
}

// Keeps an equal number of drone and no-drone samples, dropping a seeded
// random subset of the majority class. Sample order is preserved.
inline dataset balance(const dataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        (ds.manifest[i].lbl == label::drone ? pos : neg).push_back(i);
    }
    std::mt19937_64 rng(seed);
    auto& big = pos.size() > neg.size() ? pos : neg;
    const auto keep = std::min(pos.size(), neg.size());
    std::shuffle(big.begin(), big.end(), rng);
    big.resize(keep);

    std::vector<std::size_t> idx(pos);
    idx.insert(idx.end(), neg.begin(), neg.end());
    std::sort(idx.begin(), idx.end());

    dataset out;
    for (auto i: idx) {
        out.samples.push_back(ds.samples[i]);
        out.frames.push_back(ds.frames[i]);
        out.manifest.push_back(ds.manifest[i]);
        out.manifest.back().id = out.manifest.size() - 1;
    }
    return out;
}

// Randomized scene families used to build desk-scale datasets.
struct sampler_config {
    std::uint64_t seed = 1;
    int width = 32;
    int height = 32;
    double duration_s = 1.0;
    double min_fps = 2000;
    int drone_scenes = 10;
    int background_scenes = 10;
    std::vector<double> scales{10};        // drone spans, pixels
    double prop_fraction = 0.35;           // d_prop / body_px
    double f_prop_min = 120, f_prop_max = 180;
    double speed_min = 50, speed_max = 90;
    double noise_rate = 0.5;
    double drone_ball_prob = 0.3;          // chance a drone scene also has a ball
    bool propellers = true;
};

namespace detail {

inline double frame_rate_for(double d_prop, double f_prop, double min_fps) {
    const double need = min_frame_rate(d_prop, f_prop);
    return std::max(min_fps, std::ceil(need/500.0)*500.0);
}

// Entry/exit points on opposite sides of the field of view, `margin` pixels
// outside it, with the path passing near the center.
inline std::pair<point, point> crossing(std::mt19937_64& rng, int w, int h, double margin) {
    std::uniform_real_distribution<double> u(0, 1);
    const double ang = 2*std::numbers::pi*u(rng);
    const double off = (u(rng) - 0.5)*0.5;
    const point c{w/2.0 + off*w*std::sin(ang), h/2.0 - off*h*std::cos(ang)};
    const double reach = std::hypot(w, h)/2 + margin;
    return {{c.x - reach*std::cos(ang), c.y - reach*std::sin(ang)},
            {c.x + reach*std::cos(ang), c.y + reach*std::sin(ang)}};
}

inline distractor_config random_ball(std::mt19937_64& rng, int w, int h, double duration_s) {
    std::uniform_real_distribution<double> u(0, 1);
    distractor_config b;
    b.kind = distractor_kind::ball;
    b.radius = 1.5 + 2.0*u(rng);
    const bool from_left = u(rng) < 0.5;
    b.origin = {from_left ? -b.radius : w + b.radius, h*(0.4 + 0.5*u(rng))};
    const double span = w + 2*b.radius;
    const double flight = duration_s*(0.5 + 0.5*u(rng));
    b.velocity = {(from_left ? 1 : -1)*span/flight, -(20 + 40*u(rng))};
    b.gravity = 2*(-b.velocity.y)/flight + 10*u(rng);
    b.start_s = (duration_s - flight)*u(rng);
    return b;
}

inline distractor_config random_branch(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<double> u(0, 1);
    distractor_config b;
    b.kind = distractor_kind::branch;
    const int side = int(4*u(rng)) % 4;
    const double pos = 0.2 + 0.6*u(rng);
    switch (side) {
    case 0: b.origin = {-1, pos*h}; b.base_angle_deg = 0; break;
    case 1: b.origin = {w + 1.0, pos*h}; b.base_angle_deg = 180; break;
    case 2: b.origin = {pos*w, -1}; b.base_angle_deg = 90; break;
    default: b.origin = {pos*w, h + 1.0}; b.base_angle_deg = 270; break;
    }
    b.base_angle_deg += 30*(u(rng) - 0.5);
    b.length = 0.25*w + 0.2*w*u(rng);
    b.thickness = 1.0 + 1.5*u(rng);
    b.amplitude_deg = 8 + 12*u(rng);
    b.frequency_hz = 1 + 2*u(rng);
    return b;
}

} // namespace detail

// Drone scenes have the silhouette crossing the field of view for the whole
// scene duration; background scenes carry balls and branches only.
inline std::vector<scene_config> sample_scenes(const sampler_config& s) {
    std::mt19937_64 rng(s.seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<scene_config> out;

    for (int i = 0; i < s.drone_scenes; ++i) {
        scene_config c;
        c.seed = rng();
        c.width = s.width;
        c.height = s.height;
        c.duration_s = s.duration_s;
        c.noise_rate = s.noise_rate;
        auto& d = c.drone;
        d.present = true;
        d.body_px = s.scales[std::size_t(i) % s.scales.size()];
        d.d_prop = s.prop_fraction*d.body_px;
        d.f_prop = s.f_prop_min + (s.f_prop_max - s.f_prop_min)*u(rng);
        d.yaw_deg = 90*u(rng);
        d.propellers_enabled = s.propellers;
        const double r = d.body_px/2 + d.d_prop/2;
        auto [a, b] = detail::crossing(rng, s.width, s.height, r);
        const double path = std::hypot(b.x - a.x, b.y - a.y);
        // Start partway in and move slowly enough to stay in view.
        const double speed = s.speed_min + (s.speed_max - s.speed_min)*u(rng);
        const double start_frac = 0.5*(r + 1)/path + 0.1*u(rng);
        d.entry = {a.x + start_frac*(b.x - a.x), a.y + start_frac*(b.y - a.y)};
        d.exit = b;
        d.speed_px_s = speed;
        d.start_s = 0;
        c.fps = detail::frame_rate_for(d.d_prop, d.f_prop, s.min_fps);
        if (u(rng) < s.drone_ball_prob) {
            c.distractors.push_back(detail::random_ball(rng, s.width, s.height, s.duration_s));
        }
        out.push_back(std::move(c));
    }

    for (int i = 0; i < s.background_scenes; ++i) {
        scene_config c;
        c.seed = rng();
        c.width = s.width;
        c.height = s.height;
        c.duration_s = s.duration_s;
        c.noise_rate = s.noise_rate;
        c.fps = s.min_fps;
        const double kind = u(rng);
        if (kind < 0.45) {
            c.distractors.push_back(detail::random_ball(rng, s.width, s.height, s.duration_s));
            if (u(rng) < 0.4) c.distractors.push_back(detail::random_ball(rng, s.width, s.height, s.duration_s));
        }
        else if (kind < 0.8) {
            c.distractors.push_back(detail::random_branch(rng, s.width, s.height));
            if (u(rng) < 0.5) c.distractors.push_back(detail::random_ball(rng, s.width, s.height, s.duration_s));
        }
        else if (kind < 0.9) {
            c.distractors.push_back(detail::random_branch(rng, s.width, s.height));
            c.distractors.push_back(detail::random_branch(rng, s.width, s.height));
        }
        // Remaining scenes are empty sky with sensor noise.
        out.push_back(std::move(c));
    }
    return out;
}

// A single horizontal crossing: empty sky, the drone flies through at mid
// height, then empty sky again.
inline scene_config transit_scene(std::uint64_t seed, int width, int height, double body_px,
                                  double speed_px_s, double lead_s, double tail_s)
{
    scene_config c;
    c.seed = seed;
    c.width = width;
    c.height = height;
    auto& d = c.drone;
    d.present = true;
    d.body_px = body_px;
    d.d_prop = 0.35*body_px;
    d.f_prop = 150;
    d.yaw_deg = 20;
    const double r = d.body_px/2 + d.d_prop/2;
    d.entry = {-r - 0.5, height/2.0};
    d.exit = {width + r + 0.5, height/2.0};
    d.speed_px_s = speed_px_s;
    d.start_s = lead_s;
    c.duration_s = lead_s + (d.exit.x - d.entry.x)/speed_px_s + tail_s;
    c.fps = detail::frame_rate_for(d.d_prop, d.f_prop, 2000);
    c.noise_rate = 0.5;
    return c;
}

inline void to_json(nlohmann::json& j, const sampler_config& s) {
    j = {{"seed", s.seed}, {"width", s.width}, {"height", s.height}, {"duration_s", s.duration_s},
         {"min_fps", s.min_fps}, {"drone_scenes", s.drone_scenes}, {"background_scenes", s.background_scenes},
         {"scales", s.scales}, {"prop_fraction", s.prop_fraction}, {"f_prop_min", s.f_prop_min},
         {"f_prop_max", s.f_prop_max}, {"speed_min", s.speed_min}, {"speed_max", s.speed_max},
         {"noise_rate", s.noise_rate}, {"drone_ball_prob", s.drone_ball_prob}, {"propellers", s.propellers}};
}

inline void from_json(const nlohmann::json& j, sampler_config& s) {
    s.seed = j.value("seed", s.seed);
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.duration_s = j.value("duration_s", s.duration_s);
    s.min_fps = j.value("min_fps", s.min_fps);
    s.drone_scenes = j.value("drone_scenes", s.drone_scenes);
    s.background_scenes = j.value("background_scenes", s.background_scenes);
    s.scales = j.value("scales", s.scales);
    s.prop_fraction = j.value("prop_fraction", s.prop_fraction);
    s.f_prop_min = j.value("f_prop_min", s.f_prop_min);
    s.f_prop_max = j.value("f_prop_max", s.f_prop_max);
    s.speed_min = j.value("speed_min", s.speed_min);
    s.speed_max = j.value("speed_max", s.speed_max);
    s.noise_rate = j.value("noise_rate", s.noise_rate);
    s.drone_ball_prob = j.value("drone_ball_prob", s.drone_ball_prob);
    s.propellers = j.value("propellers", s.propellers);
    if (s.scales.empty()) throw config_error("sampler needs at least one drone scale");
}

} // namespace tripwire::synth
