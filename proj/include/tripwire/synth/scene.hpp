#pragma once

// Procedural 2D scenes: a dark quadcopter silhouette with rotating two-blade
// propellers crossing a bright sky, plus ball and branch distractors.
// All coordinates are in pixels with the origin at the top-left corner of the
// sensor and y pointing down. Pixel (x, y) covers [x, x+1) x [y, y+1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/synth/converter.hpp>

namespace tripwire::synth {

struct point {
    double x = 0;
    double y = 0;
};

struct drone_config {
    bool present = false;
    double body_px = 10;           // arm-tip to arm-tip span
    double d_prop = 3;             // propeller diameter, pixels
    double f_prop = 150;           // propeller rotation, Hz
    double speed_px_s = 80;
    point entry{-10, 16};
    point exit{42, 16};
    double start_s = 0;            // time the drone leaves the entry point
    double yaw_deg = 0;
    bool propellers_enabled = true;
};

enum class distractor_kind { ball, branch };

struct distractor_config {
    distractor_kind kind = distractor_kind::ball;

    // ball: position at start_s, velocity, downward acceleration
    double radius = 2;
    point origin{0, 0};
    point velocity{40, -40};
    double gravity = 60;
    double start_s = 0;

    // branch: anchored at origin, swinging around base_angle_deg
    double length = 10;
    double thickness = 1.5;
    double base_angle_deg = 0;
    double amplitude_deg = 10;
    double frequency_hz = 1;
};

struct scene_config {
    std::uint64_t seed = 0;
    int width = 32;
    int height = 32;
    double duration_s = 1;
    double fps = 2000;
    drone_config drone;
    std::vector<distractor_config> distractors;
    double noise_rate = 0;          // background events per pixel per second

    double background = 0.8;
    double drone_intensity = 0.15;
    double ball_intensity = 0.3;
    double branch_intensity = 0.25;
};

inline double min_frame_rate(const drone_config& d) {
    return min_frame_rate(d.d_prop, d.f_prop);
}

inline void validate(const scene_config& c) {
    if (c.width <= 0 || c.height <= 0) throw config_error("scene geometry must be positive");
    if (!(c.duration_s > 0)) throw config_error("scene duration must be positive");
    if (!(c.fps > 0)) throw config_error("fps must be positive");
    if (c.noise_rate < 0) throw config_error("noise rate must be non-negative");
    const auto& d = c.drone;
    if (d.present) {
        if (!(d.body_px > 0) || d.d_prop < 0 || d.f_prop < 0 || d.speed_px_s < 0) {
            throw config_error("drone sizes and rates must be positive");
        }
        if (d.propellers_enabled && c.fps < min_frame_rate(d)) {
            throw config_error("fps " + std::to_string(c.fps) +
                " below propeller frame-rate bound pi*d_prop*f_prop = " + std::to_string(min_frame_rate(d)));
        }
    }
    for (const auto& o: c.distractors) {
        if (o.kind == distractor_kind::ball && !(o.radius > 0)) throw config_error("ball radius must be positive");
        if (o.kind == distractor_kind::branch && (!(o.length > 0) || !(o.thickness > 0))) {
            throw config_error("branch length and thickness must be positive");
        }
    }
    for (double v: {c.background, c.drone_intensity, c.ball_intensity, c.branch_intensity}) {
        if (v < 0 || v > 1) throw config_error("intensities must lie in [0, 1]");
    }
}

namespace detail {

inline double seg_dist2(point p, point a, point b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx*dx + dy*dy;
    double t = len2 > 0 ? ((p.x - a.x)*dx + (p.y - a.y)*dy)/len2 : 0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = p.x - (a.x + t*dx), ey = p.y - (a.y + t*dy);
    return ex*ex + ey*ey;
}

struct capsule {
    point a, b;
    double half_width;
    bool contains(point p) const { return seg_dist2(p, a, b) <= half_width*half_width; }
};

struct box {
    double x0, y0, x1, y1;
};

} // namespace detail

// Evaluates scene geometry at arbitrary times; render_frame rasterizes it.
class scene_renderer {
public:
    static constexpr int supersample = 4;

    explicit scene_renderer(scene_config c): cfg_(std::move(c)) {
        validate(cfg_);
        std::mt19937_64 rng(cfg_.seed);
        std::uniform_real_distribution<double> phase(0, 2*std::numbers::pi);
        for (auto& p: prop_phase_) p = phase(rng);
    }

    const scene_config& config() const { return cfg_; }

    std::size_t frame_count() const {
        return std::size_t(std::floor(cfg_.duration_s*cfg_.fps + 1e-9)) + 1;
    }
    double frame_time(std::size_t k) const { return double(k)/cfg_.fps; }

    point drone_center(double t) const {
        const auto& d = cfg_.drone;
        const double dx = d.exit.x - d.entry.x, dy = d.exit.y - d.entry.y;
        const double dist = std::hypot(dx, dy);
        if (dist == 0 || d.speed_px_s == 0) return d.entry;
        const double f = std::clamp((t - d.start_s)*d.speed_px_s/dist, 0.0, 1.0);
        return {d.entry.x + f*dx, d.entry.y + f*dy};
    }

    // Half extent of the silhouette around its center, propellers included.
    double drone_radius() const {
        return cfg_.drone.body_px/2 + cfg_.drone.d_prop/2;
    }

    // Renders frame k. If drone_visible is non-null it is set to whether any
    // silhouette coverage falls inside the field of view.
    void render_frame(std::size_t k, std::vector<float>& frame, bool* drone_visible = nullptr) const {
        const double t = frame_time(k);
        frame.assign(std::size_t(cfg_.width)*cfg_.height, float(cfg_.background));
        if (drone_visible) *drone_visible = false;

        for (const auto& o: cfg_.distractors) {
            if (o.kind == distractor_kind::branch) {
                auto cap = branch_shape(o, t);
                paint(frame, bounds(cap), cfg_.branch_intensity, [&](point p) { return cap.contains(p); });
            }
        }
        for (const auto& o: cfg_.distractors) {
            if (o.kind == distractor_kind::ball) {
                if (t < o.start_s) continue;
                const point c = ball_center(o, t);
                const double r2 = o.radius*o.radius;
                detail::box b{c.x - o.radius, c.y - o.radius, c.x + o.radius, c.y + o.radius};
                paint(frame, b, cfg_.ball_intensity, [&](point p) {
                    const double dx = p.x - c.x, dy = p.y - c.y;
                    return dx*dx + dy*dy <= r2;
                });
            }
        }
        if (cfg_.drone.present) {
            auto parts = drone_shape(t);
            const point c = drone_center(t);
            const double r = drone_radius();
            detail::box b{c.x - r, c.y - r, c.x + r, c.y + r};
            bool any = paint(frame, b, cfg_.drone_intensity, [&](point p) {
                for (const auto& cap: parts) if (cap.contains(p)) return true;
                return false;
            });
            if (drone_visible) *drone_visible = any;
        }
    }

    // Capsules making up the drone at time t: body, two arms, and (when
    // enabled) one blade per arm tip.
    std::vector<detail::capsule> drone_shape(double t) const {
        const auto& d = cfg_.drone;
        const point c = drone_center(t);
        const double yaw = d.yaw_deg*std::numbers::pi/180;
        const double half = d.body_px/2;
        std::vector<detail::capsule> parts;

        // Compact body: a short fat capsule along the yaw axis.
        const double bl = 0.18*d.body_px;
        parts.push_back({{c.x - bl*std::cos(yaw), c.y - bl*std::sin(yaw)},
                         {c.x + bl*std::cos(yaw), c.y + bl*std::sin(yaw)}, 0.16*d.body_px});

        const double arm_w = std::max(0.5, 0.06*d.body_px);
        point tips[4];
        for (int i = 0; i < 4; ++i) {
            const double a = yaw + std::numbers::pi/4 + i*std::numbers::pi/2;
            tips[i] = {c.x + half*std::cos(a), c.y + half*std::sin(a)};
        }
        parts.push_back({tips[0], tips[2], arm_w});
        parts.push_back({tips[1], tips[3], arm_w});

        if (d.propellers_enabled && d.d_prop > 0) {
            const double blade_w = std::max(0.35, 0.12*d.d_prop);
            for (int i = 0; i < 4; ++i) {
                // Neighbouring rotors spin in opposite directions.
                const double dir = (i % 2 == 0) ? 1.0 : -1.0;
                const double a = prop_phase_[i] + dir*2*std::numbers::pi*d.f_prop*t;
                const double r = d.d_prop/2;
                parts.push_back({{tips[i].x - r*std::cos(a), tips[i].y - r*std::sin(a)},
                                 {tips[i].x + r*std::cos(a), tips[i].y + r*std::sin(a)}, blade_w});
            }
        }
        return parts;
    }

    point ball_center(const distractor_config& o, double t) const {
        const double s = t - o.start_s;
        return {o.origin.x + o.velocity.x*s, o.origin.y + o.velocity.y*s + 0.5*o.gravity*s*s};
    }

    detail::capsule branch_shape(const distractor_config& o, double t) const {
        const double ang = (o.base_angle_deg + o.amplitude_deg*std::sin(2*std::numbers::pi*o.frequency_hz*t))
            *std::numbers::pi/180;
        return {o.origin, {o.origin.x + o.length*std::cos(ang), o.origin.y + o.length*std::sin(ang)},
                o.thickness/2};
    }

private:
    static detail::box bounds(const detail::capsule& c) {
        return {std::min(c.a.x, c.b.x) - c.half_width, std::min(c.a.y, c.b.y) - c.half_width,
                std::max(c.a.x, c.b.x) + c.half_width, std::max(c.a.y, c.b.y) + c.half_width};
    }

    // Alpha-composites `value` over the frame with supersampled coverage.
    // Returns whether any pixel received coverage.
    template <typename Inside>
    bool paint(std::vector<float>& frame, detail::box b, double value, Inside&& inside) const {
        const int x0 = std::max(0, int(std::floor(b.x0)));
        const int y0 = std::max(0, int(std::floor(b.y0)));
        const int x1 = std::min(cfg_.width - 1, int(std::floor(b.x1)));
        const int y1 = std::min(cfg_.height - 1, int(std::floor(b.y1)));
        constexpr int n = supersample;
        bool any = false;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                int hits = 0;
                for (int sy = 0; sy < n; ++sy) {
                    for (int sx = 0; sx < n; ++sx) {
                        if (inside(point{x + (sx + 0.5)/n, y + (sy + 0.5)/n})) ++hits;
                    }
                }
                if (hits) {
                    any = true;
                    const double cov = double(hits)/(n*n);
                    auto& px = frame[std::size_t(y)*cfg_.width + x];
                    px = float(px*(1 - cov) + value*cov);
                }
            }
        }
        return any;
    }

    scene_config cfg_;
    double prop_phase_[4] = {};
};

inline frame_sequence render_scene(const scene_config& config) {
    scene_renderer r(config);
    frame_sequence seq;
    seq.width = config.width;
    seq.height = config.height;
    seq.fps = config.fps;
    seq.frames.resize(r.frame_count());
    for (std::size_t k = 0; k < seq.frames.size(); ++k) r.render_frame(k, seq.frames[k]);
    return seq;
}

// JSON mapping. Missing keys keep their defaults.

inline void to_json(nlohmann::json& j, const point& p) { j = nlohmann::json::array({p.x, p.y}); }
inline void from_json(const nlohmann::json& j, point& p) { p.x = j.at(0).get<double>(); p.y = j.at(1).get<double>(); }

inline void to_json(nlohmann::json& j, const drone_config& d) {
    j = {{"present", d.present}, {"body_px", d.body_px}, {"d_prop", d.d_prop}, {"f_prop", d.f_prop},
         {"speed_px_s", d.speed_px_s}, {"entry", d.entry}, {"exit", d.exit}, {"start_s", d.start_s},
         {"yaw_deg", d.yaw_deg}, {"propellers_enabled", d.propellers_enabled}};
}

inline void from_json(const nlohmann::json& j, drone_config& d) {
    d.present = j.value("present", d.present);
    d.body_px = j.value("body_px", d.body_px);
    d.d_prop = j.value("d_prop", d.d_prop);
    d.f_prop = j.value("f_prop", d.f_prop);
    d.speed_px_s = j.value("speed_px_s", d.speed_px_s);
    if (j.contains("entry")) d.entry = j.at("entry").get<point>();
    if (j.contains("exit")) d.exit = j.at("exit").get<point>();
    d.start_s = j.value("start_s", d.start_s);
    d.yaw_deg = j.value("yaw_deg", d.yaw_deg);
    d.propellers_enabled = j.value("propellers_enabled", d.propellers_enabled);
}

inline void to_json(nlohmann::json& j, const distractor_config& o) {
    if (o.kind == distractor_kind::ball) {
        j = {{"kind", "ball"}, {"radius", o.radius}, {"origin", o.origin}, {"velocity", o.velocity},
             {"gravity", o.gravity}, {"start_s", o.start_s}};
    }
    else {
        j = {{"kind", "branch"}, {"origin", o.origin}, {"length", o.length}, {"thickness", o.thickness},
             {"base_angle_deg", o.base_angle_deg}, {"amplitude_deg", o.amplitude_deg},
             {"frequency_hz", o.frequency_hz}};
    }
}

inline void from_json(const nlohmann::json& j, distractor_config& o) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ball") o.kind = distractor_kind::ball;
    else if (kind == "branch") o.kind = distractor_kind::branch;
    else throw config_error("unknown distractor kind '" + kind + "'");
    o.radius = j.value("radius", o.radius);
    if (j.contains("origin")) o.origin = j.at("origin").get<point>();
    if (j.contains("velocity")) o.velocity = j.at("velocity").get<point>();
    o.gravity = j.value("gravity", o.gravity);
    o.start_s = j.value("start_s", o.start_s);
    o.length = j.value("length", o.length);
    o.thickness = j.value("thickness", o.thickness);
    o.base_angle_deg = j.value("base_angle_deg", o.base_angle_deg);
    o.amplitude_deg = j.value("amplitude_deg", o.amplitude_deg);
    o.frequency_hz = j.value("frequency_hz", o.frequency_hz);
}

inline void to_json(nlohmann::json& j, const scene_config& c) {
    j = {{"seed", c.seed}, {"width", c.width}, {"height", c.height}, {"duration_s", c.duration_s},
         {"fps", c.fps}, {"drone", c.drone}, {"distractors", c.distractors}, {"noise_rate", c.noise_rate},
         {"background", c.background}, {"drone_intensity", c.drone_intensity},
         {"ball_intensity", c.ball_intensity}, {"branch_intensity", c.branch_intensity}};
}

inline void from_json(const nlohmann::json& j, scene_config& c) {
    c.seed = j.value("seed", c.seed);
    c.width = j.value("width", c.width);
    c.height = j.value("height", c.height);
    c.duration_s = j.value("duration_s", c.duration_s);
    c.fps = j.value("fps", c.fps);
    if (j.contains("drone")) c.drone = j.at("drone").get<drone_config>();
    if (j.contains("distractors")) c.distractors = j.at("distractors").get<std::vector<distractor_config>>();
    c.noise_rate = j.value("noise_rate", c.noise_rate);
    c.background = j.value("background", c.background);
    c.drone_intensity = j.value("drone_intensity", c.drone_intensity);
    c.ball_intensity = j.value("ball_intensity", c.ball_intensity);
    c.branch_intensity = j.value("branch_intensity", c.branch_intensity);
}

} // namespace tripwire::synth
