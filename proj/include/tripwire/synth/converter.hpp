#pragma once

// Frame sequence to event stream conversion with multi-event threshold
// crossings, and the propeller-tip frame-rate bound.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>

namespace tripwire::synth {

// Grayscale frames with intensities in [0, 1], each laid out [y][x].
struct frame_sequence {
    int width = 0;
    int height = 0;
    double fps = 0;
    std::vector<std::vector<float>> frames;

    double frame_interval_us() const { return 1e6/fps; }
};

struct converter_params {
    double contrast = 0.2;     // C, in natural-log intensity units
    double eps = 1e-3;         // log floor: L = ln(I + eps)
    time_us refractory_us = 0;
};

// Lowest frame rate at which a propeller tip of diameter d_prop pixels turning
// at f_prop Hz moves at most one pixel per frame.
inline double min_frame_rate(double d_prop_px, double f_prop_hz) {
    if (d_prop_px < 0 || f_prop_hz < 0) {
        throw config_error("propeller diameter and frequency must be non-negative");
    }
    return std::numbers::pi*d_prop_px*f_prop_hz;
}

// Tip displacement in pixels between consecutive frames.
inline double tip_displacement(double d_prop_px, double f_prop_hz, double fps) {
    return std::numbers::pi*d_prop_px*f_prop_hz/fps;
}

inline void validate(const frame_sequence& seq) {
    if (seq.frames.empty()) throw config_error("empty frame sequence");
    if (seq.width <= 0 || seq.height <= 0) throw config_error("frame geometry must be positive");
    if (!(seq.fps > 0)) throw config_error("fps must be positive");
    const std::size_t n = std::size_t(seq.width)*seq.height;
    for (const auto& f: seq.frames) {
        if (f.size() != n) throw config_error("frame size does not match geometry");
        for (float v: f) {
            if (!std::isfinite(v)) throw numeric_error("non-finite intensity");
        }
    }
}

// Streaming converter with per-pixel reference tracking. The reference is held
// as L0 + k*C with an integer crossing count k, so emitting N events and
// stepping the reference N times by C are the same operation.
//
// Each pixel compares its log intensity against the reference at every frame.
// While the difference is at least C in magnitude, events of the matching
// polarity are emitted and k moves one step per event; the sub-threshold
// residual carries over to the next frame. The j-th of N events emitted on one
// frame transition is stamped t_prev + j/(N+1) * dt.
class event_converter {
public:
    event_converter(int width, int height, double fps, const converter_params& params):
        width_(width), height_(height), dt_(1e6/fps), params_(params)
    {
        if (width <= 0 || height <= 0) throw config_error("frame geometry must be positive");
        if (!(fps > 0)) throw config_error("fps must be positive");
        if (!(params.contrast > 0)) throw config_error("contrast threshold must be positive");
        if (!(params.eps > 0)) throw config_error("log floor eps must be positive");
    }

    // Feeds the next frame; events for the transition from the previous frame
    // are appended to out in timestamp order.
    void push(const std::vector<float>& frame, std::vector<event>& out) {
        const std::size_t npix = std::size_t(width_)*height_;
        if (frame.size() != npix) throw config_error("frame size does not match geometry");

        if (frames_ == 0) {
            base_.resize(npix);
            crossings_.assign(npix, 0);
            last_emit_.assign(npix, std::numeric_limits<time_us>::min()/2);
            for (std::size_t i = 0; i < npix; ++i) {
                if (!std::isfinite(frame[i])) throw numeric_error("non-finite intensity");
                base_[i] = std::log(double(frame[i]) + params_.eps);
            }
            ++frames_;
            return;
        }

        const double t_prev = double(frames_ - 1)*dt_;
        const double C = params_.contrast;
        batch_.clear();
        for (std::size_t i = 0; i < npix; ++i) {
            if (!std::isfinite(frame[i])) throw numeric_error("non-finite intensity");
            const double L = std::log(double(frame[i]) + params_.eps);
            auto ref = [&](long long c) { return base_[i] + double(c)*C; };

            long long& c = crossings_[i];
            const double diff = L - ref(c);
            const int p = diff >= 0 ? 1 : -1;
            long long n = (long long)std::floor(std::abs(diff)/C);
            // Align the floor count with the single-crossing predicate.
            if (p > 0) {
                while (n > 0 && !(L - ref(c + n - 1) >= C)) --n;
                while (L - ref(c + n) >= C) ++n;
            }
            else {
                while (n > 0 && !(L - ref(c - n + 1) <= -C)) --n;
                while (L - ref(c - n) <= -C) ++n;
            }
            if (n == 0) continue;
            c += p*n;

            const int x = int(i % width_);
            const int y = int(i / width_);
            for (long long j = 1; j <= n; ++j) {
                const time_us t = time_us(std::llround(t_prev + double(j)/double(n + 1)*dt_));
                if (params_.refractory_us > 0) {
                    if (t - last_emit_[i] < params_.refractory_us) continue;
                    last_emit_[i] = t;
                }
                batch_.push_back({t, x, y, p});
            }
        }
        std::stable_sort(batch_.begin(), batch_.end(),
            [](const event& a, const event& b) { return a.t < b.t; });
        out.insert(out.end(), batch_.begin(), batch_.end());
        ++frames_;
    }

    std::size_t frames_seen() const { return frames_; }

    // Time of the most recent frame.
    time_us now_us() const {
        return frames_ == 0 ? 0 : time_us(std::llround(double(frames_ - 1)*dt_));
    }

private:
    int width_;
    int height_;
    double dt_;
    converter_params params_;
    std::size_t frames_ = 0;
    std::vector<double> base_;
    std::vector<long long> crossings_;
    std::vector<time_us> last_emit_;
    std::vector<event> batch_;
};

inline event_stream frames_to_events(const frame_sequence& seq, const converter_params& params) {
    validate(seq);
    event_converter conv(seq.width, seq.height, seq.fps, params);

    event_stream out;
    out.width = seq.width;
    out.height = seq.height;
    for (const auto& f: seq.frames) conv.push(f, out.events);
    out.duration_us = conv.now_us();
    return out;
}

// Adds independent Poisson background events at rate_hz per pixel and merges
// them into the stream by timestamp. Polarity is uniform.
inline event_stream inject_noise(event_stream s, double rate_hz, std::uint64_t seed) {
    if (rate_hz < 0) throw config_error("noise rate must be non-negative");
    if (rate_hz == 0 || s.duration_us <= 0) return s;

    std::mt19937_64 rng(seed);
    const double mean = rate_hz*double(s.duration_us)*1e-6;
    std::poisson_distribution<long long> count(mean);
    std::uniform_int_distribution<time_us> when(0, s.duration_us - 1);
    std::bernoulli_distribution positive(0.5);

    std::vector<event> noise;
    for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
            auto n = count(rng);
            for (long long j = 0; j < n; ++j) {
                noise.push_back({when(rng), x, y, positive(rng) ? 1 : -1});
            }
        }
    }
    std::stable_sort(noise.begin(), noise.end(), [](const event& a, const event& b) { return a.t < b.t; });

    std::vector<event> merged;
    merged.reserve(s.events.size() + noise.size());
    std::merge(s.events.begin(), s.events.end(), noise.begin(), noise.end(), std::back_inserter(merged),
        [](const event& a, const event& b) { return a.t < b.t; });
    s.events = std::move(merged);
    return s;
}

} // namespace tripwire::synth
