#pragma once

// Event camera data: events, streams, and their time-binned tensor forms.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <tripwire/error.hpp>

namespace tripwire {

using time_us = std::int64_t;
using count_t = std::uint16_t;

struct event {
    time_us t = 0;
    int x = 0;
    int y = 0;
    int p = 1;   // +1 brightening, -1 darkening

    friend bool operator==(const event&, const event&) = default;
};

// Class labels double as output-neuron indices: neuron 0 votes drone, neuron 1 no-drone.
enum class label: int {
    drone = 0,
    no_drone = 1,
};

inline const char* to_string(label l) {
    return l == label::drone ? "drone" : "no-drone";
}

inline label label_from_string(const std::string& s) {
    if (s == "drone") return label::drone;
    if (s == "no-drone" || s == "no_drone") return label::no_drone;
    throw config_error("unknown label '" + s + "'");
}

struct event_stream {
    int width = 128;
    int height = 128;
    time_us duration_us = 0;
    std::vector<event> events;   // sorted by t

    friend bool operator==(const event_stream&, const event_stream&) = default;
};

// Throws config_error on the first invariant violation.
inline void validate(const event_stream& s) {
    if (s.width <= 0 || s.height <= 0) {
        throw config_error("sensor geometry must be positive");
    }
    if (s.duration_us < 0) {
        throw config_error("negative stream duration");
    }
    time_us last = 0;
    for (std::size_t i = 0; i < s.events.size(); ++i) {
        const auto& e = s.events[i];
        if (e.x < 0 || e.x >= s.width || e.y < 0 || e.y >= s.height) {
            throw config_error("event " + std::to_string(i) + " outside sensor geometry");
        }
        if (e.p != 1 && e.p != -1) {
            throw config_error("event " + std::to_string(i) + " has polarity " + std::to_string(e.p));
        }
        if (e.t < last || e.t > s.duration_us) {
            throw config_error("event " + std::to_string(i) + " timestamp out of order or range");
        }
        last = e.t;
    }
}

// Spike counts laid out [step][channel][y][x]; channel 0 is p=+1, channel 1 is p=-1.
struct binned_sample {
    int steps = 0;
    int channels = 2;
    int height = 0;
    int width = 0;
    time_us step_us = 1000;
    std::vector<count_t> counts;
    label lbl = label::no_drone;

    std::size_t step_size() const {
        return std::size_t(channels)*height*width;
    }
    std::size_t index(int step, int c, int y, int x) const {
        return ((std::size_t(step)*channels + c)*height + y)*width + x;
    }
    count_t at(int step, int c, int y, int x) const {
        return counts[index(step, c, y, x)];
    }
};

// Single-channel polarity-blind count image laid out [y][x].
struct aggregate_frame {
    int height = 0;
    int width = 0;
    std::vector<float> counts;
    label lbl = label::no_drone;

    float at(int y, int x) const { return counts[std::size_t(y)*width + x]; }
};

namespace detail {

inline void check_window(const event_stream& s, time_us start, time_us len) {
    if (start < 0 || len <= 0 || start + len > s.duration_us) {
        throw config_error(
            "window [" + std::to_string(start) + ", " + std::to_string(start + len) +
            ") outside stream duration " + std::to_string(s.duration_us));
    }
}

// Index range [first, last) of events with start <= t < start + len.
inline std::pair<std::size_t, std::size_t> window_range(const event_stream& s, time_us start, time_us len) {
    auto lo = std::lower_bound(s.events.begin(), s.events.end(), start,
        [](const event& e, time_us t) { return e.t < t; });
    auto hi = std::lower_bound(lo, s.events.end(), start + len,
        [](const event& e, time_us t) { return e.t < t; });
    return {std::size_t(lo - s.events.begin()), std::size_t(hi - s.events.begin())};
}

} // namespace detail

// Window end is exclusive: an event at start + len belongs to the next window.
inline binned_sample bin_events(const event_stream& s, time_us window_start_us, time_us window_len_us, time_us step_us) {
    if (step_us <= 0 || window_len_us % step_us != 0) {
        throw config_error("step " + std::to_string(step_us) + " us does not divide window length " +
            std::to_string(window_len_us) + " us");
    }
    detail::check_window(s, window_start_us, window_len_us);

    binned_sample out;
    out.steps = int(window_len_us/step_us);
    out.height = s.height;
    out.width = s.width;
    out.step_us = step_us;
    out.counts.assign(std::size_t(out.steps)*out.step_size(), 0);

    auto [first, last] = detail::window_range(s, window_start_us, window_len_us);
    for (auto i = first; i < last; ++i) {
        const auto& e = s.events[i];
        int step = int((e.t - window_start_us)/step_us);
        auto& c = out.counts[out.index(step, e.p > 0 ? 0 : 1, e.y, e.x)];
        if (c == std::numeric_limits<count_t>::max()) {
            throw numeric_error("per-bin event count overflow");
        }
        ++c;
    }
    return out;
}

inline aggregate_frame aggregate_window(const event_stream& s, time_us window_start_us, time_us window_len_us) {
    detail::check_window(s, window_start_us, window_len_us);

    aggregate_frame out;
    out.height = s.height;
    out.width = s.width;
    out.counts.assign(std::size_t(s.height)*s.width, 0.f);
    auto [first, last] = detail::window_range(s, window_start_us, window_len_us);
    for (auto i = first; i < last; ++i) {
        out.counts[std::size_t(s.events[i].y)*s.width + s.events[i].x] += 1.f;
    }
    return out;
}

// Sum over steps and channels.
inline aggregate_frame aggregate_of(const binned_sample& b) {
    aggregate_frame out;
    out.height = b.height;
    out.width = b.width;
    out.lbl = b.lbl;
    out.counts.assign(std::size_t(b.height)*b.width, 0.f);
    const std::size_t plane = std::size_t(b.height)*b.width;
    for (int t = 0; t < b.steps; ++t) {
        for (int c = 0; c < b.channels; ++c) {
            const auto* src = b.counts.data() + b.index(t, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) out.counts[i] += src[i];
        }
    }
    return out;
}

struct interval {
    time_us start_us = 0;
    time_us end_us = 0;
};

struct window_desc {
    time_us start_us = 0;
    time_us len_us = 0;
    label lbl = label::no_drone;
};

// Windows [k*stride, k*stride + len) that fit inside the stream. A window is a
// drone window iff it overlaps some annotated interval by at least 1 us.
// Annotated intervals are half-open [start, end).
inline std::vector<window_desc> label_windows(const event_stream& s, const std::vector<interval>& annotations,
                                              time_us window_len_us, time_us stride_us)
{
    if (window_len_us <= 0 || stride_us <= 0) {
        throw config_error("window length and stride must be positive");
    }
    for (const auto& a: annotations) {
        if (a.end_us < a.start_us) {
            throw config_error("inverted annotation interval [" + std::to_string(a.start_us) + ", " +
                std::to_string(a.end_us) + ")");
        }
        if (a.start_us < 0 || a.end_us > s.duration_us) {
            throw config_error("annotation interval outside stream duration");
        }
    }

    std::vector<window_desc> out;
    for (time_us start = 0; start + window_len_us <= s.duration_us; start += stride_us) {
        const time_us end = start + window_len_us;
        bool hit = false;
        for (const auto& a: annotations) {
            if (std::min(end, a.end_us) - std::max(start, a.start_us) >= 1) {
                hit = true;
                break;
            }
        }
        out.push_back({start, window_len_us, hit ? label::drone : label::no_drone});
    }
    return out;
}

} // namespace tripwire
