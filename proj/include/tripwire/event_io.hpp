#pragma once

// Event CSV format:
//
//   t_us,x,y,p
//   0,12,7,1
//   450,12,8,-1
//
// Rows sorted by t_us, p in {-1, 1}. Stream metadata lives in a sidecar JSON
// next to the CSV with the same stem: {"width":128,"height":128,"duration_us":N}.
// Without a sidecar the geometry defaults to 128x128 and the duration to the
// last timestamp.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/events.hpp>

namespace tripwire {

inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
    auto p = csv;
    p.replace_extension(".json");
    return p;
}

namespace detail {

template <typename Int>
Int parse_field(std::string_view s, std::size_t line, const char* name) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw parse_error(std::string("bad ") + name + " field '" + std::string(s) + "'", line);
    }
    return v;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

} // namespace detail

inline void write_events(const event_stream& s, const std::filesystem::path& csv) {
    validate(s);
    {
        std::ofstream out(csv, std::ios::binary);
        if (!out) throw std::runtime_error("cannot open " + csv.string() + " for writing");
        out << "t_us,x,y,p\n";
        for (const auto& e: s.events) {
            out << e.t << ',' << e.x << ',' << e.y << ',' << e.p << '\n';
        }
    }
    nlohmann::json meta = {{"width", s.width}, {"height", s.height}, {"duration_us", s.duration_us}};
    std::ofstream side(sidecar_path(csv), std::ios::binary);
    side << meta.dump() << '\n';
}

inline event_stream read_events(const std::filesystem::path& csv) {
    std::ifstream in(csv, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + csv.string());

    event_stream s;
    bool have_duration = false;
    if (auto side = sidecar_path(csv); std::filesystem::exists(side)) {
        std::ifstream sin(side);
        nlohmann::json meta;
        try {
            sin >> meta;
            s.width = meta.at("width").get<int>();
            s.height = meta.at("height").get<int>();
            s.duration_us = meta.at("duration_us").get<time_us>();
        }
        catch (const nlohmann::json::exception& e) {
            throw parse_error(side.string() + ": " + e.what());
        }
        have_duration = true;
    }

    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw parse_error("missing header", 1);
    ++lineno;
    if (detail::trim(line) != "t_us,x,y,p") {
        throw parse_error("expected header 't_us,x,y,p'", lineno);
    }

    while (std::getline(in, line)) {
        ++lineno;
        std::string_view row = detail::trim(line);
        if (row.empty()) continue;

        std::string_view fields[4];
        std::size_t n = 0;
        while (n < 4) {
            auto comma = row.find(',');
            fields[n++] = detail::trim(row.substr(0, comma));
            if (comma == std::string_view::npos) { row = {}; break; }
            row.remove_prefix(comma + 1);
        }
        if (n != 4 || !row.empty()) {
            throw parse_error("expected 4 comma-separated fields", lineno);
        }

        event e;
        e.t = detail::parse_field<time_us>(fields[0], lineno, "t_us");
        e.x = detail::parse_field<int>(fields[1], lineno, "x");
        e.y = detail::parse_field<int>(fields[2], lineno, "y");
        e.p = detail::parse_field<int>(fields[3], lineno, "p");

        if (e.p != 1 && e.p != -1) {
            throw parse_error("polarity must be 1 or -1, got " + std::to_string(e.p), lineno);
        }
        if (e.t < 0) throw parse_error("negative timestamp", lineno);
        if (!s.events.empty() && e.t < s.events.back().t) {
            throw parse_error("timestamps not sorted", lineno);
        }
        if (e.x < 0 || e.x >= s.width || e.y < 0 || e.y >= s.height) {
            throw parse_error("coordinate (" + std::to_string(e.x) + ", " + std::to_string(e.y) +
                ") outside " + std::to_string(s.width) + "x" + std::to_string(s.height) + " sensor", lineno);
        }
        if (have_duration && e.t > s.duration_us) {
            throw parse_error("timestamp beyond stream duration", lineno);
        }
        s.events.push_back(e);
    }

    if (!have_duration) {
        s.duration_us = s.events.empty() ? 0 : s.events.back().t;
    }
    return s;
}

} // namespace tripwire
