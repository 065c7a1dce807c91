#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <tripwire/error.hpp>

namespace tripwire::power {

// P = p_idle + k * sop_rate, in mW with sop_rate in SOP/s.
struct speck_params {
    double p_idle = 1.48;
    double k = 11.53e-6;
};

struct tx1_params {
    double p_tdp = 6.0;        // W
    double p_idle = 2.64;      // W
    double t_max = 511e9;      // FLOP/s
};

struct scenario_config {
    double battery_wh = 37.0;
    double self_discharge_per_month = 0.03;
    double hours_per_month = 730.0;
    double inference_rate_hz = 20.0;
    double sop_drone = 0;       // SOPs per inference
    double sop_nodrone = 0;
};

inline void validate(const speck_params& p) {
    if (!(p.p_idle >= 0) || !(p.k >= 0)) throw config_error("speck parameters must be non-negative");
}

inline void validate(const tx1_params& p) {
    if (!(p.p_idle > 0) || !(p.p_tdp > p.p_idle) || !(p.t_max > 0)) {
        throw config_error("tx1 parameters need p_tdp > p_idle > 0 and t_max > 0");
    }
}

inline void validate(const scenario_config& c) {
    if (!(c.battery_wh > 0) || !(c.hours_per_month > 0) || !(c.inference_rate_hz > 0)) {
        throw config_error("battery capacity, month length and inference rate must be positive");
    }
    if (!(c.self_discharge_per_month >= 0 && c.self_discharge_per_month < 1)) {
        throw config_error("self-discharge must lie in [0, 1)");
    }
    if (!(c.sop_drone >= 0) || !(c.sop_nodrone >= 0)) throw config_error("SOP counts must be non-negative");
}

inline double speck_power(double sop_rate, const speck_params& p = {}) {
    if (!(sop_rate >= 0)) throw config_error("sop_rate must be non-negative");
    return p.p_idle + p.k*sop_rate;
}

struct affine_fit {
    speck_params params;
    double rmse = 0;
};

struct power_sample {
    double sop_rate = 0;
    double power_mw = 0;
};

// Ordinary least squares on centred data.
inline affine_fit fit_affine(const std::vector<power_sample>& m) {
    if (m.size() < 2) throw config_error("fit_affine needs at least two measurements");
    double mx = 0, my = 0;
    for (const auto& s: m) { mx += s.sop_rate; my += s.power_mw; }
    mx /= double(m.size());
    my /= double(m.size());
    double sxx = 0, sxy = 0;
    for (const auto& s: m) {
        sxx += (s.sop_rate - mx)*(s.sop_rate - mx);
        sxy += (s.sop_rate - mx)*(s.power_mw - my);
    }
    if (!(sxx > 0)) throw config_error("fit_affine: degenerate measurements (all sop rates equal)");
    affine_fit f;
    f.params.k = sxy/sxx;
    f.params.p_idle = my - f.params.k*mx;
    double ss = 0;
    for (const auto& s: m) {
        const double r = s.power_mw - (f.params.p_idle + f.params.k*s.sop_rate);
        ss += r*r;
    }
    f.rmse = std::sqrt(ss/double(m.size()));
    return f;
}

// Energy per inference times inference rate, in mW.
inline double tx1_dynamic_power(double n_flop, double rate_hz, const tx1_params& p = {}) {
    if (!(n_flop >= 0) || !(rate_hz >= 0)) throw config_error("n_flop and rate must be non-negative");
    return (p.p_tdp - p.p_idle)/p.t_max*n_flop*rate_hz*1000.0;
}

inline double tx1_total_power(double n_flop, double rate_hz, const tx1_params& p = {}) {
    return p.p_idle*1000.0 + tx1_dynamic_power(n_flop, rate_hz, p);
}

// Self-discharge as a constant parasitic load, mW.
inline double self_discharge_mw(const scenario_config& c) {
    return c.self_discharge_per_month*c.battery_wh*1000.0/c.hours_per_month;
}

inline double battery_life(double load_mw, const scenario_config& c = {}) {
    if (!(load_mw >= 0)) throw config_error("load must be non-negative");
    return c.battery_wh*1000.0/(load_mw + self_discharge_mw(c));
}

struct sweep_point {
    double drone_fraction = 0;
    double load_mw = 0;
    double hours = 0;
};

inline double scenario_load(double f, const scenario_config& c, const speck_params& p) {
    if (!(f >= 0 && f <= 1)) throw config_error("drone fraction must lie in [0, 1]");
    const double sops = (1 - f)*c.sop_nodrone + f*c.sop_drone;
    return speck_power(c.inference_rate_hz*sops, p);
}

// `points` evenly spaced drone fractions from 0 to 1 inclusive.
inline std::vector<sweep_point> scenario_sweep(const scenario_config& c, const speck_params& p = {}, int points = 101) {
    validate(c);
    if (points < 2) throw config_error("scenario_sweep needs at least two points");
    std::vector<sweep_point> out;
    for (int i = 0; i < points; ++i) {
        const double f = i == points - 1 ? 1.0 : double(i)/double(points - 1);
        const double load = scenario_load(f, c, p);
        out.push_back({f, load, battery_life(load, c)});
    }
    return out;
}

inline std::vector<power_sample> read_measurements(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw parse_error("empty measurement file", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "sop_per_s,power_mw") throw parse_error("expected header 'sop_per_s,power_mw'", 1);
    std::vector<power_sample> out;
    long n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
            throw parse_error("expected 2 fields", n);
        }
        power_sample s;
        const char* b = line.data();
        const char* e = b + line.size();
        auto r1 = std::from_chars(b, b + comma, s.sop_rate);
        auto r2 = std::from_chars(b + comma + 1, e, s.power_mw);
        if (r1.ec != std::errc{} || r1.ptr != b + comma || r2.ec != std::errc{} || r2.ptr != e) {
            throw parse_error("malformed number", n);
        }
        out.push_back(s);
    }
    return out;
}

inline void write_sweep_csv(const std::vector<sweep_point>& pts, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(10);
    out << "drone_fraction,load_mw,hours\n";
    for (const auto& p: pts) out << p.drone_fraction << ',' << p.load_mw << ',' << p.hours << '\n';
}

} // namespace tripwire::power
