#pragma once

// Model checkpoints: a JSON topology file plus a flat little-endian float32
// weight blob. See docs/model_format.md for the byte-level layout.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <tripwire/error.hpp>
#include <tripwire/snn/network.hpp>

namespace tripwire::snn {

inline constexpr const char* model_format_tag = "tripwire-net/1";

inline std::filesystem::path weights_path(const std::filesystem::path& json_path) {
    auto p = json_path;
    p.replace_extension(".bin");
    return p;
}

inline nlohmann::json topology_json(const network_spec& spec, const std::string& weights_file) {
    nlohmann::json layers = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& l: spec.layers) {
        nlohmann::json j;
        j["kind"] = l.kind == layer_kind::conv ? "conv" : "fc";
        if (l.kind == layer_kind::conv) {
            j["in_channels"] = l.in_channels;
            j["out_channels"] = l.out_channels;
            j["kernel"] = {l.kernel_h, l.kernel_w};
            j["stride"] = l.stride;
            j["padding"] = l.padding;
            j["pool"] = l.pool;
        }
        else {
            j["in_features"] = l.in_channels;
            j["out_features"] = l.out_channels;
        }
        j["threshold"] = double(l.threshold);
        j["offset"] = offset;
        j["count"] = l.weight_count();
        offset += l.weight_count();
        layers.push_back(std::move(j));
    }
    return {
        {"format", model_format_tag},
        {"mode", spec.mode == net_mode::spiking ? "spiking" : "relu"},
        {"input", {spec.input.c, spec.input.h, spec.input.w}},
        {"weights_file", weights_file},
        {"weights_dtype", "float32-le"},
        {"weight_count", offset},
        {"layers", layers},
    };
}

inline void save_network(const network_spec& spec, const std::filesystem::path& json_path) {
    const auto bin = weights_path(json_path);
    {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + json_path.string());
        out << topology_json(spec, bin.filename().string()).dump(2) << '\n';
    }
    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + bin.string());
    for (const auto& l: spec.layers) {
        for (float w: l.weights) {
            const auto u = std::bit_cast<std::uint32_t>(w);
            const char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char((u >> 24) & 0xff)};
            out.write(b, 4);
        }
    }
}

inline network_spec load_network(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open " + json_path.string());
    nlohmann::json j;
    network_spec spec;
    std::vector<std::size_t> offsets;
    std::filesystem::path bin;
    try {
        in >> j;
        if (j.at("format").get<std::string>() != model_format_tag) throw parse_error("unknown model format");
        if (j.at("weights_dtype").get<std::string>() != "float32-le") throw parse_error("unsupported weight dtype");
        const auto mode = j.at("mode").get<std::string>();
        if (mode != "spiking" && mode != "relu") throw parse_error("unknown mode '" + mode + "'");
        spec.mode = mode == "spiking" ? net_mode::spiking : net_mode::relu;
        const auto& inp = j.at("input");
        spec.input = {inp.at(0).get<int>(), inp.at(1).get<int>(), inp.at(2).get<int>()};
        for (const auto& lj: j.at("layers")) {
            layer_spec l;
            const auto kind = lj.at("kind").get<std::string>();
            if (kind == "conv") {
                l.kind = layer_kind::conv;
                l.in_channels = lj.at("in_channels").get<int>();
                l.out_channels = lj.at("out_channels").get<int>();
                l.kernel_h = lj.at("kernel").at(0).get<int>();
                l.kernel_w = lj.at("kernel").at(1).get<int>();
                l.stride = lj.at("stride").get<int>();
                l.padding = lj.at("padding").get<int>();
                l.pool = lj.at("pool").get<int>();
            }
            else if (kind == "fc") {
                l.kind = layer_kind::fc;
                l.in_channels = lj.at("in_features").get<int>();
                l.out_channels = lj.at("out_features").get<int>();
            }
            else {
                throw parse_error("unknown layer kind '" + kind + "'");
            }
            l.threshold = float(lj.at("threshold").get<double>());
            if (lj.at("count").get<std::size_t>() != l.weight_count()) {
                throw parse_error("layer weight count does not match its dimensions");
            }
            offsets.push_back(lj.at("offset").get<std::size_t>());
            spec.layers.push_back(std::move(l));
        }
        bin = json_path.parent_path() / j.at("weights_file").get<std::string>();
    }
    catch (const nlohmann::json::exception& e) {
        throw parse_error(json_path.string() + ": " + e.what());
    }

    std::ifstream wb(bin, std::ios::binary);
    if (!wb) throw std::runtime_error("cannot open " + bin.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(wb)), std::istreambuf_iterator<char>());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        auto& l = spec.layers[i];
        const std::size_t n = l.weight_count();
        if ((offsets[i] + n)*4 > bytes.size()) throw parse_error(bin.string() + ": weight blob too short");
        l.weights.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const auto* b = reinterpret_cast<const unsigned char*>(bytes.data() + (offsets[i] + k)*4);
            const std::uint32_t u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16
                | std::uint32_t(b[3]) << 24;
            l.weights[k] = std::bit_cast<float>(u);
        }
    }
    return spec;
}

} // namespace tripwire::snn
