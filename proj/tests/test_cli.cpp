#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <tripwire/cli.hpp>

using namespace tripwire;
namespace fs = std::filesystem;

namespace {

struct cli_result {
    int code;
    std::string out, err;
};

cli_result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "tripwire");
    std::vector<const char*> argv;
    for (auto& a: args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = cli::run(int(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("tripwire_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p);
    out << s;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

std::string sampler_config(bool propellers) {
    return nlohmann::json{
        {"sampler", {{"width", 16}, {"height", 16}, {"duration_s", 0.3}, {"drone_scenes", 5},
                     {"background_scenes", 5}, {"scales", {6}}, {"propellers", propellers}}},
    }.dump();
}

// A dataset on 8x8 sensors where drone windows contain only brightening
// events and background windows only darkening ones, plus a model that
// separates them perfectly.
fs::path polarity_fixture(const fs::path& dir) {
    fs::create_directories(dir/"data"/"scenes");
    event_stream s;
    s.width = s.height = 8;
    s.duration_us = 200'000;
    for (int w = 0; w < 4; ++w) {
        const int p = w % 2 == 0 ? 1 : -1;
        for (int i = 0; i < 10; ++i) s.events.push_back({w*50'000 + 1000 + i*100, i % 8, i/8, p});
    }
    write_events(s, dir/"data"/"scenes"/"scene_0000.csv");

    std::vector<synth::manifest_entry> m;
    for (int w = 0; w < 4; ++w) {
        synth::manifest_entry e;
        e.id = std::size_t(w);
        e.lbl = w % 2 == 0 ? label::drone : label::no_drone;
        e.scale_px = w % 2 == 0 ? 6 : 0;
        e.window_start_us = w*50'000;
        m.push_back(e);
    }
    synth::write_manifest(m, dir/"data"/"manifest.json");
    synth::dataset_params params;
    nlohmann::json meta = {
        {"format", synth::dataset_format_tag},
        {"params", params},
        {"balanced", false},
        {"seed", 0},
        {"scenes", {{{"events", "scenes/scene_0000.csv"}, {"drone_visible", nlohmann::json::array()},
                     {"config", synth::scene_config{}}}}},
    };
    write_text(dir/"data"/"dataset.json", meta.dump());

    snn::network_spec net;
    net.input = {2, 8, 8};
    net.layers.push_back(snn::conv_layer(2, 2, 1, 1, 0, 8));
    net.layers[0].weights = {1, 0, 0, 1};
    net.layers.push_back(snn::fc_layer(2, 2));
    net.layers[1].weights = {1, 0, 0, 1};
    snn::save_network(net, dir/"model.json");
    return dir;
}

} // namespace

TEST(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"bogus"}).code, 1);
    EXPECT_EQ(run_cli({"gen", "--out", "x"}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, GenIsDeterministic) {
    auto dir = scratch("gen");
    write_text(dir/"gen.json", sampler_config(true));
    auto a = run_cli({"gen", "--config", (dir/"gen.json").string(), "--out", (dir/"a").string(), "--seed", "4"});
    auto b = run_cli({"gen", "--config", (dir/"gen.json").string(), "--out", (dir/"b").string(), "--seed", "4"});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    std::size_t files = 0;
    for (auto& e: fs::recursive_directory_iterator(dir/"a")) {
        if (!e.is_regular_file()) continue;
        ++files;
        auto rel = fs::relative(e.path(), dir/"a");
        EXPECT_EQ(slurp(e.path()), slurp(dir/"b"/rel)) << rel;
    }
    EXPECT_GE(files, 20u + 2);
    auto m = read_json(dir/"a"/"manifest.json").at("samples");
    EXPECT_FALSE(m.empty());
    EXPECT_EQ(m[0].at("propellers").get<bool>(), true);
}

TEST(Cli, GenPropellersDisabledFlagsManifest) {
    auto dir = scratch("gen_noprop");
    write_text(dir/"gen.json", sampler_config(false));
    auto r = run_cli({"gen", "--config", (dir/"gen.json").string(), "--out", (dir/"d").string(), "--seed", "1"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (auto& e: read_json(dir/"d"/"manifest.json").at("samples")) EXPECT_FALSE(e.at("propellers").get<bool>());
}

TEST(Cli, GenBelowFrameRateBoundFails) {
    auto dir = scratch("gen_fps");
    nlohmann::json scene = {{"fps", 1000}, {"drone", {{"present", true}, {"d_prop", 10}, {"f_prop", 150}}}};
    write_text(dir/"gen.json", nlohmann::json{{"scenes", {scene}}}.dump());
    auto r = run_cli({"gen", "--config", (dir/"gen.json").string(), "--out", (dir/"d").string(), "--seed", "1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("frame-rate bound"), std::string::npos) << r.err;
}

TEST(Cli, GenMissingConfigExitsTwo) {
    auto dir = scratch("gen_missing");
    EXPECT_EQ(run_cli({"gen", "--config", (dir/"nope.json").string(), "--out", (dir/"d").string(), "--seed", "1"}).code,
              2);
}

TEST(Cli, TrainCheckpointsAndReruns) {
    auto dir = scratch("train");
    write_text(dir/"gen.json", sampler_config(true));
    ASSERT_EQ(run_cli({"gen", "--config", (dir/"gen.json").string(), "--out", (dir/"data").string(), "--seed", "2"}).code,
              0);

    auto z = run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/"m0").string(), "--seed", "3",
                      "--epochs", "0"});
    ASSERT_EQ(z.code, 0) << z.err;
    EXPECT_TRUE(fs::exists(dir/"m0"/"model.json"));
    EXPECT_TRUE(fs::exists(dir/"m0"/"model.bin"));
    EXPECT_EQ(slurp(dir/"m0"/"history.csv"), "epoch,loss,val_acc,mean_sops\n");

    for (const char* out: {"m1", "m2"}) {
        auto r = run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/out).string(), "--seed", "3",
                          "--epochs", "1", "--regularize", "on"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(dir/"m1"/"model.bin"), slurp(dir/"m2"/"model.bin"));
    EXPECT_EQ(slurp(dir/"m1"/"history.csv"), slurp(dir/"m2"/"history.csv"));
    EXPECT_TRUE(read_json(dir/"m1"/"train_config.json").at("regularization").at("enabled").get<bool>());

    auto ann = run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/"a").string(), "--seed", "3",
                        "--epochs", "1", "--mode", "ann"});
    ASSERT_EQ(ann.code, 0) << ann.err;
    EXPECT_EQ(snn::load_network(dir/"a"/"model.json").mode, snn::net_mode::relu);

    EXPECT_EQ(run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/"x").string(), "--seed", "3",
                       "--mode", "ann", "--regularize", "on"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/"x").string(), "--seed", "3",
                       "--lr", "-1"}).code, 1);
    EXPECT_EQ(run_cli({"train", "--data", (dir/"nodata").string(), "--out", (dir/"x").string(), "--seed", "3"}).code,
              2);

    auto boom = run_cli({"train", "--data", (dir/"data").string(), "--out", (dir/"x").string(), "--seed", "3",
                         "--epochs", "3", "--mode", "ann", "--lr", "1e38"});
    EXPECT_EQ(boom.code, 3) << boom.err;
    EXPECT_NE(boom.err.find("diverged at epoch"), std::string::npos) << boom.err;
}

TEST(Cli, EvalPerfectModelAndTrace) {
    auto dir = polarity_fixture(scratch("eval"));
    auto r = run_cli({"eval", "--model", (dir/"model.json").string(), "--data", (dir/"data").string(), "--out",
                      (dir/"out").string(), "--trace", (dir/"data"/"scenes"/"scene_0000.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = read_json(dir/"out"/"metrics.json");
    EXPECT_EQ(m.at("model").at("overall").at("f1").get<double>(), 1.0);
    EXPECT_EQ(m.at("model").at("by_scale").size(), 1u);
    auto trace = slurp(dir/"out"/"trace.csv");
    EXPECT_EQ(trace.substr(0, trace.find('\n')), "t_us,spikes_drone,spikes_nodrone,decision");
    EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 5);

    auto k = run_cli({"eval", "--model", "6=" + (dir/"model.json").string(), "--data", (dir/"data").string(), "--out",
                      (dir/"keyed").string()});
    ASSERT_EQ(k.code, 0) << k.err;
    auto sm = slurp(dir/"keyed"/"score_matrix.csv");
    EXPECT_NE(sm.find("1.000000"), std::string::npos) << sm;
}

TEST(Cli, EvalMissingCheckpointExitsTwo) {
    auto dir = polarity_fixture(scratch("eval_missing"));
    EXPECT_EQ(run_cli({"eval", "--model", (dir/"none.json").string(), "--data", (dir/"data").string(), "--out",
                       (dir/"out").string()}).code, 2);
    EXPECT_EQ(run_cli({"eval", "--model", (dir/"model.json").string(), "--data", (dir/"nodata").string(), "--out",
                       (dir/"out").string()}).code, 2);
}

TEST(Cli, PowerReferenceConstants) {
    auto dir = scratch("power");
    auto r = run_cli({"power", "--out", dir.string(), "--sop-drone", std::to_string(5.65/11.53e-6/20),
                      "--sop-nodrone", std::to_string(0.3/11.53e-6/20), "--flops", "5.62e6"});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = read_json(dir/"power_report.json");
    EXPECT_NEAR(j.at("tx1").at("total_mw").get<double>(), 2640.74, 0.01);
    EXPECT_NEAR(j.at("speck").at("total_mw").at("no_drone").get<double>(), 1.78, 1e-6);
    EXPECT_NEAR(j.at("speck").at("total_mw").at("drone").get<double>(), 7.13, 1e-6);
    EXPECT_NEAR(j.at("battery_hours").at("tx1").get<double>(), 14.0, 0.28);

    std::ifstream sweep(dir/"sweep.csv");
    std::string line, last;
    std::getline(sweep, line);
    EXPECT_EQ(line, "drone_fraction,load_mw,hours");
    std::getline(sweep, line);
    const double first_hours = std::stod(line.substr(line.rfind(',') + 1));
    while (std::getline(sweep, line)) last = line;
    EXPECT_NEAR(first_hours, j.at("battery_hours").at("speck_no_drone").get<double>(), 1e-3);
    EXPECT_NEAR(std::stod(last.substr(last.rfind(',') + 1)), j.at("battery_hours").at("speck_drone").get<double>(),
                1e-3);
}

TEST(Cli, PowerZeroSopsIsIdle) {
    auto dir = scratch("power_zero");
    ASSERT_EQ(run_cli({"power", "--out", dir.string(), "--sop-drone", "0", "--sop-nodrone", "0", "--flops", "0"}).code,
              0);
    auto j = read_json(dir/"power_report.json");
    EXPECT_EQ(j.at("speck").at("total_mw").at("drone").get<double>(), 1.48);
}

TEST(Cli, PowerMeasuredFromModelAndFit) {
    auto dir = polarity_fixture(scratch("power_model"));
    write_text(dir/"meas.csv", "sop_per_s,power_mw\n0,1.5\n100000,2.7\n");
    auto r = run_cli({"power", "--out", (dir/"out").string(), "--model", (dir/"model.json").string(), "--data",
                      (dir/"data").string(), "--ann-model", (dir/"model.json").string(), "--measurements",
                      (dir/"meas.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto j = read_json(dir/"out"/"power_report.json");
    EXPECT_EQ(j.at("sops").at("drone").at("count").get<int>(), 2);
    EXPECT_NEAR(j.at("fit").at("p_idle_mw").get<double>(), 1.5, 1e-12);
}

TEST(Cli, PowerMissingInputsExitTwo) {
    auto dir = scratch("power_missing");
    EXPECT_EQ(run_cli({"power", "--out", dir.string(), "--flops", "1"}).code, 2);
    EXPECT_EQ(run_cli({"power", "--out", dir.string(), "--sop-drone", "1", "--sop-nodrone", "1"}).code, 2);
    EXPECT_EQ(run_cli({"power", "--out", dir.string(), "--sop-drone", "1", "--sop-nodrone", "1", "--flops", "1",
                       "--measurements", (dir/"none.csv").string()}).code, 2);
}

TEST(Cli, ConvertWritesTensor) {
    auto dir = polarity_fixture(scratch("convert"));
    auto csv = (dir/"data"/"scenes"/"scene_0000.csv").string();
    ASSERT_EQ(run_cli({"convert", "--events", csv, "--out", (dir/"t.json").string()}).code, 0);
    auto j = read_json(dir/"t.json");
    EXPECT_EQ(j.at("steps").get<int>(), 50);
    EXPECT_EQ(j.at("counts").size(), 50u*2*8*8);
    ASSERT_EQ(run_cli({"convert", "--events", csv, "--out", (dir/"f.json").string(), "--aggregate"}).code, 0);
    EXPECT_EQ(read_json(dir/"f.json").at("counts").size(), 64u);
    EXPECT_EQ(run_cli({"convert", "--events", csv, "--out", (dir/"x.json").string(), "--step-us", "300"}).code, 1);
    EXPECT_EQ(run_cli({"convert", "--events", (dir/"none.csv").string(), "--out", (dir/"x.json").string()}).code, 2);
}
