#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include <tripwire/power/model.hpp>
#include <tripwire/power/sops.hpp>

#include "oracles.hpp"

using namespace tripwire;
using namespace tripwire::power;
namespace fs = std::filesystem;

namespace {

std::vector<power_sample> planted(std::size_t n, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> rate(0, 5e5);
    std::normal_distribution<double> eps(0, 1);
    std::vector<power_sample> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rate(rng);
        const double p = 1.48 + 11.53e-6*r;
        out.push_back({r, p*(1 + noise*eps(rng))});
    }
    return out;
}

} // namespace

TEST(Speck, IdleAndAffine) {
    EXPECT_EQ(speck_power(0), 1.48);
    EXPECT_EQ(speck_params{}.k, 11.53e-6);
    EXPECT_DOUBLE_EQ(speck_power(1e5) + speck_power(2e5) - 1.48, speck_power(3e5));
    EXPECT_NEAR(speck_power(0.3/11.53e-6), 1.78, 1e-12);
    EXPECT_THROW(speck_power(-1), config_error);
}

TEST(Fit, TwoPointsExact) {
    auto f = fit_affine({{0, 1.48}, {1e5, 1.48 + 1.153}});
    EXPECT_NEAR(f.params.p_idle, 1.48, 1e-12);
    EXPECT_NEAR(f.params.k, 11.53e-6, 1e-18);
    EXPECT_NEAR(f.rmse, 0, 1e-12);
}

TEST(Fit, NoiseFreeRecoveryMatchesNormalEquations) {
    auto m = planted(50, 0, 1);
    auto f = fit_affine(m);
    EXPECT_NEAR(f.params.p_idle, 1.48, 1e-12);
    EXPECT_NEAR(f.params.k, 11.53e-6, 1e-18);
    std::vector<double> x, y;
    for (auto& s: m) { x.push_back(s.sop_rate); y.push_back(s.power_mw); }
    auto ne = oracle::normal_equations(x, y);
    EXPECT_NEAR(f.params.p_idle, ne[0], 1e-9);
    EXPECT_NEAR(f.params.k, ne[1], 1e-15);
}

TEST(Fit, OnePercentNoiseWithinOnePercent) {
    auto f = fit_affine(planted(50, 0.01, 2));
    EXPECT_NEAR(f.params.p_idle, 1.48, 0.01*1.48);
    EXPECT_NEAR(f.params.k, 11.53e-6, 0.01*11.53e-6);
    EXPECT_GT(f.rmse, 0);
}

TEST(Fit, ConstantPowerHasZeroSlope) {
    auto f = fit_affine({{0, 2}, {10, 2}, {30, 2}});
    EXPECT_NEAR(f.params.k, 0, 1e-15);
    EXPECT_NEAR(f.params.p_idle, 2, 1e-12);
}

TEST(Fit, DegenerateThrows) {
    EXPECT_THROW(fit_affine({{5, 1}, {5, 2}}), config_error);
    EXPECT_THROW(fit_affine({{5, 1}}), config_error);
}

TEST(Tx1, ReferenceOperatingPoint) {
    EXPECT_NEAR(tx1_dynamic_power(5.62e6, 20), 0.74, 0.005);
    EXPECT_NEAR(tx1_total_power(5.62e6, 20), 2640.74, 0.01);
    EXPECT_EQ(tx1_dynamic_power(0, 20), 0);
}

TEST(Battery, ReferenceEndpoints) {
    scenario_config c;
    EXPECT_NEAR(battery_life(2640.74, c), 14.0, 0.02*14.0);
    EXPECT_NEAR(battery_life(1.78, c)/(24*365), 1.3, 0.13);
    EXPECT_NEAR(battery_life(7.13, c)/730, 6, 0.6);
    EXPECT_NEAR(self_discharge_mw(c), 0.03*37000/730, 1e-12);
}

TEST(Battery, MonotoneInLoadAndCapacity) {
    scenario_config c;
    double prev = battery_life(0, c);
    for (double load = 0.5; load < 100; load *= 1.7) {
        double h = battery_life(load, c);
        EXPECT_LT(h, prev);
        prev = h;
    }
    auto big = c;
    big.battery_wh = 50;
    EXPECT_GT(battery_life(5, big), battery_life(5, c));
}

TEST(Sweep, EndpointsAndMonotone) {
    scenario_config c;
    c.sop_nodrone = 0.3/11.53e-6/20;
    c.sop_drone = 5.65/11.53e-6/20;
    auto pts = scenario_sweep(c);
    ASSERT_EQ(pts.size(), 101u);
    EXPECT_EQ(pts.front().drone_fraction, 0.0);
    EXPECT_EQ(pts.back().drone_fraction, 1.0);
    EXPECT_NEAR(pts.front().load_mw, 1.78, 1e-9);
    EXPECT_NEAR(pts.back().load_mw, 7.13, 1e-9);
    EXPECT_DOUBLE_EQ(pts.front().hours, battery_life(pts.front().load_mw, c));
    EXPECT_DOUBLE_EQ(pts.back().hours, battery_life(pts.back().load_mw, c));
    for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_LT(pts[i].hours, pts[i - 1].hours);
}

TEST(Sweep, RejectsBadConfig) {
    scenario_config c;
    c.battery_wh = 0;
    EXPECT_THROW(scenario_sweep(c), config_error);
    scenario_config d;
    EXPECT_THROW(scenario_load(1.5, d, {}), config_error);
    EXPECT_THROW(scenario_sweep(d, {}, 1), config_error);
}

TEST(Measurements, ReadAndErrors) {
    auto dir = fs::temp_directory_path() / "tripwire_power";
    fs::create_directories(dir);
    {
        std::ofstream out(dir/"ok.csv");
        out << "sop_per_s,power_mw\n0,1.48\n100000,2.633\n";
    }
    auto m = read_measurements(dir/"ok.csv");
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[1].power_mw, 2.633);
    {
        std::ofstream out(dir/"bad.csv");
        out << "sop_per_s,power_mw\n0,1.48\n1e5,x\n";
    }
    try {
        read_measurements(dir/"bad.csv");
        FAIL();
    }
    catch (const parse_error& e) {
        EXPECT_EQ(e.line, 3u);
    }
    {
        std::ofstream out(dir/"hdr.csv");
        out << "rate,power\n";
    }
    EXPECT_THROW(read_measurements(dir/"hdr.csv"), parse_error);
}

TEST(Sops, EmptyAndZeroInputs) {
    auto spec = snn::default_architecture(8, 8, snn::net_mode::spiking);
    snn::init_weights(spec, 1);
    auto empty = measure_sops(spec, {});
    EXPECT_TRUE(empty.drone.empty());
    EXPECT_TRUE(empty.no_drone.empty());
    EXPECT_EQ(empty.drone_summary().count, 0u);

    binned_sample z;
    z.steps = 5;
    z.height = z.width = 8;
    z.counts.assign(5*z.step_size(), 0);
    z.lbl = label::drone;
    auto zb = z;
    zb.lbl = label::no_drone;
    auto d = measure_sops(spec, {z, zb, z});
    EXPECT_EQ(d.drone.size(), 2u);
    EXPECT_EQ(d.no_drone.size(), 1u);
    EXPECT_EQ(d.drone_summary().max, 0.0);
}

TEST(Sops, Summary) {
    auto s = summarize({5, 1, 3, 2});
    EXPECT_EQ(s.count, 4u);
    EXPECT_EQ(s.min, 1);
    EXPECT_EQ(s.max, 5);
    EXPECT_EQ(s.median, 2.5);
    EXPECT_EQ(s.mean, 2.75);
}
