#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include <tripwire/snn/engine.hpp>
#include <tripwire/train/adam.hpp>
#include <tripwire/train/bptt.hpp>
#include <tripwire/train/losses.hpp>
#include <tripwire/train/trainer.hpp>

using namespace tripwire;
using namespace tripwire::snn;
using namespace tripwire::train;

namespace {

// 2x8x8 input, conv(2->3, pool 2), conv(3->4), fc(64->2).
basic_network_spec<double> toy_network(std::uint64_t seed) {
    network_spec s;
    s.input = {2, 8, 8};
    s.layers.push_back(conv_layer(2, 3, 3, 1, 1, 2));
    s.layers.push_back(conv_layer(3, 4, 3, 1, 1, 1));
    s.layers.push_back(fc_layer(4*4*4, 2));
    init_weights(s, seed, 1.0);
    auto d = convert_spec<double>(s);
    d.layers[1].threshold = 0.8;
    d.layers[2].threshold = 1.2;
    return d;
}

binned_sample toy_sample(std::mt19937_64& rng, label lbl, int steps = 8) {
    binned_sample b;
    b.steps = steps;
    b.height = b.width = 8;
    b.counts.resize(std::size_t(steps)*b.step_size());
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& c: b.counts) c = u(rng) < 0.25 ? count_t(1 + rng() % 2) : 0;
    b.lbl = lbl;
    return b;
}

template <typename Real>
std::vector<Real> flatten(const layer_grads<Real>& g) {
    std::vector<Real> out;
    for (const auto& l: g) out.insert(out.end(), l.begin(), l.end());
    return out;
}

double norm(const std::vector<double>& v) {
    double s = 0;
    for (double x: v) s += x*x;
    return std::sqrt(s);
}

std::vector<binned_sample> synthetic_snn_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<binned_sample> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(toy_sample(rng, i % 2 ? label::drone : label::no_drone, 4));
    return out;
}

} // namespace

TEST(Losses, MseExamples) {
    std::vector<std::array<double, 2>> hit(5, {1, 0});
    EXPECT_EQ(mse_step_loss<double>(hit, label::drone), 0.0);
    std::vector<std::array<double, 2>> one{{2, 1}};
    EXPECT_EQ(mse_step_loss<double>(one, label::drone), 1.0);
    std::vector<std::array<double, 2>> zero(7, {0, 0});
    EXPECT_EQ(mse_step_loss<double>(zero, label::drone), 0.5);
    EXPECT_EQ(mse_step_loss<double>(zero, label::no_drone), 0.5);
}

TEST(Losses, SopExamples) {
    const double a = default_sop_alpha(1e5);
    EXPECT_EQ(a, 1e-9);
    EXPECT_EQ(sop_loss(1e5, 1e5, a), 0.0);
    EXPECT_DOUBLE_EQ(sop_loss(1.1e5, 1e5, a), 0.1);
    EXPECT_DOUBLE_EQ(sop_loss(0.9e5, 1e5, a), 0.1);
}

TEST(Losses, WeightExamples) {
    network_spec s;
    s.layers.resize(2);
    s.layers[0].weights = {0.5f, -0.8f};
    s.layers[1].weights = {0.2f};
    EXPECT_FLOAT_EQ(weight_loss(s), 1.0f);
    auto scaled = s;
    for (auto& l: scaled.layers) for (auto& w: l.weights) w *= 4;
    EXPECT_FLOAT_EQ(weight_loss(scaled), 4*weight_loss(s));
    for (auto& l: s.layers) std::fill(l.weights.begin(), l.weights.end(), 0.f);
    EXPECT_EQ(weight_loss(s), 0.f);
}

TEST(Losses, WeightSubgradient) {
    network_spec s;
    s.layers.resize(3);
    s.layers[0].weights = {0.5f, -0.8f, 0.8f};
    s.layers[1].weights = {0.f, 0.f};
    s.layers[2].weights = {0.3f, 0.3f};
    std::vector<std::vector<float>> g{{0, 0, 0}, {0, 0}, {0, 0}};
    add_weight_loss_grad(s, g);
    EXPECT_EQ(g[0], (std::vector<float>{0, -1, 0}));
    EXPECT_EQ(g[1], (std::vector<float>{0, 0}));
    EXPECT_EQ(g[2], (std::vector<float>{1, 0}));
}

TEST(Losses, TotalExamples) {
    EXPECT_EQ(total_loss(0.5, 0, 0), 0.5);
    EXPECT_DOUBLE_EQ(total_loss(0.5, 0.1, 1.0), 1.6);
}

TEST(Losses, CrossEntropy) {
    EXPECT_NEAR(cross_entropy<double>({0, 0}, label::drone), std::log(2.0), 1e-15);
    EXPECT_NEAR(cross_entropy<double>({1000, 0}, label::drone), 0, 1e-12);
    EXPECT_NEAR(cross_entropy<double>({1000, 0}, label::no_drone), 1000, 1e-9);
}

TEST(Bptt, UnregularizedLossIsMseBitExact) {
    std::mt19937_64 rng(8);
    auto spec = toy_network(3);
    std::vector<binned_sample> batch{toy_sample(rng, label::drone), toy_sample(rng, label::no_drone)};
    bptt_options opt;
    auto g = bptt_grad(spec, batch, opt);
    double mse = 0;
    for (auto& b: batch) mse += mse_step_loss(snn_forward(spec, b), b.lbl);
    EXPECT_EQ(g.loss, g.mse);
    EXPECT_EQ(g.sop, 0.0);
    EXPECT_EQ(g.weight, 0.0);
    EXPECT_DOUBLE_EQ(g.mse, mse/2);
}

TEST(Bptt, SoftModeMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed*7919);
        auto spec = toy_network(seed);
        std::vector<binned_sample> batch{toy_sample(rng, label::drone), toy_sample(rng, label::no_drone)};
        bptt_options opt;
        opt.engine.mode = spike_mode::soft;
        opt.regularize = true;
        opt.target_sops = 400;
        opt.alpha = 1e-6;

        auto analytic = flatten(bptt_grad(spec, batch, opt).grads);
        std::vector<double> numeric;
        const double h = 1e-5;
        for (std::size_t l = 0; l < spec.layers.size(); ++l) {
            for (std::size_t k = 0; k < spec.layers[l].weights.size(); ++k) {
                auto p = spec, m = spec;
                p.layers[l].weights[k] += h;
                m.layers[l].weights[k] -= h;
                numeric.push_back((bptt_grad(p, batch, opt).loss - bptt_grad(m, batch, opt).loss)/(2*h));
            }
        }
        std::vector<double> diff(analytic.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
        const double rel = norm(diff)/std::max(norm(analytic), norm(numeric));
        EXPECT_LT(rel, 1e-4) << "seed " << seed;
        EXPECT_GT(norm(analytic), 1e-3) << "seed " << seed;
    }
}

TEST(Bptt, DuplicateSampleDoublesGradient) {
    std::mt19937_64 rng(4);
    auto spec = convert_spec<float>(toy_network(2));
    auto s = toy_sample(rng, label::drone);
    bptt_options opt;
    auto one = bptt_grad(spec, std::vector<binned_sample>{s}, opt);
    auto two = bptt_grad(spec, std::vector<binned_sample>{s, s}, opt);
    auto a = flatten(one.sample_sum), b = flatten(two.sample_sum);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(b[i], 2*a[i]);
    EXPECT_EQ(flatten(one.grads), flatten(two.grads));
}

TEST(Bptt, ZeroWeightsHaveZeroSubgradient) {
    std::mt19937_64 rng(6);
    auto spec = default_architecture(8, 8, net_mode::spiking);
    std::vector<binned_sample> batch{toy_sample(rng, label::drone)};
    bptt_options opt;
    opt.regularize = true;
    auto g = bptt_grad(spec, batch, opt);
    EXPECT_EQ(g.weight, 0.0);
    for (const auto& l: g.grads) {
        for (float v: l) EXPECT_EQ(v, 0.f);
    }
}

TEST(Bptt, ThreadCountDoesNotChangeResult) {
    std::mt19937_64 rng(10);
    auto spec = convert_spec<float>(toy_network(4));
    std::vector<binned_sample> batch;
    for (int i = 0; i < 5; ++i) batch.push_back(toy_sample(rng, i % 2 ? label::drone : label::no_drone));
    bptt_options opt;
    opt.regularize = true;
    opt.target_sops = 100;
    auto a = bptt_grad(spec, batch, opt, 1);
    auto b = bptt_grad(spec, batch, opt, 3);
    EXPECT_EQ(flatten(a.grads), flatten(b.grads));
    EXPECT_EQ(a.loss, b.loss);
}

// Stepping against the SOP part of the gradient lowers the expected SOP count
// when the batch is above target.
TEST(Bptt, SopGradientPointsTowardFewerSops) {
    int soft_ok = 0, hard_ok = 0, hard_total = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        std::mt19937_64 rng(seed);
        auto spec = toy_network(seed + 100);
        std::vector<binned_sample> batch{toy_sample(rng, label::drone), toy_sample(rng, label::no_drone)};
        bptt_options off;
        off.engine.mode = spike_mode::soft;
        bptt_options on = off;
        on.regularize = true;
        on.target_sops = 1;
        on.alpha = 1e-6;
        auto g_on = bptt_grad(spec, batch, on);
        auto g_off = bptt_grad(spec, batch, off);
        ASSERT_GT(g_on.mean_sops, on.target_sops);

        // Isolate the SOP term: remove the MSE part and the weight subgradient.
        auto sop_grad = g_on.grads;
        layer_grads<double> wgrad = zero_grads(spec);
        add_weight_loss_grad(spec, wgrad);
        for (std::size_t l = 0; l < sop_grad.size(); ++l) {
            for (std::size_t k = 0; k < sop_grad[l].size(); ++k) {
                sop_grad[l][k] -= g_off.grads[l][k] + wgrad[l][k];
            }
        }
        const double gn = norm(flatten(sop_grad));
        ASSERT_GT(gn, 0);
        auto stepped = spec;
        for (std::size_t l = 0; l < sop_grad.size(); ++l) {
            for (std::size_t k = 0; k < sop_grad[l].size(); ++k) stepped.layers[l].weights[k] -= 1e-3*sop_grad[l][k]/gn;
        }
        soft_ok += bptt_grad(stepped, batch, off).mean_sops < g_off.mean_sops;

        bptt_options hard;
        const double before = bptt_grad(spec, batch, hard).mean_sops;
        auto big = spec;
        for (std::size_t l = 0; l < sop_grad.size(); ++l) {
            for (std::size_t k = 0; k < sop_grad[l].size(); ++k) big.layers[l].weights[k] -= 0.2*sop_grad[l][k]/gn;
        }
        const double after = bptt_grad(big, batch, hard).mean_sops;
        if (after != before) {
            ++hard_total;
            hard_ok += after < before;
        }
    }
    EXPECT_EQ(soft_ok, 10);
    EXPECT_GE(hard_ok*4, hard_total*3) << hard_ok << " of " << hard_total;
}

TEST(Adam, FirstStepIsMinusLearningRate) {
    std::vector<float> p{1, -2, 3};
    adam_state<float> s;
    adam_step<float>({&p}, {{1, 1, 1}}, s, 0.01);
    EXPECT_NEAR(p[0], 0.99, 1e-6);
    EXPECT_NEAR(p[1], -2.01, 1e-6);
    EXPECT_EQ(s.step, 1);
}

TEST(Adam, SignAndZeroGradient) {
    std::vector<double> p{0, 0, 5};
    adam_state<double> s;
    adam_step<double>({&p}, {{0.3, -7, 0}}, s, 0.1);
    EXPECT_LT(p[0], 0);
    EXPECT_GT(p[1], 0);
    EXPECT_EQ(p[2], 5);
    for (int i = 0; i < 10; ++i) adam_step<double>({&p}, {{0, 0, 0}}, s, 0.1);
    EXPECT_EQ(p[2], 5);
}

TEST(Adam, ShapeMismatchThrows) {
    std::vector<float> p{1, 2};
    adam_state<float> s;
    EXPECT_THROW(adam_step<float>({&p}, {{1}}, s, 0.1), config_error);
    EXPECT_THROW(adam_step<float>({&p}, {}, s, 0.1), config_error);
}

TEST(Split, HundredSamplesGiveNinetyFiveFive) {
    std::vector<label> labels(100);
    for (std::size_t i = 0; i < 100; ++i) labels[i] = i % 2 ? label::drone : label::no_drone;
    auto sp = split_dataset(std::span<const label>(labels), 1);
    EXPECT_EQ(sp.train.size(), 95u);
    EXPECT_EQ(sp.validation.size(), 5u);
}

TEST(Split, DisjointExhaustiveDeterministicStratified) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 20 + rng() % 300;
        std::vector<label> labels(n);
        std::size_t drones = 0;
        for (auto& l: labels) {
            l = rng() % 3 == 0 ? label::drone : label::no_drone;
            drones += l == label::drone;
        }
        auto a = split_dataset(std::span<const label>(labels), trial);
        auto b = split_dataset(std::span<const label>(labels), trial);
        EXPECT_EQ(a.train, b.train);
        EXPECT_EQ(a.validation, b.validation);
        std::set<std::size_t> all(a.train.begin(), a.train.end());
        for (auto i: a.validation) EXPECT_TRUE(all.insert(i).second);
        EXPECT_EQ(all.size(), n);
        EXPECT_EQ(*all.rbegin(), n - 1);
        const std::size_t nv = std::max<std::size_t>(1, std::size_t(std::llround(0.05*double(n))));
        EXPECT_EQ(a.validation.size(), nv);
        std::size_t vd = 0;
        for (auto i: a.validation) vd += labels[i] == label::drone;
        EXPECT_LE(std::abs(double(vd) - double(nv)*double(drones)/double(n)), 1.0);
    }
}

TEST(Split, TooFewSamplesThrows) {
    std::vector<label> labels(19, label::drone);
    EXPECT_THROW(split_dataset(std::span<const label>(labels), 1), config_error);
}

TEST(Config, JsonRoundTripAndValidation) {
    train_config c;
    c.epochs = 7;
    c.regularization.enabled = true;
    c.regularization.target_sops = 2e5;
    nlohmann::json j = c;
    auto back = j.get<train_config>();
    EXPECT_EQ(back.epochs, 7);
    EXPECT_TRUE(back.regularization.enabled);
    EXPECT_EQ(back.regularization.target_sops, 2e5);
    EXPECT_DOUBLE_EQ(back.regularization.effective_alpha(), 10/(2e5*2e5));

    c.regularization.target_sops = 0;
    EXPECT_THROW(validate(c), config_error);
    c = {};
    c.learning_rate = -1;
    EXPECT_THROW(validate(c), config_error);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(validate(c), config_error);
}

TEST(TrainSnn, ZeroLearningRateKeepsWeights) {
    auto data = synthetic_snn_data(40, 1);
    auto spec = default_architecture(8, 8, net_mode::spiking);
    init_weights(spec, 3, 0.5);
    train_config cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0;
    auto r = train_snn(data, spec, cfg);
    ASSERT_EQ(r.history.size(), 1u);
    EXPECT_EQ(r.history[0].epoch, 1);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) EXPECT_EQ(r.spec.layers[l].weights, spec.layers[l].weights);
}

TEST(TrainSnn, SeededRunIsReproducible) {
    auto data = synthetic_snn_data(40, 2);
    auto spec = default_architecture(8, 8, net_mode::spiking);
    init_weights(spec, 4, 0.5);
    train_config cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 11;
    cfg.regularization.enabled = true;
    cfg.regularization.target_sops = 500;
    auto a = train_snn(data, spec, cfg);
    auto b = train_snn(data, spec, cfg);
    ASSERT_EQ(a.history.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a.history[i].epoch, int(i) + 1);
        EXPECT_EQ(a.history[i].loss, b.history[i].loss);
        EXPECT_EQ(a.history[i].val_acc, b.history[i].val_acc);
        EXPECT_EQ(a.history[i].mean_sops, b.history[i].mean_sops);
    }
    for (std::size_t l = 0; l < spec.layers.size(); ++l) EXPECT_EQ(a.spec.layers[l].weights, b.spec.layers[l].weights);
}

TEST(TrainSnn, DivergenceReportsEpoch) {
    auto data = synthetic_snn_data(40, 3);
    auto spec = default_architecture(8, 8, net_mode::spiking);
    init_weights(spec, 5, 0.5);
    spec.layers[3].weights[0] = std::numeric_limits<float>::infinity();
    train_config cfg;
    cfg.epochs = 2;
    try {
        train_snn(data, spec, cfg);
        FAIL() << "expected numeric_error";
    }
    catch (const numeric_error& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
    }
}

TEST(TrainSnn, RejectsReluSpec) {
    auto data = synthetic_snn_data(40, 3);
    EXPECT_THROW(train_snn(data, default_architecture(8, 8, net_mode::relu), {}), config_error);
}

TEST(TrainAnn, ZeroWeightInitialLossIsLn2) {
    std::vector<aggregate_frame> data;
    std::mt19937_64 rng(7);
    for (int i = 0; i < 40; ++i) {
        aggregate_frame f;
        f.height = f.width = 8;
        f.counts.resize(64);
        for (auto& c: f.counts) c = float(rng() % 4);
        f.lbl = i % 2 ? label::drone : label::no_drone;
        data.push_back(std::move(f));
    }
    auto spec = default_architecture(8, 8, net_mode::relu);
    std::vector<const aggregate_frame*> batch;
    for (auto& f: data) batch.push_back(&f);
    auto g = ann_grad(spec, std::span<const aggregate_frame* const>(batch));
    EXPECT_NEAR(g.loss, std::log(2.0), 1e-7);

    train_config cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0;
    auto r = train_ann(data, spec, cfg);
    EXPECT_NEAR(r.history[0].loss, std::log(2.0), 1e-6);
    EXPECT_EQ(r.history[0].mean_sops, 0.0);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) EXPECT_EQ(r.spec.layers[l].weights, spec.layers[l].weights);
}

TEST(TrainAnn, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(17);
    network_spec s;
    s.mode = net_mode::relu;
    s.input = {1, 8, 8};
    s.layers.push_back(conv_layer(1, 3, 3, 1, 1, 2));
    s.layers.push_back(fc_layer(3*4*4, 2));
    init_weights(s, 2);
    auto spec = convert_spec<double>(s);
    std::vector<aggregate_frame> frames(3);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        frames[i].height = frames[i].width = 8;
        frames[i].counts.resize(64);
        for (auto& c: frames[i].counts) c = float(rng() % 4);
        frames[i].lbl = i % 2 ? label::drone : label::no_drone;
    }
    std::vector<const aggregate_frame*> batch;
    for (auto& f: frames) batch.push_back(&f);
    auto loss = [&](const basic_network_spec<double>& sp) {
        return ann_grad(sp, std::span<const aggregate_frame* const>(batch)).loss;
    };
    auto analytic = flatten(ann_grad(spec, std::span<const aggregate_frame* const>(batch)).grads);
    std::vector<double> diff;
    std::size_t i = 0;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        for (std::size_t k = 0; k < spec.layers[l].weights.size(); ++k, ++i) {
            auto p = spec, m = spec;
            p.layers[l].weights[k] += 1e-5;
            m.layers[l].weights[k] -= 1e-5;
            diff.push_back(analytic[i] - (loss(p) - loss(m))/2e-5);
        }
    }
    EXPECT_LT(norm(diff)/norm(analytic), 1e-5);
}
