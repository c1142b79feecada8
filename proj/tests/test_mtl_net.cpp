#include <gtest/gtest.h>

#include <cmath>

#include "cpa/training.hpp"
#include "oracles.hpp"

using namespace cpa;
using namespace cpa::nn;

namespace {

NetworkConfig tiny_net(int h = 8, int w = 8) {
    NetworkConfig n;
    n.in_height = h;
    n.in_width = w;
    n.conv_blocks = {{3, 3, 1}, {4, 3, 1}};
    n.head_hidden = 5;
    n.l2_coeff = 1e-2;
    return n;
}

Batch random_batch(int b, int h, int w, Rng& rng) {
    Batch batch;
    batch.inputs = Tensor({b, 3, h, w});
    for (auto& v : batch.inputs.data) v = rng.uniform();
    for (int i = 0; i < b; ++i) {
        batch.intent.push_back(int(rng.below(3)));
        batch.rho.push_back(-3.0 * rng.uniform());
    }
    return batch;
}

ExperimentConfig small_experiment() {
    ExperimentConfig cfg;
    cfg.frame = {16, 4, 16, 4};
    cfg.features.disk_radius = 2;
    cfg.network.in_height = 16;
    cfg.network.in_width = 16;
    cfg.network.conv_blocks = {{8, 3, 1}, {16, 3, 1}};
    return cfg;
}

Dataset first_n(Dataset ds, std::size_t n) {
    ds.records.resize(n);
    return ds;
}

double intent_accuracy(MultitaskNet& net, const Dataset& ds) {
    const auto preds = predict(net, ds);
    int ok = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& p = preds[i].probs;
        const int arg = int(std::max_element(p.begin(), p.end()) - p.begin());
        ok += arg == class_index(ds.records[i].intent);
    }
    return double(ok) / double(ds.size());
}

double rho_mse(MultitaskNet& net, const Dataset& ds) {
    const auto preds = predict(net, ds);
    double s = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) s += std::pow(preds[i].rho_hat - ds.records[i].rho, 2);
    return s / double(ds.size());
}

} // namespace

TEST(MultitaskNet, ComposedGradientCheck) {
    for (bool global_pool : {false, true}) {
        auto cfg = tiny_net();
        cfg.global_pool = global_pool;
        cfg.reg_label_variance = 0.7;
        MultitaskNet net(cfg, 3);
        Rng rng(4);
        const Batch batch = random_batch(3, 8, 8, rng);
        for (auto mode : {TaskMode::Multitask, TaskMode::Intent, TaskMode::Capability}) {
            net.loss_and_grad(batch, mode);
            std::vector<std::vector<double>> analytic;
            for (auto* p : net.params()) analytic.push_back(p->grad.data);
            auto loss = [&] { return MultitaskNet(net).loss_and_grad(batch, mode).total; };
            double worst = 0.0;
            const auto ps = net.params();
            for (std::size_t k = 0; k < ps.size(); ++k)
                for (std::size_t i = 0; i < ps[k]->value.size(); ++i)
                    worst = std::max(worst, oracle::rel_error(analytic[k][i], oracle::central_diff(loss, &ps[k]->value.data[i])));
            EXPECT_LT(worst, 1e-4) << "mode " << to_string(mode) << " global_pool " << global_pool;
        }
    }
}

TEST(MultitaskNet, L2GradientIsTwiceCoefficientTimesWeight) {
    auto cfg = tiny_net();
    cfg.l2_coeff = 0.3;
    MultitaskNet a(cfg, 5);
    auto cfg0 = cfg;
    cfg0.l2_coeff = 0.0;
    MultitaskNet b(cfg0, 5);
    Rng rng(6);
    const Batch batch = random_batch(2, 8, 8, rng);
    a.loss_and_grad(batch, TaskMode::Multitask);
    b.loss_and_grad(batch, TaskMode::Multitask);
    const auto pa = a.params(), pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k)
        for (std::size_t i = 0; i < pa[k]->value.size(); ++i) {
            const double diff = pa[k]->grad.data[i] - pb[k]->grad.data[i];
            const double expect = pa[k]->decay ? 2.0 * 0.3 * pa[k]->value.data[i] : 0.0;
            EXPECT_NEAR(diff, expect, 1e-12);
        }
}

TEST(MultitaskNet, DuplicatesAndSoftmax) {
    MultitaskNet net(tiny_net(), 7);
    Rng rng(8);
    Batch one = random_batch(1, 8, 8, rng);
    Tensor dup({4, 3, 8, 8});
    for (int n = 0; n < 4; ++n) std::copy(one.inputs.data.begin(), one.inputs.data.end(), dup.data.begin() + n * 192);
    const auto out = net.forward(dup, true);
    for (int n = 1; n < 4; ++n) {
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.probs.data[n * 3 + c], out.probs.data[c], 1e-12);
        EXPECT_NEAR(out.rho_hat[n], out.rho_hat[0], 1e-12);
    }
    const auto r = net.forward(random_batch(5, 8, 8, rng).inputs, true);
    for (int n = 0; n < 5; ++n) EXPECT_NEAR(r.probs.data[n * 3] + r.probs.data[n * 3 + 1] + r.probs.data[n * 3 + 2], 1.0, 1e-6);
}

TEST(MultitaskNet, InferModeIndependentOfBatch) {
    MultitaskNet net(tiny_net(), 9);
    Rng rng(10);
    for (int i = 0; i < 3; ++i) net.forward(random_batch(4, 8, 8, rng).inputs, true);
    const Batch batch = random_batch(6, 8, 8, rng);
    const auto all = net.forward(batch.inputs, false);
    for (int n = 0; n < 6; ++n) {
        Tensor x({1, 3, 8, 8});
        std::copy(batch.inputs.data.begin() + n * 192, batch.inputs.data.begin() + (n + 1) * 192, x.data.begin());
        const auto one = net.forward(x, false);
        for (int c = 0; c < 3; ++c) EXPECT_NEAR(one.probs.data[c], all.probs.data[n * 3 + c], 1e-6);
        EXPECT_NEAR(one.rho_hat[0], all.rho_hat[n], 1e-6);
    }
}

TEST(MultitaskNet, RejectsWrongInputShape) {
    MultitaskNet net(tiny_net(), 1);
    EXPECT_THROW(net.forward(Tensor({1, 3, 9, 8}), false), Error);
    auto bad = tiny_net();
    bad.conv_blocks.clear();
    EXPECT_THROW(MultitaskNet(bad, 1), Error);
}

TEST(MultitaskNet, DeterministicInitAndSteps) {
    Rng r1(3), r2(3);
    const Batch batch = random_batch(4, 8, 8, r1);
    MultitaskNet a(tiny_net(), 12), b(tiny_net(), 12);
    for (int i = 0; i < 2; ++i) {
        a.loss_and_grad(batch, TaskMode::Multitask);
        a.adam_step(AdamConfig{});
        b.loss_and_grad(batch, TaskMode::Multitask);
        b.adam_step(AdamConfig{});
    }
    const auto pa = a.params(), pb = b.params();
    for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(pa[k]->value, pb[k]->value);
}

TEST(MultitaskNet, FrozenBackboneAndUnusedHeadStayFixed) {
    MultitaskNet net(tiny_net(), 13);
    Rng rng(14);
    MultitaskNet ref(net);
    const auto frozen = net.backbone_params();
    for (int i = 0; i < 5; ++i) {
        net.loss_and_grad(random_batch(4, 8, 8, rng), TaskMode::Intent);
        net.adam_step(AdamConfig{1e-2}, frozen);
    }
    const auto pn = net.params(), pr = ref.params();
    for (std::size_t k = 0; k < pn.size(); ++k) {
        const bool backbone = pn[k]->name.rfind("backbone.", 0) == 0;
        const bool reg = pn[k]->name.rfind("reg.", 0) == 0;
        if (backbone || reg)
            EXPECT_EQ(pn[k]->value, pr[k]->value) << pn[k]->name;
        else
            EXPECT_NE(pn[k]->value, pr[k]->value) << pn[k]->name;
    }
}

TEST(Training, IntentOnlyToyOverfit) {
    const auto cfg = small_experiment();
    const Dataset ds = first_n(build_dataset(cfg, 21, 11, 1), 32);
    TrainConfig tc;
    tc.adam.lr = 1e-3;
    tc.epochs = 500; // 2 steps per epoch: 1000 steps
    auto ck = initial_checkpoint(ds, cfg.network, tc, TaskMode::Intent);
    const auto log = train_steps(ck, ds);
    EXPECT_EQ(log.size(), 1000u);
    EXPECT_GE(intent_accuracy(ck.model, ds), 0.95);
}

TEST(Training, CapabilityOnlyToyOverfit) {
    const auto cfg = small_experiment();
    const Dataset ds = first_n(build_dataset(cfg, 22, 11, 1), 32);
    TrainConfig tc;
    tc.adam.lr = 1e-3;
    tc.epochs = 500;
    auto ck = initial_checkpoint(ds, cfg.network, tc, TaskMode::Capability);
    const auto log = train_steps(ck, ds);
    for (const auto& e : log) EXPECT_TRUE(std::isfinite(e.loss.total));
    EXPECT_LT(rho_mse(ck.model, ds), 0.05);
}

TEST(Training, MultitaskLossFallsOnToySet) {
    const auto cfg = small_experiment();
    const Dataset ds = first_n(build_dataset(cfg, 23, 11, 1), 32);
    TrainConfig tc;
    tc.adam.lr = 1e-3;
    tc.epochs = 500;
    tc.batch_size = 32;
    auto ck = initial_checkpoint(ds, cfg.network, tc, TaskMode::Multitask);
    const auto log = train_steps(ck, ds);
    ASSERT_EQ(log.size(), 500u);
    EXPECT_LT(log.back().loss.total, 0.1 * log.front().loss.total);
}

TEST(Training, LabelVarianceMatchesTwoPassOracle) {
    const auto cfg = small_experiment();
    const Dataset ds = build_dataset(cfg, 24, 10, 1);
    auto ck = initial_checkpoint(ds, cfg.network, TrainConfig{}, TaskMode::Multitask);
    double mean = 0.0;
    for (const auto& r : ds.records) mean += r.rho;
    mean /= double(ds.size());
    double var = 0.0;
    for (const auto& r : ds.records) var += (r.rho - mean) * (r.rho - mean);
    var /= double(ds.size());
    EXPECT_NEAR(ck.model.config().reg_label_variance, var, 1e-9);
}

TEST(Training, ScheduleCoversEachEpochOnce) {
    BatchSchedule s(10, 4, 99);
    EXPECT_EQ(s.steps_per_epoch(), 3u);
    for (int e = 0; e < 3; ++e) {
        std::vector<int> seen(10, 0);
        for (std::uint64_t b = 0; b < 3; ++b)
            for (auto i : s.batch(std::uint64_t(e) * 3 + b)) ++seen[i];
        for (int c : seen) EXPECT_EQ(c, 1);
    }
    BatchSchedule t(10, 4, 99);
    EXPECT_EQ(t.batch(7), s.batch(7));
}
