// One PASS/FAIL line per acceptance criterion. Exit status is nonzero when
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <unistd.h>

#include "cpa/cpa.hpp"
#include "oracles.hpp"

using namespace cpa;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

nn::Tensor random_tensor(std::vector<int> shape, Rng& rng) {
    nn::Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.normal();
    return t;
}

Outcome morphology() {
    Outcome o;
    const auto t0 = Clock::now();
    Rng rng(101);
    const int radii[] = {0, 1, 3, 7};
    int mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Matrix s(1 + int(rng.below(64)), 1 + int(rng.below(64)));
        for (auto& v : s.data) v = rng.uniform();
        const int r = radii[trial % 4];
        const auto [sup, inf] = local_extrema(s, r);
        const auto [osup, oinf] = oracle::disk_extrema(s, r);
        mismatches += sup.data != osup.data || inf.data != oinf.data;
    }
    const double secs = seconds_since(t0);
    o.check(mismatches == 0, std::to_string(mismatches) + " of 100 matrices differ from the brute-force scan");
    o.check(secs < 10.0, "runtime " + fmt("%.2f s", secs));
    o.note("100 matrices exact, " + fmt("%.2f s", secs));
    return o;
}

Outcome spectrogram_oracle() {
    Outcome o;
    Rng rng(102);
    double worst = 0.0;
    for (int n = 1; n <= 16; ++n)
        for (int k = 1; k <= 8; ++k) {
            std::vector<cplx> y(static_cast<std::size_t>(n * k));
            for (auto& v : y) v = {rng.normal(), rng.normal()};
            const auto s = spectrogram(y, n);
            const auto ref = oracle::spectrogram(y, n);
            for (std::size_t i = 0; i < s.data.size(); ++i) worst = std::max(worst, std::abs(s.data[i] - ref.data[i]));
        }
    o.check(worst <= 1e-10, "max deviation " + fmt("%.3g", worst));
    o.note("N 1..16 x K 1..8, max deviation " + fmt("%.3g", worst));
    return o;
}

Outcome gradients() {
    using namespace nn;
    Outcome o;
    Rng rng(103);
    double worst = 0.0;
    auto take = [&](const char* name, double e) {
        worst = std::max(worst, e);
        o.check(e < 1e-4, std::string(name) + " rel error " + fmt("%.3g", e));
    };
    for (int k : {1, 3})
        for (int stride : {1, 2}) {
            Conv2D conv("c", 2, 3, k, stride, rng);
            take("conv", oracle::layer_gradient_error(conv, random_tensor({2, 2, 5, 6}, rng), rng));
        }
    Dense dense("d", 7, 4, rng);
    take("dense", oracle::layer_gradient_error(dense, random_tensor({3, 7}, rng), rng));
    ReLU relu;
    auto xr = random_tensor({2, 3, 4, 4}, rng);
    for (auto& v : xr.data)
        if (std::abs(v) < 1e-2) v = 0.5;
    take("relu", oracle::layer_gradient_error(relu, xr, rng));
    AvgPool2 pool;
    take("avgpool", oracle::layer_gradient_error(pool, random_tensor({2, 2, 5, 7}, rng), rng));
    GlobalAvgPool gpool;
    take("global pool", oracle::layer_gradient_error(gpool, random_tensor({2, 3, 4, 5}, rng), rng));
    Flatten flat;
    take("flatten", oracle::layer_gradient_error(flat, random_tensor({2, 3, 2, 2}, rng), rng));
    BatchNorm2D bn("bn", 3, 0.9, 1e-5);
    bn.params()[0]->value = random_tensor({3}, rng);
    bn.params()[1]->value = random_tensor({3}, rng);
    auto xb = random_tensor({4, 3, 3, 3}, rng);
    take("batchnorm train", oracle::layer_gradient_error(bn, xb, rng, true));
    take("batchnorm infer", oracle::layer_gradient_error(bn, xb, rng, false));

    for (bool global_pool : {false, true}) {
        NetworkConfig cfg;
        cfg.in_height = 8;
        cfg.in_width = 8;
        cfg.conv_blocks = {{3, 3, 1}, {4, 3, 1}};
        cfg.head_hidden = 5;
        cfg.l2_coeff = 1e-2;
        cfg.reg_label_variance = 0.7;
        cfg.global_pool = global_pool;
        MultitaskNet net(cfg, 3);
        Batch batch;
        batch.inputs = Tensor({3, 3, 8, 8});
        for (auto& v : batch.inputs.data) v = rng.uniform();
        for (int i = 0; i < 3; ++i) {
            batch.intent.push_back(int(rng.below(3)));
            batch.rho.push_back(-3.0 * rng.uniform());
        }
        for (auto mode : {TaskMode::Multitask, TaskMode::Intent, TaskMode::Capability}) {
            net.loss_and_grad(batch, mode);
            std::vector<std::vector<double>> analytic;
            for (auto* p : net.params()) analytic.push_back(p->grad.data);
            auto loss = [&] { return MultitaskNet(net).loss_and_grad(batch, mode).total; };
            double e = 0.0;
            const auto ps = net.params();
            for (std::size_t k = 0; k < ps.size(); ++k)
                for (std::size_t i = 0; i < ps[k]->value.size(); ++i)
                    e = std::max(e, oracle::rel_error(analytic[k][i], oracle::central_diff(loss, &ps[k]->value.data[i])));
            take("composed network", e);
        }
    }
    o.note("worst relative error " + fmt("%.3g", worst));
    return o;
}

Outcome loss_identities() {
    using namespace nn;
    Outcome o;
    Rng rng(104);
    Tensor logits = random_tensor({6, 3}, rng);
    const Tensor p = softmax(logits);
    Tensor q({6, 3});
    double ce = 0.0;
    for (int r = 0; r < 6; ++r) {
        q.data[r * 3 + r % 3] = 1.0;
        ce -= std::log(p.data[r * 3 + r % 3]);
    }
    ce /= 6.0;
    const double f0 = focal_loss(q, p, 0.0);
    o.check(std::abs(f0 - ce) <= 1e-9, "focal(gamma=0) vs cross-entropy " + fmt("%.3g", f0 - ce));

    const double w1 = total_loss(0.0, 3.0, 5.0, 0.8, 0.0);
    const double w2 = total_loss(0.0, 3.0, 10.0, 0.8, 0.0);
    const double w4 = total_loss(0.0, 3.0, 20.0, 0.8, 0.0);
    o.check(w2 == w1 / 2.0 && w4 == w2 / 2.0, "regression term is not exactly linear in 1/(amplification)");
    o.check(total_loss(0.7, 0.0, 10.0, 2.0, 0.05) == 0.7 + 0.05, "total loss with zero regression error");

    Tensor half({1, 3});
    half.data = {0.5, 0.25, 0.25};
    Tensor lab({1, 3});
    lab.data = {1.0, 0.0, 0.0};
    const double hv = focal_loss(lab, half, 2.0);
    o.check(std::abs(hv - 0.25 * std::log(2.0)) <= 1e-9, "hand value " + fmt("%.12g", hv));
    o.note("focal(0)=CE, linear weighting, 0.25 ln 2 = " + fmt("%.9f", hv));
    return o;
}

Outcome link_budget() {
    Outcome o;
    const LinkBudget lb;
    const double lp = link::pointing_loss(lb.jitter_rad, lb.divergence_rad);
    o.check(std::abs(lp - std::exp(-0.08)) <= 1e-6 * std::exp(-0.08), "pointing loss " + fmt("%.9f", lp));
    const double lambda = lb.wavelength_m;
    const double hand = std::pow(std::numbers::pi * lb.tx_aperture_m / lambda, 2) *
                        std::pow(std::numbers::pi * lb.rx_aperture_m / lambda, 2) *
                        std::pow(lambda / (4.0 * std::numbers::pi * lb.distance_m), 2) * std::exp(-0.08);
    const double hand_dbw = 10.0 * std::log10(lb.tx_power_watts * hand);
    const double pr = received_power_dbw(lb);
    o.check(std::abs(pr - hand_dbw) <= 1e-6 * std::abs(hand_dbw), "received power vs hand calculation");
    o.check(pr >= -49.0 && pr <= -37.0, "P_r = " + fmt("%.4f dBW", pr) + " outside [-49, -37] dB");
    o.note("L_point = " + fmt("%.6f", lp) + ", P_r(500 km) = " + fmt("%.4f dBW", pr));
    return o;
}

Outcome ber_physics() {
    Outcome o;
    const auto t0 = Clock::now();
    const double ebn0 = std::pow(10.0, 0.4);
    const NoiseConfig noise{db10(0.5 / ebn0)};
    const FrameConfig cfg{64, 8, 64, 4};
    Rng rng(2024);
    std::size_t errors = 0, total = 0;
    while (total < 1'000'000) {
        const Bits bits = rng.bits(cfg.bits_per_sample());
        auto y = remove_cp(ofdm_modulate(qam_modulate(bits, cfg), cfg), cfg);
        const auto w = awgn(y.size(), noise, rng);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += w[i];
        const auto rx = qam_demodulate(ofdm_demodulate(y, cplx(1.0, 0.0), cfg), cfg);
        for (std::size_t i = 0; i < bits.size(); ++i) errors += bits[i] != rx[i];
        total += bits.size();
    }
    const double secs = seconds_since(t0);
    const double expected = 0.5 * std::erfc(std::sqrt(2.0 * ebn0) / std::sqrt(2.0));
    const double ber = double(errors) / double(total);
    o.check(std::abs(ber - expected) <= 0.1 * expected, "BER " + fmt("%.4g", ber) + " vs " + fmt("%.4g", expected));
    o.check(secs < 120.0, "runtime " + fmt("%.1f s", secs));
    o.note("BER " + fmt("%.5f", ber) + " vs Q " + fmt("%.5f", expected) + " over " + std::to_string(total) + " bits, " +
           fmt("%.1f s", secs));
    return o;
}

Outcome threat_algebra() {
    Outcome o;
    LinkBudget adv;
    adv.tx_power_watts = 0.5;
    adv.distance_m = 750e3;

    ThreatScenario s;
    s.kind = ThreatKind::Deceptive;
    s.frame = {64, 8, 16, 4};
    s.adversary_link = adv;
    s.estimation_error = 0.0;
    s.noise.variance_dbw = -300.0;
    const auto out = gen_deceptive(s, 8);
    const auto x = detail::random_waveform(s.frame, derive_seed(8, detail::LegitBits)).samples;
    const auto sp = detail::random_waveform(s.frame, derive_seed(8, detail::MaliciousBits)).samples;
    const double hs = std::sqrt(adv.tx_power_watts) * channel_gain(adv);
    cplx cross{}, auto_x{};
    for (std::size_t i = 0; i < x.size(); ++i) {
        cross += (out.received[i] - hs * sp[i]) * std::conj(x[i]);
        auto_x += x[i] * std::conj(x[i]);
    }
    const double ratio = std::abs(cross) / std::abs(auto_x);
    o.check(ratio < 1e-6, "residual legitimate correlation ratio " + fmt("%.3g", ratio));

    ThreatScenario d;
    d.kind = ThreatKind::Disruptive;
    d.frame = {64, 8, 16, 4};
    d.adversary_link = adv;
    d.obfuscation_prob = 0.0;
    ThreatScenario n;
    n.kind = ThreatKind::NonAdversarial;
    n.frame = d.frame;
    bool identical = true;
    for (std::uint64_t seed : {1u, 21u, 77u}) {
        const auto a = gen_disruptive(d, seed);
        const auto b = gen_non_adversarial(n, seed);
        identical = identical && a.received.size() == b.received.size();
        for (std::size_t i = 0; identical && i < a.received.size(); ++i)
            identical = a.received[i].real() == b.received[i].real() && a.received[i].imag() == b.received[i].imag();
        identical = identical && a.raw_ber == b.raw_ber;
    }
    o.check(identical, "p_alpha = 0 disruptive output differs from the non-adversarial model");
    o.note("xi = 0 correlation ratio " + fmt("%.3g", ratio) + ", p_alpha = 0 bit-exact over 3 seeds");
    return o;
}

Outcome scale_table() {
    Outcome o;
    // Rows: non-adversarial, disruptive, deceptive. Columns: high, moderate, low.
    const int table[3][3] = {{2, 1, 0}, {4, 3, 3}, {5, 6, 7}};
    const ThreatKind rows[3] = {ThreatKind::NonAdversarial, ThreatKind::Disruptive, ThreatKind::Deceptive};
    const std::uint8_t f[3][3] = {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
    const std::uint8_t s[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    int ok = 0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const bool typed = threat_scale(rows[r], static_cast<Capability>(c)) == table[r][c];
            const bool encoded = threat_scale(std::span(f[r], 3), std::span(s[c], 3)) == table[r][c];
            ok += typed && encoded;
        }
    o.check(ok == 9, std::to_string(9 - ok) + " cells differ");
    o.note(std::to_string(ok) + "/9 cells match");
    return o;
}

struct DeskRun {
    Evaluation multitask;
    std::vector<Evaluation> sequential;
    double seconds = 0.0;
};

DeskRun desk_run() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg;
    const auto train = build_dataset(cfg, cfg.master_seed, cfg.samples_per_kind);
    const auto test = build_dataset(cfg, derive_seed(cfg.master_seed, 1), cfg.test_samples_per_kind);
    DeskRun run;
    auto mt = train_multitask(train, cfg.network, cfg.train);
    run.multitask = evaluate_multitask(test, mt.checkpoint.model, cfg.assessment);
    auto cls = train_single_task(train, nn::TaskMode::Intent, cfg.network, cfg.train);
    auto reg = train_single_task(train, nn::TaskMode::Capability, cfg.network, cfg.train);
    run.sequential = evaluate_sequential(test, reg.checkpoint.model, cls.checkpoint.model, {1e-2, 1e-3, 1e-4}, cfg.assessment);
    run.seconds = seconds_since(t0);
    return run;
}

Outcome end_to_end(const DeskRun& run) {
    Outcome o;
    const auto dec = static_cast<std::size_t>(class_index(ThreatKind::Deceptive));
    const double intent = run.multitask.report.intent_accuracy;
    const double mt_recall = run.multitask.report.recall[dec].value_or(0.0);
    const double seq_recall = run.sequential.front().report.recall[dec].value_or(0.0);
    o.check(intent >= 0.90, "intent accuracy " + fmt("%.4f", intent) + " < 0.90");
    o.check(mt_recall >= seq_recall, "deceptive recall multitask " + fmt("%.4f", mt_recall) + " < sequential " +
                                         fmt("%.4f", seq_recall));
    o.check(run.seconds < 1800.0, "runtime " + fmt("%.0f s", run.seconds));
    o.note("intent " + fmt("%.4f", intent) + ", capability " + fmt("%.4f", run.multitask.report.capability_accuracy) +
           ", overall " + fmt("%.4f", run.multitask.report.overall_accuracy) + ", deceptive recall " +
           fmt("%.4f", mt_recall) + " vs sequential(1e-2) " + fmt("%.4f", seq_recall) + ", " + fmt("%.0f s", run.seconds));
    return o;
}

Outcome determinism() {
    Outcome o;
    ExperimentConfig cfg;
    cfg.frame = {16, 4, 16, 4};
    cfg.features.disk_radius = 2;
    cfg.network.in_height = 16;
    cfg.network.in_width = 16;
    cfg.network.conv_blocks = {{4, 3, 1}, {8, 3, 1}};
    const auto dir = std::filesystem::temp_directory_path() / ("cpa_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto a = (dir / "a.cpad").string(), b = (dir / "b.cpad").string();
    save_dataset(a, build_dataset(cfg, 99, 8, 1));
    save_dataset(b, build_dataset(cfg, 99, 8, 4));
    o.check(io::read_file(a) == io::read_file(b), "dataset files differ between runs");

    const auto ds = load_dataset(a);
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch_size = 4;
    tc.adam.lr = 1e-3;
    auto full = initial_checkpoint(ds, cfg.network, tc, nn::TaskMode::Multitask);
    const auto log_full = train_steps(full, ds, 20);

    const auto ck_path = (dir / "m.ckpt").string();
    save_checkpoint(ck_path, full);
    auto reloaded = load_checkpoint(ck_path);
    o.check(encode_checkpoint(reloaded) == encode_checkpoint(full), "checkpoint round trip is not bit-exact");
    bool same_params = true;
    const auto pa = full.model.params(), pb = reloaded.model.params();
    for (std::size_t i = 0; i < pa.size(); ++i) same_params = same_params && pa[i]->value.data == pb[i]->value.data;
    o.check(same_params, "reloaded parameters differ");

    auto part = initial_checkpoint(ds, cfg.network, tc, nn::TaskMode::Multitask);
    train_steps(part, ds, 10);
    save_checkpoint(ck_path, part);
    auto resumed = load_checkpoint(ck_path);
    const auto log_rest = train_steps(resumed, ds, 20);
    bool same_steps = log_full.size() == 20 && log_rest.size() == 10;
    for (std::size_t i = 0; same_steps && i < 10; ++i)
        same_steps = log_rest[i].step == log_full[10 + i].step && log_rest[i].loss.total == log_full[10 + i].loss.total;
    o.check(same_steps, "resumed losses differ from the uninterrupted run");
    o.check(encode_checkpoint(resumed) == encode_checkpoint(full), "resumed model differs after 10 steps");
    std::filesystem::remove_all(dir);
    o.note("dataset bytes identical, checkpoint round trip exact, resume exact over 10 steps");
    return o;
}

Outcome sequential_gate(const DeskRun& run) {
    Outcome o;
    const double thetas[] = {1e-2, 1e-3, 1e-4};
    std::string counts;
    for (std::size_t t = 0; t < run.sequential.size(); ++t) {
        const auto& ev = run.sequential[t];
        std::size_t below_called = 0, above = 0;
        for (const auto& p : ev.predictions) {
            const bool over = std::pow(10.0, p.rho_hat) > thetas[t];
            above += over;
            below_called += !over && p.classified;
        }
        o.check(below_called == 0, std::to_string(below_called) + " classifier calls at or below theta " + fmt("%g", thetas[t]));
        o.check(ev.report.classifier_invocations == above, "invocation count disagrees with gate at theta " + fmt("%g", thetas[t]));
        counts += (counts.empty() ? "" : ", ") + fmt("%g: ", thetas[t]) + std::to_string(ev.report.classifier_invocations) + "/" +
                  std::to_string(ev.predictions.size());
    }
    o.note("classifier calls per theta " + counts + ", none at or below the gate");
    return o;
}

} // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failures += !o.pass;
        std::printf("criterion %2d %-28s %s  %s\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, "morphology oracle", morphology);
    report(2, "spectrogram oracle", spectrogram_oracle);
    report(3, "gradient check", gradients);
    report(4, "loss identities", loss_identities);
    report(5, "link budget", link_budget);
    report(6, "BER physics", ber_physics);
    report(7, "threat-model algebra", threat_algebra);
    report(8, "threat scale table", scale_table);

    DeskRun run;
    bool ran = false;
    std::string run_error;
    try {
        run = desk_run();
        ran = true;
    } catch (const std::exception& e) {
        run_error = e.what();
    }
    auto need_run = [&](auto fn) {
        return [&, fn]() -> Outcome {
            if (!ran) return {false, "desk run failed: " + run_error};
            return fn(run);
        };
    };
    report(9, "desk-scale end-to-end", need_run(end_to_end));
    report(10, "determinism", determinism);
    report(11, "sequential gate", need_run(sequential_gate));
    std::printf("%d of 11 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
