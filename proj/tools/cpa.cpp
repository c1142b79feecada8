#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cpa/cpa.hpp"

using namespace cpa;

namespace {

// Exit codes by failure category; CLI parse errors use CLI11's own codes.
int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Io: return 3;
    case ErrorKind::Format: return 4;
    case ErrorKind::Shape: return 5;
    case ErrorKind::InputSize: return 6;
    case ErrorKind::Degenerate: return 7;
    case ErrorKind::Invariant: return 8;
    }
    return 1;
}

void write_text(const std::string& path, const std::string& text) {
    io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Applies "a.b.c=value" overrides to a config's JSON form. Values parse as
/// JSON when they can, otherwise they are taken as strings.
ExperimentConfig apply_overrides(const ExperimentConfig& base, const std::vector<std::string>& sets) {
    json j = to_json(base);
    bool shape_set = false;
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::Config, "override must look like key.path=value: " + s);
        std::string key = s.substr(0, eq);
        const std::string text = s.substr(eq + 1);
        if (key == "network.in_height" || key == "network.in_width") shape_set = true;
        std::string pointer = "/" + key;
        for (auto& c : pointer)
            if (c == '.') c = '/';
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error&) {
            value = text;
        }
        const json::json_pointer ptr(pointer);
        require(j.contains(ptr), ErrorKind::Config, "unknown config key: " + key);
        j[ptr] = value;
    }
    ExperimentConfig out;
    from_json_into(j, out);
    if (!shape_set) {
        out.network.in_height = out.frame.n_symbols;
        out.network.in_width = out.frame.n_subcarriers;
    }
    out.validate();
    return out;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
    ExperimentConfig cfg;
    if (!path.empty()) cfg = parse_config<ExperimentConfig>(io::read_text(path));
    return apply_overrides(cfg, sets);
}

nn::TaskMode parse_mode(const std::string& s) {
    if (s == "multitask") return nn::TaskMode::Multitask;
    if (s == "intent") return nn::TaskMode::Intent;
    if (s == "capability") return nn::TaskMode::Capability;
    fail(ErrorKind::Config, "unknown mode: " + s);
}

std::string stem_path(const std::string& dir, const std::string& prefix, const std::string& name) {
    return (std::filesystem::path(dir) / (prefix + name)).string();
}

struct EvalOptions {
    std::string dataset, ckpt, ckpt2, mode = "multitask", out_dir = ".", prefix;
    std::vector<double> thetas{1e-2, 1e-3, 1e-4};
};

void write_reports(const EvalOptions& o, const std::vector<Evaluation>& evals) {
    std::string summary = std::string(kSummaryHeader) + "\n", scales, losses, preds;
    for (std::size_t i = 0; i < evals.size(); ++i) {
        const auto& ev = evals[i];
        std::cout << format_report(ev.report) << "\n";
        summary += summary_row(ev.report) + "\n";
        auto s = per_scale_csv(ev.report);
        auto l = task_losses_csv(ev.report);
        if (i > 0) {
            s = s.substr(s.find('\n') + 1);
            l = l.substr(l.find('\n') + 1);
        }
        scales += s;
        losses += l;
    }
    write_text(stem_path(o.out_dir, o.prefix, "summary.csv"), summary);
    write_text(stem_path(o.out_dir, o.prefix, "per_scale.csv"), scales);
    write_text(stem_path(o.out_dir, o.prefix, "losses.csv"), losses);
    for (const auto& ev : evals) {
        std::string tag = ev.report.label;
        for (auto& c : tag)
            if (c == ' ' || c == '=') c = '_';
        write_text(stem_path(o.out_dir, o.prefix, "predictions_" + tag + ".csv"), predictions_csv(ev.predictions));
    }
}

Checkpoint load_for(const std::string& path, nn::TaskMode want, const char* role) {
    auto ck = load_checkpoint(path);
    require(ck.mode == want, ErrorKind::Config,
            std::string(role) + " checkpoint must be trained in " + std::string(to_string(want)) + " mode, found " +
                std::string(to_string(ck.mode)));
    return ck;
}

void run_eval(EvalOptions o, const AssessmentConfig& acfg) {
    const auto ds = load_dataset(o.dataset);
    std::vector<Evaluation> evals;
    if (o.mode == "multitask") {
        auto ck = load_for(o.ckpt, nn::TaskMode::Multitask, "multitask");
        evals.push_back(evaluate_multitask(ds, ck.model, acfg));
    } else if (o.mode == "sequential") {
        require(!o.ckpt2.empty(), ErrorKind::Config, "sequential mode needs --ckpt (capability) and --ckpt2 (intent)");
        auto reg = load_for(o.ckpt, nn::TaskMode::Capability, "regression");
        auto cls = load_for(o.ckpt2, nn::TaskMode::Intent, "classifier");
        evals = evaluate_sequential(ds, reg.model, cls.model, o.thetas, acfg);
    } else {
        fail(ErrorKind::Config, "eval mode must be multitask or sequential");
    }
    write_reports(o, evals);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cognitive physical-layer threat assessment: data generation, training and evaluation"};
    app.require_subcommand(1);

    // generate
    std::string gen_config, gen_out;
    std::vector<std::string> gen_sets;
    std::uint64_t gen_seed = 0;
    int gen_count = 0;
    long long gen_single = -1;
    bool gen_test = false;
    unsigned gen_threads = 0;
    auto* gen = app.add_subcommand("generate", "Build a dataset file (or one raw sample file)");
    gen->add_option("--config", gen_config, "Experiment config file (canonical JSON)")->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "Output file")->required();
    gen->add_option("--seed", gen_seed, "Master seed (default: config master_seed)");
    gen->add_option("--count", gen_count, "Samples per threat kind (default: config samples_per_kind)");
    gen->add_flag("--test", gen_test, "Use test_samples_per_kind as the default count");
    gen->add_option("--single-sample", gen_single, "Write only the raw received signal of this sample index");
    gen->add_option("--threads", gen_threads, "Worker threads (0 = all cores)");
    gen->add_option("--set", gen_sets, "Override a config value, e.g. --set frame.n_symbols=32");

    // train
    std::string tr_dataset, tr_mode = "multitask", tr_out, tr_log, tr_resume;
    std::vector<std::string> tr_sets;
    int tr_epochs = 0, tr_batch = 0;
    double tr_lr = 0.0;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    auto* tr = app.add_subcommand("train", "Train a multitask or single-task model");
    tr->add_option("--dataset", tr_dataset, "Training dataset file")->required()->check(CLI::ExistingFile);
    tr->add_option("--mode", tr_mode, "multitask | intent | capability")
        ->check(CLI::IsMember({"multitask", "intent", "capability"}));
    tr->add_option("--out", tr_out, "Checkpoint to write")->required();
    tr->add_option("--log", tr_log, "Per-step loss CSV (default: <out>.log.csv)");
    tr->add_option("--resume", tr_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
    tr->add_option("--epochs", tr_epochs, "Total epochs (default: dataset config)");
    tr->add_option("--batch", tr_batch, "Batch size");
    tr->add_option("--lr", tr_lr, "ADAM learning rate");
    auto* seed_opt = tr->add_option("--seed", tr_seed, "Initialization and shuffling seed");
    tr->add_option("--set", tr_sets, "Override a config value, e.g. --set network.head_hidden=64");

    // eval / baseline
    EvalOptions ev_opts;
    AssessmentConfig acfg;
    auto add_eval_options = [&](CLI::App* sub, bool sequential_only) {
        sub->add_option("--dataset", ev_opts.dataset, "Test dataset file")->required()->check(CLI::ExistingFile);
        sub->add_option("--ckpt", ev_opts.ckpt, sequential_only ? "Capability-only checkpoint" : "Checkpoint (capability-only in sequential mode)")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--ckpt2", ev_opts.ckpt2, "Intent-only checkpoint for sequential mode")->check(CLI::ExistingFile);
        if (!sequential_only)
            sub->add_option("--mode", ev_opts.mode, "multitask | sequential")->check(CLI::IsMember({"multitask", "sequential"}));
        sub->add_option("--theta", ev_opts.thetas, "Gate thresholds for sequential mode")->delimiter(',');
        sub->add_option("--out-dir", ev_opts.out_dir, "Directory for CSV reports")->check(CLI::ExistingDirectory);
        sub->add_option("--prefix", ev_opts.prefix, "File name prefix for CSV reports");
        sub->add_option("--high-ber", acfg.high_ber, "BER above which capability is high");
        sub->add_option("--low-ber", acfg.low_ber, "BER below which capability is low");
    };
    auto* ev = app.add_subcommand("eval", "Evaluate checkpoints on a dataset");
    add_eval_options(ev, false);
    auto* base = app.add_subcommand("baseline", "Sequential evaluation (same as eval --mode sequential)");
    add_eval_options(base, true);

    // assess
    std::string as_ckpt, as_input;
    auto* as = app.add_subcommand("assess", "Threat assessment lines for a dataset or a raw sample file");
    as->add_option("--ckpt", as_ckpt, "Multitask checkpoint")->required()->check(CLI::ExistingFile);
    as->add_option("--input", as_input, "Dataset (CPAD) or sample (CPAS) file")->required()->check(CLI::ExistingFile);
    as->add_option("--high-ber", acfg.high_ber, "BER above which capability is high");
    as->add_option("--low-ber", acfg.low_ber, "BER below which capability is low");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    tr_seed_set = seed_opt->count() > 0;

    try {
        acfg.validate();
        if (gen->parsed()) {
            const auto cfg = load_config(gen_config, gen_sets);
            const std::uint64_t seed = gen->count("--seed") ? gen_seed : cfg.master_seed;
            if (gen_single >= 0) {
                io::write_file(gen_out, encode_sample_file(make_sample_file(cfg, seed, static_cast<std::uint64_t>(gen_single))));
                std::cout << "wrote sample " << gen_single << " to " << gen_out << "\n";
                return 0;
            }
            const int count = gen_count > 0 ? gen_count : (gen_test ? cfg.test_samples_per_kind : cfg.samples_per_kind);
            const unsigned threads = gen_threads > 0 ? gen_threads : std::max(1u, std::thread::hardware_concurrency());
            const auto ds = build_dataset(cfg, seed, count, threads);
            save_dataset(gen_out, ds);
            std::cout << "wrote " << ds.size() << " samples (" << count << " per kind, seed " << seed << ") to " << gen_out << "\n";
        } else if (tr->parsed()) {
            const auto ds = load_dataset(tr_dataset);
            auto cfg = apply_overrides(ds.config, tr_sets);
            require(cfg.network.in_height == ds.config.network.in_height && cfg.network.in_width == ds.config.network.in_width,
                    ErrorKind::Shape, "network input shape must match the dataset");
            if (tr_epochs > 0) cfg.train.epochs = tr_epochs;
            if (tr_batch > 0) cfg.train.batch_size = tr_batch;
            if (tr_lr > 0.0) cfg.train.adam.lr = tr_lr;
            if (tr_seed_set) cfg.train.seed = tr_seed;
            cfg.train.validate();
            const auto mode = parse_mode(tr_mode);
            Checkpoint ck;
            if (!tr_resume.empty()) {
                ck = load_checkpoint(tr_resume);
                require(ck.mode == mode, ErrorKind::Config, "resumed checkpoint was trained in a different mode");
                ck.train.epochs = cfg.train.epochs;
            } else {
                ck = initial_checkpoint(ds, cfg.network, cfg.train, mode);
            }
            const auto log = train_steps(ck, ds);
            save_checkpoint(tr_out, ck);
            write_text(tr_log.empty() ? tr_out + ".log.csv" : tr_log, training_log_csv(log));
            if (!log.empty()) {
                const auto& last = log.back();
                std::printf("trained %zu steps, final loss %.6g (cls %.6g, reg %.6g, l2 %.6g)\n", log.size(), last.loss.total,
                            last.loss.cls, last.loss.reg, last.loss.penalty);
            } else {
                std::printf("nothing to do: checkpoint already at %d epochs\n", ck.train.epochs);
            }
        } else if (ev->parsed()) {
            run_eval(ev_opts, acfg);
        } else if (base->parsed()) {
            ev_opts.mode = "sequential";
            run_eval(ev_opts, acfg);
        } else if (as->parsed()) {
            auto ck = load_for(as_ckpt, nn::TaskMode::Multitask, "assessment");
            const auto bytes = io::read_file(as_input);
            std::vector<FeatureTensor> feats;
            if (file_magic(bytes) == "CPAS") {
                const auto f = decode_sample_file(bytes);
                feats.push_back(feature_tensor(f.sample.received, f.frame, f.features));
            } else {
                const auto ds = DatasetReader(bytes).load_all();
                for (const auto& r : ds.records) feats.push_back(r.features);
            }
            std::cout << kReportHeader << "\n";
            for (std::size_t start = 0; start < feats.size(); start += 32) {
                const std::size_t end = std::min(feats.size(), start + 32);
                std::vector<const FeatureTensor*> part;
                for (std::size_t i = start; i < end; ++i) {
                    require(feats[i].frames == ck.model.config().in_height && feats[i].bins == ck.model.config().in_width,
                            ErrorKind::Shape, "input does not match the checkpoint's input shape");
                    part.push_back(&feats[i]);
                }
                const std::vector<int> intent(part.size(), 0);
                const std::vector<double> rho(part.size(), 0.0);
                const auto out = ck.model.forward(nn::make_batch(part, intent, rho).inputs, false);
                for (std::size_t i = 0; i < part.size(); ++i) {
                    const std::span<const double> p(out.probs.data.data() + i * 3, 3);
                    std::cout << report_line(start + i, assess(p, out.rho_hat[i], acfg)) << "\n";
                }
            }
        }
    } catch (const Error& e) {
        std::cerr << "cpa: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "cpa: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
