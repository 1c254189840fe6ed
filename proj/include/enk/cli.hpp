#pragma once

// Command implementations behind the `enk` binary: gen-data, train, eval,
// gradcheck, benchmark, gradcam. Each command resolves its configuration
// (file plus flag overrides plus defaults), does its work, writes artifacts
// under out.dir, and drops a manifest echoing every resolved value so a run
// can be reproduced from its outputs alone. Manifests carry no timestamps;
// identical configs must produce identical bytes.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "enk/config.hpp"
#include "enk/data.hpp"
#include "enk/format.hpp"
#include "enk/gradcam.hpp"
#include "enk/gradcheck.hpp"
#include "enk/graph.hpp"
#include "enk/metrics.hpp"
#include "enk/models.hpp"
#include "enk/train.hpp"
#include "enk/version.hpp"

namespace enk {

inline constexpr std::size_t kEpochCap = 500;

namespace cli_detail {

inline std::filesystem::path out_dir(const Config& c) {
    const std::filesystem::path dir = c.require("out.dir");
    if (!std::filesystem::is_directory(dir))
        throw FileError("output directory " + dir.string() + " does not exist");
    return dir;
}

inline void write_manifest(const std::map<std::string, std::string>& resolved,
                           const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write manifest " + path.string());
    for (const auto& [k, v] : resolved) out << k << "=" << v << "\n";
    if (!out.flush()) throw FileError("short write to " + path.string());
}

struct ResolvedData {
    EpochSet epochs;
    std::string name;            // preset name or file stem
    std::size_t batch_hint = 16; // preset batch size when known
    std::map<std::string, std::string> echo;
};

inline ResolvedData resolve_data(const Config& c) {
    ResolvedData r;
    if (c.has("data.file")) {
        const std::filesystem::path p = c.require("data.file");
        r.epochs = epochs_read(p);
        r.name = p.stem().string();
        r.echo["data.file"] = p.string();
        return r;
    }
    if (c.has("data.preset")) {
        DataPreset preset = find_data_preset(c.require("data.preset"));
        preset.synth.trials = c.get_size("data.trials", preset.synth.trials);
        preset.synth.noise_std = c.get_double("data.noise_std", preset.synth.noise_std);
        preset.synth.seed = c.get_u64("data.seed", preset.synth.seed);
        r.epochs = synth_generate(preset.synth);
        r.name = preset.name;
        r.batch_hint = preset.batch_size;
        r.echo["data.preset"] = preset.name;
        r.echo["data.trials"] = std::to_string(preset.synth.trials);
        r.echo["data.noise_std"] = format_g9(preset.synth.noise_std);
        r.echo["data.seed"] = std::to_string(preset.synth.seed);
        return r;
    }
    throw ParamError("config: need data.file or data.preset");
}

struct ResolvedModel {
    ModelSpec spec;
    std::map<std::string, std::string> echo;
};

inline ResolvedModel resolve_model(const Config& c, const EpochSet& e) {
    ResolvedModel r;
    r.spec.family = family_from_name(c.require("model.family"));
    r.spec.variant = variant_from_name(c.get("model.variant", "org"));
    r.spec.channels = e.channels();
    r.spec.samples = e.samples();
    r.spec.classes = e.class_count;
    r.spec.init_seed = c.get_u64("model.init_seed", 1);
    r.spec.noise_sigma = c.get_double("model.noise_sigma", 0.1);
    const std::string widths = c.get("model.widths", "default");
    if (widths == "default") {
        r.spec.widths = default_widths(r.spec.family);
    } else if (widths == "miniature") {
        r.spec.widths = miniature_widths(r.spec.family);
    } else {
        throw ParamError("config: model.widths must be default or miniature, got '" + widths + "'");
    }
    r.echo["model.family"] = family_name(r.spec.family);
    r.echo["model.variant"] = variant_name(r.spec.variant);
    r.echo["model.init_seed"] = std::to_string(r.spec.init_seed);
    r.echo["model.noise_sigma"] = format_g9(r.spec.noise_sigma);
    r.echo["model.widths"] = widths;
    return r;
}

inline void write_metrics_csv(const RunMetricsRow& row, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw FileError("cannot write metrics " + path.string());
    out << metrics_csv_header() << "\n" << metrics_csv_row(row) << "\n";
    if (!out.flush()) throw FileError("short write to " + path.string());
}

template <class F>
double median_ms(std::size_t k, F&& f) {
    std::vector<double> ms(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        f();
        const auto t1 = std::chrono::steady_clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    return k % 2 ? ms[k / 2] : 0.5 * (ms[k / 2 - 1] + ms[k / 2]);
}

}  // namespace cli_detail

inline int cmd_gen_data(const Config& c) {
    const std::filesystem::path dir = cli_detail::out_dir(c);
    std::map<std::string, std::string> echo;
    echo["command"] = "gen-data";
    echo["library.version"] = std::string(kLibraryVersion);

    EpochSet e;
    std::string name;
    if (c.has("data.csv")) {
        const std::filesystem::path data_path = c.require("data.csv");
        const std::filesystem::path labels_path = c.require("data.labels");
        const std::size_t channels = c.get_size("data.channels", 0);
        const double rate = c.get_double("data.sample_rate", 0.0);
        if (channels == 0) throw ParamError("config: data.channels required for csv import");
        if (rate <= 0.0) throw ParamError("config: data.sample_rate required for csv import");
        e = csv_import(data_path, labels_path, channels, rate);
        name = data_path.stem().string();
        echo["data.csv"] = data_path.string();
        echo["data.labels"] = labels_path.string();
        echo["data.channels"] = std::to_string(channels);
        echo["data.sample_rate"] = format_g9(rate);
    } else {
        cli_detail::ResolvedData r = cli_detail::resolve_data(c);
        e = std::move(r.epochs);
        name = r.name;
        echo.insert(r.echo.begin(), r.echo.end());
    }

    const std::string run_id = c.get("run.id", name);
    echo["run.id"] = run_id;
    echo["out.dir"] = dir.string();

    const std::filesystem::path out_path = dir / (run_id + ".enk1");
    epochs_write(e, out_path);
    cli_detail::write_manifest(echo, dir / (run_id + ".manifest.txt"));

    std::cout << "wrote " << out_path.string() << ": trials=" << e.trials() << " channels=" << e.channels()
              << " samples=" << e.samples() << " classes=" << e.class_count << "\n";
    return 0;
}

inline int cmd_train(const Config& c) {
    const std::filesystem::path dir = cli_detail::out_dir(c);
    cli_detail::ResolvedData data = cli_detail::resolve_data(c);
    cli_detail::ResolvedModel model = cli_detail::resolve_model(c, data.epochs);

    TrainOptions opt;
    opt.epochs = c.get_size("train.epochs", 100);
    if (opt.epochs == 0 || opt.epochs > kEpochCap)
        throw ParamError("config: train.epochs must be in [1, " + std::to_string(kEpochCap) + "]");
    opt.batch_size = c.get_size("train.batch_size", data.batch_hint);
    opt.lr = c.get_double("train.lr", 1e-3);
    opt.seed = c.get_u64("train.seed", 1);
    opt.val_fraction = c.get_double("train.val_fraction", 0.2);
    const bool reproducible = c.get_bool("train.reproducible", true);

    const std::string run_id =
        c.get("run.id", data.name + "-" + family_name(model.spec.family) + "-" +
                            variant_name(model.spec.variant) + "-s" + std::to_string(opt.seed));

    ModelGraph g = build_model(model.spec);
    TrainResult result = train_model(g, data.epochs, opt);

    const std::filesystem::path ckpt_path = dir / (run_id + ".enkm");
    save_checkpoint(g, ckpt_path);

    const std::filesystem::path curve_path = dir / (run_id + ".epochs.csv");
    {
        std::ofstream out(curve_path);
        if (!out) throw FileError("cannot write " + curve_path.string());
        out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
        for (const EpochRow& row : result.history) {
            out << row.epoch << "," << format_g9(row.train_loss) << "," << format_g9(row.train_accuracy)
                << ",";
            if (result.val_trials.empty()) {
                out << ",";
            } else {
                out << format_g9(row.val_loss) << "," << format_g9(row.val_accuracy);
            }
            out << "\n";
        }
        if (!out.flush()) throw FileError("short write to " + curve_path.string());
    }

    const ConfusionMatrix cm =
        confusion(result.final_eval.labels, result.final_eval.predictions, data.epochs.class_count);
    RunMetricsRow row;
    row.run_id = run_id;
    row.dataset = data.name;
    row.family = family_name(model.spec.family);
    row.variant = variant_name(model.spec.variant);
    row.seed = opt.seed;
    row.accuracy = accuracy(cm);
    row.f1_weighted = f1_weighted(cm);
    row.binary = data.epochs.class_count == 2;
    row.f1_class1 = row.binary ? f1_class(cm, 1) : 0.0;
    row.epochs_run = opt.epochs;
    row.param_count = param_count(g);
    cli_detail::write_metrics_csv(row, dir / (run_id + ".metrics.csv"));

    std::map<std::string, std::string> echo = data.echo;
    echo.insert(model.echo.begin(), model.echo.end());
    echo["command"] = "train";
    echo["library.version"] = std::string(kLibraryVersion);
    echo["train.epochs"] = std::to_string(opt.epochs);
    echo["train.batch_size"] = std::to_string(opt.batch_size);
    echo["train.lr"] = format_g9(opt.lr);
    echo["train.seed"] = std::to_string(opt.seed);
    echo["train.val_fraction"] = format_g9(opt.val_fraction);
    echo["train.reproducible"] = reproducible ? "true" : "false";
    echo["run.id"] = run_id;
    echo["out.dir"] = dir.string();
    cli_detail::write_manifest(echo, dir / (run_id + ".manifest.txt"));

    std::cout << "train " << run_id << ": epochs=" << opt.epochs << " accuracy="
              << format_g9(row.accuracy) << " f1_weighted=" << format_g9(row.f1_weighted)
              << " params=" << row.param_count << "\n";
    return 0;
}

inline int cmd_eval(const Config& c) {
    const std::filesystem::path dir = cli_detail::out_dir(c);
    cli_detail::ResolvedData data = cli_detail::resolve_data(c);
    const std::filesystem::path ckpt = c.require("eval.checkpoint");
    ModelGraph g = load_checkpoint(ckpt);

    std::vector<std::size_t> all(data.epochs.trials());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const EvalResult r = evaluate(g, data.epochs, all);

    const std::string run_id = c.get("run.id", data.name + "-eval");
    const ConfusionMatrix cm = confusion(r.labels, r.predictions, data.epochs.class_count);
    RunMetricsRow row;
    row.run_id = run_id;
    row.dataset = data.name;
    row.family = c.get("model.family", "unknown");
    row.variant = c.get("model.variant", "unknown");
    row.seed = c.get_u64("train.seed", 0);
    row.accuracy = accuracy(cm);
    row.f1_weighted = f1_weighted(cm);
    row.binary = data.epochs.class_count == 2;
    row.f1_class1 = row.binary ? f1_class(cm, 1) : 0.0;
    row.epochs_run = 0;
    row.param_count = param_count(g);
    cli_detail::write_metrics_csv(row, dir / (run_id + ".metrics.csv"));

    std::map<std::string, std::string> echo = data.echo;
    echo["command"] = "eval";
    echo["library.version"] = std::string(kLibraryVersion);
    echo["eval.checkpoint"] = ckpt.string();
    echo["run.id"] = run_id;
    echo["out.dir"] = dir.string();
    cli_detail::write_manifest(echo, dir / (run_id + ".manifest.txt"));

    std::cout << "eval " << run_id << ": accuracy=" << format_g9(row.accuracy)
              << " f1_weighted=" << format_g9(row.f1_weighted) << " trials=" << data.epochs.trials()
              << "\n";
    return 0;
}

inline int cmd_gradcheck(const Config& c) {
    const std::uint64_t seed = c.get_u64("train.seed", 1);
    const GradCheckReport conv_report = gradcheck_conv(24, seed);
    const GradCheckReport graph_report = gradcheck_graphs(seed);

    auto print = [](const char* title, const GradCheckReport& r) {
        std::cout << title << " (step=" << format_g9(r.step) << " tol=" << format_g9(r.tolerance)
                  << ")\n";
        for (const GradCheckGroup& g : r.groups)
            std::cout << "  " << g.name << ": max_rel=" << format_g9(g.max_rel) << " checks=" << g.checks
                      << "\n";
        std::cout << "  => " << (r.passed() ? "PASS" : "FAIL") << " worst=" << format_g9(r.worst())
                  << "\n";
    };
    print("conv backward vs finite differences", conv_report);
    print("graph gradients vs finite differences", graph_report);

    if (!conv_report.passed() || !graph_report.passed())
        throw NumericError("gradient check failed beyond tolerance");
    return 0;
}

inline int cmd_benchmark(const Config& c) {
    const std::filesystem::path dir = cli_detail::out_dir(c);
    const std::size_t k = c.get_size("benchmark.k", 9);
    if (k == 0) throw ParamError("config: benchmark.k must be positive");
    const std::string precision = c.get("benchmark.precision", "f64");
    if (precision != "f64" && precision != "f32")
        throw ParamError("config: benchmark.precision must be f64 or f32");
    const std::string run_id = c.get("run.id", "bench");

    struct Row {
        std::string shape, impl;
        double ms;
    };
    std::vector<Row> rows;

    for (const DataPreset& p : data_presets()) {
        if (p.name == "timepos") continue;  // acquisition shapes only
        const std::size_t ch = p.synth.channels, sm = p.synth.samples;
        Rng rng(mix_seed(0xbe9c, ch * 10007 + sm));
        Tensor x = tensor_new({1, static_cast<std::int64_t>(ch), static_cast<std::int64_t>(sm)});
        for (double& v : x.values()) v = rng.normal(0.0, 1.0);
        EnkConvParams prm;
        prm.kernel = tensor_new({8, 1, 1, 16});
        for (double& v : prm.kernel.values()) v = rng.normal(0.0, 1.0);
        prm.bias = tensor_new({8});
        for (double& v : prm.bias.values()) v = rng.normal(0.0, 1.0);
        prm.b = 0.25;

        // correctness parity gates the timing run
        const Tensor naive = enk_forward_naive(x, prm);
        const Tensor fast = enk_forward_decomposed(x, prm);
        for (std::size_t i = 0; i < naive.size(); ++i) {
            const double rel = std::abs(naive[i] - fast[i]) / (1.0 + std::abs(naive[i]));
            if (rel >= 1e-10)
                throw NumericError("benchmark parity failed on " + p.name + ": rel=" + format_g9(rel));
        }

        if (precision == "f64") {
            rows.push_back({p.name, "conv", cli_detail::median_ms(k, [&] { conv2d_forward(x, prm); })});
            rows.push_back(
                {p.name, "enk-naive", cli_detail::median_ms(k, [&] { enk_forward_naive(x, prm); })});
            rows.push_back({p.name, "enk-decomposed",
                            cli_detail::median_ms(k, [&] { enk_forward_decomposed(x, prm); })});
        } else {
            TensorT<float> xf(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) xf[i] = static_cast<float>(x[i]);
            EnkConvParamsT<float> pf;
            pf.kernel = TensorT<float>(prm.kernel.shape());
            for (std::size_t i = 0; i < prm.kernel.size(); ++i)
                pf.kernel[i] = static_cast<float>(prm.kernel[i]);
            pf.bias = TensorT<float>(prm.bias.shape());
            for (std::size_t i = 0; i < prm.bias.size(); ++i) pf.bias[i] = static_cast<float>(prm.bias[i]);
            pf.b = static_cast<float>(prm.b);
            rows.push_back({p.name, "conv", cli_detail::median_ms(k, [&] { conv2d_forward(xf, pf); })});
            rows.push_back(
                {p.name, "enk-naive", cli_detail::median_ms(k, [&] { enk_forward_naive(xf, pf); })});
            rows.push_back({p.name, "enk-decomposed",
                            cli_detail::median_ms(k, [&] { enk_forward_decomposed(xf, pf); })});
        }
    }

    const std::filesystem::path csv_path = dir / (run_id + ".bench.csv");
    {
        std::ofstream out(csv_path);
        if (!out) throw FileError("cannot write " + csv_path.string());
        out << "shape,impl,median_ms,runs\n";
        for (const Row& r : rows) out << r.shape << "," << r.impl << "," << format_g9(r.ms) << "," << k << "\n";
        if (!out.flush()) throw FileError("short write to " + csv_path.string());
    }

    std::map<std::string, std::string> echo;
    echo["command"] = "benchmark";
    echo["library.version"] = std::string(kLibraryVersion);
    echo["benchmark.k"] = std::to_string(k);
    echo["benchmark.precision"] = precision;
    echo["run.id"] = run_id;
    echo["out.dir"] = dir.string();
    cli_detail::write_manifest(echo, dir / (run_id + ".manifest.txt"));

    for (const Row& r : rows)
        std::cout << r.shape << " " << r.impl << " " << format_g9(r.ms) << "ms (median of " << k << ")\n";
    return 0;
}

inline int cmd_gradcam(const Config& c) {
    const std::filesystem::path dir = cli_detail::out_dir(c);
    cli_detail::ResolvedData data = cli_detail::resolve_data(c);
    ModelGraph org = load_checkpoint(c.require("gradcam.org_checkpoint"));
    ModelGraph enk = load_checkpoint(c.require("gradcam.enk_checkpoint"));

    const std::size_t trial = c.get_size("gradcam.trial", 0);
    if (trial >= data.epochs.trials()) throw ParamError("config: gradcam.trial out of range");
    const std::size_t cls = c.get_size("gradcam.class", data.epochs.labels[trial]);
    const Tensor x = trial_tensor(data.epochs, trial);

    const std::size_t org_layer = c.has("gradcam.layer") ? c.get_size("gradcam.layer", 0) : first_conv_layer(org);
    const std::size_t enk_layer = c.has("gradcam.layer") ? c.get_size("gradcam.layer", 0) : first_conv_layer(enk);

    const HeatMap org_map = grad_cam(org, x, cls, org_layer);
    const HeatMap enk_map = grad_cam(enk, x, cls, enk_layer);
    const HeatMap diff = heatmap_diff(org_map, enk_map);

    const std::string run_id = c.get("run.id", data.name + "-cam");
    const std::string stem =
        run_id + ".t" + std::to_string(trial) + ".c" + std::to_string(cls);
    std::vector<std::string> written;
    auto export_both = [&](const HeatMap& h, const std::string& variant) {
        const std::string base = (dir / (stem + "." + variant + ".cam")).string();
        heatmap_export_csv(h, base + ".csv");
        heatmap_export_pgm(h, base + ".pgm");
        written.push_back(base + ".csv");
        written.push_back(base + ".pgm");
    };
    export_both(org_map, "org");
    export_both(enk_map, "enk");
    export_both(diff, "diff");

    // raw trial for overlay plots: channels rows x samples columns
    const std::filesystem::path trial_path = dir / (stem + ".trial.csv");
    {
        std::ofstream out(trial_path);
        if (!out) throw FileError("cannot write " + trial_path.string());
        for (std::size_t i = 0; i < data.epochs.channels(); ++i) {
            for (std::size_t j = 0; j < data.epochs.samples(); ++j) {
                if (j) out << ',';
                out << format_g9(x(0, i, j));
            }
            out << '\n';
        }
        if (!out.flush()) throw FileError("short write to " + trial_path.string());
    }
    written.push_back(trial_path.string());

    std::map<std::string, std::string> echo = data.echo;
    echo["command"] = "gradcam";
    echo["library.version"] = std::string(kLibraryVersion);
    echo["gradcam.org_checkpoint"] = c.require("gradcam.org_checkpoint");
    echo["gradcam.enk_checkpoint"] = c.require("gradcam.enk_checkpoint");
    echo["gradcam.trial"] = std::to_string(trial);
    echo["gradcam.class"] = std::to_string(cls);
    echo["gradcam.layer.org"] = std::to_string(org_layer);
    echo["gradcam.layer.enk"] = std::to_string(enk_layer);
    echo["run.id"] = run_id;
    echo["out.dir"] = dir.string();
    cli_detail::write_manifest(echo, dir / (run_id + ".manifest.txt"));

    for (const std::string& f : written) std::cout << "wrote " << f << "\n";
    return 0;
}

inline const char* cli_usage() {
    return "usage: enk <command> [--config FILE] [--key value ...]\n"
           "commands:\n"
           "  gen-data   synthesize or import an epoch file (data.preset or data.csv)\n"
           "  train      train a model variant, write checkpoint + metrics\n"
           "  eval       evaluate a checkpoint on an epoch file\n"
           "  gradcheck  verify backward passes against finite differences\n"
           "  benchmark  time naive vs decomposed forward at the preset shapes\n"
           "  gradcam    export class activation maps for org vs enk checkpoints\n"
           "  version    print the library version\n"
           "keys use the config file names, e.g. --train.epochs 50 --model.family deep-toy\n";
}

// args excludes the program name. Exit codes: 0 ok, 1 usage or config, 2
// numerical check failure, 3 I/O.
inline int run_cli(const std::vector<std::string>& args) {
    try {
        if (args.empty()) {
            std::cerr << cli_usage();
            return 1;
        }
        const std::string& cmd = args[0];
        if (cmd == "help" || cmd == "--help" || cmd == "-h") {
            std::cout << cli_usage();
            return 0;
        }
        if (cmd == "version" || cmd == "--version") {
            std::cout << "enk " << kLibraryVersion << "\n";
            return 0;
        }

        Config config;
        std::vector<std::pair<std::string, std::string>> flags;
        for (std::size_t i = 1; i < args.size(); ++i) {
            const std::string& a = args[i];
            if (a.rfind("--", 0) != 0) throw ParamError("expected --flag, got '" + a + "'");
            if (i + 1 >= args.size()) throw ParamError("flag " + a + " needs a value");
            const std::string key = a.substr(2);
            const std::string& value = args[++i];
            if (key == "config") {
                config = load_config(value);
            } else {
                flags.emplace_back(key, value);
            }
        }
        apply_flag_overrides(config, flags);

        if (cmd == "gen-data") return cmd_gen_data(config);
        if (cmd == "train") return cmd_train(config);
        if (cmd == "eval") return cmd_eval(config);
        if (cmd == "gradcheck") return cmd_gradcheck(config);
        if (cmd == "benchmark") return cmd_benchmark(config);
        if (cmd == "gradcam") return cmd_gradcam(config);
        std::cerr << "unknown command '" << cmd << "'\n" << cli_usage();
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const FileError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace enk
