// Command line front end: training, evaluation, curvature probes and
// schedule/plot utilities over the distileval core library.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "distileval/curvature.hpp"
#include "distileval/harness.hpp"
#include "distileval/synth.hpp"

namespace de = distileval;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t comma = s.find(',', start);
        const std::string tok =
            s.substr(start, comma == std::string::npos ? std::string::npos
                                                       : comma - start);
        if (tok.empty())
            throw de::ConfigError("bad --seeds list \"" + s + "\"");
        seeds.push_back(std::stoull(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return seeds;
}

de::TargetBatch targets_from(const de::DatasetContainer& c) {
    if (c.label_kind == "hard") return de::TargetBatch::hard_labels(c.item_classes());
    return de::TargetBatch::soft_labels(c.labels, c.label_temperature);
}

/// First `limit` items of a container (0 keeps everything); bounds the
/// cost of Hessian probes on large sets.
de::DatasetContainer head_of(de::DatasetContainer c, int limit) {
    if (limit <= 0 || limit >= c.n_items) return c;
    const std::size_t chw =
        static_cast<std::size_t>(c.channels) * c.height * c.width;
    c.images.data.resize(static_cast<std::size_t>(limit) * chw);
    c.images.shape[0] = limit;
    c.labels.data.resize(static_cast<std::size_t>(limit) * c.n_classes);
    c.labels.shape[0] = limit;
    c.n_items = limit;
    c.ipc.reset();
    return c;
}

void emit_json(const nlohmann::json& j, const std::string& out_path) {
    if (out_path.empty())
        std::cout << j.dump(2) << "\n";
    else
        de::write_json_file(j, out_path);
}

int run_train(const std::string& config, const std::vector<std::string>& sets,
              bool dry_run, const std::string& seeds_csv) {
    de::RunConfig cfg = de::load_run_config(config, sets);
    if (dry_run) {
        std::cout << de::dry_run_report(cfg).dump(2) << "\n";
        return 0;
    }
    std::vector<std::uint64_t> seeds = {cfg.seed};
    if (!seeds_csv.empty()) seeds = parse_seed_list(seeds_csv);

    std::vector<double> accs;
    for (std::uint64_t seed : seeds) {
        de::RunConfig c = cfg;
        c.seed = seed;
        de::TrainResult r = de::train_student(c);
        accs.push_back(r.record.final_test_accuracy);
        std::printf("%s seed=%llu accuracy=%.6f wall=%.1fs -> %s\n",
                    c.preset.c_str(), static_cast<unsigned long long>(seed),
                    r.record.final_test_accuracy,
                    r.record.wall_time_seconds, c.run_dir().c_str());
    }
    if (accs.size() > 1) {
        double mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        var /= static_cast<double>(accs.size() - 1);
        std::printf("mean=%.6f std=%.6f over %zu seeds\n", mean,
                    std::sqrt(var), accs.size());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training and analysis harness for small-data distillation "
                 "experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "distileval 0.1.0");

    std::string config, seeds_csv, checkpoint, data, out, runs_dir;
    std::vector<std::string> sets;
    std::vector<std::string> import_files;
    bool dry_run = false;
    int topk = 20, iters = 100, grid = 41, limit = 0;
    double tol = 1e-4, radius = 0.5, fraction = 0.0;
    std::string hvp_mode = "auto";
    std::uint64_t seed = 0;
    de::SynthConfig synth;

    CLI::App* teacher = app.add_subcommand(
        "teacher", "Train the cnn3 teacher on the config's dataset");
    teacher->add_option("--config", config, "run config JSON")->required();
    teacher->add_option("--set", sets, "dotted.path=value override");

    CLI::App* train = app.add_subcommand(
        "train", "Train the student under the config's preset");
    train->add_option("--config", config, "run config JSON")->required();
    train->add_option("--set", sets, "dotted.path=value override");
    train->add_flag("--dry-run", dry_run,
                    "print the resolved component report and exit");
    train->add_option("--seeds", seeds_csv,
                      "comma-separated seed list; reports mean and std");

    CLI::App* eval = app.add_subcommand(
        "eval", "Top-1 accuracy of a checkpoint on a container");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--data", data)->required();

    CLI::App* hessian = app.add_subcommand(
        "hessian", "Leading curvature eigenvalues at a checkpoint");
    hessian->add_option("--checkpoint", checkpoint)->required();
    hessian->add_option("--data", data)->required();
    hessian->add_option("--topk", topk, "number of eigenpairs");
    hessian->add_option("--iters", iters, "power-iteration cap per pair");
    hessian->add_option("--tol", tol, "absolute eigenvalue tolerance");
    hessian->add_option("--hvp", hvp_mode, "auto|exact|fd");
    hessian->add_option("--seed", seed, "iteration start vectors");
    hessian->add_option("--limit", limit, "use only the first N items");
    hessian->add_option("--out", out, "write the JSON report here");

    CLI::App* landscape = app.add_subcommand(
        "landscape", "Loss grid along the two leading eigenvectors");
    landscape->add_option("--checkpoint", checkpoint)->required();
    landscape->add_option("--data", data)->required();
    landscape->add_option("--radius", radius, "half-width of the grid");
    landscape->add_option("--grid", grid, "odd grid size per axis");
    landscape->add_option("--hvp", hvp_mode, "auto|exact|fd");
    landscape->add_option("--seed", seed, "iteration start vectors");
    landscape->add_option("--limit", limit, "use only the first N items");
    landscape->add_option("--out", out, "write the JSON report here");

    CLI::App* schedule =
        app.add_subcommand("schedule", "Schedule inspection utilities");
    schedule->require_subcommand(1);
    CLI::App* dump = schedule->add_subcommand(
        "dump", "CSV of keep rate and learning rates per epoch");
    dump->add_option("--config", config, "run config JSON")->required();
    dump->add_option("--set", sets, "dotted.path=value override");
    dump->add_option("--out", out, "write CSV here instead of stdout");

    CLI::App* plot = app.add_subcommand(
        "plot", "Aggregate run records into CSV series");
    plot->add_option("--runs", runs_dir, "directory holding run.json files")
        ->required();
    plot->add_option("--out", out, "output directory (default <runs>/plots)");

    CLI::App* synth_cmd = app.add_subcommand(
        "synth", "Generate a deterministic synthetic labeled dataset");
    synth_cmd->add_option("--out", out, "container path")->required();
    synth_cmd->add_option("--items", synth.n_items);
    synth_cmd->add_option("--classes", synth.n_classes);
    synth_cmd->add_option("--channels", synth.channels);
    synth_cmd->add_option("--height", synth.height);
    synth_cmd->add_option("--width", synth.width);
    synth_cmd->add_option("--seed", synth.seed);
    synth_cmd->add_option("--noise", synth.noise);
    synth_cmd->add_option("--max-shift", synth.max_shift);
    synth_cmd->add_option("--offset", synth.index_offset,
                          "item-stream offset, for disjoint splits");

    CLI::App* import = app.add_subcommand(
        "import", "Convert label-byte + 3072-pixel-byte batches");
    import->add_option("--out", out, "container path")->required();
    import->add_option("files", import_files, "batch files")->required();

    CLI::App* sample = app.add_subcommand(
        "sample", "Stratified fraction of a container");
    sample->add_option("--data", data)->required();
    sample->add_option("--fraction", fraction)->required();
    sample->add_option("--seed", seed);
    sample->add_option("--out", out, "container path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*teacher) {
            de::RunConfig cfg = de::load_run_config(config, sets);
            de::TrainResult r = de::train_teacher(cfg);
            std::printf("teacher accuracy=%.6f wall=%.1fs -> %s\n",
                        r.record.final_test_accuracy,
                        r.record.wall_time_seconds,
                        r.checkpoint_path.c_str());
        } else if (*train) {
            return run_train(config, sets, dry_run, seeds_csv);
        } else if (*eval) {
            const de::Checkpoint ckpt = de::read_checkpoint(checkpoint);
            const de::DatasetContainer c = de::read_container(data);
            nlohmann::json j;
            j["accuracy"] = de::evaluate(ckpt, c);
            std::cout << j.dump() << "\n";
        } else if (*hessian) {
            const de::Checkpoint ckpt = de::read_checkpoint(checkpoint);
            const de::DatasetContainer c =
                head_of(de::read_container(data), limit);
            auto model = de::build_model<double>(ckpt.arch, 0);
            de::load_into_model(ckpt, *model);
            de::ModelCeLoss loss(*model, c.images, targets_from(c));
            de::SpectrumOptions opt;
            opt.k = topk;
            opt.iters = iters;
            opt.tol = tol;
            opt.seed = seed;
            opt.mode = de::hvp_mode_from_string(hvp_mode);
            const de::SpectrumResult r =
                de::top_eigenpairs(loss, loss.theta0(), opt);
            nlohmann::json j;
            j["dim"] = loss.dim();
            j["eigenvalues"] = r.eigenvalues;
            j["residuals"] = r.residuals;
            j["iterations"] = r.iterations;
            std::vector<bool> conv(r.converged.begin(), r.converged.end());
            j["converged"] = conv;
            emit_json(j, out);
        } else if (*landscape) {
            const de::Checkpoint ckpt = de::read_checkpoint(checkpoint);
            const de::DatasetContainer c =
                head_of(de::read_container(data), limit);
            auto model = de::build_model<double>(ckpt.arch, 0);
            de::load_into_model(ckpt, *model);
            de::ModelCeLoss loss(*model, c.images, targets_from(c));
            de::SpectrumOptions opt;
            opt.k = 2;
            opt.seed = seed;
            opt.mode = de::hvp_mode_from_string(hvp_mode);
            const de::SpectrumResult r =
                de::top_eigenpairs(loss, loss.theta0(), opt);
            const de::LandscapeGrid g =
                de::landscape_slice(loss, loss.theta0(), r.eigenvectors[0],
                                    r.eigenvectors[1], radius, grid);
            char buf[128];
            std::snprintf(buf, sizeof(buf), "# eigenvalues %.17g %.17g\n",
                          r.eigenvalues[0], r.eigenvalues[1]);
            std::string csv = std::string(buf) + "alpha1,alpha2,loss\n";
            for (std::size_t i = 0; i < g.alphas1.size(); ++i)
                for (std::size_t j2 = 0; j2 < g.alphas2.size(); ++j2) {
                    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n",
                                  g.alphas1[i], g.alphas2[j2],
                                  g.losses[i][j2]);
                    csv += buf;
                }
            if (out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream f(out, std::ios::trunc);
                if (!f)
                    throw de::FormatError("cannot open \"" + out +
                                          "\" for writing");
                f << csv;
            }
        } else if (*dump) {
            de::RunConfig cfg = de::load_run_config(config, sets);
            cfg.keep_rate.validate();
            cfg.lr.validate();
            std::string csv = "epoch,keep_rate,lr,lr_cosine\n";
            char buf[96];
            for (int i = 0; i < cfg.epochs; ++i) {
                std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", i,
                              de::keep_rate(cfg.keep_rate, i),
                              de::learning_rate(cfg.lr, i),
                              de::cosine_baseline_lr(cfg.lr.lr_max, cfg.epochs,
                                                     i));
                csv += buf;
            }
            if (out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream f(out, std::ios::trunc);
                if (!f)
                    throw de::FormatError("cannot open \"" + out +
                                          "\" for writing");
                f << csv;
            }
        } else if (*plot) {
            const std::string dest = out.empty() ? runs_dir + "/plots" : out;
            const int n = de::emit_plots(runs_dir, dest);
            std::printf("aggregated %d run(s) into %s\n", n, dest.c_str());
        } else if (*synth_cmd) {
            const de::DatasetContainer c = de::synth_dataset(synth);
            de::write_container(c, out);
            std::printf("wrote %d items (%d classes, %dx%dx%d) -> %s\n",
                        c.n_items, c.n_classes, c.channels, c.height, c.width,
                        out.c_str());
        } else if (*import) {
            const de::DatasetContainer c =
                de::import_cifar_binary(import_files, out);
            std::printf("imported %d items -> %s\n", c.n_items, out.c_str());
        } else if (*sample) {
            const de::DatasetContainer c = de::read_container(data);
            const de::DatasetContainer s =
                de::sample_fraction(c, fraction, seed);
            de::write_container(s, out);
            std::printf("sampled %d of %d items -> %s\n", s.n_items, c.n_items,
                        out.c_str());
        }
        return 0;
    } catch (const de::FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const de::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const de::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
