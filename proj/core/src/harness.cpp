#include "distileval/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"
#include "distileval/schedules.hpp"

namespace distileval {

namespace {

void check_arch_vs_container(const ArchSpec& arch, const DatasetContainer& c,
                             const std::string& what) {
    const std::vector<int> shape = {c.channels, c.height, c.width};
    if (arch.input_shape != shape)
        throw ConfigError(what + ": model expects input " +
                          shape_str(arch.input_shape) + ", container holds " +
                          shape_str(shape));
    if (arch.num_classes != c.n_classes)
        throw ConfigError(what + ": model has " +
                          std::to_string(arch.num_classes) +
                          " classes, container holds " +
                          std::to_string(c.n_classes));
}

void gather_images(const Tensor& images, const std::vector<int>& order,
                   int first, int count, Tensor& out) {
    const std::size_t chw = images.data.size() /
                            static_cast<std::size_t>(images.dim(0));
    out = Tensor({count, images.dim(1), images.dim(2), images.dim(3)});
    for (int b = 0; b < count; ++b) {
        const int src = order[static_cast<std::size_t>(first + b)];
        std::copy_n(images.ptr() + static_cast<std::size_t>(src) * chw, chw,
                    out.ptr() + static_cast<std::size_t>(b) * chw);
    }
}

TargetBatch gather_targets(const DatasetContainer& c,
                           const std::vector<int>& classes,
                           const std::vector<int>& order, int first,
                           int count) {
    if (c.label_kind == "hard") {
        std::vector<int> idx(static_cast<std::size_t>(count));
        for (int b = 0; b < count; ++b)
            idx[static_cast<std::size_t>(b)] = classes[static_cast<std::size_t>(
                order[static_cast<std::size_t>(first + b)])];
        return TargetBatch::hard_labels(std::move(idx));
    }
    Tensor logits({count, c.n_classes});
    for (int b = 0; b < count; ++b) {
        const int src = order[static_cast<std::size_t>(first + b)];
        std::copy_n(c.labels.ptr() +
                        static_cast<std::size_t>(src) * c.n_classes,
                    static_cast<std::size_t>(c.n_classes),
                    logits.ptr() + static_cast<std::size_t>(b) * c.n_classes);
    }
    return TargetBatch::soft_labels(std::move(logits), c.label_temperature);
}

/// Frozen-teacher logits for every training item, inference mode.
Tensor teacher_logits_for(const Checkpoint& ckpt, const DatasetContainer& c) {
    check_arch_vs_container(ckpt.arch, c, "teacher");
    auto teacher = build_model<double>(ckpt.arch, 0);
    load_into_model(ckpt, *teacher);
    const int n = c.n_items;
    const int batch = std::min(256, n);
    Tensor out({n, c.n_classes});
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Tensor chunk;
    for (int first = 0; first < n; first += batch) {
        const int count = std::min(batch, n - first);
        gather_images(c.images, order, first, count, chunk);
        Tensor logits = teacher->forward(chunk, false);
        std::copy_n(logits.ptr(),
                    static_cast<std::size_t>(count) * c.n_classes,
                    out.ptr() + static_cast<std::size_t>(first) * c.n_classes);
    }
    return out;
}

struct LoopSpec {
    const RunConfig* cfg = nullptr;
    ArchSpec arch;
    bool use_droppath = false;
    bool use_kd = false;
    bool misc = false;
    const DatasetContainer* train = nullptr;
    const DatasetContainer* eval = nullptr;
    const Tensor* teacher_logits = nullptr; // (n_items, classes) when use_kd
    std::string dir;
    std::string preset_label;
    std::string ckpt_name = "model.ckpt";
};

TrainResult run_training(const LoopSpec& ls) {
    const RunConfig& cfg = *ls.cfg;
    const DatasetContainer& train = *ls.train;
    const auto t0 = std::chrono::steady_clock::now();

    check_arch_vs_container(ls.arch, train, "train");
    check_arch_vs_container(ls.arch, *ls.eval, "eval");
    if (ls.use_droppath) {
        cfg.keep_rate.validate();
        if (cfg.epochs > cfg.keep_rate.N)
            throw ConfigError("epochs " + std::to_string(cfg.epochs) +
                              " exceed the keep-rate schedule span N=" +
                              std::to_string(cfg.keep_rate.N));
    }
    if (ls.misc && cfg.epochs > 0) cfg.lr.validate();

    auto model = build_model<double>(ls.arch, cfg.seed);
    std::vector<ParamSlot> slots;
    for (Param* p : model->trainable_params())
        slots.push_back({p->name, &p->value, &p->grad});

    std::unique_ptr<Optimizer> opt;
    if (ls.misc)
        opt = std::make_unique<Lion>(cfg.lion);
    else
        opt = std::make_unique<AdamW>(cfg.adamw);

    AugmentConfig aug = cfg.augment;
    aug.k = ls.misc ? resolve_augment_k(cfg, train.ipc) : 1;
    aug.validate();

    const int n = train.n_items;
    const int batch = resolve_batch_size(cfg, train.ipc, n);
    const int eval_batch = std::min(256, ls.eval->n_items);
    const std::vector<int> classes = train.item_classes();

    RunRecord rec;
    rec.preset = ls.preset_label;
    rec.seed = cfg.seed;
    rec.config = cfg.to_json();

    std::vector<int> order(static_cast<std::size_t>(n));
    Tensor batch_images, grad;
    std::uint64_t global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double p =
            ls.use_droppath ? keep_rate(cfg.keep_rate, epoch) : 1.0;
        const double lr =
            ls.misc ? learning_rate(cfg.lr, epoch)
                    : cosine_baseline_lr(cfg.lr.lr_max, cfg.epochs, epoch);

        // Augment the whole set first so every item's transform is a pure
        // function of (seed, epoch, item index), independent of shuffling.
        const Tensor epoch_images =
            augment_batch(train.images, aug, cfg.seed,
                          static_cast<std::uint64_t>(epoch), 0);

        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        RngStream shuffle = derive_stream(cfg.seed, StreamKind::shuffle,
                                          static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(shuffle.uniform_int(i));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        for (int first = 0; first < n; first += batch) {
            const int count = std::min(batch, n - first);
            gather_images(epoch_images, order, first, count, batch_images);
            TargetBatch targets =
                gather_targets(train, classes, order, first, count);

            model->zero_grad();
            Tensor logits = model->forward(batch_images, true, p, cfg.seed,
                                           global_step++);
            double loss;
            if (ls.use_kd) {
                Tensor yt({count, train.n_classes});
                for (int b = 0; b < count; ++b)
                    std::copy_n(ls.teacher_logits->ptr() +
                                    static_cast<std::size_t>(
                                        order[static_cast<std::size_t>(
                                            first + b)]) *
                                        train.n_classes,
                                static_cast<std::size_t>(train.n_classes),
                                yt.ptr() + static_cast<std::size_t>(b) *
                                               train.n_classes);
                loss = kd_loss(logits, yt, targets, cfg.kd, &grad);
            } else {
                loss = ce_loss(logits, targets, &grad);
            }
            if (!std::isfinite(loss))
                throw NumericError("training diverged at epoch " +
                                   std::to_string(epoch) +
                                   ": loss is not finite");
            model->backward(grad);
            opt->step(slots, lr);
            loss_sum += loss * count;
        }

        MetricRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / n;
        row.keep_rate = p;
        row.lr = lr;
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
            row.eval_accuracy = evaluate_model(*model, *ls.eval, eval_batch);
        rec.metrics.push_back(row);
    }

    rec.final_test_accuracy = evaluate_model(*model, *ls.eval, eval_batch);
    rec.dp_mask_draws = model->mask_draws();
    rec.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();

    std::filesystem::create_directories(ls.dir);
    TrainResult result;
    result.record = rec;
    result.checkpoint = snapshot_model(*model);
    result.checkpoint_path = ls.dir + "/" + ls.ckpt_name;
    write_checkpoint(result.checkpoint, result.checkpoint_path);
    write_run_record(rec, ls.dir + "/run.json");
    write_metrics_csv(rec, ls.dir + "/metrics.csv");
    return result;
}

} // namespace

nlohmann::json PresetFlags::to_json() const {
    return {{"droppath", droppath}, {"kd", kd}, {"misc", misc}};
}

PresetFlags resolve_preset(const std::string& preset) {
    if (preset == "baseline") return {false, false, false};
    if (preset == "no_dp_kd") return {false, false, true};
    if (preset == "no_dp") return {false, true, true};
    if (preset == "no_kd") return {true, false, true};
    if (preset == "full") return {true, true, true};
    throw ConfigError("unknown preset \"" + preset + "\"");
}

nlohmann::json dry_run_report(const RunConfig& cfg) {
    const PresetFlags f = resolve_preset(cfg.preset);
    nlohmann::json j;
    j["preset"] = cfg.preset;
    j["components"] = f.to_json();
    j["optimizer"] = f.misc ? "lion" : "adamw";
    j["lr_schedule"] = f.misc ? "periodic" : "cosine";
    j["loss"] = f.kd ? "kd" : "ce";
    if (f.misc)
        j["augment_folds"] =
            cfg.augment_k_auto ? nlohmann::json("auto") : nlohmann::json(cfg.augment.k);
    else
        j["augment_folds"] = 1;
    j["student"] = cfg.student.family;
    j["student_droppath"] =
        f.droppath && cfg.student.family != "cnn3";
    if (f.kd)
        j["teacher"] = cfg.teacher_checkpoint.empty()
                           ? nlohmann::json(cfg.teacher.family)
                           : nlohmann::json(cfg.teacher_checkpoint);
    return j;
}

TrainResult train_teacher(const RunConfig& cfg) {
    cfg.validate();
    if (!cfg.teacher_checkpoint.empty())
        throw ConfigError("teacher training requested but teacher_checkpoint "
                          "is already set");
    DatasetContainer train = read_container(cfg.dataset);
    DatasetContainer eval = read_container(cfg.eval_dataset);

    LoopSpec ls;
    ls.cfg = &cfg;
    ls.arch = cfg.teacher;
    ls.use_droppath = false; // never applicable to the 3-layer CNN
    ls.use_kd = false;
    ls.misc = true;
    ls.train = &train;
    ls.eval = &eval;
    ls.dir = cfg.output_dir + "/teacher";
    ls.preset_label = "teacher";
    ls.ckpt_name = "teacher.ckpt";
    return run_training(ls);
}

TrainResult train_student(const RunConfig& cfg) {
    cfg.validate();
    const PresetFlags flags = resolve_preset(cfg.preset);
    DatasetContainer train = read_container(cfg.dataset);
    DatasetContainer eval = read_container(cfg.eval_dataset);

    Tensor teacher_logits;
    if (flags.kd) {
        Checkpoint teacher_ckpt;
        if (!cfg.teacher_checkpoint.empty()) {
            teacher_ckpt = read_checkpoint(cfg.teacher_checkpoint);
        } else {
            teacher_ckpt = train_teacher(cfg).checkpoint;
        }
        if (teacher_ckpt.arch.family != "cnn3")
            throw ConfigError("teacher checkpoint must be a cnn3 model, got " +
                              teacher_ckpt.arch.family);
        teacher_logits = teacher_logits_for(teacher_ckpt, train);
    }

    LoopSpec ls;
    ls.cfg = &cfg;
    ls.arch = cfg.student;
    // DropPath needs residual or paired single-branch blocks; the plain
    // 3-layer CNN has none, so the flag stays off for it under any preset.
    ls.arch.droppath_enabled =
        flags.droppath && cfg.student.family != "cnn3";
    ls.use_droppath = ls.arch.droppath_enabled;
    ls.use_kd = flags.kd;
    ls.misc = flags.misc;
    ls.train = &train;
    ls.eval = &eval;
    ls.teacher_logits = flags.kd ? &teacher_logits : nullptr;
    ls.dir = cfg.run_dir();
    ls.preset_label = cfg.preset;
    ls.ckpt_name = "student.ckpt";
    return run_training(ls);
}

double evaluate(const Checkpoint& ckpt, const DatasetContainer& data) {
    auto model = build_model<double>(ckpt.arch, 0);
    load_into_model(ckpt, *model);
    return evaluate_model(*model, data, std::min(256, data.n_items));
}

double evaluate_model(Model& model, const DatasetContainer& data, int batch) {
    check_arch_vs_container(model.spec(), data, "eval");
    if (batch <= 0) throw ConfigError("evaluation batch must be positive");
    const int n = data.n_items;
    const std::vector<int> classes = data.item_classes();
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Tensor chunk;
    long long hits = 0;
    for (int first = 0; first < n; first += batch) {
        const int count = std::min(batch, n - first);
        gather_images(data.images, order, first, count, chunk);
        Tensor logits = model.forward(chunk, false);
        for (int b = 0; b < count; ++b) {
            const double* row =
                logits.ptr() + static_cast<std::size_t>(b) * data.n_classes;
            const int pred = static_cast<int>(
                std::max_element(row, row + data.n_classes) - row);
            if (pred == classes[static_cast<std::size_t>(first + b)]) ++hits;
        }
    }
    return static_cast<double>(hits) / n;
}

int emit_plots(const std::string& runs_dir, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(runs_dir)) {
        std::cerr << "warning: runs directory \"" << runs_dir
                  << "\" does not exist\n";
        return 0;
    }

    // Label each record by its parent directory so two runs of the same
    // preset and seed cannot clobber each other's series files.
    std::vector<std::pair<std::string, RunRecord>> records;
    for (const fs::directory_entry& e :
         fs::recursive_directory_iterator(runs_dir))
        if (e.is_regular_file() && e.path().filename() == "run.json")
            records.emplace_back(e.path().parent_path().filename().string(),
                                 read_run_record(e.path().string()));
    if (records.empty()) {
        std::cerr << "warning: no run.json records under \"" << runs_dir
                  << "\"\n";
        return 0;
    }
    std::sort(records.begin(), records.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    fs::create_directories(out_dir);
    char buf[64];
    std::string summary =
        "label,preset,seed,student,final_test_accuracy,wall_time_seconds\n";
    for (const auto& [label, rec] : records) {
        if (!std::isfinite(rec.final_test_accuracy)) {
            std::cerr << "warning: run \"" << label
                      << "\" has no finite final accuracy, skipped\n";
            continue;
        }
        std::string student = "unknown";
        if (rec.config.contains("student") &&
            rec.config["student"].contains("family"))
            student = rec.config["student"]["family"].get<std::string>();
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g",
                      rec.final_test_accuracy, rec.wall_time_seconds);
        summary += label + "," + rec.preset + "," +
                   std::to_string(rec.seed) + "," + student + "," + buf + "\n";

        std::string series = "epoch,eval_accuracy\n";
        std::string schedule = "epoch,keep_rate,lr\n";
        for (const MetricRow& m : rec.metrics) {
            if (m.eval_accuracy) {
                std::snprintf(buf, sizeof(buf), "%d,%.17g", m.epoch,
                              *m.eval_accuracy);
                series += std::string(buf) + "\n";
            }
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g", m.epoch,
                          m.keep_rate, m.lr);
            schedule += std::string(buf) + "\n";
        }
        std::ofstream(out_dir + "/series_" + label + ".csv") << series;
        std::ofstream(out_dir + "/schedule_" + label + ".csv") << schedule;
    }
    std::ofstream(out_dir + "/summary.csv") << summary;
    return static_cast<int>(records.size());
}

} // namespace distileval
