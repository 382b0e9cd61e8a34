#pragma once

#include <string>

#include <json.hpp>

#include "distileval/config.hpp"
#include "distileval/datastore.hpp"

namespace distileval {

/// Component switches a preset name resolves to. Misc. bundles the
/// periodic learning rate, the Lion optimizer and k-fold augmentation;
/// presets without it fall back to cosine annealing, AdamW and 1-fold
/// augmentation.
struct PresetFlags {
    bool droppath = false;
    bool kd = false;
    bool misc = false;

    nlohmann::json to_json() const;
};

PresetFlags resolve_preset(const std::string& preset);

/// What a run would do, without touching the dataset: resolved component
/// flags, optimizer, learning-rate schedule and loss. Backs the --dry-run
/// CLI path.
nlohmann::json dry_run_report(const RunConfig& cfg);

struct TrainResult {
    RunRecord record;
    Checkpoint checkpoint;
    std::string checkpoint_path;
};

/// Trains the cnn3 teacher with the Misc. scheme (periodic LR, Lion,
/// k-fold augmentation; never DropPath or KD) on cfg.dataset and persists
/// checkpoint, run record and metrics CSV under <output_dir>/teacher.
TrainResult train_teacher(const RunConfig& cfg);

/// Trains the student under cfg.preset. KD presets take the teacher from
/// cfg.teacher_checkpoint, or train one first when the path is empty.
/// Artifacts land under cfg.run_dir().
TrainResult train_student(const RunConfig& cfg);

/// Inference-mode top-1 accuracy, no augmentation, DropPath inactive.
double evaluate(const Checkpoint& ckpt, const DatasetContainer& data);

/// Same, for an already-built model; batch bounds peak memory.
double evaluate_model(Model& model, const DatasetContainer& data, int batch);

/// Scans runs_dir for run.json records and writes per-preset summary and
/// per-run series/schedule CSVs into out_dir. Returns the record count;
/// an empty directory is a warning, not an error.
int emit_plots(const std::string& runs_dir, const std::string& out_dir);

} // namespace distileval
