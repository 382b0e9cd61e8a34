#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distileval/arch_zoo.hpp"
#include "distileval/augment.hpp"
#include "distileval/lion.hpp"
#include "distileval/objectives.hpp"
#include "distileval/schedules.hpp"

namespace distileval {

/// Everything one training run needs, loadable from a single JSON document.
/// Schedule blocks share defaults: keep_rate.N falls back to epochs, and
/// lr.T / lr.S fall back to the keep-rate values so the two schedules stay
/// phase-aligned unless explicitly decoupled.
struct RunConfig {
    std::string dataset;        // training container path
    std::string eval_dataset;   // held-out container path
    std::string output_dir = "runs";
    std::string run_name;       // subdirectory; empty -> "<preset>_seed<seed>"
    std::string preset = "full";

    ArchSpec student;
    std::string teacher_checkpoint; // reuse this checkpoint when non-empty
    ArchSpec teacher;               // otherwise train this (must be cnn3)

    KeepRateConfig keep_rate;
    LrConfig lr;
    KdConfig kd;
    LionConfig lion;
    AdamwConfig adamw;
    AugmentConfig augment;
    bool augment_k_auto = true; // JSON "k": "auto" -> fold count from ipc

    int batch_size = 0; // 0 = auto from container ipc
    int epochs = 4000;
    std::uint64_t seed = 0;
    int eval_every = 50;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);

    /// Directory this run writes into.
    std::string run_dir() const;
};

/// Batch size for a container: the explicit value when set, otherwise keyed
/// off the container's ipc (1 -> 10, 10 -> 100, 50 -> 128), otherwise
/// min(128, n_items).
int resolve_batch_size(const RunConfig& cfg, std::optional<int> ipc,
                       int n_items);

/// Augmentation fold count: the explicit value unless "auto", which picks
/// 4 for ipc=1 and 2 otherwise.
int resolve_augment_k(const RunConfig& cfg, std::optional<int> ipc);

/// Applies one "dotted.path=value" override in place. The value is parsed
/// as JSON when possible (numbers, booleans, null, quoted strings, arrays)
/// and falls back to a plain string.
void apply_set_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file and applies --set overrides in order.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides);

} // namespace distileval
