#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distileval/arch_zoo.hpp"
#include "distileval/tensor.hpp"

namespace distileval {

/// An image dataset in memory. On disk it lives in the shared container
/// layout: 8-byte magic "DDTENSR1", a 4-byte little-endian header length, a
/// UTF-8 JSON header, then the raw payload. Dataset payloads are float32
/// little-endian images (N,C,H,W) followed by float32 labels (N,n_classes);
/// hard labels are one-hot rows, soft labels are raw logits to be softened
/// with label_temperature.
struct DatasetContainer {
    int version = 1;
    int n_items = 0, channels = 0, height = 0, width = 0, n_classes = 0;
    std::string label_kind = "hard"; // hard | logits
    double label_temperature = 1.0;  // meaningful only for logits
    std::string source = "real";
    std::optional<int> ipc;

    Tensor images; // (N,C,H,W), values in [0,1]
    Tensor labels; // (N,n_classes)

    void validate() const;

    /// Class per item: the position of the single 1 for hard labels, the
    /// argmax for logits.
    std::vector<int> item_classes() const;
};

DatasetContainer read_container(const std::string& path);
void write_container(const DatasetContainer& c, const std::string& path);

/// Converts the canonical CIFAR layout (1 label byte + 3072 pixel bytes
/// per record, planes R,G,B) into a container. Pixels divide by 255 so
/// byte 255 becomes exactly 1.0; labels become one-hot rows.
DatasetContainer import_cifar_binary(const std::vector<std::string>& files,
                                     const std::string& out_path);

/// Stratified subsample: round(f * per-class count) items per class, drawn
/// without replacement, then the kept items are shuffled together. The
/// header's ipc becomes the shared per-class count when uniform, otherwise
/// null.
DatasetContainer sample_fraction(const DatasetContainer& c, double fraction,
                                 std::uint64_t seed);

/// Model checkpoint: the architecture plus every named parameter and
/// buffer as float64, stored in the same container envelope with
/// kind=checkpoint.
struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
};

struct Checkpoint {
    ArchSpec arch;
    std::vector<CheckpointEntry> params;
};

Checkpoint snapshot_model(const Model& model);
void load_into_model(const Checkpoint& ckpt, Model& model);

Checkpoint read_checkpoint(const std::string& path);
void write_checkpoint(const Checkpoint& ckpt, const std::string& path);

/// One training run's outcome: the resolved config, per-epoch metrics and
/// the final result. JSON round-trips losslessly; the metrics additionally
/// flatten to CSV with one row per epoch.
struct MetricRow {
    int epoch = 0;
    double train_loss = 0.0;
    double keep_rate = 1.0;
    double lr = 0.0;
    std::optional<double> eval_accuracy;
};

struct RunRecord {
    std::string preset;
    std::uint64_t seed = 0;
    nlohmann::json config;
    std::vector<MetricRow> metrics;
    double final_test_accuracy = 0.0;
    double wall_time_seconds = 0.0;
    long long dp_mask_draws = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

void write_run_record(const RunRecord& rec, const std::string& path);
RunRecord read_run_record(const std::string& path);
void write_metrics_csv(const RunRecord& rec, const std::string& path);

/// Serializes any JSON document to path via a temp file and atomic rename.
void write_json_file(const nlohmann::json& j, const std::string& path);
nlohmann::json read_json_file(const std::string& path);

} // namespace distileval
