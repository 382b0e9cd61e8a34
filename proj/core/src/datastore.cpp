#include "distileval/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "container serialization assumes a little-endian host");

namespace distileval {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'T', 'E', 'N', 'S', 'R', '1'};
constexpr std::size_t kHeaderLenOffset = 8;
constexpr std::size_t kHeaderOffset = 12;

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open \"" + path + "\" for reading");
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    std::vector<char> bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(bytes.data(), size);
    if (!in)
        throw FormatError("failed reading " + std::to_string(size) +
                          " bytes from \"" + path + "\"");
    return bytes;
}

void write_file_atomic(const std::string& path, const std::string& header,
                       const std::vector<char>& payload) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw FormatError("cannot open \"" + tmp + "\" for writing");
        out.write(kMagic, sizeof(kMagic));
        const std::uint32_t len = static_cast<std::uint32_t>(header.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(header.data(),
                  static_cast<std::streamsize>(header.size()));
        if (!payload.empty())
            out.write(payload.data(),
                      static_cast<std::streamsize>(payload.size()));
        if (!out)
            throw FormatError("failed writing \"" + tmp + "\"");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw FormatError("cannot move \"" + tmp + "\" into place: " +
                          ec.message());
}

struct ParsedFile {
    nlohmann::json header;
    std::vector<char> payload;
    std::size_t payload_offset = 0;
};

ParsedFile parse_container_file(const std::string& path) {
    std::vector<char> bytes = read_file_bytes(path);
    if (bytes.size() < kHeaderOffset)
        throw FormatError("\"" + path + "\": file ends at offset " +
                          std::to_string(bytes.size()) +
                          ", header needs at least 12 bytes");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw FormatError("\"" + path + "\": bad magic at offset 0");
    std::uint32_t header_len = 0;
    std::memcpy(&header_len, bytes.data() + kHeaderLenOffset,
                sizeof(header_len));
    const std::size_t payload_offset = kHeaderOffset + header_len;
    if (bytes.size() < payload_offset)
        throw FormatError("\"" + path + "\": header of " +
                          std::to_string(header_len) +
                          " bytes at offset 12 runs past end of file (" +
                          std::to_string(bytes.size()) + " bytes)");
    ParsedFile out;
    try {
        out.header = nlohmann::json::parse(bytes.begin() + kHeaderOffset,
                                           bytes.begin() +
                                               static_cast<std::ptrdiff_t>(
                                                   payload_offset));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("\"" + path + "\": header at offset 12 is not "
                          "valid JSON: " + e.what());
    }
    out.payload.assign(bytes.begin() +
                           static_cast<std::ptrdiff_t>(payload_offset),
                       bytes.end());
    out.payload_offset = payload_offset;
    return out;
}

void floats_to_doubles(const char* bytes, std::size_t count, double* out) {
    for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, bytes + i * sizeof(float), sizeof(float));
        out[i] = static_cast<double>(f);
    }
}

void doubles_to_floats(const double* in, std::size_t count, char* bytes) {
    for (std::size_t i = 0; i < count; ++i) {
        const float f = static_cast<float>(in[i]);
        std::memcpy(bytes + i * sizeof(float), &f, sizeof(float));
    }
}

} // namespace

// --------------------------------------------------------------- dataset

void DatasetContainer::validate() const {
    if (n_items < 0 || channels <= 0 || height <= 0 || width <= 0 ||
        n_classes <= 0)
        throw ConfigError("container dimensions must be positive");
    if (label_kind != "hard" && label_kind != "logits")
        throw ConfigError("label_kind must be hard or logits, got \"" +
                          label_kind + "\"");
    if (label_kind == "logits" && !(label_temperature > 0.0))
        throw ConfigError("label_temperature must be > 0 for soft labels");
    if (ipc && *ipc <= 0)
        throw ConfigError("ipc must be positive when present");
    const std::vector<int> img_shape = {n_items, channels, height, width};
    if (images.shape != img_shape)
        throw ShapeError("container images " + shape_str(images.shape) +
                         " vs header " + shape_str(img_shape));
    if (labels.shape != std::vector<int>{n_items, n_classes})
        throw ShapeError("container labels " + shape_str(labels.shape) +
                         " vs header (" + std::to_string(n_items) + "," +
                         std::to_string(n_classes) + ")");
    if (label_kind == "hard")
        for (int i = 0; i < n_items; ++i) {
            const double* row =
                labels.ptr() + static_cast<std::size_t>(i) * n_classes;
            int ones = 0;
            for (int c = 0; c < n_classes; ++c) {
                if (row[c] == 1.0)
                    ++ones;
                else if (row[c] != 0.0)
                    throw ConfigError("hard label row " + std::to_string(i) +
                                      " holds a value other than 0/1");
            }
            if (ones != 1)
                throw ConfigError("hard label row " + std::to_string(i) +
                                  " must hold exactly one 1");
        }
}

std::vector<int> DatasetContainer::item_classes() const {
    std::vector<int> out(static_cast<std::size_t>(n_items));
    for (int i = 0; i < n_items; ++i) {
        const double* row =
            labels.ptr() + static_cast<std::size_t>(i) * n_classes;
        out[static_cast<std::size_t>(i)] =
            static_cast<int>(std::max_element(row, row + n_classes) - row);
    }
    return out;
}

DatasetContainer read_container(const std::string& path) {
    ParsedFile f = parse_container_file(path);
    const nlohmann::json& h = f.header;
    DatasetContainer c;
    try {
        const std::string kind = h.value("kind", "dataset");
        if (kind != "dataset")
            throw FormatError("\"" + path + "\" holds kind=" + kind +
                              ", expected dataset");
        c.version = h.at("version").get<int>();
        c.n_items = h.at("n_items").get<int>();
        c.channels = h.at("channels").get<int>();
        c.height = h.at("height").get<int>();
        c.width = h.at("width").get<int>();
        c.n_classes = h.at("n_classes").get<int>();
        c.label_kind = h.at("label_kind").get<std::string>();
        if (c.label_kind == "logits")
            c.label_temperature = h.at("label_temperature").get<double>();
        c.source = h.value("source", "unknown");
        if (h.contains("ipc") && !h.at("ipc").is_null())
            c.ipc = h.at("ipc").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("\"" + path + "\": header field error: " + e.what());
    }
    if (c.version != 1)
        throw FormatError("\"" + path + "\": unsupported container version " +
                          std::to_string(c.version));

    const std::size_t n_img = static_cast<std::size_t>(c.n_items) *
                              c.channels * c.height * c.width;
    const std::size_t n_lab =
        static_cast<std::size_t>(c.n_items) * c.n_classes;
    const std::size_t expected = 4 * (n_img + n_lab);
    if (f.payload.size() != expected)
        throw FormatError(
            "\"" + path + "\": payload at offset " +
            std::to_string(f.payload_offset) + " holds " +
            std::to_string(f.payload.size()) + " bytes, header implies " +
            std::to_string(expected));

    c.images = Tensor({c.n_items, c.channels, c.height, c.width});
    c.labels = Tensor({c.n_items, c.n_classes});
    floats_to_doubles(f.payload.data(), n_img, c.images.ptr());
    floats_to_doubles(f.payload.data() + 4 * n_img, n_lab, c.labels.ptr());
    c.validate();
    return c;
}

void write_container(const DatasetContainer& c, const std::string& path) {
    c.validate();
    nlohmann::json h;
    h["version"] = c.version;
    h["kind"] = "dataset";
    h["n_items"] = c.n_items;
    h["channels"] = c.channels;
    h["height"] = c.height;
    h["width"] = c.width;
    h["n_classes"] = c.n_classes;
    h["label_kind"] = c.label_kind;
    if (c.label_kind == "logits") h["label_temperature"] = c.label_temperature;
    h["source"] = c.source;
    if (c.ipc)
        h["ipc"] = *c.ipc;
    else
        h["ipc"] = nullptr;

    const std::size_t n_img = c.images.data.size();
    const std::size_t n_lab = c.labels.data.size();
    std::vector<char> payload(4 * (n_img + n_lab));
    doubles_to_floats(c.images.ptr(), n_img, payload.data());
    doubles_to_floats(c.labels.ptr(), n_lab, payload.data() + 4 * n_img);
    write_file_atomic(path, h.dump(), payload);
}

// ----------------------------------------------------------- cifar import

DatasetContainer import_cifar_binary(const std::vector<std::string>& files,
                                     const std::string& out_path) {
    if (files.empty())
        throw ConfigError("import: no input files given");
    constexpr int kRecord = 1 + 3 * 32 * 32;
    std::vector<std::vector<char>> blobs;
    int total = 0;
    for (const std::string& f : files) {
        blobs.push_back(read_file_bytes(f));
        if (blobs.back().size() % kRecord != 0)
            throw FormatError("\"" + f + "\": size " +
                              std::to_string(blobs.back().size()) +
                              " is not a multiple of the " +
                              std::to_string(kRecord) + "-byte record");
        total += static_cast<int>(blobs.back().size()) / kRecord;
    }

    DatasetContainer c;
    c.n_items = total;
    c.channels = 3;
    c.height = 32;
    c.width = 32;
    c.n_classes = 10;
    c.label_kind = "hard";
    c.source = "real";
    c.images = Tensor({total, 3, 32, 32});
    c.labels = Tensor({total, 10});

    int item = 0;
    for (std::size_t fi = 0; fi < blobs.size(); ++fi) {
        const std::vector<char>& blob = blobs[fi];
        const int n = static_cast<int>(blob.size()) / kRecord;
        for (int r = 0; r < n; ++r, ++item) {
            const unsigned char* rec = reinterpret_cast<const unsigned char*>(
                blob.data() + static_cast<std::size_t>(r) * kRecord);
            const int label = rec[0];
            if (label >= 10)
                throw FormatError("\"" + files[fi] + "\": record " +
                                  std::to_string(r) + " holds label " +
                                  std::to_string(label) + ", expected 0..9");
            c.labels[static_cast<std::size_t>(item) * 10 + label] = 1.0;
            double* img = c.images.ptr() +
                          static_cast<std::size_t>(item) * 3 * 32 * 32;
            for (int p = 0; p < 3 * 32 * 32; ++p)
                img[p] = static_cast<double>(
                    static_cast<float>(rec[1 + p]) / 255.0f);
        }
    }
    if (!out_path.empty()) write_container(c, out_path);
    return c;
}

// ------------------------------------------------------- fraction sampling

DatasetContainer sample_fraction(const DatasetContainer& c, double fraction,
                                 std::uint64_t seed) {
    c.validate();
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ConfigError("fraction must lie in (0,1], got " +
                          std::to_string(fraction));
    if (fraction * c.n_items < c.n_classes)
        throw ConfigError("fraction " + std::to_string(fraction) + " of " +
                          std::to_string(c.n_items) +
                          " items cannot cover all " +
                          std::to_string(c.n_classes) + " classes");

    const std::vector<int> cls = c.item_classes();
    std::vector<std::vector<int>> per_class(
        static_cast<std::size_t>(c.n_classes));
    for (int i = 0; i < c.n_items; ++i)
        per_class[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])]
            .push_back(i);

    std::vector<int> picked;
    std::vector<long> kept_per_class;
    for (int k = 0; k < c.n_classes; ++k) {
        auto& idx = per_class[static_cast<std::size_t>(k)];
        if (idx.empty()) {
            kept_per_class.push_back(0);
            continue;
        }
        const long m = std::lround(fraction * static_cast<double>(idx.size()));
        if (m == 0)
            throw ConfigError("fraction " + std::to_string(fraction) +
                              " keeps 0 items of class " + std::to_string(k));
        RngStream rng = derive_stream(seed, StreamKind::fraction,
                                      static_cast<std::uint64_t>(k));
        for (std::size_t i = idx.size(); i > 1; --i) {
            const std::size_t j =
                static_cast<std::size_t>(rng.uniform_int(i));
            std::swap(idx[i - 1], idx[j]);
        }
        picked.insert(picked.end(), idx.begin(),
                      idx.begin() + static_cast<std::ptrdiff_t>(m));
        kept_per_class.push_back(m);
    }

    RngStream shuf = derive_stream(seed, StreamKind::shuffle);
    for (std::size_t i = picked.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(shuf.uniform_int(i));
        std::swap(picked[i - 1], picked[j]);
    }

    DatasetContainer out;
    out.version = c.version;
    out.n_items = static_cast<int>(picked.size());
    out.channels = c.channels;
    out.height = c.height;
    out.width = c.width;
    out.n_classes = c.n_classes;
    out.label_kind = c.label_kind;
    out.label_temperature = c.label_temperature;
    out.source = c.source;
    const bool uniform =
        !kept_per_class.empty() &&
        std::all_of(kept_per_class.begin(), kept_per_class.end(),
                    [&](long m) { return m == kept_per_class.front(); }) &&
        kept_per_class.front() > 0 &&
        static_cast<int>(kept_per_class.size()) == c.n_classes;
    if (uniform)
        out.ipc = static_cast<int>(kept_per_class.front());

    const std::size_t chw =
        static_cast<std::size_t>(c.channels) * c.height * c.width;
    out.images = Tensor({out.n_items, c.channels, c.height, c.width});
    out.labels = Tensor({out.n_items, c.n_classes});
    for (int i = 0; i < out.n_items; ++i) {
        const int src = picked[static_cast<std::size_t>(i)];
        std::copy_n(c.images.ptr() + static_cast<std::size_t>(src) * chw, chw,
                    out.images.ptr() + static_cast<std::size_t>(i) * chw);
        std::copy_n(c.labels.ptr() +
                        static_cast<std::size_t>(src) * c.n_classes,
                    static_cast<std::size_t>(c.n_classes),
                    out.labels.ptr() +
                        static_cast<std::size_t>(i) * c.n_classes);
    }
    out.validate();
    return out;
}

// ------------------------------------------------------------ checkpoints

Checkpoint snapshot_model(const Model& model) {
    Checkpoint ckpt;
    ckpt.arch = model.spec();
    for (const Param* p : model.all_params()) {
        CheckpointEntry e;
        e.name = p->name;
        e.shape = p->value.shape;
        e.data = p->value.data;
        ckpt.params.push_back(std::move(e));
    }
    return ckpt;
}

void load_into_model(const Checkpoint& ckpt, Model& model) {
    std::map<std::string, const CheckpointEntry*> by_name;
    for (const CheckpointEntry& e : ckpt.params) {
        if (!by_name.emplace(e.name, &e).second)
            throw FormatError("checkpoint holds parameter \"" + e.name +
                              "\" twice");
    }
    for (Param* p : model.all_params()) {
        auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw ConfigError("checkpoint is missing parameter \"" + p->name +
                              "\"");
        const CheckpointEntry& e = *it->second;
        if (e.shape != p->value.shape)
            throw ConfigError("checkpoint parameter \"" + p->name +
                              "\" has shape " + shape_str(e.shape) +
                              ", model expects " + shape_str(p->value.shape));
        p->value.data = e.data;
        by_name.erase(it);
    }
    if (!by_name.empty())
        throw ConfigError("checkpoint holds unknown parameter \"" +
                          by_name.begin()->first + "\"");
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json h;
    h["version"] = 1;
    h["kind"] = "checkpoint";
    h["arch"] = ckpt.arch.to_json();
    nlohmann::json plist = nlohmann::json::array();
    std::size_t total = 0;
    for (const CheckpointEntry& e : ckpt.params) {
        plist.push_back({{"name", e.name},
                         {"shape", e.shape},
                         {"dtype", "f64"}});
        total += e.data.size();
    }
    h["params"] = plist;

    std::vector<char> payload(total * sizeof(double));
    std::size_t off = 0;
    for (const CheckpointEntry& e : ckpt.params) {
        std::memcpy(payload.data() + off, e.data.data(),
                    e.data.size() * sizeof(double));
        off += e.data.size() * sizeof(double);
    }
    write_file_atomic(path, h.dump(), payload);
}

Checkpoint read_checkpoint(const std::string& path) {
    ParsedFile f = parse_container_file(path);
    const nlohmann::json& h = f.header;
    Checkpoint ckpt;
    try {
        const std::string kind = h.value("kind", "");
        if (kind != "checkpoint")
            throw FormatError("\"" + path + "\" holds kind=" + kind +
                              ", expected checkpoint");
        ckpt.arch = ArchSpec::from_json(h.at("arch"));
        std::size_t off = 0;
        for (const nlohmann::json& pj : h.at("params")) {
            CheckpointEntry e;
            e.name = pj.at("name").get<std::string>();
            e.shape = pj.at("shape").get<std::vector<int>>();
            const std::string dtype = pj.at("dtype").get<std::string>();
            if (dtype != "f64")
                throw FormatError("\"" + path + "\": parameter \"" + e.name +
                                  "\" has dtype " + dtype +
                                  ", only f64 is supported");
            const std::size_t count =
                static_cast<std::size_t>(Tensor::numel_of(e.shape));
            if (f.payload.size() <
                off + count * sizeof(double))
                throw FormatError(
                    "\"" + path + "\": payload truncated at offset " +
                    std::to_string(f.payload_offset + off) +
                    " while reading \"" + e.name + "\"");
            e.data.resize(count);
            std::memcpy(e.data.data(), f.payload.data() + off,
                        count * sizeof(double));
            off += count * sizeof(double);
            ckpt.params.push_back(std::move(e));
        }
        if (off != f.payload.size())
            throw FormatError("\"" + path + "\": payload holds " +
                              std::to_string(f.payload.size() - off) +
                              " unexpected trailing bytes at offset " +
                              std::to_string(f.payload_offset + off));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("\"" + path + "\": header field error: " + e.what());
    }
    return ckpt;
}

// -------------------------------------------------------------- run record

void RunRecord::validate() const {
    for (std::size_t i = 1; i < metrics.size(); ++i)
        if (metrics[i].epoch <= metrics[i - 1].epoch)
            throw ConfigError("run record epochs must strictly increase (" +
                              std::to_string(metrics[i - 1].epoch) + " -> " +
                              std::to_string(metrics[i].epoch) + ")");
}

nlohmann::json RunRecord::to_json() const {
    validate();
    nlohmann::json j;
    j["preset"] = preset;
    j["seed"] = seed;
    j["config"] = config;
    nlohmann::json rows = nlohmann::json::array();
    for (const MetricRow& m : metrics) {
        nlohmann::json r;
        r["epoch"] = m.epoch;
        r["train_loss"] = m.train_loss;
        r["keep_rate"] = m.keep_rate;
        r["lr"] = m.lr;
        if (m.eval_accuracy) r["eval_accuracy"] = *m.eval_accuracy;
        rows.push_back(std::move(r));
    }
    j["metrics"] = rows;
    j["final_test_accuracy"] = final_test_accuracy;
    j["wall_time_seconds"] = wall_time_seconds;
    j["dp_mask_draws"] = dp_mask_draws;
    return j;
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    RunRecord rec;
    try {
        rec.preset = j.at("preset").get<std::string>();
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.config = j.value("config", nlohmann::json::object());
        for (const nlohmann::json& r : j.at("metrics")) {
            MetricRow m;
            m.epoch = r.at("epoch").get<int>();
            m.train_loss = r.at("train_loss").get<double>();
            m.keep_rate = r.at("keep_rate").get<double>();
            m.lr = r.at("lr").get<double>();
            if (r.contains("eval_accuracy"))
                m.eval_accuracy = r.at("eval_accuracy").get<double>();
            rec.metrics.push_back(m);
        }
        rec.final_test_accuracy = j.at("final_test_accuracy").get<double>();
        rec.wall_time_seconds = j.value("wall_time_seconds", 0.0);
        rec.dp_mask_draws = j.value("dp_mask_draws", 0LL);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("run record: ") + e.what());
    }
    rec.validate();
    return rec;
}

void write_run_record(const RunRecord& rec, const std::string& path) {
    write_json_file(rec.to_json(), path);
}

RunRecord read_run_record(const std::string& path) {
    return RunRecord::from_json(read_json_file(path));
}

void write_metrics_csv(const RunRecord& rec, const std::string& path) {
    rec.validate();
    std::string body = "epoch,train_loss,keep_rate,lr,eval_accuracy\n";
    for (const MetricRow& m : rec.metrics) {
        body += std::to_string(m.epoch) + "," + fmt_double(m.train_loss) +
                "," + fmt_double(m.keep_rate) + "," + fmt_double(m.lr) + ",";
        if (m.eval_accuracy) body += fmt_double(*m.eval_accuracy);
        body += "\n";
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open \"" + tmp + "\" for writing");
        out << body;
        if (!out) throw FormatError("failed writing \"" + tmp + "\"");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw FormatError("cannot move \"" + tmp + "\" into place: " +
                          ec.message());
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open \"" + tmp + "\" for writing");
        out << j.dump(2) << "\n";
        if (!out) throw FormatError("failed writing \"" + tmp + "\"");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw FormatError("cannot move \"" + tmp + "\" into place: " +
                          ec.message());
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open \"" + path + "\" for reading");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("\"" + path + "\": " + e.what());
    }
}

} // namespace distileval
