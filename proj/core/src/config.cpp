#include "distileval/config.hpp"

#include <algorithm>
#include <set>

#include "distileval/datastore.hpp"
#include "distileval/errors.hpp"

namespace distileval {

namespace {

const std::set<std::string> kPresets = {"baseline", "no_dp_kd", "no_dp",
                                        "no_kd", "full"};

void check_keys(const nlohmann::json& j, const std::string& where,
                const std::set<std::string>& known) {
    if (!j.is_object())
        throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

template <class T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

void RunConfig::validate() const {
    if (!kPresets.count(preset))
        throw ConfigError("unknown preset \"" + preset + "\"");
    if (dataset.empty()) throw ConfigError("config: dataset path is empty");
    if (eval_dataset.empty())
        throw ConfigError("config: eval_dataset path is empty");
    if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
    if (batch_size < 0) throw ConfigError("config: batch_size must be >= 0");
    if (eval_every <= 0) throw ConfigError("config: eval_every must be > 0");
    student.validate();
    if (teacher_checkpoint.empty()) {
        teacher.validate();
        if (teacher.family != "cnn3")
            throw ConfigError("teacher family must be cnn3, got \"" +
                              teacher.family + "\"");
    }
    kd.validate();
    lion.validate();
    adamw.validate();
    augment.validate();
    // Schedules are validated where they are first queried, so a zero-epoch
    // run never trips over schedule parameters it will not use.
}

std::string RunConfig::run_dir() const {
    std::string name = run_name;
    if (name.empty()) name = preset + "_seed" + std::to_string(seed);
    return output_dir + "/" + name;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["eval_dataset"] = eval_dataset;
    j["output_dir"] = output_dir;
    if (!run_name.empty()) j["run_name"] = run_name;
    j["preset"] = preset;
    j["student"] = student.to_json();
    if (!teacher_checkpoint.empty())
        j["teacher_checkpoint"] = teacher_checkpoint;
    j["teacher"] = teacher.to_json();
    j["keep_rate"] = {{"gamma", keep_rate.gamma}, {"p_min", keep_rate.p_min},
                      {"p_final", keep_rate.p_final}, {"T", keep_rate.T},
                      {"W", keep_rate.W}, {"S", keep_rate.S},
                      {"N", keep_rate.N}};
    j["lr"] = {{"lr_max", lr.lr_max}, {"lambda", lr.lambda},
               {"T_max", lr.T_max},   {"T_warm", lr.T_warm},
               {"T", lr.T},           {"S", lr.S}};
    j["kd"] = {{"alpha", kd.alpha}, {"tau", kd.tau}};
    j["lion"] = {{"beta1", lion.beta1},
                 {"beta2", lion.beta2},
                 {"weight_decay", lion.weight_decay}};
    j["adamw"] = {{"beta1", adamw.beta1},
                  {"beta2", adamw.beta2},
                  {"eps", adamw.eps},
                  {"weight_decay", adamw.weight_decay}};
    nlohmann::json aug;
    if (augment_k_auto)
        aug["k"] = "auto";
    else
        aug["k"] = augment.k;
    nlohmann::json pool = nlohmann::json::array();
    for (AugOp op : augment.pool) pool.push_back(to_string(op));
    aug["pool"] = pool;
    aug["crop_pad"] = augment.crop_pad;
    aug["cutout_size"] = augment.cutout_size;
    aug["rotate_deg"] = augment.rotate_deg;
    aug["scale_lo"] = augment.scale_lo;
    aug["scale_hi"] = augment.scale_hi;
    aug["jitter_lo"] = augment.jitter_lo;
    aug["jitter_hi"] = augment.jitter_hi;
    j["augment"] = aug;
    j["batch_size"] = batch_size == 0 ? nlohmann::json("auto")
                                      : nlohmann::json(batch_size);
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["eval_every"] = eval_every;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check_keys(j, "config",
               {"dataset", "eval_dataset", "output_dir", "run_name", "preset",
                "student", "teacher_checkpoint", "teacher", "keep_rate", "lr",
                "kd", "lion", "adamw", "augment", "batch_size", "epochs",
                "seed", "eval_every"});
    RunConfig cfg;
    cfg.teacher.family = "cnn3";
    try {
        get_if(j, "dataset", cfg.dataset);
        get_if(j, "eval_dataset", cfg.eval_dataset);
        get_if(j, "output_dir", cfg.output_dir);
        get_if(j, "run_name", cfg.run_name);
        get_if(j, "preset", cfg.preset);
        get_if(j, "epochs", cfg.epochs);
        get_if(j, "seed", cfg.seed);
        get_if(j, "eval_every", cfg.eval_every);
        if (j.contains("student")) cfg.student = ArchSpec::from_json(j.at("student"));
        get_if(j, "teacher_checkpoint", cfg.teacher_checkpoint);
        if (j.contains("teacher")) cfg.teacher = ArchSpec::from_json(j.at("teacher"));

        if (j.contains("batch_size")) {
            const nlohmann::json& b = j.at("batch_size");
            if (b.is_string()) {
                if (b.get<std::string>() != "auto")
                    throw ConfigError("batch_size must be an integer or "
                                      "\"auto\"");
                cfg.batch_size = 0;
            } else {
                cfg.batch_size = b.get<int>();
            }
        }

        if (j.contains("keep_rate")) {
            const nlohmann::json& k = j.at("keep_rate");
            check_keys(k, "keep_rate",
                       {"gamma", "p_min", "p_final", "T", "W", "S", "N"});
            get_if(k, "gamma", cfg.keep_rate.gamma);
            get_if(k, "p_min", cfg.keep_rate.p_min);
            get_if(k, "p_final", cfg.keep_rate.p_final);
            get_if(k, "T", cfg.keep_rate.T);
            get_if(k, "W", cfg.keep_rate.W);
            get_if(k, "S", cfg.keep_rate.S);
            cfg.keep_rate.N = cfg.epochs;
            get_if(k, "N", cfg.keep_rate.N);
        } else {
            cfg.keep_rate.N = cfg.epochs;
        }

        cfg.lr.T = cfg.keep_rate.T;
        cfg.lr.S = cfg.keep_rate.S;
        if (j.contains("lr")) {
            const nlohmann::json& l = j.at("lr");
            check_keys(l, "lr",
                       {"lr_max", "lambda", "T_max", "T_warm", "T", "S"});
            get_if(l, "lr_max", cfg.lr.lr_max);
            get_if(l, "lambda", cfg.lr.lambda);
            get_if(l, "T_max", cfg.lr.T_max);
            get_if(l, "T_warm", cfg.lr.T_warm);
            get_if(l, "T", cfg.lr.T);
            get_if(l, "S", cfg.lr.S);
        }

        if (j.contains("kd")) {
            const nlohmann::json& k = j.at("kd");
            check_keys(k, "kd", {"alpha", "tau"});
            get_if(k, "alpha", cfg.kd.alpha);
            get_if(k, "tau", cfg.kd.tau);
        }
        if (j.contains("lion")) {
            const nlohmann::json& l = j.at("lion");
            check_keys(l, "lion", {"beta1", "beta2", "weight_decay"});
            get_if(l, "beta1", cfg.lion.beta1);
            get_if(l, "beta2", cfg.lion.beta2);
            get_if(l, "weight_decay", cfg.lion.weight_decay);
        }
        if (j.contains("adamw")) {
            const nlohmann::json& a = j.at("adamw");
            check_keys(a, "adamw", {"beta1", "beta2", "eps", "weight_decay"});
            get_if(a, "beta1", cfg.adamw.beta1);
            get_if(a, "beta2", cfg.adamw.beta2);
            get_if(a, "eps", cfg.adamw.eps);
            get_if(a, "weight_decay", cfg.adamw.weight_decay);
        }
        if (j.contains("augment")) {
            const nlohmann::json& a = j.at("augment");
            check_keys(a, "augment",
                       {"k", "pool", "crop_pad", "cutout_size", "rotate_deg",
                        "scale_lo", "scale_hi", "jitter_lo", "jitter_hi"});
            if (a.contains("k")) {
                const nlohmann::json& k = a.at("k");
                if (k.is_string()) {
                    if (k.get<std::string>() != "auto")
                        throw ConfigError("augment.k must be an integer or "
                                          "\"auto\"");
                    cfg.augment_k_auto = true;
                } else {
                    cfg.augment_k_auto = false;
                    cfg.augment.k = k.get<int>();
                }
            }
            if (a.contains("pool")) {
                cfg.augment.pool.clear();
                for (const nlohmann::json& op : a.at("pool"))
                    cfg.augment.pool.push_back(
                        aug_op_from_string(op.get<std::string>()));
            }
            get_if(a, "crop_pad", cfg.augment.crop_pad);
            get_if(a, "cutout_size", cfg.augment.cutout_size);
            get_if(a, "rotate_deg", cfg.augment.rotate_deg);
            get_if(a, "scale_lo", cfg.augment.scale_lo);
            get_if(a, "scale_hi", cfg.augment.scale_hi);
            get_if(a, "jitter_lo", cfg.augment.jitter_lo);
            get_if(a, "jitter_hi", cfg.augment.jitter_hi);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field error: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

int resolve_batch_size(const RunConfig& cfg, std::optional<int> ipc,
                       int n_items) {
    if (n_items <= 0) throw ConfigError("cannot batch an empty container");
    if (cfg.batch_size > 0) return cfg.batch_size;
    if (ipc) {
        if (*ipc == 1) return 10;
        if (*ipc == 10) return 100;
        if (*ipc == 50) return 128;
    }
    return std::min(128, n_items);
}

int resolve_augment_k(const RunConfig& cfg, std::optional<int> ipc) {
    if (!cfg.augment_k_auto) return cfg.augment.k;
    return (ipc && *ipc == 1) ? 4 : 2;
}

void apply_set_override(nlohmann::json& doc, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override \"" + assignment +
                          "\" must look like key.path=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw; // unquoted strings stay strings
    }

    nlohmann::json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(
            start, dot == std::string::npos ? std::string::npos : dot - start);
        if (key.empty())
            throw ConfigError("override \"" + assignment +
                              "\" has an empty path segment");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (node->contains(key) && !(*node)[key].is_object())
            throw ConfigError("override \"" + assignment +
                              "\" descends into non-object key \"" + key +
                              "\"");
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
    nlohmann::json doc = read_json_file(path);
    for (const std::string& s : overrides) apply_set_override(doc, s);
    return RunConfig::from_json(doc);
}

} // namespace distileval
