#include "distileval/arch_zoo.hpp"

#include <cmath>
#include <set>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"

namespace distileval {

// ------------------------------------------------------------- ArchSpec

namespace {

std::string shortcut_to_string(ShortcutKind k) {
    switch (k) {
    case ShortcutKind::identity: return "identity";
    case ShortcutKind::original_projection: return "original_projection";
    case ShortcutKind::improved_projection: return "improved_projection";
    }
    return "improved_projection";
}

ShortcutKind shortcut_from_string(const std::string& s) {
    if (s == "identity") return ShortcutKind::identity;
    if (s == "original_projection") return ShortcutKind::original_projection;
    if (s == "improved_projection") return ShortcutKind::improved_projection;
    throw ConfigError("unknown shortcut kind \"" + s + "\"");
}

bool known_family(const std::string& f) {
    return f == "cnn3" || f == "resnet8" || f == "resnet18" ||
           f == "resnet50" || f == "vgg11" || f == "alexnet";
}

} // namespace

void ArchSpec::validate() const {
    if (!known_family(family))
        throw ConfigError("unknown architecture family \"" + family + "\"");
    if (family == "cnn3") {
        if (droppath_enabled)
            throw ConfigError(
                "cnn3 does not support path dropping; it has no blocks deep "
                "enough to skip");
        if (width_profile != "frepo" && width_profile != "mtt" &&
            width_profile != "custom")
            throw ConfigError("unknown width profile \"" + width_profile +
                              "\" (expected frepo, mtt or custom)");
        if (width_profile == "custom") {
            if (custom_widths.size() != 3)
                throw ConfigError("cnn3 custom widths need exactly 3 entries");
            for (int w : custom_widths)
                if (w <= 0)
                    throw ConfigError("cnn3 widths must be positive");
        }
    }
    if (input_shape.size() != 3)
        throw ConfigError("input_shape must be (channels, H, W)");
    for (int d : input_shape)
        if (d <= 0) throw ConfigError("input_shape entries must be positive");
    if (num_classes <= 0)
        throw ConfigError("num_classes must be positive, got " +
                          std::to_string(num_classes));
    if (base_width < 0)
        throw ConfigError("base_width must be >= 0");
}

std::vector<int> ArchSpec::cnn3_widths() const {
    if (width_profile == "frepo") return {128, 256, 512};
    if (width_profile == "mtt") return {128, 128, 128};
    return custom_widths;
}

nlohmann::json ArchSpec::to_json() const {
    nlohmann::json j;
    j["family"] = family;
    j["width_profile"] = width_profile;
    j["custom_widths"] = custom_widths;
    j["norm"] = to_string(norm);
    j["shortcut"] = shortcut_to_string(shortcut);
    j["droppath"] = droppath_enabled;
    j["input_shape"] = input_shape;
    j["num_classes"] = num_classes;
    j["base_width"] = base_width;
    return j;
}

ArchSpec ArchSpec::from_json(const nlohmann::json& j) {
    ArchSpec s;
    try {
        s.family = j.value("family", s.family);
        s.width_profile = j.value("width_profile", s.width_profile);
        s.custom_widths =
            j.value("custom_widths", s.custom_widths);
        if (j.contains("norm"))
            s.norm = norm_kind_from_string(j.at("norm").get<std::string>());
        if (j.contains("shortcut"))
            s.shortcut =
                shortcut_from_string(j.at("shortcut").get<std::string>());
        s.droppath_enabled = j.value("droppath", s.droppath_enabled);
        s.input_shape = j.value("input_shape", s.input_shape);
        s.num_classes = j.value("num_classes", s.num_classes);
        s.base_width = j.value("base_width", s.base_width);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("arch spec: ") + e.what());
    }
    s.validate();
    return s;
}

// ------------------------------------------------------------- builders

namespace {

struct SpatialDims {
    int h, w;
    // conv with padding k/2 and stride 1 preserves dims; pools shrink.
    // An input smaller than the window has no valid position at all, and
    // integer division must not round that back up to one.
    void pool(int k, int s) {
        h = h < k ? 0 : (h - k) / s + 1;
        w = w < k ? 0 : (w - k) / s + 1;
    }
    bool valid() const { return h > 0 && w > 0; }
};

template <class S>
void push_cnr(SequentialT<S>& seq, const std::string& name, int in, int out,
              int k, int stride, int pad, NormKind norm, bool relu = true) {
    seq.add(std::make_unique<Conv2dT<S>>(name + ".conv", in, out, k, stride,
                                         pad));
    seq.add(make_norm<S>(norm, name + ".norm", out));
    if (relu) seq.add(std::make_unique<ReluT<S>>());
}

template <class S>
std::unique_ptr<SequentialT<S>> basic_main(const std::string& name, int in,
                                           int out, int stride,
                                           NormKind norm) {
    auto seq = std::make_unique<SequentialT<S>>();
    push_cnr(*seq, name + ".c1", in, out, 3, stride, 1, norm);
    push_cnr(*seq, name + ".c2", out, out, 3, 1, 1, norm, /*relu=*/false);
    return seq;
}

template <class S>
std::unique_ptr<SequentialT<S>> bottleneck_main(const std::string& name,
                                                int in, int planes, int stride,
                                                NormKind norm) {
    auto seq = std::make_unique<SequentialT<S>>();
    push_cnr(*seq, name + ".c1", in, planes, 1, 1, 0, norm);
    push_cnr(*seq, name + ".c2", planes, planes, 3, stride, 1, norm);
    push_cnr(*seq, name + ".c3", planes, 4 * planes, 1, 1, 0, norm,
             /*relu=*/false);
    return seq;
}

template <class S>
void add_residual(SequentialT<S>& net, int& block_idx, const std::string& name,
                  std::unique_ptr<SequentialT<S>> main, int in, int out,
                  int stride, const ArchSpec& spec) {
    std::unique_ptr<LayerT<S>> sc;
    ShortcutKind kind = ShortcutKind::identity;
    if (stride != 1 || in != out) {
        kind = spec.shortcut;
        sc = make_projection<S>(name + ".shortcut", in, out, stride, spec.norm,
                                kind == ShortcutKind::improved_projection);
    }
    net.add(std::make_unique<ResidualBlockT<S>>(name, block_idx++,
                                                std::move(main), std::move(sc),
                                                kind, spec.droppath_enabled));
    net.add(std::make_unique<ReluT<S>>()); // activation after the merge
}

template <class S>
void build_cnn3(SequentialT<S>& net, const ArchSpec& spec) {
    const std::vector<int> widths = spec.cnn3_widths();
    SpatialDims d{spec.input_shape[1], spec.input_shape[2]};
    int in = spec.input_shape[0];
    for (int i = 0; i < 3; ++i) {
        const std::string nm = "stage" + std::to_string(i + 1);
        push_cnr(net, nm, in, widths[static_cast<std::size_t>(i)], 3, 1, 1,
                 spec.norm);
        net.add(std::make_unique<AvgPool2dT<S>>(2, 2));
        d.pool(2, 2);
        in = widths[static_cast<std::size_t>(i)];
        if (!d.valid())
            throw ConfigError("cnn3: input too small for three pooling steps");
    }
    net.add(std::make_unique<FlattenT<S>>());
    net.add(std::make_unique<LinearT<S>>("head", in * d.h * d.w,
                                         spec.num_classes));
}

template <class S>
void build_resnet(SequentialT<S>& net, const ArchSpec& spec) {
    int stem_out;
    std::vector<int> blocks, widths, strides;
    bool bottleneck = false;
    if (spec.family == "resnet8") {
        const int w = spec.base_width > 0 ? spec.base_width : 16;
        stem_out = w;
        blocks = {1, 1, 1};
        widths = {w, 2 * w, 4 * w};
        strides = {1, 2, 2};
    } else if (spec.family == "resnet18") {
        stem_out = 64;
        blocks = {2, 2, 2, 2};
        widths = {64, 128, 256, 512};
        strides = {1, 2, 2, 2};
    } else { // resnet50
        stem_out = 64;
        blocks = {3, 4, 6, 3};
        widths = {64, 128, 256, 512}; // planes; block output is 4x planes
        strides = {1, 2, 2, 2};
        bottleneck = true;
    }
    push_cnr(net, "stem", spec.input_shape[0], stem_out, 3, 1, 1, spec.norm);

    int in = stem_out;
    int block_idx = 0;
    for (std::size_t st = 0; st < blocks.size(); ++st) {
        const int planes = widths[st];
        const int out = bottleneck ? 4 * planes : planes;
        for (int b = 0; b < blocks[st]; ++b) {
            const int stride = b == 0 ? strides[st] : 1;
            const std::string nm = "stage" + std::to_string(st + 1) +
                                   ".block" + std::to_string(b + 1);
            auto main = bottleneck
                            ? bottleneck_main<S>(nm, in, planes, stride,
                                                 spec.norm)
                            : basic_main<S>(nm, in, out, stride, spec.norm);
            add_residual(net, block_idx, nm, std::move(main), in, out, stride,
                         spec);
            in = out;
        }
    }
    net.add(std::make_unique<GlobalAvgPoolT<S>>());
    net.add(std::make_unique<LinearT<S>>("head", in, spec.num_classes));
}

/// One conv(+norm+relu) stage description for the single-branch families.
struct ConvStage {
    int out, kernel, pad;
    bool pool_after; // 2x2 stride-2 max pool following this stage
};

template <class S>
void build_single_branch(SequentialT<S>& net, const ArchSpec& spec) {
    std::vector<ConvStage> stages;
    if (spec.family == "vgg11") {
        stages = {{64, 3, 1, true},   {128, 3, 1, true},  {256, 3, 1, false},
                  {256, 3, 1, true},  {512, 3, 1, false}, {512, 3, 1, true},
                  {512, 3, 1, false}, {512, 3, 1, true}};
    } else { // alexnet
        stages = {{96, 5, 2, true},
                  {256, 5, 2, true},
                  {384, 3, 1, false},
                  {384, 3, 1, false},
                  {256, 3, 1, true}};
    }

    SpatialDims d{spec.input_shape[1], spec.input_shape[2]};
    int in = spec.input_shape[0];
    int block_idx = 0;
    std::size_t i = 0;
    while (i < stages.size()) {
        const bool paired = spec.droppath_enabled && i + 1 < stages.size();
        if (!paired) {
            const std::string nm = "stage" + std::to_string(i + 1);
            push_cnr(net, nm, in, stages[i].out, stages[i].kernel, 1,
                     stages[i].pad, spec.norm);
            if (stages[i].pool_after) {
                net.add(std::make_unique<MaxPool2dT<S>>(2, 2));
                d.pool(2, 2);
            }
            in = stages[i].out;
            ++i;
            continue;
        }
        // Pair stages i and i+1 into one block. A pool between the two
        // stays inside the main path, so the virtual shortcut downsamples
        // by the same factor.
        const ConvStage& a = stages[i];
        const ConvStage& b = stages[i + 1];
        const std::string nm = "pair" + std::to_string(block_idx + 1);
        auto main = std::make_unique<SequentialT<S>>();
        push_cnr(*main, nm + ".c1", in, a.out, a.kernel, 1, a.pad, spec.norm);
        int shortcut_stride = 1;
        if (a.pool_after) {
            main->add(std::make_unique<MaxPool2dT<S>>(2, 2));
            d.pool(2, 2);
            shortcut_stride = 2;
        }
        push_cnr(*main, nm + ".c2", a.out, b.out, b.kernel, 1, b.pad,
                 spec.norm);

        std::unique_ptr<LayerT<S>> vsc;
        ShortcutKind kind = ShortcutKind::identity;
        if (shortcut_stride != 1 || in != b.out) {
            kind = ShortcutKind::improved_projection;
            vsc = make_projection<S>(nm + ".vsc", in, b.out, shortcut_stride,
                                     spec.norm, /*improved=*/true);
        }
        net.add(std::make_unique<VirtualBlockT<S>>(nm, block_idx++,
                                                   std::move(main),
                                                   std::move(vsc), kind,
                                                   /*droppath=*/true));
        if (b.pool_after) {
            net.add(std::make_unique<MaxPool2dT<S>>(2, 2));
            d.pool(2, 2);
        }
        in = b.out;
        i += 2;
    }
    if (!d.valid())
        throw ConfigError(spec.family + ": input too small for the pooling "
                                        "stack");
    net.add(std::make_unique<FlattenT<S>>());
    net.add(std::make_unique<LinearT<S>>("head", in * d.h * d.w,
                                         spec.num_classes));
}

} // namespace

// ---------------------------------------------------------------- ModelT

template <class S>
TensorT<S> ModelT<S>::forward(const TensorT<S>& batch, bool training,
                              double keep_rate, std::uint64_t seed,
                              std::uint64_t step) {
    if (batch.ndim() != 4 || batch.dim(1) != spec_.input_shape[0] ||
        batch.dim(2) != spec_.input_shape[1] ||
        batch.dim(3) != spec_.input_shape[2])
        throw ShapeError("model: input " + shape_str(batch.shape) +
                         " does not match (batch," +
                         std::to_string(spec_.input_shape[0]) + "," +
                         std::to_string(spec_.input_shape[1]) + "," +
                         std::to_string(spec_.input_shape[2]) + ")");
    rt_.p = keep_rate;
    rt_.training = training;
    rt_.seed = seed;
    rt_.step = step;
    return net_.forward(batch, training);
}

template <class S>
TensorT<S> ModelT<S>::backward(const TensorT<S>& grad_logits) {
    return net_.backward(grad_logits);
}

template <class S>
void ModelT<S>::zero_grad() {
    for (ParamT<S>* p : params_) p->zero_grad();
}

template <class S>
std::vector<ParamT<S>*> ModelT<S>::trainable_params() const {
    std::vector<ParamT<S>*> out;
    for (ParamT<S>* p : params_)
        if (p->trainable) out.push_back(p);
    return out;
}

template <class S>
long long ModelT<S>::trainable_count() const {
    long long n = 0;
    for (const ParamT<S>* p : params_)
        if (p->trainable) n += p->value.numel();
    return n;
}

template <class S>
void ModelT<S>::finalize() {
    params_.clear();
    net_.collect_params(params_);
    std::set<std::string> seen;
    for (const ParamT<S>* p : params_)
        if (!seen.insert(p->name).second)
            throw ConfigError("duplicate parameter name \"" + p->name + "\"");
    blocks_.clear();
    for (auto& layer : net_.layers())
        if (auto* blk = dynamic_cast<DropPathBlockT<S>*>(layer.get())) {
            blk->bind_runtime(&rt_);
            blocks_.push_back(blk);
        }
}

// ----------------------------------------------------------- build_model

template <class S>
std::unique_ptr<ModelT<S>> build_model(const ArchSpec& spec,
                                       std::uint64_t seed) {
    spec.validate();
    auto model = std::make_unique<ModelT<S>>(spec);
    SequentialT<S>& net = model->net();
    if (spec.family == "cnn3")
        build_cnn3(net, spec);
    else if (spec.family == "resnet8" || spec.family == "resnet18" ||
             spec.family == "resnet50")
        build_resnet(net, spec);
    else
        build_single_branch(net, spec);
    model->finalize();

    std::uint64_t counter = 0;
    for (ParamT<S>* p : model->all_params()) {
        if (p->init_fan_in > 0) {
            RngStream rng = derive_stream(seed, StreamKind::init, counter);
            const double bound =
                1.0 / std::sqrt(static_cast<double>(p->init_fan_in));
            for (auto& v : p->value.data) v = S(rng.uniform(-bound, bound));
        }
        ++counter;
    }
    return model;
}

// ------------------------------------------------------- flat param views

template <class S>
long long flat_param_size(const std::vector<ParamT<S>*>& params) {
    long long n = 0;
    for (const ParamT<S>* p : params) n += p->value.numel();
    return n;
}

template <class S>
void flatten_params(const std::vector<ParamT<S>*>& params,
                    std::vector<double>& out) {
    out.clear();
    out.reserve(static_cast<std::size_t>(flat_param_size(params)));
    for (const ParamT<S>* p : params)
        for (const S& v : p->value.data) out.push_back(primal(v));
}

template <class S>
void unflatten_params(const std::vector<double>& flat,
                      const std::vector<ParamT<S>*>& params) {
    if (static_cast<long long>(flat.size()) != flat_param_size(params))
        throw ShapeError("unflatten_params: size mismatch, " +
                         std::to_string(flat.size()) + " vs " +
                         std::to_string(flat_param_size(params)));
    std::size_t i = 0;
    for (ParamT<S>* p : params)
        for (S& v : p->value.data) v = S(flat[i++]);
}

template <class S>
void flatten_grads(const std::vector<ParamT<S>*>& params,
                   std::vector<double>& out) {
    out.clear();
    out.reserve(static_cast<std::size_t>(flat_param_size(params)));
    for (const ParamT<S>* p : params)
        for (const S& v : p->grad.data) out.push_back(primal(v));
}

template class ModelT<double>;
template class ModelT<Dual>;
template std::unique_ptr<ModelT<double>> build_model<double>(const ArchSpec&,
                                                             std::uint64_t);
template std::unique_ptr<ModelT<Dual>> build_model<Dual>(const ArchSpec&,
                                                         std::uint64_t);
template long long flat_param_size<double>(const std::vector<Param*>&);
template long long flat_param_size<Dual>(const std::vector<ParamT<Dual>*>&);
template void flatten_params<double>(const std::vector<Param*>&,
                                     std::vector<double>&);
template void flatten_params<Dual>(const std::vector<ParamT<Dual>*>&,
                                   std::vector<double>&);
template void unflatten_params<double>(const std::vector<double>&,
                                       const std::vector<Param*>&);
template void unflatten_params<Dual>(const std::vector<double>&,
                                     const std::vector<ParamT<Dual>*>&);
template void flatten_grads<double>(const std::vector<Param*>&,
                                    std::vector<double>&);
template void flatten_grads<Dual>(const std::vector<ParamT<Dual>*>&,
                                  std::vector<double>&);

} // namespace distileval
