#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "distileval/layers.hpp"
#include "distileval/stochastic_depth.hpp"

namespace distileval {

/// Declarative description of a network. Serialized into run configs and
/// checkpoint headers so a saved model can be rebuilt without the code that
/// created it.
struct ArchSpec {
    std::string family = "cnn3"; // cnn3|resnet8|resnet18|resnet50|vgg11|alexnet
    std::string width_profile = "frepo"; // cnn3 only: frepo|mtt|custom
    std::vector<int> custom_widths;      // cnn3 with width_profile=custom
    NormKind norm = NormKind::batch;
    ShortcutKind shortcut = ShortcutKind::improved_projection;
    bool droppath_enabled = false;
    std::vector<int> input_shape = {3, 32, 32}; // (channels, H, W)
    int num_classes = 10;
    int base_width = 0; // resnet8 stem width; 0 picks the default 16

    void validate() const;
    nlohmann::json to_json() const;
    static ArchSpec from_json(const nlohmann::json& j);

    /// The three hidden channel counts for cnn3 under this spec.
    std::vector<int> cnn3_widths() const;
};

/// A built network: an ordered layer stack plus the bookkeeping that lets
/// stochastic-depth blocks share one keep rate, seed and step counter per
/// forward pass.
template <class S>
class ModelT {
public:
    explicit ModelT(ArchSpec spec) : spec_(std::move(spec)) {}

    ModelT(const ModelT&) = delete;
    ModelT& operator=(const ModelT&) = delete;

    /// Runs the network. keep_rate, seed and step feed every
    /// stochastic-depth block; they are ignored in inference mode.
    TensorT<S> forward(const TensorT<S>& batch, bool training,
                       double keep_rate = 1.0, std::uint64_t seed = 0,
                       std::uint64_t step = 0);

    /// Backpropagates from logits gradient; parameter gradients accumulate.
    TensorT<S> backward(const TensorT<S>& grad_logits);

    void zero_grad();

    const std::vector<ParamT<S>*>& all_params() const { return params_; }
    std::vector<ParamT<S>*> trainable_params() const;
    const std::vector<DropPathBlockT<S>*>& blocks() const { return blocks_; }

    long long trainable_count() const;
    const ArchSpec& spec() const { return spec_; }
    std::string describe() const { return net_.describe(); }

    long long mask_draws() const { return rt_.mask_draws; }
    long long masks_dropped() const { return rt_.masks_dropped; }
    void reset_mask_counters() {
        rt_.mask_draws = 0;
        rt_.masks_dropped = 0;
    }

    SequentialT<S>& net() { return net_; }

    /// Called once by build_model after layers are in place: indexes
    /// parameters and stochastic-depth blocks, wires the shared runtime.
    void finalize();

private:
    ArchSpec spec_;
    SequentialT<S> net_;
    std::vector<ParamT<S>*> params_;
    std::vector<DropPathBlockT<S>*> blocks_;
    DropPathRuntime rt_;
};

using Model = ModelT<double>;

/// Builds and initializes a network. Convolution and linear parameters draw
/// from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) on streams derived from the seed
/// and the parameter's position, so the same seed always yields the same
/// weights; normalization starts at scale 1, shift 0.
template <class S>
std::unique_ptr<ModelT<S>> build_model(const ArchSpec& spec,
                                       std::uint64_t seed);

/// Total scalar count over the given parameter views.
template <class S>
long long flat_param_size(const std::vector<ParamT<S>*>& params);

/// Flattens parameter values (their primal part) into out, in order.
template <class S>
void flatten_params(const std::vector<ParamT<S>*>& params,
                    std::vector<double>& out);

/// Writes flat values back into the parameters; tangent parts reset to 0.
template <class S>
void unflatten_params(const std::vector<double>& flat,
                      const std::vector<ParamT<S>*>& params);

/// Flattens accumulated gradients (primal part) into out.
template <class S>
void flatten_grads(const std::vector<ParamT<S>*>& params,
                   std::vector<double>& out);

} // namespace distileval
