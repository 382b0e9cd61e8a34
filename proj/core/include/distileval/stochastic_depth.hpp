#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "distileval/layers.hpp"
#include "distileval/rng.hpp"

namespace distileval {

enum class ShortcutKind { identity, original_projection, improved_projection };
enum class BlockPathKind { residual, virtual_shortcut, plain };

struct BlockKind {
    BlockPathKind kind = BlockPathKind::plain;
    ShortcutKind shortcut = ShortcutKind::identity;
};

struct DropPathState {
    double p = 1.0;        // keep rate
    bool training = false; // inference always keeps the path, unscaled
};

/// Shared per-forward context. The model sets p, mode, seed and step before
/// each pass; blocks derive their mask streams from it and count draws so
/// runs can report how much path dropping actually happened.
struct DropPathRuntime {
    double p = 1.0;
    bool training = false;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    long long mask_draws = 0;
    long long masks_dropped = 0;
};

/// Scales a whole feature tensor by m/p with one Bernoulli draw m. In
/// inference mode the input passes through untouched and rng is not
/// consumed.
template <class S>
TensorT<S> drop_path(const TensorT<S>& x, const DropPathState& state,
                     RngStream& rng) {
    if (!(state.p > 0.0 && state.p <= 1.0))
        throw ConfigError("drop_path: keep rate must lie in (0,1], got " +
                          std::to_string(state.p));
    if (!state.training) return x;
    const bool m = rng.bernoulli(state.p);
    TensorT<S> out(x.shape);
    if (m) {
        const S scale = S(1.0 / state.p);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            out[i] = scale * x[i];
    }
    return out;
}

/// Downsampling shortcut: either the original 1x1 stride-s convolution or
/// the improved variant, s x s max pooling (stride s) followed by a 1x1
/// stride-1 convolution; both end in the configured normalization.
template <class S>
class ProjectionShortcutT : public LayerT<S> {
public:
    ProjectionShortcutT(std::string name, int in_ch, int out_ch, int stride,
                        NormKind norm, bool improved);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;

    bool improved() const { return improved_; }
    int stride() const { return stride_; }
    const Conv2dT<S>& conv() const { return conv_; }

private:
    std::string name_;
    bool improved_;
    int stride_;
    std::unique_ptr<MaxPool2dT<S>> pool_; // improved variant, stride > 1 only
    Conv2dT<S> conv_;
    std::unique_ptr<LayerT<S>> norm_;
};

/// Base for the two stochastic-depth block shapes. Holds the runtime hook
/// and the per-block mask bookkeeping shared by both.
template <class S>
class DropPathBlockT : public LayerT<S> {
public:
    DropPathBlockT(std::string name, int block_index, bool droppath_enabled)
        : name_(std::move(name)), block_index_(block_index),
          droppath_(droppath_enabled) {}

    void bind_runtime(DropPathRuntime* rt) { rt_ = rt; }
    int block_index() const { return block_index_; }
    bool droppath_enabled() const { return droppath_; }
    const std::string& name() const { return name_; }
    virtual BlockKind block_kind() const = 0;

protected:
    /// Draws this block's mask for the current step, or keep=true when
    /// dropping is disabled for this pass.
    bool draw_keep_mask(double& p_out);

    std::string name_;
    int block_index_;
    bool droppath_;
    DropPathRuntime* rt_ = nullptr;
};

/// Residual block: shortcut(x) + (m/p) * main(x) during training, the plain
/// sum at inference. A dropped mask skips the main path entirely, forward
/// and backward.
template <class S>
class ResidualBlockT : public DropPathBlockT<S> {
public:
    ResidualBlockT(std::string name, int block_index,
                   std::unique_ptr<LayerT<S>> main_path,
                   std::unique_ptr<LayerT<S>> shortcut, ShortcutKind kind,
                   bool droppath_enabled);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;
    BlockKind block_kind() const override;

    LayerT<S>* main_path() { return main_.get(); }
    LayerT<S>* shortcut() { return shortcut_.get(); } // null means identity

private:
    std::unique_ptr<LayerT<S>> main_;
    std::unique_ptr<LayerT<S>> shortcut_;
    ShortcutKind shortcut_kind_;
    bool last_training_ = false;
    bool last_kept_ = true;
    double last_scale_ = 1.0;
};

/// Paired-layer block for single-branch networks. Training keeps the main
/// path with probability p and scales it by 1/p, otherwise routes through
/// the virtual shortcut; inference always runs the main path alone.
template <class S>
class VirtualBlockT : public DropPathBlockT<S> {
public:
    VirtualBlockT(std::string name, int block_index,
                  std::unique_ptr<LayerT<S>> main_path,
                  std::unique_ptr<LayerT<S>> virtual_shortcut,
                  ShortcutKind kind, bool droppath_enabled);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;
    BlockKind block_kind() const override;

    LayerT<S>* main_path() { return main_.get(); }
    LayerT<S>* virtual_shortcut() { return shortcut_.get(); }

private:
    std::unique_ptr<LayerT<S>> main_;
    std::unique_ptr<LayerT<S>> shortcut_; // null means identity
    ShortcutKind shortcut_kind_;
    bool last_training_ = false;
    bool last_kept_ = true;
    double last_scale_ = 1.0;
};

template <class S>
std::unique_ptr<ProjectionShortcutT<S>>
make_projection(std::string name, int in_ch, int out_ch, int stride,
                NormKind norm, bool improved);

using ResidualBlock = ResidualBlockT<double>;
using VirtualBlock = VirtualBlockT<double>;
using ProjectionShortcut = ProjectionShortcutT<double>;

} // namespace distileval
