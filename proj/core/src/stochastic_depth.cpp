#include "distileval/stochastic_depth.hpp"

#include "distileval/errors.hpp"

namespace distileval {

// ---------------------------------------------------- projection shortcut

template <class S>
ProjectionShortcutT<S>::ProjectionShortcutT(std::string name, int in_ch,
                                            int out_ch, int stride,
                                            NormKind norm, bool improved)
    : name_(name), improved_(improved), stride_(stride),
      conv_(name + ".conv", in_ch, out_ch, /*kernel=*/1,
            improved ? 1 : stride, /*pad=*/0),
      norm_(make_norm<S>(norm, name + ".norm", out_ch)) {
    if (stride <= 0)
        throw ConfigError(name_ + ": projection stride must be positive");
    if (improved && stride > 1)
        pool_ = std::make_unique<MaxPool2dT<S>>(stride, stride);
}

template <class S>
TensorT<S> ProjectionShortcutT<S>::forward(const TensorT<S>& x,
                                           bool training) {
    TensorT<S> cur = x;
    if (pool_) {
        if (x.dim(2) % stride_ != 0 || x.dim(3) % stride_ != 0)
            throw ShapeError(name_ + ": spatial dims " + shape_str(x.shape) +
                             " not divisible by stride " +
                             std::to_string(stride_));
        cur = pool_->forward(cur, training);
    }
    cur = conv_.forward(cur, training);
    return norm_->forward(cur, training);
}

template <class S>
TensorT<S> ProjectionShortcutT<S>::backward(const TensorT<S>& grad_out) {
    TensorT<S> cur = norm_->backward(grad_out);
    cur = conv_.backward(cur);
    if (pool_) cur = pool_->backward(cur);
    return cur;
}

template <class S>
void ProjectionShortcutT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    conv_.collect_params(out);
    norm_->collect_params(out);
}

template <class S>
std::string ProjectionShortcutT<S>::describe() const {
    return std::string(improved_ ? "improved_proj" : "original_proj") + " s" +
           std::to_string(stride_) + " " + std::to_string(conv_.in_channels()) +
           "->" + std::to_string(conv_.out_channels());
}

// -------------------------------------------------------------- mask draw

template <class S>
bool DropPathBlockT<S>::draw_keep_mask(double& p_out) {
    p_out = 1.0;
    if (!droppath_ || !rt_ || !rt_->training) return true;
    if (!(rt_->p > 0.0 && rt_->p <= 1.0))
        throw ConfigError(name_ + ": keep rate must lie in (0,1], got " +
                          std::to_string(rt_->p));
    p_out = rt_->p;
    RngStream rng =
        derive_stream(rt_->seed, StreamKind::drop_path,
                      static_cast<std::uint64_t>(block_index_), rt_->step);
    ++rt_->mask_draws;
    const bool keep = rng.bernoulli(rt_->p);
    if (!keep) ++rt_->masks_dropped;
    return keep;
}

// --------------------------------------------------------- residual block

template <class S>
ResidualBlockT<S>::ResidualBlockT(std::string name, int block_index,
                                  std::unique_ptr<LayerT<S>> main_path,
                                  std::unique_ptr<LayerT<S>> shortcut,
                                  ShortcutKind kind, bool droppath_enabled)
    : DropPathBlockT<S>(std::move(name), block_index, droppath_enabled),
      main_(std::move(main_path)), shortcut_(std::move(shortcut)),
      shortcut_kind_(kind) {
    if (!main_) throw ConfigError(this->name_ + ": missing main path");
}

template <class S>
TensorT<S> ResidualBlockT<S>::forward(const TensorT<S>& x, bool training) {
    TensorT<S> s = shortcut_ ? shortcut_->forward(x, training) : x;
    double p = 1.0;
    const bool keep = this->draw_keep_mask(p);
    last_training_ = training;
    last_kept_ = keep;
    last_scale_ = keep ? 1.0 / p : 0.0;
    if (!keep) return s; // main path pruned this step, forward and backward

    TensorT<S> mo = main_->forward(x, training);
    if (mo.shape != s.shape)
        throw ShapeError(this->name_ + ": main path " + shape_str(mo.shape) +
                         " vs shortcut " + shape_str(s.shape));
    const S sc = S(last_scale_);
    TensorT<S> out(s.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out[i] = s[i] + sc * mo[i];
    return out;
}

template <class S>
TensorT<S> ResidualBlockT<S>::backward(const TensorT<S>& grad_out) {
    TensorT<S> dx = shortcut_ ? shortcut_->backward(grad_out) : grad_out;
    if (last_kept_) {
        TensorT<S> scaled(grad_out.shape);
        const S sc = S(last_scale_);
        for (std::size_t i = 0; i < scaled.data.size(); ++i)
            scaled[i] = sc * grad_out[i];
        TensorT<S> dmain = main_->backward(scaled);
        if (dmain.shape != dx.shape)
            throw ShapeError(this->name_ + ": backward shape mismatch");
        for (std::size_t i = 0; i < dx.data.size(); ++i) dx[i] += dmain[i];
    }
    return dx;
}

template <class S>
void ResidualBlockT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    main_->collect_params(out);
    if (shortcut_) shortcut_->collect_params(out);
}

template <class S>
std::string ResidualBlockT<S>::describe() const {
    std::string s = "residual[" + main_->describe();
    if (shortcut_) s += " | " + shortcut_->describe();
    return s + "]";
}

template <class S>
BlockKind ResidualBlockT<S>::block_kind() const {
    return {BlockPathKind::residual, shortcut_kind_};
}

// ---------------------------------------------------------- virtual block

template <class S>
VirtualBlockT<S>::VirtualBlockT(std::string name, int block_index,
                                std::unique_ptr<LayerT<S>> main_path,
                                std::unique_ptr<LayerT<S>> virtual_shortcut,
                                ShortcutKind kind, bool droppath_enabled)
    : DropPathBlockT<S>(std::move(name), block_index, droppath_enabled),
      main_(std::move(main_path)), shortcut_(std::move(virtual_shortcut)),
      shortcut_kind_(kind) {
    if (!main_) throw ConfigError(this->name_ + ": missing main path");
}

template <class S>
TensorT<S> VirtualBlockT<S>::forward(const TensorT<S>& x, bool training) {
    double p = 1.0;
    const bool keep = this->draw_keep_mask(p);
    last_training_ = training;
    last_kept_ = keep;
    last_scale_ = keep ? 1.0 / p : 0.0;
    if (keep) {
        TensorT<S> out = main_->forward(x, training);
        if (last_scale_ != 1.0) {
            const S sc = S(last_scale_);
            for (std::size_t i = 0; i < out.data.size(); ++i) out[i] *= sc;
        }
        return out;
    }
    // The paired layers are skipped entirely; the virtual shortcut stands in.
    return shortcut_ ? shortcut_->forward(x, training) : x;
}

template <class S>
TensorT<S> VirtualBlockT<S>::backward(const TensorT<S>& grad_out) {
    if (last_kept_) {
        if (last_scale_ == 1.0) return main_->backward(grad_out);
        TensorT<S> scaled(grad_out.shape);
        const S sc = S(last_scale_);
        for (std::size_t i = 0; i < scaled.data.size(); ++i)
            scaled[i] = sc * grad_out[i];
        return main_->backward(scaled);
    }
    return shortcut_ ? shortcut_->backward(grad_out) : grad_out;
}

template <class S>
void VirtualBlockT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    main_->collect_params(out);
    if (shortcut_) shortcut_->collect_params(out);
}

template <class S>
std::string VirtualBlockT<S>::describe() const {
    std::string s = "virtual[" + main_->describe();
    if (shortcut_) s += " | " + shortcut_->describe();
    return s + "]";
}

template <class S>
BlockKind VirtualBlockT<S>::block_kind() const {
    return {BlockPathKind::virtual_shortcut, shortcut_kind_};
}

template <class S>
std::unique_ptr<ProjectionShortcutT<S>>
make_projection(std::string name, int in_ch, int out_ch, int stride,
                NormKind norm, bool improved) {
    return std::make_unique<ProjectionShortcutT<S>>(std::move(name), in_ch,
                                                    out_ch, stride, norm,
                                                    improved);
}

template class ProjectionShortcutT<double>;
template class ProjectionShortcutT<Dual>;
template class DropPathBlockT<double>;
template class DropPathBlockT<Dual>;
template class ResidualBlockT<double>;
template class ResidualBlockT<Dual>;
template class VirtualBlockT<double>;
template class VirtualBlockT<Dual>;

template std::unique_ptr<ProjectionShortcutT<double>>
make_projection<double>(std::string, int, int, int, NormKind, bool);
template std::unique_ptr<ProjectionShortcutT<Dual>>
make_projection<Dual>(std::string, int, int, int, NormKind, bool);

} // namespace distileval
