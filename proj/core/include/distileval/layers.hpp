#pragma once

#include <memory>
#include <string>
#include <vector>

#include "distileval/dual.hpp"
#include "distileval/tensor.hpp"

namespace distileval {

enum class NormKind { batch, instance };

NormKind norm_kind_from_string(const std::string& s);
std::string to_string(NormKind k);

/// Named parameter with its gradient accumulator. Buffers such as running
/// normalization statistics use trainable=false; they persist in
/// checkpoints but never reach the optimizer.
template <class S>
struct ParamT {
    std::string name;
    TensorT<S> value;
    TensorT<S> grad;
    bool trainable = true;
    int init_fan_in = 0; // > 0 requests uniform init with bound 1/sqrt(fan_in)

    ParamT() = default;
    ParamT(std::string n, std::vector<int> shape, bool train = true)
        : name(std::move(n)), value(shape), grad(std::move(shape)),
          trainable(train) {}

    void zero_grad() { grad.zero(); }
};

/// Base class for everything with a forward/backward pair. Layers own their
/// parameters and cache whatever the backward pass needs; backward must be
/// called at most once per forward, in reverse order.
template <class S>
class LayerT {
public:
    virtual ~LayerT() = default;
    virtual TensorT<S> forward(const TensorT<S>& x, bool training) = 0;
    virtual TensorT<S> backward(const TensorT<S>& grad_out) = 0;
    virtual void collect_params(std::vector<ParamT<S>*>& out) { (void)out; }
    virtual std::string describe() const = 0;
};

template <class S>
class Conv2dT : public LayerT<S> {
public:
    Conv2dT(std::string name, int in_ch, int out_ch, int kernel, int stride,
            int pad, bool bias = true);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;

    int kernel() const { return kernel_; }
    int stride() const { return stride_; }
    int padding() const { return pad_; }
    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }

    ParamT<S> weight; // (out_ch, in_ch, k, k)
    ParamT<S> bias;   // (out_ch), absent when has_bias_ is false

private:
    void im2col(const S* img, S* cols, int h, int w, int h_out,
                int w_out) const;
    void col2im(const S* cols, S* img, int h, int w, int h_out,
                int w_out) const;

    std::string name_;
    int in_ch_, out_ch_, kernel_, stride_, pad_;
    bool has_bias_;
    TensorT<S> x_;     // cached input
    std::vector<S> cols_; // im2col scratch, one image at a time
};

template <class S>
class LinearT : public LayerT<S> {
public:
    LinearT(std::string name, int in_features, int out_features);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;

    int in_features() const { return in_; }
    int out_features() const { return out_; }

    ParamT<S> weight; // (out, in)
    ParamT<S> bias;   // (out)

private:
    std::string name_;
    int in_, out_;
    TensorT<S> x_;
};

/// Channel normalization over the batch and spatial axes. Training uses
/// batch statistics and folds them into the running buffers with the given
/// momentum; inference normalizes with the running buffers. Variance is the
/// biased (divide by N) estimate in both the normalization and the running
/// update.
template <class S>
class BatchNorm2dT : public LayerT<S> {
public:
    BatchNorm2dT(std::string name, int channels, double momentum = 0.1,
                 double eps = 1e-5);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;

    ParamT<S> gamma;        // scale, init 1
    ParamT<S> beta;         // shift, init 0
    ParamT<S> running_mean; // buffer
    ParamT<S> running_var;  // buffer, init 1

private:
    std::string name_;
    int channels_;
    double momentum_, eps_;
    bool trained_forward_ = false;
    TensorT<S> xhat_;
    std::vector<S> inv_std_;
};

/// Per-sample, per-channel normalization; no running state, so training and
/// inference apply the identical transform.
template <class S>
class InstanceNorm2dT : public LayerT<S> {
public:
    InstanceNorm2dT(std::string name, int channels, double eps = 1e-5);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    void collect_params(std::vector<ParamT<S>*>& out) override;
    std::string describe() const override;

    ParamT<S> gamma;
    ParamT<S> beta;

private:
    std::string name_;
    int channels_;
    double eps_;
    TensorT<S> xhat_;
    std::vector<S> inv_std_; // one per (sample, channel)
};

template <class S>
class ReluT : public LayerT<S> {
public:
    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    std::string describe() const override { return "relu"; }

private:
    std::vector<char> active_;
    std::vector<int> in_shape_;
};

template <class S>
class MaxPool2dT : public LayerT<S> {
public:
    MaxPool2dT(int kernel, int stride);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    std::string describe() const override;

private:
    int kernel_, stride_;
    std::vector<int> in_shape_;
    std::vector<std::size_t> argmax_; // input offset per output element
};

template <class S>
class AvgPool2dT : public LayerT<S> {
public:
    AvgPool2dT(int kernel, int stride);

    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    std::string describe() const override;

private:
    int kernel_, stride_;
    std::vector<int> in_shape_;
};

/// Mean over the spatial axes: (B,C,H,W) -> (B,C).
template <class S>
class GlobalAvgPoolT : public LayerT<S> {
public:
    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    std::string describe() const override { return "global_avgpool"; }

private:
    std::vector<int> in_shape_;
};

template <class S>
class FlattenT : public LayerT<S> {
public:
    TensorT<S> forward(const TensorT<S>& x, bool training) override;
    TensorT<S> backward(const TensorT<S>& grad_out) override;
    std::string describe() const override { return "flatten"; }

private:
    std::vector<int> in_shape_;
};

template <class S>
class SequentialT : public LayerT<S> {
public:
    SequentialT() = default;

    void add(std::unique_ptr<LayerT<S>> layer) {
        layers_.push_back(std::move(layer));
    }

    TensorT<S> forward(const TensorT<S>& x, bool training) override {
        TensorT<S> cur = x;
        for (auto& l : layers_) cur = l->forward(cur, training);
        return cur;
    }
    TensorT<S> backward(const TensorT<S>& grad_out) override {
        TensorT<S> cur = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
            cur = (*it)->backward(cur);
        return cur;
    }
    void collect_params(std::vector<ParamT<S>*>& out) override {
        for (auto& l : layers_) l->collect_params(out);
    }
    std::string describe() const override {
        std::string s;
        for (auto& l : layers_) {
            if (!s.empty()) s += " -> ";
            s += l->describe();
        }
        return s.empty() ? "(empty)" : s;
    }

    bool empty() const { return layers_.empty(); }
    std::vector<std::unique_ptr<LayerT<S>>>& layers() { return layers_; }
    const std::vector<std::unique_ptr<LayerT<S>>>& layers() const {
        return layers_;
    }

private:
    std::vector<std::unique_ptr<LayerT<S>>> layers_;
};

template <class S>
std::unique_ptr<LayerT<S>> make_norm(NormKind kind, std::string name,
                                     int channels);

using Param = ParamT<double>;
using Layer = LayerT<double>;
using Sequential = SequentialT<double>;

} // namespace distileval
