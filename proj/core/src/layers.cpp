#include "distileval/layers.hpp"

#include <cmath>

#include "distileval/errors.hpp"
#include "distileval/matmul.hpp"

namespace distileval {

NormKind norm_kind_from_string(const std::string& s) {
    if (s == "batch") return NormKind::batch;
    if (s == "instance") return NormKind::instance;
    throw ConfigError("unknown norm kind \"" + s +
                      "\" (expected batch or instance)");
}

std::string to_string(NormKind k) {
    return k == NormKind::batch ? "batch" : "instance";
}

namespace {

template <class S>
void require_nchw(const TensorT<S>& x, int channels, const std::string& site) {
    if (x.ndim() != 4)
        throw ShapeError(site + ": expected (batch,C,H,W), got " +
                         shape_str(x.shape));
    if (channels > 0 && x.dim(1) != channels)
        throw ShapeError(site + ": expected " + std::to_string(channels) +
                         " channels, got " + std::to_string(x.dim(1)));
}

int pooled_dim(int in, int kernel, int stride) {
    return (in - kernel) / stride + 1;
}

} // namespace

// ---------------------------------------------------------------- Conv2d

template <class S>
Conv2dT<S>::Conv2dT(std::string name, int in_ch, int out_ch, int kernel,
                    int stride, int pad, bool bias)
    : weight(name + ".weight", {out_ch, in_ch, kernel, kernel}),
      bias(name + ".bias", {out_ch}), name_(std::move(name)), in_ch_(in_ch),
      out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad),
      has_bias_(bias) {
    if (in_ch <= 0 || out_ch <= 0 || kernel <= 0 || stride <= 0 || pad < 0)
        throw ConfigError(name_ + ": invalid convolution geometry");
    weight.init_fan_in = in_ch * kernel * kernel;
    this->bias.init_fan_in = weight.init_fan_in;
}

template <class S>
void Conv2dT<S>::im2col(const S* img, S* cols, int h, int w, int h_out,
                        int w_out) const {
    const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
    int row_idx = 0;
    for (int c = 0; c < in_ch_; ++c)
        for (int kh = 0; kh < kernel_; ++kh)
            for (int kw = 0; kw < kernel_; ++kw, ++row_idx) {
                S* row = cols + static_cast<std::size_t>(row_idx) * hw_out;
                for (int ho = 0; ho < h_out; ++ho) {
                    const int hi = ho * stride_ - pad_ + kh;
                    S* dst = row + static_cast<std::size_t>(ho) * w_out;
                    if (hi < 0 || hi >= h) {
                        for (int wo = 0; wo < w_out; ++wo) dst[wo] = S{};
                        continue;
                    }
                    const S* src = img + (static_cast<std::size_t>(c) * h + hi) * w;
                    for (int wo = 0; wo < w_out; ++wo) {
                        const int wi = wo * stride_ - pad_ + kw;
                        dst[wo] = (wi >= 0 && wi < w) ? src[wi] : S{};
                    }
                }
            }
}

template <class S>
void Conv2dT<S>::col2im(const S* cols, S* img, int h, int w, int h_out,
                        int w_out) const {
    const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
    int row_idx = 0;
    for (int c = 0; c < in_ch_; ++c)
        for (int kh = 0; kh < kernel_; ++kh)
            for (int kw = 0; kw < kernel_; ++kw, ++row_idx) {
                const S* row = cols + static_cast<std::size_t>(row_idx) * hw_out;
                for (int ho = 0; ho < h_out; ++ho) {
                    const int hi = ho * stride_ - pad_ + kh;
                    if (hi < 0 || hi >= h) continue;
                    S* dst = img + (static_cast<std::size_t>(c) * h + hi) * w;
                    const S* src = row + static_cast<std::size_t>(ho) * w_out;
                    for (int wo = 0; wo < w_out; ++wo) {
                        const int wi = wo * stride_ - pad_ + kw;
                        if (wi >= 0 && wi < w) dst[wi] += src[wo];
                    }
                }
            }
}

template <class S>
TensorT<S> Conv2dT<S>::forward(const TensorT<S>& x, bool) {
    require_nchw(x, in_ch_, name_);
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    if (h + 2 * pad_ < kernel_ || w + 2 * pad_ < kernel_)
        throw ShapeError(name_ + ": input " + shape_str(x.shape) +
                         " smaller than kernel " + std::to_string(kernel_));
    const int h_out = (h + 2 * pad_ - kernel_) / stride_ + 1;
    const int w_out = (w + 2 * pad_ - kernel_) / stride_ + 1;
    const int ck = in_ch_ * kernel_ * kernel_;
    const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
    x_ = x;
    cols_.resize(static_cast<std::size_t>(ck) * hw_out);

    TensorT<S> out({b, out_ch_, h_out, w_out});
    const std::size_t img_in = static_cast<std::size_t>(in_ch_) * h * w;
    const std::size_t img_out = static_cast<std::size_t>(out_ch_) * hw_out;
    for (int i = 0; i < b; ++i) {
        im2col(x.ptr() + i * img_in, cols_.data(), h, w, h_out, w_out);
        mm_nn(weight.value.ptr(), cols_.data(), out.ptr() + i * img_out,
              out_ch_, ck, static_cast<int>(hw_out));
        if (has_bias_) {
            S* dst = out.ptr() + i * img_out;
            for (int o = 0; o < out_ch_; ++o) {
                const S bo = bias.value[static_cast<std::size_t>(o)];
                for (std::size_t j = 0; j < hw_out; ++j)
                    dst[static_cast<std::size_t>(o) * hw_out + j] += bo;
            }
        }
    }
    return out;
}

template <class S>
TensorT<S> Conv2dT<S>::backward(const TensorT<S>& grad_out) {
    const int b = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int h_out = grad_out.dim(2), w_out = grad_out.dim(3);
    const int ck = in_ch_ * kernel_ * kernel_;
    const std::size_t hw_out = static_cast<std::size_t>(h_out) * w_out;
    if (grad_out.dim(0) != b || grad_out.dim(1) != out_ch_)
        throw ShapeError(name_ + ": backward shape mismatch");

    TensorT<S> dx(x_.shape);
    const std::size_t img_in = static_cast<std::size_t>(in_ch_) * h * w;
    const std::size_t img_out = static_cast<std::size_t>(out_ch_) * hw_out;
    for (int i = 0; i < b; ++i) {
        const S* dout = grad_out.ptr() + i * img_out;
        im2col(x_.ptr() + i * img_in, cols_.data(), h, w, h_out, w_out);
        mm_nt(dout, cols_.data(), weight.grad.ptr(), out_ch_,
              static_cast<int>(hw_out), ck, /*accumulate=*/true);
        if (has_bias_)
            for (int o = 0; o < out_ch_; ++o) {
                S acc{};
                for (std::size_t j = 0; j < hw_out; ++j)
                    acc += dout[static_cast<std::size_t>(o) * hw_out + j];
                bias.grad[static_cast<std::size_t>(o)] += acc;
            }
        // cols_ is free after the weight gradient; reuse it for dcols.
        mm_tn(weight.value.ptr(), dout, cols_.data(), ck, out_ch_,
              static_cast<int>(hw_out));
        col2im(cols_.data(), dx.ptr() + i * img_in, h, w, h_out, w_out);
    }
    return dx;
}

template <class S>
void Conv2dT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
}

template <class S>
std::string Conv2dT<S>::describe() const {
    return "conv" + std::to_string(kernel_) + "x" + std::to_string(kernel_) +
           " s" + std::to_string(stride_) + " p" + std::to_string(pad_) + " " +
           std::to_string(in_ch_) + "->" + std::to_string(out_ch_);
}

// ---------------------------------------------------------------- Linear

template <class S>
LinearT<S>::LinearT(std::string name, int in_features, int out_features)
    : weight(name + ".weight", {out_features, in_features}),
      bias(name + ".bias", {out_features}), name_(std::move(name)),
      in_(in_features), out_(out_features) {
    if (in_features <= 0 || out_features <= 0)
        throw ConfigError(name_ + ": invalid linear dimensions");
    weight.init_fan_in = in_features;
    bias.init_fan_in = in_features;
}

template <class S>
TensorT<S> LinearT<S>::forward(const TensorT<S>& x, bool) {
    if (x.ndim() != 2 || x.dim(1) != in_)
        throw ShapeError(name_ + ": expected (batch," + std::to_string(in_) +
                         "), got " + shape_str(x.shape));
    const int b = x.dim(0);
    x_ = x;
    TensorT<S> out({b, out_});
    mm_nt(x.ptr(), weight.value.ptr(), out.ptr(), b, in_, out_);
    for (int i = 0; i < b; ++i)
        for (int o = 0; o < out_; ++o)
            out[static_cast<std::size_t>(i) * out_ + o] +=
                bias.value[static_cast<std::size_t>(o)];
    return out;
}

template <class S>
TensorT<S> LinearT<S>::backward(const TensorT<S>& grad_out) {
    const int b = x_.dim(0);
    if (grad_out.shape != std::vector<int>{b, out_})
        throw ShapeError(name_ + ": backward shape mismatch");
    mm_tn(grad_out.ptr(), x_.ptr(), weight.grad.ptr(), out_, b, in_,
          /*accumulate=*/true);
    for (int o = 0; o < out_; ++o) {
        S acc{};
        for (int i = 0; i < b; ++i)
            acc += grad_out[static_cast<std::size_t>(i) * out_ + o];
        bias.grad[static_cast<std::size_t>(o)] += acc;
    }
    TensorT<S> dx({b, in_});
    mm_nn(grad_out.ptr(), weight.value.ptr(), dx.ptr(), b, out_, in_);
    return dx;
}

template <class S>
void LinearT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

template <class S>
std::string LinearT<S>::describe() const {
    return "linear " + std::to_string(in_) + "->" + std::to_string(out_);
}

// ------------------------------------------------------------- BatchNorm

template <class S>
BatchNorm2dT<S>::BatchNorm2dT(std::string name, int channels, double momentum,
                              double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
      running_mean(name + ".running_mean", {channels}, /*train=*/false),
      running_var(name + ".running_var", {channels}, /*train=*/false),
      name_(std::move(name)), channels_(channels), momentum_(momentum),
      eps_(eps) {
    gamma.value.fill(S(1.0));
    running_var.value.fill(S(1.0));
}

template <class S>
TensorT<S> BatchNorm2dT<S>::forward(const TensorT<S>& x, bool training) {
    using std::sqrt;
    require_nchw(x, channels_, name_);
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t chw = static_cast<std::size_t>(channels_) * hw;
    const long long n = static_cast<long long>(b) * h * w;
    trained_forward_ = training;
    xhat_ = TensorT<S>(x.shape);
    inv_std_.assign(static_cast<std::size_t>(channels_), S{});

    TensorT<S> out(x.shape);
    const S inv_n = S(1.0 / static_cast<double>(n));
    for (int c = 0; c < channels_; ++c) {
        S mean, var;
        if (training) {
            S sum{};
            for (int i = 0; i < b; ++i) {
                const S* src = x.ptr() + i * chw + c * hw;
                for (std::size_t j = 0; j < hw; ++j) sum += src[j];
            }
            mean = sum * inv_n;
            S sq{};
            for (int i = 0; i < b; ++i) {
                const S* src = x.ptr() + i * chw + c * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    const S d = src[j] - mean;
                    sq += d * d;
                }
            }
            var = sq * inv_n;
            running_mean.value[static_cast<std::size_t>(c)] =
                S(1.0 - momentum_) *
                    running_mean.value[static_cast<std::size_t>(c)] +
                S(momentum_) * mean;
            running_var.value[static_cast<std::size_t>(c)] =
                S(1.0 - momentum_) *
                    running_var.value[static_cast<std::size_t>(c)] +
                S(momentum_) * var;
        } else {
            mean = running_mean.value[static_cast<std::size_t>(c)];
            var = running_var.value[static_cast<std::size_t>(c)];
        }
        const S istd = S(1.0) / sqrt(var + S(eps_));
        inv_std_[static_cast<std::size_t>(c)] = istd;
        const S g = gamma.value[static_cast<std::size_t>(c)];
        const S sh = beta.value[static_cast<std::size_t>(c)];
        for (int i = 0; i < b; ++i) {
            const S* src = x.ptr() + i * chw + c * hw;
            S* xh = xhat_.ptr() + i * chw + c * hw;
            S* dst = out.ptr() + i * chw + c * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                xh[j] = (src[j] - mean) * istd;
                dst[j] = g * xh[j] + sh;
            }
        }
    }
    return out;
}

template <class S>
TensorT<S> BatchNorm2dT<S>::backward(const TensorT<S>& grad_out) {
    if (grad_out.shape != xhat_.shape)
        throw ShapeError(name_ + ": backward shape mismatch");
    const int b = grad_out.dim(0), h = grad_out.dim(2), w = grad_out.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const std::size_t chw = static_cast<std::size_t>(channels_) * hw;
    const long long n = static_cast<long long>(b) * h * w;
    const S inv_n = S(1.0 / static_cast<double>(n));

    TensorT<S> dx(grad_out.shape);
    for (int c = 0; c < channels_; ++c) {
        S sum_dy{}, sum_dy_xh{};
        for (int i = 0; i < b; ++i) {
            const S* dy = grad_out.ptr() + i * chw + c * hw;
            const S* xh = xhat_.ptr() + i * chw + c * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                sum_dy += dy[j];
                sum_dy_xh += dy[j] * xh[j];
            }
        }
        gamma.grad[static_cast<std::size_t>(c)] += sum_dy_xh;
        beta.grad[static_cast<std::size_t>(c)] += sum_dy;

        const S g = gamma.value[static_cast<std::size_t>(c)];
        const S istd = inv_std_[static_cast<std::size_t>(c)];
        if (trained_forward_) {
            const S k = g * istd * inv_n;
            for (int i = 0; i < b; ++i) {
                const S* dy = grad_out.ptr() + i * chw + c * hw;
                const S* xh = xhat_.ptr() + i * chw + c * hw;
                S* d = dx.ptr() + i * chw + c * hw;
                for (std::size_t j = 0; j < hw; ++j)
                    d[j] = k * (S(static_cast<double>(n)) * dy[j] - sum_dy -
                                xh[j] * sum_dy_xh);
            }
        } else {
            const S k = g * istd;
            for (int i = 0; i < b; ++i) {
                const S* dy = grad_out.ptr() + i * chw + c * hw;
                S* d = dx.ptr() + i * chw + c * hw;
                for (std::size_t j = 0; j < hw; ++j) d[j] = k * dy[j];
            }
        }
    }
    return dx;
}

template <class S>
void BatchNorm2dT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
    out.push_back(&running_mean);
    out.push_back(&running_var);
}

template <class S>
std::string BatchNorm2dT<S>::describe() const {
    return "batchnorm " + std::to_string(channels_);
}

// ---------------------------------------------------------- InstanceNorm

template <class S>
InstanceNorm2dT<S>::InstanceNorm2dT(std::string name, int channels, double eps)
    : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}),
      name_(std::move(name)), channels_(channels), eps_(eps) {
    gamma.value.fill(S(1.0));
}

template <class S>
TensorT<S> InstanceNorm2dT<S>::forward(const TensorT<S>& x, bool) {
    using std::sqrt;
    require_nchw(x, channels_, name_);
    const int b = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    xhat_ = TensorT<S>(x.shape);
    inv_std_.assign(static_cast<std::size_t>(b) * channels_, S{});

    TensorT<S> out(x.shape);
    const S inv_n = S(1.0 / static_cast<double>(hw));
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < channels_; ++c) {
            const std::size_t base =
                (static_cast<std::size_t>(i) * channels_ + c) * hw;
            const S* src = x.ptr() + base;
            S sum{};
            for (std::size_t j = 0; j < hw; ++j) sum += src[j];
            const S mean = sum * inv_n;
            S sq{};
            for (std::size_t j = 0; j < hw; ++j) {
                const S d = src[j] - mean;
                sq += d * d;
            }
            const S istd = S(1.0) / sqrt(sq * inv_n + S(eps_));
            inv_std_[static_cast<std::size_t>(i) * channels_ + c] = istd;
            const S g = gamma.value[static_cast<std::size_t>(c)];
            const S sh = beta.value[static_cast<std::size_t>(c)];
            S* xh = xhat_.ptr() + base;
            S* dst = out.ptr() + base;
            for (std::size_t j = 0; j < hw; ++j) {
                xh[j] = (src[j] - mean) * istd;
                dst[j] = g * xh[j] + sh;
            }
        }
    return out;
}

template <class S>
TensorT<S> InstanceNorm2dT<S>::backward(const TensorT<S>& grad_out) {
    if (grad_out.shape != xhat_.shape)
        throw ShapeError(name_ + ": backward shape mismatch");
    const int b = grad_out.dim(0), h = grad_out.dim(2), w = grad_out.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    const S inv_n = S(1.0 / static_cast<double>(hw));

    TensorT<S> dx(grad_out.shape);
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < channels_; ++c) {
            const std::size_t base =
                (static_cast<std::size_t>(i) * channels_ + c) * hw;
            const S* dy = grad_out.ptr() + base;
            const S* xh = xhat_.ptr() + base;
            S sum_dy{}, sum_dy_xh{};
            for (std::size_t j = 0; j < hw; ++j) {
                sum_dy += dy[j];
                sum_dy_xh += dy[j] * xh[j];
            }
            gamma.grad[static_cast<std::size_t>(c)] += sum_dy_xh;
            beta.grad[static_cast<std::size_t>(c)] += sum_dy;

            const S k = gamma.value[static_cast<std::size_t>(c)] *
                        inv_std_[static_cast<std::size_t>(i) * channels_ + c] *
                        inv_n;
            S* d = dx.ptr() + base;
            for (std::size_t j = 0; j < hw; ++j)
                d[j] = k * (S(static_cast<double>(hw)) * dy[j] - sum_dy -
                            xh[j] * sum_dy_xh);
        }
    return dx;
}

template <class S>
void InstanceNorm2dT<S>::collect_params(std::vector<ParamT<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

template <class S>
std::string InstanceNorm2dT<S>::describe() const {
    return "instancenorm " + std::to_string(channels_);
}

// ------------------------------------------------------------------ ReLU

template <class S>
TensorT<S> ReluT<S>::forward(const TensorT<S>& x, bool) {
    in_shape_ = x.shape;
    active_.assign(x.data.size(), 0);
    TensorT<S> out(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        if (x[i] > S{}) {
            out[i] = x[i];
            active_[i] = 1;
        }
    return out;
}

template <class S>
TensorT<S> ReluT<S>::backward(const TensorT<S>& grad_out) {
    if (grad_out.shape != in_shape_)
        throw ShapeError("relu: backward shape mismatch");
    TensorT<S> dx(in_shape_);
    for (std::size_t i = 0; i < dx.data.size(); ++i)
        if (active_[i]) dx[i] = grad_out[i];
    return dx;
}

// --------------------------------------------------------------- Pooling

template <class S>
MaxPool2dT<S>::MaxPool2dT(int kernel, int stride)
    : kernel_(kernel), stride_(stride) {
    if (kernel <= 0 || stride <= 0)
        throw ConfigError("maxpool: invalid geometry");
}

template <class S>
TensorT<S> MaxPool2dT<S>::forward(const TensorT<S>& x, bool) {
    require_nchw(x, 0, "maxpool");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < kernel_ || w < kernel_)
        throw ShapeError("maxpool: input " + shape_str(x.shape) +
                         " smaller than window " + std::to_string(kernel_));
    const int ho = pooled_dim(h, kernel_, stride_);
    const int wo = pooled_dim(w, kernel_, stride_);
    in_shape_ = x.shape;
    TensorT<S> out({b, c, ho, wo});
    argmax_.assign(out.data.size(), 0);
    std::size_t oid = 0;
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t plane =
                (static_cast<std::size_t>(i) * c + ch) * h * w;
            for (int y = 0; y < ho; ++y)
                for (int xo = 0; xo < wo; ++xo, ++oid) {
                    std::size_t best = plane +
                                       static_cast<std::size_t>(y * stride_) * w +
                                       xo * stride_;
                    S bv = x[best];
                    for (int ky = 0; ky < kernel_; ++ky)
                        for (int kx = 0; kx < kernel_; ++kx) {
                            const std::size_t idx =
                                plane +
                                static_cast<std::size_t>(y * stride_ + ky) * w +
                                (xo * stride_ + kx);
                            if (x[idx] > bv) {
                                bv = x[idx];
                                best = idx;
                            }
                        }
                    out[oid] = bv;
                    argmax_[oid] = best;
                }
        }
    return out;
}

template <class S>
TensorT<S> MaxPool2dT<S>::backward(const TensorT<S>& grad_out) {
    if (grad_out.data.size() != argmax_.size())
        throw ShapeError("maxpool: backward shape mismatch");
    TensorT<S> dx(in_shape_);
    for (std::size_t i = 0; i < grad_out.data.size(); ++i)
        dx[argmax_[i]] += grad_out[i];
    return dx;
}

template <class S>
std::string MaxPool2dT<S>::describe() const {
    return "maxpool" + std::to_string(kernel_) + " s" + std::to_string(stride_);
}

template <class S>
AvgPool2dT<S>::AvgPool2dT(int kernel, int stride)
    : kernel_(kernel), stride_(stride) {
    if (kernel <= 0 || stride <= 0)
        throw ConfigError("avgpool: invalid geometry");
}

template <class S>
TensorT<S> AvgPool2dT<S>::forward(const TensorT<S>& x, bool) {
    require_nchw(x, 0, "avgpool");
    const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h < kernel_ || w < kernel_)
        throw ShapeError("avgpool: input " + shape_str(x.shape) +
                         " smaller than window " + std::to_string(kernel_));
    const int ho = pooled_dim(h, kernel_, stride_);
    const int wo = pooled_dim(w, kernel_, stride_);
    in_shape_ = x.shape;
    TensorT<S> out({b, c, ho, wo});
    const S inv = S(1.0 / (static_cast<double>(kernel_) * kernel_));
    std::size_t oid = 0;
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t plane =
                (static_cast<std::size_t>(i) * c + ch) * h * w;
            for (int y = 0; y < ho; ++y)
                for (int xo = 0; xo < wo; ++xo, ++oid) {
                    S acc{};
                    for (int ky = 0; ky < kernel_; ++ky)
                        for (int kx = 0; kx < kernel_; ++kx)
                            acc += x[plane +
                                     static_cast<std::size_t>(y * stride_ + ky) *
                                         w +
                                     (xo * stride_ + kx)];
                    out[oid] = acc * inv;
                }
        }
    return out;
}

template <class S>
TensorT<S> AvgPool2dT<S>::backward(const TensorT<S>& grad_out) {
    const int b = in_shape_[0], c = in_shape_[1], h = in_shape_[2],
              w = in_shape_[3];
    const int ho = grad_out.dim(2), wo = grad_out.dim(3);
    if (grad_out.dim(0) != b || grad_out.dim(1) != c)
        throw ShapeError("avgpool: backward shape mismatch");
    TensorT<S> dx(in_shape_);
    const S inv = S(1.0 / (static_cast<double>(kernel_) * kernel_));
    std::size_t oid = 0;
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t plane =
                (static_cast<std::size_t>(i) * c + ch) * h * w;
            for (int y = 0; y < ho; ++y)
                for (int xo = 0; xo < wo; ++xo, ++oid) {
                    const S g = grad_out[oid] * inv;
                    for (int ky = 0; ky < kernel_; ++ky)
                        for (int kx = 0; kx < kernel_; ++kx)
                            dx[plane +
                               static_cast<std::size_t>(y * stride_ + ky) * w +
                               (xo * stride_ + kx)] += g;
                }
        }
    return dx;
}

template <class S>
std::string AvgPool2dT<S>::describe() const {
    return "avgpool" + std::to_string(kernel_) + " s" + std::to_string(stride_);
}

template <class S>
TensorT<S> GlobalAvgPoolT<S>::forward(const TensorT<S>& x, bool) {
    require_nchw(x, 0, "global_avgpool");
    const int b = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    in_shape_ = x.shape;
    TensorT<S> out({b, c});
    const S inv = S(1.0 / static_cast<double>(hw));
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const S* src = x.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
            S acc{};
            for (std::size_t j = 0; j < hw; ++j) acc += src[j];
            out[static_cast<std::size_t>(i) * c + ch] = acc * inv;
        }
    return out;
}

template <class S>
TensorT<S> GlobalAvgPoolT<S>::backward(const TensorT<S>& grad_out) {
    const int b = in_shape_[0], c = in_shape_[1];
    if (grad_out.shape != std::vector<int>{b, c})
        throw ShapeError("global_avgpool: backward shape mismatch");
    const std::size_t hw =
        static_cast<std::size_t>(in_shape_[2]) * in_shape_[3];
    TensorT<S> dx(in_shape_);
    const S inv = S(1.0 / static_cast<double>(hw));
    for (int i = 0; i < b; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const S g = grad_out[static_cast<std::size_t>(i) * c + ch] * inv;
            S* dst = dx.ptr() + (static_cast<std::size_t>(i) * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) dst[j] = g;
        }
    return dx;
}

// --------------------------------------------------------------- Flatten

template <class S>
TensorT<S> FlattenT<S>::forward(const TensorT<S>& x, bool) {
    if (x.ndim() < 2)
        throw ShapeError("flatten: expected rank >= 2, got " +
                         shape_str(x.shape));
    in_shape_ = x.shape;
    int features = 1;
    for (int d = 1; d < x.ndim(); ++d) features *= x.dim(d);
    TensorT<S> out({x.dim(0), features});
    out.data = x.data;
    return out;
}

template <class S>
TensorT<S> FlattenT<S>::backward(const TensorT<S>& grad_out) {
    if (grad_out.numel() != TensorT<S>::numel_of(in_shape_))
        throw ShapeError("flatten: backward shape mismatch");
    TensorT<S> dx(in_shape_);
    dx.data = grad_out.data;
    return dx;
}

// ---------------------------------------------------------------- helpers

template <class S>
std::unique_ptr<LayerT<S>> make_norm(NormKind kind, std::string name,
                                     int channels) {
    if (kind == NormKind::batch)
        return std::make_unique<BatchNorm2dT<S>>(std::move(name), channels);
    return std::make_unique<InstanceNorm2dT<S>>(std::move(name), channels);
}

template class Conv2dT<double>;
template class Conv2dT<Dual>;
template class LinearT<double>;
template class LinearT<Dual>;
template class BatchNorm2dT<double>;
template class BatchNorm2dT<Dual>;
template class InstanceNorm2dT<double>;
template class InstanceNorm2dT<Dual>;
template class ReluT<double>;
template class ReluT<Dual>;
template class MaxPool2dT<double>;
template class MaxPool2dT<Dual>;
template class AvgPool2dT<double>;
template class AvgPool2dT<Dual>;
template class GlobalAvgPoolT<double>;
template class GlobalAvgPoolT<Dual>;
template class FlattenT<double>;
template class FlattenT<Dual>;

template std::unique_ptr<LayerT<double>> make_norm<double>(NormKind,
                                                           std::string, int);
template std::unique_ptr<LayerT<Dual>> make_norm<Dual>(NormKind, std::string,
                                                       int);

} // namespace distileval
