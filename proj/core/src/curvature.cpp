#include "distileval/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"

namespace distileval {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

void check_finite(const std::vector<double>& v, const char* site) {
    for (double x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string(site) + ": non-finite result");
}

// Removes the components of v along each basis vector (assumed unit norm).
void deflate(std::vector<double>& v,
             const std::vector<std::vector<double>>& basis) {
    for (const auto& b : basis) {
        const double c = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
    }
}

} // namespace

void LossFunction::hvp_exact(const std::vector<double>&,
                             const std::vector<double>&,
                             std::vector<double>&) {
    throw ConfigError("this loss does not provide an exact Hessian-vector "
                      "product");
}

HvpMode hvp_mode_from_string(const std::string& s) {
    if (s == "auto") return HvpMode::auto_select;
    if (s == "exact") return HvpMode::exact;
    if (s == "fd") return HvpMode::fd;
    throw ConfigError("unknown hvp mode \"" + s +
                      "\" (expected auto, exact or fd)");
}

std::vector<double> hvp(LossFunction& loss, const std::vector<double>& theta,
                        const std::vector<double>& v, HvpMode mode) {
    if (static_cast<int>(theta.size()) != loss.dim() ||
        v.size() != theta.size())
        throw ShapeError("hvp: theta/v size mismatch with loss dimension");
    const double vn = norm(v);
    if (vn < 1e-12)
        throw ConfigError("hvp: |v| below 1e-12; direction is degenerate");

    const bool use_exact = mode == HvpMode::exact ||
                           (mode == HvpMode::auto_select &&
                            loss.has_exact_hvp());
    std::vector<double> out(v.size());
    if (use_exact) {
        if (!loss.has_exact_hvp())
            throw ConfigError("hvp: exact mode requested but the loss only "
                              "supports finite differences");
        loss.hvp_exact(theta, v, out);
        check_finite(out, "hvp");
        return out;
    }

    double tmax = 0.0;
    for (double t : theta) tmax = std::max(tmax, std::fabs(t));
    const double h = 1e-3 * tmax + 1e-6;

    std::vector<double> shifted(theta.size());
    std::vector<double> gp(theta.size()), gm(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i)
        shifted[i] = theta[i] + h * v[i] / vn;
    loss.gradient(shifted, gp);
    for (std::size_t i = 0; i < theta.size(); ++i)
        shifted[i] = theta[i] - h * v[i] / vn;
    loss.gradient(shifted, gm);

    const double scale = vn / (2.0 * h);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = (gp[i] - gm[i]) * scale;
    check_finite(out, "hvp");
    return out;
}

SpectrumResult top_eigenpairs(LossFunction& loss,
                              const std::vector<double>& theta,
                              const SpectrumOptions& opt) {
    if (opt.k < 1) throw ConfigError("top_eigenpairs: k must be >= 1");
    if (opt.iters < 1) throw ConfigError("top_eigenpairs: iters must be >= 1");
    const int n = loss.dim();
    if (static_cast<int>(theta.size()) != n)
        throw ShapeError("top_eigenpairs: theta size mismatch");
    const int k = std::min(opt.k, n);

    SpectrumResult res;
    for (int e = 0; e < k; ++e) {
        RngStream rng = derive_stream(opt.seed, StreamKind::spectrum,
                                      static_cast<std::uint64_t>(e));
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = rng.normal();
        deflate(v, res.eigenvectors);
        double vn = norm(v);
        if (vn < 1e-12) {
            // Degenerate draw inside the found subspace; perturb and retry.
            for (double& x : v) x = rng.normal();
            deflate(v, res.eigenvectors);
            vn = norm(v);
        }
        for (double& x : v) x /= vn;

        double lambda = 0.0, lambda_prev = 0.0;
        bool have_prev = false, converged = false;
        int it = 0;
        for (; it < opt.iters; ++it) {
            std::vector<double> w = hvp(loss, theta, v, opt.mode);
            deflate(w, res.eigenvectors);
            lambda = dot(v, w); // Rayleigh quotient carries the sign
            const double wn = norm(w);
            if (wn < 1e-14) {
                // v already lies in the (deflated) null space.
                lambda = 0.0;
                converged = true;
                ++it;
                break;
            }
            for (std::size_t i = 0; i < w.size(); ++i) w[i] /= wn;
            v = std::move(w);
            if (have_prev && std::fabs(lambda - lambda_prev) < opt.tol) {
                converged = true;
                ++it;
                break;
            }
            lambda_prev = lambda;
            have_prev = true;
        }

        std::vector<double> hv = hvp(loss, theta, v, opt.mode);
        deflate(hv, res.eigenvectors);
        lambda = dot(v, hv);
        double resid = 0.0;
        for (std::size_t i = 0; i < hv.size(); ++i) {
            const double d = hv[i] - lambda * v[i];
            resid += d * d;
        }
        res.eigenvalues.push_back(lambda);
        res.eigenvectors.push_back(std::move(v));
        res.residuals.push_back(std::sqrt(resid));
        res.converged.push_back(converged ? 1 : 0);
        res.iterations.push_back(it);
    }

    // Report in descending magnitude; deflation order already tends this
    // way but close eigenvalues can land out of order.
    std::vector<std::size_t> idx(res.eigenvalues.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(res.eigenvalues[a]) > std::fabs(res.eigenvalues[b]);
    });
    SpectrumResult sorted;
    for (std::size_t i : idx) {
        sorted.eigenvalues.push_back(res.eigenvalues[i]);
        sorted.eigenvectors.push_back(std::move(res.eigenvectors[i]));
        sorted.residuals.push_back(res.residuals[i]);
        sorted.converged.push_back(res.converged[i]);
        sorted.iterations.push_back(res.iterations[i]);
    }
    return sorted;
}

LandscapeGrid landscape_slice(LossFunction& loss,
                              const std::vector<double>& theta,
                              const std::vector<double>& v1,
                              const std::vector<double>& v2, double radius,
                              int grid_n) {
    if (grid_n < 1 || grid_n % 2 == 0)
        throw ConfigError("landscape_slice: grid_n must be odd and >= 1");
    if (!(radius >= 0.0))
        throw ConfigError("landscape_slice: radius must be >= 0");
    const std::size_t n = theta.size();
    if (v1.size() != n || v2.size() != n ||
        static_cast<int>(n) != loss.dim())
        throw ShapeError("landscape_slice: direction size mismatch");
    for (const auto* v : {&v1, &v2})
        if (std::fabs(norm(*v) - 1.0) > 1e-6)
            throw ConfigError("landscape_slice: directions must be unit norm");

    LandscapeGrid grid;
    grid.alphas1.resize(static_cast<std::size_t>(grid_n));
    for (int i = 0; i < grid_n; ++i)
        grid.alphas1[static_cast<std::size_t>(i)] =
            grid_n == 1 ? 0.0
                        : -radius + 2.0 * radius * i / (grid_n - 1);
    grid.alphas1[static_cast<std::size_t>(grid_n / 2)] = 0.0;
    grid.alphas2 = grid.alphas1;

    std::vector<double> shifted(n);
    grid.losses.assign(static_cast<std::size_t>(grid_n),
                       std::vector<double>(static_cast<std::size_t>(grid_n)));
    for (int i = 0; i < grid_n; ++i)
        for (int j = 0; j < grid_n; ++j) {
            const double a1 = grid.alphas1[static_cast<std::size_t>(i)];
            const double a2 = grid.alphas2[static_cast<std::size_t>(j)];
            for (std::size_t d = 0; d < n; ++d)
                shifted[d] = theta[d] + a1 * v1[d] + a2 * v2[d];
            grid.losses[static_cast<std::size_t>(i)]
                       [static_cast<std::size_t>(j)] = loss.value(shifted);
        }
    return grid;
}

// ------------------------------------------------------------ ModelCeLoss

ModelCeLoss::ModelCeLoss(const Model& source, Tensor images,
                         TargetBatch targets)
    : images_(std::move(images)) {
    if (images_.ndim() != 4)
        throw ShapeError("model loss: images must be (batch,C,H,W)");
    if (targets.batch_size() != images_.dim(0))
        throw ShapeError("model loss: image/target batch mismatch");
    target_probs_ = targets.probs(source.spec().num_classes);

    m_ = build_model<double>(source.spec(), 0);
    md_ = build_model<Dual>(source.spec(), 0);
    const auto& src = source.all_params();
    const auto& dst = m_->all_params();
    const auto& dstd = md_->all_params();
    if (src.size() != dst.size() || src.size() != dstd.size())
        throw ConfigError("model loss: parameter set mismatch after rebuild");
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i]->value = src[i]->value;
        for (std::size_t j = 0; j < src[i]->value.data.size(); ++j)
            dstd[i]->value[j] = Dual{src[i]->value[j], 0.0};
    }
    tp_ = m_->trainable_params();
    tpd_ = md_->trainable_params();
    dim_ = static_cast<int>(flat_param_size(tp_));
    flatten_params(tp_, theta0_);
}

double ModelCeLoss::value(const std::vector<double>& theta) {
    unflatten_params(theta, tp_);
    Tensor logits = m_->forward(images_, /*training=*/false);
    return ce_mean(logits, target_probs_);
}

void ModelCeLoss::gradient(const std::vector<double>& theta,
                           std::vector<double>& grad) {
    unflatten_params(theta, tp_);
    m_->zero_grad();
    Tensor logits = m_->forward(images_, /*training=*/false);
    Tensor dlogits;
    ce_mean(logits, target_probs_, &dlogits);
    m_->backward(dlogits);
    flatten_grads(tp_, grad);
}

void ModelCeLoss::hvp_exact(const std::vector<double>& theta,
                            const std::vector<double>& v,
                            std::vector<double>& out) {
    if (theta.size() != v.size() ||
        static_cast<int>(theta.size()) != dim_)
        throw ShapeError("model loss: theta/v size mismatch");
    std::size_t pos = 0;
    for (ParamT<Dual>* p : tpd_) {
        for (Dual& x : p->value.data) {
            x = Dual{theta[pos], v[pos]};
            ++pos;
        }
        p->zero_grad();
    }
    TensorT<Dual> batch(images_.shape);
    for (std::size_t i = 0; i < images_.data.size(); ++i)
        batch[i] = Dual{images_[i], 0.0};
    TensorT<Dual> logits = md_->forward(batch, /*training=*/false);
    TensorT<Dual> dlogits;
    ce_mean(logits, target_probs_, &dlogits);
    md_->backward(dlogits);
    // The tangent of the gradient along direction v is exactly H*v.
    out.resize(theta.size());
    pos = 0;
    for (ParamT<Dual>* p : tpd_)
        for (const Dual& g : p->grad.data) out[pos++] = g.d;
}

} // namespace distileval
