#pragma once

#include <cmath>
#include <vector>

#include "distileval/errors.hpp"
#include "distileval/tensor.hpp"

namespace distileval {

struct KdConfig {
    double alpha = 0.5; // blend weight between the KL and CE terms
    double tau = 1.5;   // distillation temperature

    void validate() const;
};

enum class TargetKind { hard_index, soft_logits };

/// Classification targets for one batch. Hard targets are class indices;
/// soft targets are stored as raw label logits and become a distribution
/// via softmax(logits / label_temperature).
struct TargetBatch {
    TargetKind kind = TargetKind::hard_index;
    std::vector<int> hard;          // (batch) class indices
    Tensor soft_logits;             // (batch, classes) raw label logits
    double label_temperature = 1.0; // soft targets only

    static TargetBatch hard_labels(std::vector<int> indices);
    static TargetBatch soft_labels(Tensor logits, double temperature);

    int batch_size() const;

    /// Target distribution as (batch, classes) probability rows.
    Tensor probs(int num_classes) const;

    /// Reference class per item: the index itself for hard targets, the
    /// argmax of the label logits for soft ones.
    std::vector<int> argmax_classes(int num_classes) const;
};

/// Mean cross-entropy of softmax(logits) against explicit probability rows.
/// Templated so the same code runs under dual-number scalars for exact
/// Hessian-vector products; grad, when given, receives dL/dlogits.
template <class S>
S ce_mean(const TensorT<S>& logits, const Tensor& target_probs,
          TensorT<S>* grad = nullptr) {
    using std::exp;
    using std::log;
    if (logits.ndim() != 2)
        throw ShapeError("ce_mean: logits must be (batch, classes)");
    if (logits.shape != target_probs.shape)
        throw ShapeError("ce_mean: logits " + shape_str(logits.shape) +
                         " vs targets " + shape_str(target_probs.shape));
    const int b = logits.dim(0), c = logits.dim(1);
    if (b == 0) throw ShapeError("ce_mean: empty batch");
    if (grad && grad->shape != logits.shape) *grad = TensorT<S>(logits.shape);
    std::vector<S> p(static_cast<std::size_t>(c));
    S total{};
    const S inv_b = S(1.0) / S(static_cast<double>(b));
    for (int i = 0; i < b; ++i) {
        const S* row = logits.ptr() + static_cast<std::size_t>(i) * c;
        const double* t = target_probs.ptr() + static_cast<std::size_t>(i) * c;
        S mx = row[0];
        for (int j = 1; j < c; ++j)
            if (row[j] > mx) mx = row[j];
        S z{};
        for (int j = 0; j < c; ++j) {
            p[static_cast<std::size_t>(j)] = exp(row[j] - mx);
            z += p[static_cast<std::size_t>(j)];
        }
        S logz = log(z);
        for (int j = 0; j < c; ++j) {
            S logp = row[j] - mx - logz;
            total -= S(t[j]) * logp;
            if (grad) {
                S pj = p[static_cast<std::size_t>(j)] / z;
                (*grad)[static_cast<std::size_t>(i) * c + j] =
                    (pj - S(t[j])) * inv_b;
            }
        }
    }
    return total * inv_b;
}

/// Cross-entropy against the batch targets, mean over the batch.
double ce_loss(const Tensor& logits, const TargetBatch& target,
               Tensor* grad = nullptr);

/// Distillation objective:
///   KL(softmax(y_t/tau) || softmax(y_s/tau)) * alpha * tau^2
///     + CE(y_s, target) * (1 - alpha),
/// mean over the batch. Teacher logits are treated as constants; the
/// gradient, when requested, is with respect to the student logits only.
double kd_loss(const Tensor& y_s, const Tensor& y_t, const TargetBatch& target,
               const KdConfig& cfg, Tensor* grad_ys = nullptr);

/// Fraction of rows whose logits argmax equals the target class.
double accuracy(const Tensor& logits, const TargetBatch& target);

/// Row-wise softmax into out (same shape as logits).
void softmax_rows(const Tensor& logits, Tensor& out);

} // namespace distileval
