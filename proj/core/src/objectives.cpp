#include "distileval/objectives.hpp"

#include <algorithm>
#include <string>

namespace distileval {

void KdConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("kd.alpha must lie in (0,1), got " +
                          std::to_string(alpha));
    if (!(tau > 0.0))
        throw ConfigError("kd.tau must be > 0, got " + std::to_string(tau));
}

TargetBatch TargetBatch::hard_labels(std::vector<int> indices) {
    TargetBatch t;
    t.kind = TargetKind::hard_index;
    t.hard = std::move(indices);
    return t;
}

TargetBatch TargetBatch::soft_labels(Tensor logits, double temperature) {
    if (!(temperature > 0.0))
        throw ConfigError("label temperature must be > 0, got " +
                          std::to_string(temperature));
    if (logits.ndim() != 2)
        throw ShapeError("soft labels must be (batch, classes)");
    TargetBatch t;
    t.kind = TargetKind::soft_logits;
    t.soft_logits = std::move(logits);
    t.label_temperature = temperature;
    return t;
}

int TargetBatch::batch_size() const {
    return kind == TargetKind::hard_index ? static_cast<int>(hard.size())
                                          : soft_logits.dim(0);
}

Tensor TargetBatch::probs(int num_classes) const {
    if (kind == TargetKind::hard_index) {
        const int b = static_cast<int>(hard.size());
        Tensor out({b, num_classes});
        for (int i = 0; i < b; ++i) {
            const int cls = hard[static_cast<std::size_t>(i)];
            if (cls < 0 || cls >= num_classes)
                throw ConfigError("hard target " + std::to_string(cls) +
                                  " outside [0," +
                                  std::to_string(num_classes) + ")");
            out[static_cast<std::size_t>(i) * num_classes + cls] = 1.0;
        }
        return out;
    }
    if (soft_logits.dim(1) != num_classes)
        throw ShapeError("soft labels have " +
                         std::to_string(soft_logits.dim(1)) +
                         " classes, expected " + std::to_string(num_classes));
    Tensor scaled = soft_logits;
    for (double& v : scaled.data) v /= label_temperature;
    Tensor out({soft_logits.dim(0), num_classes});
    softmax_rows(scaled, out);
    return out;
}

std::vector<int> TargetBatch::argmax_classes(int num_classes) const {
    if (kind == TargetKind::hard_index) return hard;
    const int b = soft_logits.dim(0), c = soft_logits.dim(1);
    if (c != num_classes)
        throw ShapeError("soft labels have " + std::to_string(c) +
                         " classes, expected " + std::to_string(num_classes));
    std::vector<int> out(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        const double* row = soft_logits.ptr() + static_cast<std::size_t>(i) * c;
        out[static_cast<std::size_t>(i)] = static_cast<int>(
            std::max_element(row, row + c) - row);
    }
    return out;
}

void softmax_rows(const Tensor& logits, Tensor& out) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax_rows: input must be rank 2");
    if (out.shape != logits.shape) out = Tensor(logits.shape);
    const int b = logits.dim(0), c = logits.dim(1);
    for (int i = 0; i < b; ++i) {
        const double* row = logits.ptr() + static_cast<std::size_t>(i) * c;
        double* orow = out.ptr() + static_cast<std::size_t>(i) * c;
        double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            z += orow[j];
        }
        for (int j = 0; j < c; ++j) orow[j] /= z;
    }
}

double ce_loss(const Tensor& logits, const TargetBatch& target, Tensor* grad) {
    if (logits.ndim() != 2)
        throw ShapeError("ce_loss: logits must be (batch, classes)");
    if (target.batch_size() != logits.dim(0))
        throw ShapeError("ce_loss: batch mismatch, logits " +
                         std::to_string(logits.dim(0)) + " vs targets " +
                         std::to_string(target.batch_size()));
    Tensor tp = target.probs(logits.dim(1));
    return ce_mean(logits, tp, grad);
}

double kd_loss(const Tensor& y_s, const Tensor& y_t, const TargetBatch& target,
               const KdConfig& cfg, Tensor* grad_ys) {
    cfg.validate();
    if (y_s.ndim() != 2)
        throw ShapeError("kd_loss: logits must be (batch, classes)");
    if (y_s.shape != y_t.shape)
        throw ShapeError("kd_loss: student " + shape_str(y_s.shape) +
                         " vs teacher " + shape_str(y_t.shape));
    const int b = y_s.dim(0), c = y_s.dim(1);
    if (target.batch_size() != b)
        throw ShapeError("kd_loss: batch mismatch, logits " +
                         std::to_string(b) + " vs targets " +
                         std::to_string(target.batch_size()));

    Tensor scaled_s({b, c}), scaled_t({b, c});
    for (std::size_t i = 0; i < y_s.data.size(); ++i) {
        scaled_s[i] = y_s[i] / cfg.tau;
        scaled_t[i] = y_t[i] / cfg.tau;
    }
    Tensor p_s({b, c}), p_t({b, c});
    softmax_rows(scaled_s, p_s);
    softmax_rows(scaled_t, p_t);

    double kl_sum = 0.0;
    for (std::size_t i = 0; i < p_s.data.size(); ++i)
        if (p_t[i] > 0.0) kl_sum += p_t[i] * (std::log(p_t[i]) - std::log(p_s[i]));
    const double kl_mean = kl_sum / b;

    Tensor ce_grad;
    const double ce = ce_loss(y_s, target, grad_ys ? &ce_grad : nullptr);

    if (grad_ys) {
        if (grad_ys->shape != y_s.shape) *grad_ys = Tensor(y_s.shape);
        const double kl_scale = cfg.alpha * cfg.tau / b;
        for (std::size_t i = 0; i < grad_ys->data.size(); ++i)
            (*grad_ys)[i] = kl_scale * (p_s[i] - p_t[i]) +
                            (1.0 - cfg.alpha) * ce_grad[i];
    }
    return kl_mean * cfg.alpha * cfg.tau * cfg.tau + ce * (1.0 - cfg.alpha);
}

double accuracy(const Tensor& logits, const TargetBatch& target) {
    if (logits.ndim() != 2)
        throw ShapeError("accuracy: logits must be (batch, classes)");
    const int b = logits.dim(0), c = logits.dim(1);
    if (target.batch_size() != b)
        throw ShapeError("accuracy: batch mismatch");
    if (b == 0) return 0.0;
    std::vector<int> ref = target.argmax_classes(c);
    int hits = 0;
    for (int i = 0; i < b; ++i) {
        const double* row = logits.ptr() + static_cast<std::size_t>(i) * c;
        int pred = static_cast<int>(std::max_element(row, row + c) - row);
        if (pred == ref[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / b;
}

} // namespace distileval
