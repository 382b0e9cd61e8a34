#pragma once

#include <memory>
#include <string>
#include <vector>

#include "distileval/tensor.hpp"

namespace distileval {

struct LionConfig {
    double beta1 = 0.95;        // interpolation factor for the update direction
    double beta2 = 0.98;        // momentum retention factor
    double weight_decay = 5e-3; // decoupled decay, applied to every parameter

    void validate() const;
};

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-3;

    void validate() const;
};

/// View of one trainable parameter for the optimizer step. The optimizer
/// never owns parameters; it keeps per-parameter state keyed by position.
struct ParamSlot {
    std::string name;
    Tensor* value = nullptr;
    const Tensor* grad = nullptr;
};

class Optimizer {
public:
    virtual ~Optimizer() = default;

    /// Applies one update in place. The parameter list must be the same
    /// (names and shapes, in order) on every call.
    virtual void step(const std::vector<ParamSlot>& params, double lr) = 0;
};

/// Sign-based update with decoupled weight decay. Per parameter:
///   c = beta1*m + (1-beta1)*g
///   theta <- theta - lr*(sign(c) + weight_decay*theta)
///   m <- beta2*m + (1-beta2)*g
/// sign maps negatives to -1, positives to +1 and zero to 0, so a zero
/// gradient with zero momentum is an exact fixed point when decay is off.
class Lion : public Optimizer {
public:
    explicit Lion(LionConfig cfg = {});

    void step(const std::vector<ParamSlot>& params, double lr) override;

    /// Momentum buffers in parameter order; empty before the first step.
    std::vector<Tensor>& momentum() { return m_; }
    const std::vector<Tensor>& momentum() const { return m_; }

private:
    LionConfig cfg_;
    double om1_ = 0.0, om2_ = 0.0; // decimal complements of the betas
    std::vector<Tensor> m_;
    std::vector<std::string> names_;
};

/// Decoupled-weight-decay adaptive baseline used by the optimizer ablation.
class AdamW : public Optimizer {
public:
    explicit AdamW(AdamwConfig cfg = {});

    void step(const std::vector<ParamSlot>& params, double lr) override;

private:
    AdamwConfig cfg_;
    double om1_ = 0.0, om2_ = 0.0; // decimal complements of the betas
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
    std::vector<std::string> names_;
};

} // namespace distileval
