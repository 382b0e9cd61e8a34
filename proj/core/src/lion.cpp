#include "distileval/lion.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "distileval/errors.hpp"

namespace distileval {

namespace {

// Betas reach us as decimal literals, so the intended interpolation
// complement is the decimal one: for beta2 = 0.98 that is 0.02 exactly,
// while 1 - beta2 lands five ulps away because beta2 itself was rounded.
// Re-rounding through 15 significant digits recovers the decimal
// complement for any beta written with that many digits or fewer.
double decimal_complement(double beta) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.15g", 1.0 - beta);
    return std::strtod(buf, nullptr);
}

void check_unit(double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0))
        throw ConfigError(std::string(name) + " must lie in [0,1), got " +
                          std::to_string(v));
}

// Validates the slot against stored state and returns its index. On the
// first step the state vectors grow zero-initialized buffers instead.
std::size_t bind_slot(const ParamSlot& slot, std::size_t i,
                      std::vector<std::string>& names,
                      std::vector<Tensor>& bufs) {
    if (!slot.value || !slot.grad)
        throw ConfigError("optimizer: null parameter or gradient for \"" +
                          slot.name + "\"");
    if (slot.value->shape != slot.grad->shape)
        throw ShapeError("optimizer: \"" + slot.name + "\" value " +
                         shape_str(slot.value->shape) + " vs grad " +
                         shape_str(slot.grad->shape));
    if (i == names.size()) {
        names.push_back(slot.name);
        bufs.emplace_back(slot.value->shape);
        return i;
    }
    if (i > names.size() || names[i] != slot.name ||
        bufs[i].shape != slot.value->shape)
        throw ShapeError("optimizer: parameter list changed at \"" +
                         slot.name + "\"; state no longer matches");
    return i;
}

void check_finite(const Tensor& grad, const std::string& name) {
    for (double g : grad.data)
        if (!std::isfinite(g))
            throw NumericError("non-finite gradient in parameter \"" + name +
                               "\"");
}

void check_count(std::size_t got, const std::vector<std::string>& names) {
    if (!names.empty() && got != names.size())
        throw ShapeError("optimizer: expected " +
                         std::to_string(names.size()) + " parameters, got " +
                         std::to_string(got));
}

} // namespace

void LionConfig::validate() const {
    check_unit(beta1, "lion.beta1");
    check_unit(beta2, "lion.beta2");
    if (!(weight_decay >= 0.0))
        throw ConfigError("lion.weight_decay must be >= 0, got " +
                          std::to_string(weight_decay));
}

void AdamwConfig::validate() const {
    check_unit(beta1, "adamw.beta1");
    check_unit(beta2, "adamw.beta2");
    if (!(eps > 0.0))
        throw ConfigError("adamw.eps must be > 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("adamw.weight_decay must be >= 0, got " +
                          std::to_string(weight_decay));
}

Lion::Lion(LionConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    om1_ = decimal_complement(cfg_.beta1);
    om2_ = decimal_complement(cfg_.beta2);
}

void Lion::step(const std::vector<ParamSlot>& params, double lr) {
    if (!std::isfinite(lr))
        throw NumericError("lion: non-finite learning rate");
    check_count(params.size(), names_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamSlot& slot = params[i];
        bind_slot(slot, i, names_, m_);
        check_finite(*slot.grad, slot.name);
        Tensor& m = m_[i];
        Tensor& theta = *slot.value;
        const Tensor& g = *slot.grad;
        for (std::size_t j = 0; j < theta.data.size(); ++j) {
            const double c = cfg_.beta1 * m[j] + om1_ * g[j];
            const double s = c > 0.0 ? 1.0 : (c < 0.0 ? -1.0 : 0.0);
            theta[j] -= lr * (s + cfg_.weight_decay * theta[j]);
            m[j] = cfg_.beta2 * m[j] + om2_ * g[j];
        }
    }
}

AdamW::AdamW(AdamwConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    om1_ = decimal_complement(cfg_.beta1);
    om2_ = decimal_complement(cfg_.beta2);
}

void AdamW::step(const std::vector<ParamSlot>& params, double lr) {
    if (!std::isfinite(lr))
        throw NumericError("adamw: non-finite learning rate");
    check_count(params.size(), names_);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const ParamSlot& slot = params[i];
        bind_slot(slot, i, names_, m_);
        if (i == v_.size()) v_.emplace_back(slot.value->shape);
        check_finite(*slot.grad, slot.name);
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        Tensor& theta = *slot.value;
        const Tensor& g = *slot.grad;
        for (std::size_t j = 0; j < theta.data.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + om1_ * g[j];
            v[j] = cfg_.beta2 * v[j] + om2_ * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            theta[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                              cfg_.weight_decay * theta[j]);
        }
    }
}

} // namespace distileval
