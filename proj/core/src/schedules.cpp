#include "distileval/schedules.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "distileval/errors.hpp"

namespace distileval {

void KeepRateConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("keep_rate: gamma must lie in (0,1), got " + std::to_string(gamma));
    if (!(p_min > 0.0 && p_min <= 1.0))
        throw ConfigError("keep_rate: p_min must lie in (0,1], got " + std::to_string(p_min));
    if (!(p_final > 0.0 && p_final <= 1.0))
        throw ConfigError("keep_rate: p_final must lie in (0,1], got " + std::to_string(p_final));
    if (T <= 0) throw ConfigError("keep_rate: decay period T must be positive");
    if (W < 0) throw ConfigError("keep_rate: warmup period W must be non-negative");
    if (!(W < S && S <= N))
        throw ConfigError("keep_rate: need W < S <= N, got W=" + std::to_string(W) +
                          " S=" + std::to_string(S) + " N=" + std::to_string(N));
}

double keep_rate(const KeepRateConfig& cfg, int epoch) {
    cfg.validate();
    if (epoch < 0 || epoch >= cfg.N)
        throw std::out_of_range("keep_rate: epoch " + std::to_string(epoch) +
                                " outside [0," + std::to_string(cfg.N) + ")");
    if (epoch < cfg.W) return 1.0;
    if (epoch < cfg.S) {
        // ceil((i - W) / T) in exact integer arithmetic
        const int steps = (epoch - cfg.W + cfg.T - 1) / cfg.T;
        return std::max(cfg.p_min, 1.0 - cfg.gamma * static_cast<double>(steps));
    }
    return cfg.p_final;
}

void LrConfig::validate() const {
    if (!(lr_max > 0.0))
        throw ConfigError("lr: lr_max must be positive, got " + std::to_string(lr_max));
    if (!(lambda > 0.0 && lambda <= 1.0))
        throw ConfigError("lr: lambda must lie in (0,1], got " + std::to_string(lambda));
    if (T_warm < 0 || T_warm >= T_max)
        throw ConfigError("lr: need 0 <= T_warm < T_max, got T_warm=" + std::to_string(T_warm) +
                          " T_max=" + std::to_string(T_max));
    if (T <= 0) throw ConfigError("lr: reset period T must be positive");
    if (S <= 0) throw ConfigError("lr: stabilization epoch S must be positive");
}

double learning_rate(const LrConfig& cfg, int epoch) {
    cfg.validate();
    if (epoch < 0) throw std::out_of_range("learning_rate: epoch must be non-negative");

    // Period length: T before the stabilization epoch, S afterwards.
    const int t = epoch < cfg.S ? cfg.T : cfg.S;
    const int r = epoch % t;
    const int completed = std::min(epoch, cfg.S) / cfg.T;
    const double lam_i = std::pow(cfg.lambda, static_cast<double>(completed));

    if (r <= cfg.T_warm) {
        if (cfg.T_warm == 0) return 0.0;  // degenerate warmup: period starts at 0
        return lam_i * (static_cast<double>(r) / cfg.T_warm) * cfg.lr_max;
    }
    const double phase = M_PI * static_cast<double>(r - cfg.T_warm) /
                         static_cast<double>(cfg.T_max - cfg.T_warm);
    return 0.5 * lam_i * (1.0 + std::cos(phase)) * cfg.lr_max;
}

double cosine_baseline_lr(double lr_max, int total_epochs, int epoch) {
    if (!(lr_max > 0.0)) throw ConfigError("cosine_baseline_lr: lr_max must be positive");
    if (total_epochs <= 0) throw ConfigError("cosine_baseline_lr: total_epochs must be positive");
    if (epoch < 0) throw std::out_of_range("cosine_baseline_lr: epoch must be non-negative");
    const double progress = std::min(1.0, static_cast<double>(epoch) / total_epochs);
    return 0.5 * lr_max * (1.0 + std::cos(M_PI * progress));
}

} // namespace distileval
