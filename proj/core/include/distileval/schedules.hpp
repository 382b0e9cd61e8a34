#pragma once

namespace distileval {

/// Parameters of the three-phase keep-rate schedule used by stochastic
/// depth: keep everything during a short warmup, shrink the keep rate
/// stepwise every T epochs down to p_min, then hold a high final rate
/// from the stabilization epoch onward.
struct KeepRateConfig {
    double gamma = 0.1;    // per-step decay of the keep rate, in (0,1)
    double p_min = 0.5;    // floor for the decay phase, in (0,1]
    double p_final = 0.8;  // keep rate of the final phase, in (0,1]
    int T = 500;           // decay period in epochs
    int W = 50;            // warmup epochs with keep rate 1
    int S = 3000;          // stabilization epoch (start of the final phase)
    int N = 4000;          // total training epochs

    void validate() const;
};

/// Parameters of the periodic warmup-cosine learning rate. Within each
/// period the rate ramps linearly for T_warm epochs and then follows a
/// cosine curve with nominal length T_max; the period resets every T
/// epochs before the stabilization epoch S, and once at S for the rest
/// of training. Each completed period scales the rate by lambda.
struct LrConfig {
    double lr_max = 5e-5;  // peak learning rate
    double lambda = 0.8;   // per-period multiplicative decay, in (0,1]
    int T_max = 1000;      // cosine length in epochs (may exceed T)
    int T_warm = 50;       // warmup epochs per period, < T_max
    int T = 500;           // reset period before S (shared with KeepRateConfig)
    int S = 3000;          // stabilization epoch (shared with KeepRateConfig)

    void validate() const;
};

/// Keep rate at epoch i. Pure function of (cfg, i); throws ConfigError on
/// invalid cfg and std::out_of_range when i is outside [0, cfg.N).
double keep_rate(const KeepRateConfig& cfg, int epoch);

/// Learning rate at epoch i >= 0. Pure function of (cfg, i).
///
/// With T_warm = 0 the warmup factor at the period start is defined as 0,
/// so every period begins at learning rate zero.
double learning_rate(const LrConfig& cfg, int epoch);

/// Plain cosine annealing from lr_max to 0 over total_epochs. This is the
/// reference schedule the ablation presets substitute for the periodic one.
double cosine_baseline_lr(double lr_max, int total_epochs, int epoch);

} // namespace distileval
