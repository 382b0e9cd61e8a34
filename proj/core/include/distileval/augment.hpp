#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "distileval/tensor.hpp"

namespace distileval {

enum class AugOp { color_jitter, crop, cutout, flip, scale, rotate };

AugOp aug_op_from_string(const std::string& s);
std::string to_string(AugOp op);

/// Pipeline settings. k operations are drawn per image without replacement
/// from the pool and applied in the drawn order; each operation then draws
/// its own parameters from the configured ranges.
struct AugmentConfig {
    int k = 0;
    std::vector<AugOp> pool = {AugOp::color_jitter, AugOp::crop,
                               AugOp::cutout,       AugOp::flip,
                               AugOp::scale,        AugOp::rotate};
    int crop_pad = 4;          // reflect padding before the random re-crop
    int cutout_size = 0;       // square side; 0 scales 8 px from 32-px images
    double rotate_deg = 15.0;  // uniform in +-rotate_deg
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double jitter_lo = 0.8;    // brightness/contrast/saturation factors
    double jitter_hi = 1.2;

    void validate() const;
};

/// Augments every image in the batch. Randomness is a pure function of
/// (seed, epoch, base_index + position), so the same image index always
/// receives the same transform regardless of batch composition. Outputs
/// keep the input shape and are clipped to [0,1].
Tensor augment_batch(const Tensor& images, const AugmentConfig& cfg,
                     std::uint64_t seed, std::uint64_t epoch,
                     std::uint64_t base_index);

} // namespace distileval
