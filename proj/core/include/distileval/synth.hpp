#pragma once

// Synthetic labeled image generator. Each class gets a smooth template
// built from a few random cosine waves; items are shifted, gain-jittered,
// noisy copies of their class template. The task is easy enough for small
// convnets to learn from ~10 images per class yet not trivially separable
// by a single pixel, which makes it suitable for fast end-to-end checks
// when no real dataset is on disk.

#include <cstdint>

#include "distileval/datastore.hpp"

namespace distileval {

struct SynthConfig {
    int n_items = 1000;
    int n_classes = 10;
    int channels = 3;
    int height = 32;
    int width = 32;
    std::uint64_t seed = 0;
    double noise = 0.08;   // stddev of per-pixel Gaussian noise
    int max_shift = 3;     // circular shift range, +/- pixels per axis
    // Item streams are keyed by index_offset + i, so two configs sharing a
    // seed but using disjoint offset ranges yield disjoint items from the
    // same class templates (train/eval splits of one distribution).
    std::uint64_t index_offset = 0;

    void validate() const;
};

DatasetContainer synth_dataset(const SynthConfig& cfg);

} // namespace distileval
