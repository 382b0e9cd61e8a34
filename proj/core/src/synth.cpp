#include "distileval/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"

namespace distileval {

void SynthConfig::validate() const {
    if (n_items <= 0 || n_classes <= 0 || channels <= 0 || height <= 0 ||
        width <= 0)
        throw ConfigError("synth dimensions must be positive");
    if (!(noise >= 0.0))
        throw ConfigError("synth noise must be >= 0");
    if (max_shift < 0)
        throw ConfigError("synth max_shift must be >= 0");
    if (max_shift >= height || max_shift >= width)
        throw ConfigError("synth max_shift must be smaller than the image");
}

DatasetContainer synth_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const int C = cfg.channels, H = cfg.height, W = cfg.width;
    const std::size_t chw = static_cast<std::size_t>(C) * H * W;

    // Class templates: per channel, a base level of 0.5 plus three cosine
    // waves with random amplitude, integer frequency and phase.
    Tensor templates({cfg.n_classes, C, H, W});
    for (int k = 0; k < cfg.n_classes; ++k) {
        RngStream rng = derive_stream(cfg.seed, StreamKind::synth, 0,
                                      static_cast<std::uint64_t>(k));
        double* t = templates.ptr() + static_cast<std::size_t>(k) * chw;
        for (int ch = 0; ch < C; ++ch) {
            double amp[3], phase[3];
            int fx[3], fy[3];
            for (int w = 0; w < 3; ++w) {
                amp[w] = rng.uniform(0.10, 0.25);
                do {
                    fx[w] = static_cast<int>(rng.uniform_int(4));
                    fy[w] = static_cast<int>(rng.uniform_int(4));
                } while (fx[w] == 0 && fy[w] == 0);
                phase[w] = rng.uniform(0.0, 2.0 * std::numbers::pi);
            }
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double v = 0.5;
                    for (int w = 0; w < 3; ++w)
                        v += amp[w] *
                             std::cos(2.0 * std::numbers::pi *
                                          (fx[w] * static_cast<double>(x) / W +
                                           fy[w] * static_cast<double>(y) / H) +
                                      phase[w]);
                    t[(static_cast<std::size_t>(ch) * H + y) * W + x] = v;
                }
        }
    }

    DatasetContainer out;
    out.n_items = cfg.n_items;
    out.channels = C;
    out.height = H;
    out.width = W;
    out.n_classes = cfg.n_classes;
    out.label_kind = "hard";
    out.source = "synthetic";
    if (cfg.n_items % cfg.n_classes == 0)
        out.ipc = cfg.n_items / cfg.n_classes;
    out.images = Tensor({cfg.n_items, C, H, W});
    out.labels = Tensor({cfg.n_items, cfg.n_classes});

    const int span = 2 * cfg.max_shift + 1;
    for (int i = 0; i < cfg.n_items; ++i) {
        const int k = i % cfg.n_classes;
        RngStream rng =
            derive_stream(cfg.seed, StreamKind::synth, 1,
                          cfg.index_offset + static_cast<std::uint64_t>(i));
        const int dy =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span))) -
            cfg.max_shift;
        const int dx =
            static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(span))) -
            cfg.max_shift;
        const double gain = rng.uniform(0.85, 1.15);

        const double* t = templates.ptr() + static_cast<std::size_t>(k) * chw;
        double* img = out.images.ptr() + static_cast<std::size_t>(i) * chw;
        for (int ch = 0; ch < C; ++ch)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    const int sy = ((y + dy) % H + H) % H;
                    const int sx = ((x + dx) % W + W) % W;
                    double v =
                        0.5 +
                        gain * (t[(static_cast<std::size_t>(ch) * H + sy) * W +
                                  sx] -
                                0.5);
                    if (cfg.noise > 0.0) v += cfg.noise * rng.normal();
                    img[(static_cast<std::size_t>(ch) * H + y) * W + x] =
                        std::clamp(v, 0.0, 1.0);
                }
        out.labels[static_cast<std::size_t>(i) * cfg.n_classes + k] = 1.0;
    }
    out.validate();
    return out;
}

} // namespace distileval
