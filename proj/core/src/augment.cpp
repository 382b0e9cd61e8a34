#include "distileval/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "distileval/errors.hpp"
#include "distileval/rng.hpp"

namespace distileval {

AugOp aug_op_from_string(const std::string& s) {
    if (s == "color_jitter") return AugOp::color_jitter;
    if (s == "crop") return AugOp::crop;
    if (s == "cutout") return AugOp::cutout;
    if (s == "flip") return AugOp::flip;
    if (s == "scale") return AugOp::scale;
    if (s == "rotate") return AugOp::rotate;
    throw ConfigError("unknown augmentation op \"" + s + "\"");
}

std::string to_string(AugOp op) {
    switch (op) {
    case AugOp::color_jitter: return "color_jitter";
    case AugOp::crop: return "crop";
    case AugOp::cutout: return "cutout";
    case AugOp::flip: return "flip";
    case AugOp::scale: return "scale";
    case AugOp::rotate: return "rotate";
    }
    return "?";
}

void AugmentConfig::validate() const {
    if (k < 0) throw ConfigError("augment.k must be >= 0");
    if (k > static_cast<int>(pool.size()))
        throw ConfigError("augment.k (" + std::to_string(k) +
                          ") exceeds pool size (" +
                          std::to_string(pool.size()) + ")");
    std::set<AugOp> distinct(pool.begin(), pool.end());
    if (distinct.size() != pool.size())
        throw ConfigError("augment.pool entries must be distinct");
    if (crop_pad < 0) throw ConfigError("augment.crop_pad must be >= 0");
    if (cutout_size < 0) throw ConfigError("augment.cutout_size must be >= 0");
    if (!(rotate_deg >= 0.0))
        throw ConfigError("augment.rotate_deg must be >= 0");
    if (!(scale_lo > 0.0 && scale_hi >= scale_lo))
        throw ConfigError("augment.scale range invalid");
    if (!(jitter_hi >= jitter_lo))
        throw ConfigError("augment.jitter range invalid");
}

namespace {

struct ImageView {
    double* data;
    int c, h, w;
    double& at(int ci, int hi, int wi) {
        return data[(static_cast<std::size_t>(ci) * h + hi) * w + wi];
    }
    double at(int ci, int hi, int wi) const {
        return data[(static_cast<std::size_t>(ci) * h + hi) * w + wi];
    }
    std::size_t size() const {
        return static_cast<std::size_t>(c) * h * w;
    }
};

// Out-of-range coordinates contribute zero.
double bilinear(const double* plane, int h, int w, double y, double x) {
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    double acc = 0.0;
    for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
            const int yy = y0 + dy, xx = x0 + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double wgt = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
            acc += wgt * plane[static_cast<std::size_t>(yy) * w + xx];
        }
    return acc;
}

// Mirror index into [0, n) without repeating the edge sample.
int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

void apply_flip(ImageView img, std::vector<double>& tmp) {
    tmp.assign(img.data, img.data + img.size());
    ImageView src{tmp.data(), img.c, img.h, img.w};
    for (int c = 0; c < img.c; ++c)
        for (int h = 0; h < img.h; ++h)
            for (int w = 0; w < img.w; ++w)
                img.at(c, h, w) = src.at(c, h, img.w - 1 - w);
}

void apply_crop(ImageView img, int pad, RngStream& rng,
                std::vector<double>& tmp) {
    if (pad == 0) {
        // Offsets are still drawn so the stream layout does not depend on
        // the padding value.
        rng.uniform_int(1);
        rng.uniform_int(1);
        return;
    }
    if (pad > img.h - 1 || pad > img.w - 1)
        throw ConfigError("augment.crop_pad too large for " +
                          std::to_string(img.h) + "x" + std::to_string(img.w) +
                          " images");
    const int dy = static_cast<int>(rng.uniform_int(2 * pad + 1));
    const int dx = static_cast<int>(rng.uniform_int(2 * pad + 1));
    tmp.assign(img.data, img.data + img.size());
    ImageView src{tmp.data(), img.c, img.h, img.w};
    for (int c = 0; c < img.c; ++c)
        for (int h = 0; h < img.h; ++h) {
            const int sy = reflect(h + dy - pad, img.h);
            for (int w = 0; w < img.w; ++w)
                img.at(c, h, w) = src.at(c, sy, reflect(w + dx - pad, img.w));
        }
}

void apply_cutout(ImageView img, int size, RngStream& rng) {
    const int cy = static_cast<int>(rng.uniform_int(img.h));
    const int cx = static_cast<int>(rng.uniform_int(img.w));
    const int top = cy - size / 2, left = cx - size / 2;
    for (int h = std::max(0, top); h < std::min(img.h, top + size); ++h)
        for (int w = std::max(0, left); w < std::min(img.w, left + size); ++w)
            for (int c = 0; c < img.c; ++c) img.at(c, h, w) = 0.0;
}

void apply_scale(ImageView img, double lo, double hi, RngStream& rng,
                 std::vector<double>& tmp) {
    const double s = rng.uniform(lo, hi);
    tmp.assign(img.data, img.data + img.size());
    const double cy = (img.h - 1) * 0.5, cx = (img.w - 1) * 0.5;
    for (int c = 0; c < img.c; ++c) {
        const double* plane = tmp.data() + static_cast<std::size_t>(c) *
                                               img.h * img.w;
        for (int h = 0; h < img.h; ++h) {
            const double sy = (h - cy) / s + cy;
            for (int w = 0; w < img.w; ++w)
                img.at(c, h, w) =
                    bilinear(plane, img.h, img.w, sy, (w - cx) / s + cx);
        }
    }
}

void apply_rotate(ImageView img, double max_deg, RngStream& rng,
                  std::vector<double>& tmp) {
    const double deg = rng.uniform(-max_deg, max_deg);
    const double rad = deg * 3.14159265358979323846 / 180.0;
    const double ct = std::cos(rad), st = std::sin(rad);
    tmp.assign(img.data, img.data + img.size());
    const double cy = (img.h - 1) * 0.5, cx = (img.w - 1) * 0.5;
    for (int c = 0; c < img.c; ++c) {
        const double* plane = tmp.data() + static_cast<std::size_t>(c) *
                                               img.h * img.w;
        for (int h = 0; h < img.h; ++h)
            for (int w = 0; w < img.w; ++w) {
                const double sy = ct * (h - cy) + st * (w - cx) + cy;
                const double sx = -st * (h - cy) + ct * (w - cx) + cx;
                img.at(c, h, w) = bilinear(plane, img.h, img.w, sy, sx);
            }
    }
}

void apply_jitter(ImageView img, double lo, double hi, RngStream& rng) {
    const double fb = rng.uniform(lo, hi);
    const double fc = rng.uniform(lo, hi);
    const double fs = rng.uniform(lo, hi);
    const std::size_t n = img.size();
    for (std::size_t i = 0; i < n; ++i) img.data[i] *= fb;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += img.data[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        img.data[i] = (img.data[i] - mean) * fc + mean;
    if (img.c > 1) {
        const double inv_c = 1.0 / img.c;
        for (int h = 0; h < img.h; ++h)
            for (int w = 0; w < img.w; ++w) {
                double gray = 0.0;
                for (int c = 0; c < img.c; ++c) gray += img.at(c, h, w);
                gray *= inv_c;
                for (int c = 0; c < img.c; ++c)
                    img.at(c, h, w) = gray + (img.at(c, h, w) - gray) * fs;
            }
    }
}

} // namespace

Tensor augment_batch(const Tensor& images, const AugmentConfig& cfg,
                     std::uint64_t seed, std::uint64_t epoch,
                     std::uint64_t base_index) {
    cfg.validate();
    if (images.ndim() != 4)
        throw ShapeError("augment_batch: expected (batch,C,H,W), got " +
                         shape_str(images.shape));
    Tensor out = images;
    if (cfg.k == 0) return out;

    const int b = images.dim(0), c = images.dim(1), h = images.dim(2),
              w = images.dim(3);
    const int cutout =
        cfg.cutout_size > 0
            ? cfg.cutout_size
            : static_cast<int>(std::lround(8.0 * h / 32.0));
    const std::size_t chw = static_cast<std::size_t>(c) * h * w;
    std::vector<double> tmp;
    std::vector<std::size_t> order(cfg.pool.size());

    for (int i = 0; i < b; ++i) {
        RngStream rng = derive_stream(seed, StreamKind::augment, epoch,
                                      base_index + static_cast<std::uint64_t>(i));
        // Partial Fisher-Yates: the first k slots are the drawn ops.
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        for (int j = 0; j < cfg.k; ++j) {
            const std::size_t pick =
                j + static_cast<std::size_t>(
                        rng.uniform_int(order.size() - static_cast<std::size_t>(j)));
            std::swap(order[static_cast<std::size_t>(j)], order[pick]);
        }
        ImageView img{out.ptr() + static_cast<std::size_t>(i) * chw, c, h, w};
        for (int j = 0; j < cfg.k; ++j) {
            switch (cfg.pool[order[static_cast<std::size_t>(j)]]) {
            case AugOp::color_jitter:
                apply_jitter(img, cfg.jitter_lo, cfg.jitter_hi, rng);
                break;
            case AugOp::crop:
                apply_crop(img, cfg.crop_pad, rng, tmp);
                break;
            case AugOp::cutout:
                apply_cutout(img, cutout, rng);
                break;
            case AugOp::flip:
                apply_flip(img, tmp);
                break;
            case AugOp::scale:
                apply_scale(img, cfg.scale_lo, cfg.scale_hi, rng, tmp);
                break;
            case AugOp::rotate:
                apply_rotate(img, cfg.rotate_deg, rng, tmp);
                break;
            }
        }
        for (std::size_t j = 0; j < chw; ++j) {
            double& v = img.data[j];
            v = std::min(1.0, std::max(0.0, v));
        }
    }
    return out;
}

} // namespace distileval
