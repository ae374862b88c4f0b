#include "cinetab/augment.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace cinetab {

namespace {
constexpr double kPi = 3.14159265358979323846;

template <typename P>
void flip_h(P* buf, std::size_t frames, std::size_t h, std::size_t w) {
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t i = 0; i < h; ++i) {
            P* row = buf + (f * h + i) * w;
            std::reverse(row, row + w);
        }
}

template <typename P>
void flip_v(P* buf, std::size_t frames, std::size_t h, std::size_t w) {
    for (std::size_t f = 0; f < frames; ++f)
        for (std::size_t i = 0; i < h / 2; ++i) {
            P* a = buf + (f * h + i) * w;
            P* b = buf + (f * h + (h - 1 - i)) * w;
            std::swap_ranges(a, a + w, b);
        }
}

}  // namespace

void flip_plane_horizontal(float* img, std::size_t f, std::size_t h, std::size_t w) {
    flip_h(img, f, h, w);
}
void flip_plane_vertical(float* img, std::size_t f, std::size_t h, std::size_t w) {
    flip_v(img, f, h, w);
}
void flip_plane_horizontal(std::uint8_t* lab, std::size_t f, std::size_t h, std::size_t w) {
    flip_h(lab, f, h, w);
}
void flip_plane_vertical(std::uint8_t* lab, std::size_t f, std::size_t h, std::size_t w) {
    flip_v(lab, f, h, w);
}

void rotate_plane_bilinear(float* img, std::size_t frames, std::size_t h, std::size_t w,
                           double deg) {
    if (deg == 0.0) return;
    const double c = std::cos(-deg * kPi / 180.0);
    const double s = std::sin(-deg * kPi / 180.0);
    const double cy = 0.5 * static_cast<double>(h - 1);
    const double cx = 0.5 * static_cast<double>(w - 1);
    std::vector<float> src(h * w);
    for (std::size_t f = 0; f < frames; ++f) {
        float* frame = img + f * h * w;
        std::copy_n(frame, h * w, src.data());
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double dy = static_cast<double>(i) - cy;
                const double dx = static_cast<double>(j) - cx;
                const double sx = cx + c * dx - s * dy;
                const double sy = cy + s * dx + c * dy;
                float out = 0.0f;
                if (sx >= 0 && sy >= 0 && sx <= w - 1 && sy <= h - 1) {
                    const std::size_t x0 = static_cast<std::size_t>(sx);
                    const std::size_t y0 = static_cast<std::size_t>(sy);
                    const std::size_t x1 = std::min(x0 + 1, w - 1);
                    const std::size_t y1 = std::min(y0 + 1, h - 1);
                    const double fx = sx - static_cast<double>(x0);
                    const double fy = sy - static_cast<double>(y0);
                    const double v00 = src[y0 * w + x0], v01 = src[y0 * w + x1];
                    const double v10 = src[y1 * w + x0], v11 = src[y1 * w + x1];
                    out = static_cast<float>((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                             fy * ((1 - fx) * v10 + fx * v11));
                }
                frame[i * w + j] = out;
            }
    }
}

void rotate_plane_nearest(std::uint8_t* lab, std::size_t frames, std::size_t h, std::size_t w,
                          double deg) {
    if (deg == 0.0) return;
    const double c = std::cos(-deg * kPi / 180.0);
    const double s = std::sin(-deg * kPi / 180.0);
    const double cy = 0.5 * static_cast<double>(h - 1);
    const double cx = 0.5 * static_cast<double>(w - 1);
    std::vector<std::uint8_t> src(h * w);
    for (std::size_t f = 0; f < frames; ++f) {
        std::uint8_t* frame = lab + f * h * w;
        std::copy_n(frame, h * w, src.data());
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) {
                const double dy = static_cast<double>(i) - cy;
                const double dx = static_cast<double>(j) - cx;
                const double sx = cx + c * dx - s * dy;
                const double sy = cy + s * dx + c * dy;
                std::uint8_t out = 0;
                if (sx >= -0.5 && sy >= -0.5 && sx < w - 0.5 && sy < h - 0.5) {
                    const std::size_t x = static_cast<std::size_t>(std::lround(sx));
                    const std::size_t y = static_cast<std::size_t>(std::lround(sy));
                    out = src[std::min(y, h - 1) * w + std::min(x, w - 1)];
                }
                frame[i * w + j] = out;
            }
    }
}

void augment_subject(CmrStack& stack, SegMask& mask, const AugmentConfig& cfg,
                     std::uint64_t seed) {
    if (!cfg.enabled) return;
    require(stack.data.size() == mask.labels.size(), "augment: stack/mask plane count mismatch");
    instrumentation::augment_calls.fetch_add(1);
    const std::size_t F = stack.frames, H = stack.height, W = stack.width;
    for (std::size_t pl = 0; pl < stack.data.size(); ++pl) {
        Rng rng(derive_seed(seed, Stream::Augmentation, pl));
        const double deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
        const bool fh = rng.bernoulli(cfg.flip_prob);
        const bool fv = rng.bernoulli(cfg.flip_prob);
        const double contrast = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);

        float* img = stack.data[pl].data();
        std::uint8_t* lab = mask.labels[pl].data();
        rotate_plane_bilinear(img, F, H, W, deg);
        rotate_plane_nearest(lab, F, H, W, deg);
        if (fh) {
            flip_plane_horizontal(img, F, H, W);
            flip_plane_horizontal(lab, F, H, W);
        }
        if (fv) {
            flip_plane_vertical(img, F, H, W);
            flip_plane_vertical(lab, F, H, W);
        }
        if (contrast != 1.0) {
            const float k = static_cast<float>(contrast);
            for (std::size_t i = 0; i < stack.data[pl].size(); ++i)
                img[i] = std::clamp(img[i] * k, 0.0f, 1.0f);
        }
    }
}

}  // namespace cinetab
