// Training-time augmentation: per-plane random rotation, flips, and
// multiplicative contrast. Geometric transforms hit image and mask
// identically (bilinear vs nearest); contrast touches the image only.
#pragma once

#include <cstdint>

#include "cinetab/phantom.hpp"

namespace cinetab {

struct AugmentConfig {
    bool enabled = true;
    double max_rotation_deg = 30.0;
    double flip_prob = 0.5;
    double contrast_lo = 0.8;
    double contrast_hi = 1.2;
};

void augment_subject(CmrStack& stack, SegMask& mask, const AugmentConfig& cfg,
                     std::uint64_t seed);

// Building blocks, exposed for property tests.
void flip_plane_horizontal(float* img, std::size_t frames, std::size_t h, std::size_t w);
void flip_plane_vertical(float* img, std::size_t frames, std::size_t h, std::size_t w);
void flip_plane_horizontal(std::uint8_t* lab, std::size_t frames, std::size_t h, std::size_t w);
void flip_plane_vertical(std::uint8_t* lab, std::size_t frames, std::size_t h, std::size_t w);
void rotate_plane_bilinear(float* img, std::size_t frames, std::size_t h, std::size_t w,
                           double deg);
void rotate_plane_nearest(std::uint8_t* lab, std::size_t frames, std::size_t h, std::size_t w,
                          double deg);

}  // namespace cinetab
