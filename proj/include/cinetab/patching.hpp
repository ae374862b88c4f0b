// Patch decomposition of multi-view stacks, random masking, and the 5D
// positional embedding (sinusoidal x/y/t/plane chunks + a view indicator).
#pragma once

#include <cstdint>
#include <vector>

#include "cinetab/phantom.hpp"
#include "cinetab/tensor.hpp"

namespace cinetab {

struct PatchExtents {
    std::size_t x = 8, y = 8, t = 5;
    std::size_t pixels() const { return x * y * t; }
};

struct TokenCoord {
    std::size_t x = 0, y = 0, t = 0;  // grid coordinates within the plane
    std::size_t plane = 0;            // global plane index across SA then LA
    ViewKind view = ViewKind::SA;

    bool operator==(const TokenCoord&) const = default;
};

// Lossless rearrangement of the selected frames of every plane into flat
// per-patch pixel vectors plus their grid coordinates.
struct PatchGrid {
    PatchExtents patch;
    struct PlaneGrid {
        std::size_t gx = 0, gy = 0, gt = 0;
        std::size_t count() const { return gx * gy * gt; }
    };
    std::vector<PlaneGrid> planes;
    std::size_t total = 0;  // L_total
    std::size_t frames = 0, height = 0, width = 0;
    std::vector<float> pixels;  // [total x patch.pixels()] row-major
    std::vector<TokenCoord> coords;
};

// Evenly strided frame selection: indices i * floor(total/keep).
std::vector<std::size_t> select_frames(std::size_t total, std::size_t keep);

PatchGrid patch_extract(const CmrStack& stack, const std::vector<std::size_t>& frame_selection,
                        PatchExtents patch);

// Exact inverse of patch_extract: per-plane [frames x H x W] buffers.
std::vector<std::vector<float>> unpatchify(const std::vector<float>& patch_pixels,
                                           const PatchGrid& grid);

struct MaskPlan {
    double ratio_percent = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> visible;  // sorted
    std::vector<std::size_t> masked;   // sorted; |masked| = floor(q*L/100)
};

// Uniform sampling without replacement over the whole stack's token indices.
MaskPlan sample_mask(std::size_t total, double ratio_percent, std::uint64_t seed);

// [L x dim] positional embedding. dim-1 sinusoidal channels split into four
// equal chunks of floor((dim-1)/4) for the x, y, t and plane coordinates
// (leftover channels zero); the final channel indicates the view (SA=0,
// LA=1). Within a chunk, channel pair i carries sin/cos of
// pos / 10000^(2i/(dim-1)). Deterministic, non-learned.
std::vector<double> build_positional_embedding(const std::vector<TokenCoord>& coords,
                                               std::size_t dim);

template <typename T>
Tensor<T> positional_embedding_tensor(const std::vector<TokenCoord>& coords, std::size_t dim) {
    const std::vector<double> pe = build_positional_embedding(coords, dim);
    std::vector<T> data(pe.size());
    for (std::size_t i = 0; i < pe.size(); ++i) data[i] = static_cast<T>(pe[i]);
    return Tensor<T>::from_data({coords.size(), dim}, std::move(data));
}

// Patch pixel matrix as a (constant) tensor [L_total x patch_pixels].
template <typename T>
Tensor<T> patch_pixel_tensor(const PatchGrid& grid) {
    std::vector<T> data(grid.pixels.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(grid.pixels[i]);
    return Tensor<T>::from_data({grid.total, grid.patch.pixels()}, std::move(data));
}

// Linear projection of patches to tokens: one token per patch, linear in the
// patch pixels. Equivalent to a 3D convolution with stride equal to the
// patch size applied per plane.
template <typename T>
Tensor<T> token_project(const PatchGrid& grid, const Tensor<T>& kernel, const Tensor<T>& bias);

extern template Tensor<float> token_project<float>(const PatchGrid&, const Tensor<float>&,
                                                   const Tensor<float>&);
extern template Tensor<double> token_project<double>(const PatchGrid&, const Tensor<double>&,
                                                     const Tensor<double>&);

}  // namespace cinetab
