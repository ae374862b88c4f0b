#include "cinetab/patching.hpp"

#include <algorithm>
#include <cmath>

#include "cinetab/ops.hpp"

namespace cinetab {

std::vector<std::size_t> select_frames(std::size_t total, std::size_t keep) {
    if (keep == 0) throw UsageError("select_frames: keep must be positive");
    if (keep > total) throw UsageError("select_frames: keep exceeds total frame count");
    const std::size_t stride = total / keep;
    std::vector<std::size_t> out(keep);
    for (std::size_t i = 0; i < keep; ++i) out[i] = i * stride;
    return out;
}

PatchGrid patch_extract(const CmrStack& stack, const std::vector<std::size_t>& frame_selection,
                        PatchExtents patch) {
    require(!frame_selection.empty(), "patch_extract: empty frame selection");
    for (std::size_t f : frame_selection)
        require(f < stack.frames, "patch_extract: frame index out of range");
    const std::size_t T = frame_selection.size(), H = stack.height, W = stack.width;
    if (T % patch.t != 0)
        throw ConfigError("patch_extract: selected frame count " + std::to_string(T) +
                          " not divisible by temporal patch extent " + std::to_string(patch.t));
    if (H % patch.y != 0)
        throw ConfigError("patch_extract: plane height " + std::to_string(H) +
                          " not divisible by patch extent " + std::to_string(patch.y));
    if (W % patch.x != 0)
        throw ConfigError("patch_extract: plane width " + std::to_string(W) +
                          " not divisible by patch extent " + std::to_string(patch.x));

    PatchGrid grid;
    grid.patch = patch;
    grid.frames = T;
    grid.height = H;
    grid.width = W;
    const PatchGrid::PlaneGrid pg{W / patch.x, H / patch.y, T / patch.t};
    grid.planes.assign(stack.planes.size(), pg);
    grid.total = pg.count() * stack.planes.size();
    const std::size_t plen = patch.pixels();
    grid.pixels.resize(grid.total * plen);
    grid.coords.resize(grid.total);

    std::size_t tok = 0;
    for (std::size_t pl = 0; pl < stack.planes.size(); ++pl) {
        const auto& plane = stack.data[pl];
        for (std::size_t gt = 0; gt < pg.gt; ++gt)
            for (std::size_t gy = 0; gy < pg.gy; ++gy)
                for (std::size_t gx = 0; gx < pg.gx; ++gx, ++tok) {
                    grid.coords[tok] = {gx, gy, gt, pl, stack.planes[pl].view};
                    float* dst = grid.pixels.data() + tok * plen;
                    for (std::size_t tt = 0; tt < patch.t; ++tt) {
                        const std::size_t f = frame_selection[gt * patch.t + tt];
                        for (std::size_t yy = 0; yy < patch.y; ++yy) {
                            const float* src =
                                plane.data() + (f * H + gy * patch.y + yy) * W + gx * patch.x;
                            std::copy_n(src, patch.x, dst);
                            dst += patch.x;
                        }
                    }
                }
    }
    return grid;
}

std::vector<std::vector<float>> unpatchify(const std::vector<float>& patch_pixels,
                                           const PatchGrid& grid) {
    const std::size_t plen = grid.patch.pixels();
    require(patch_pixels.size() == grid.total * plen,
            "unpatchify: pixel vector count does not match the grid (" +
                std::to_string(patch_pixels.size() / std::max<std::size_t>(plen, 1)) + " vs " +
                std::to_string(grid.total) + " patches)");
    std::vector<std::vector<float>> planes(grid.planes.size());
    for (auto& p : planes) p.assign(grid.frames * grid.height * grid.width, 0.0f);

    for (std::size_t tok = 0; tok < grid.total; ++tok) {
        const TokenCoord& c = grid.coords[tok];
        auto& plane = planes[c.plane];
        const float* src = patch_pixels.data() + tok * plen;
        for (std::size_t tt = 0; tt < grid.patch.t; ++tt) {
            const std::size_t f = c.t * grid.patch.t + tt;
            for (std::size_t yy = 0; yy < grid.patch.y; ++yy) {
                float* dst = plane.data() +
                             (f * grid.height + c.y * grid.patch.y + yy) * grid.width +
                             c.x * grid.patch.x;
                std::copy_n(src, grid.patch.x, dst);
                src += grid.patch.x;
            }
        }
    }
    return planes;
}

MaskPlan sample_mask(std::size_t total, double ratio_percent, std::uint64_t seed) {
    if (ratio_percent < 0.0 || ratio_percent >= 100.0)
        throw UsageError("sample_mask: masking ratio must lie in [0,100), got " +
                         std::to_string(ratio_percent));
    MaskPlan plan;
    plan.ratio_percent = ratio_percent;
    plan.seed = seed;
    const std::size_t n_masked =
        static_cast<std::size_t>(std::floor(ratio_percent * static_cast<double>(total) / 100.0));
    if (ratio_percent > 0.0) instrumentation::nonzero_mask_samples.fetch_add(1);
    Rng rng(derive_seed(seed, Stream::Masking, total));
    plan.masked = rng.sample_without_replacement(total, n_masked);
    std::sort(plan.masked.begin(), plan.masked.end());
    plan.visible.reserve(total - n_masked);
    std::size_t mi = 0;
    for (std::size_t i = 0; i < total; ++i) {
        if (mi < plan.masked.size() && plan.masked[mi] == i)
            ++mi;
        else
            plan.visible.push_back(i);
    }
    return plan;
}

std::vector<double> build_positional_embedding(const std::vector<TokenCoord>& coords,
                                               std::size_t dim) {
    require(dim >= 9, "positional embedding needs dim >= 9, got " + std::to_string(dim));
    const std::size_t chunk = (dim - 1) / 4;
    const double denom = static_cast<double>(dim - 1);
    std::vector<double> pe(coords.size() * dim, 0.0);
    for (std::size_t r = 0; r < coords.size(); ++r) {
        const TokenCoord& c = coords[r];
        const double axes[4] = {static_cast<double>(c.x), static_cast<double>(c.y),
                                static_cast<double>(c.t), static_cast<double>(c.plane)};
        double* row = pe.data() + r * dim;
        for (std::size_t a = 0; a < 4; ++a) {
            double* ch = row + a * chunk;
            for (std::size_t j = 0; j < chunk; ++j) {
                const std::size_t i = j / 2;
                const double freq =
                    std::pow(10000.0, 2.0 * static_cast<double>(i) / denom);
                const double arg = axes[a] / freq;
                ch[j] = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
            }
        }
        row[dim - 1] = c.view == ViewKind::LA ? 1.0 : 0.0;
    }
    return pe;
}

template <typename T>
Tensor<T> token_project(const PatchGrid& grid, const Tensor<T>& kernel, const Tensor<T>& bias) {
    const std::size_t plen = grid.patch.pixels();
    require(kernel.shape().size() == 2 && kernel.dim(1) == plen,
            "token_project: kernel must be [dim x " + std::to_string(plen) + "], got " +
                shape_str(kernel.shape()));
    require(bias.size() == kernel.dim(0), "token_project: bias width must match kernel rows");
    Tensor<T> patches = patch_pixel_tensor<T>(grid);
    return ops::add_rows(ops::matmul_nt(patches, kernel), bias);
}

template Tensor<float> token_project<float>(const PatchGrid&, const Tensor<float>&,
                                            const Tensor<float>&);
template Tensor<double> token_project<double>(const PatchGrid&, const Tensor<double>&,
                                              const Tensor<double>&);

}  // namespace cinetab
