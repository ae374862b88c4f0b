#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cinetab/ops.hpp"
#include "cinetab/patching.hpp"

using namespace cinetab;

namespace {

// A synthetic stack with random pixels; geometry only, no phantom needed.
CmrStack random_stack(std::size_t n_sa, std::size_t n_la, std::size_t frames, std::size_t h,
                      std::size_t w, std::uint64_t seed) {
    CmrStack s;
    s.frames = frames;
    s.height = h;
    s.width = w;
    Rng rng(seed);
    for (std::size_t p = 0; p < n_sa + n_la; ++p) {
        PlaneMeta m;
        m.view = p < n_sa ? ViewKind::SA : ViewKind::LA;
        m.plane_index = p;
        m.slice_position = static_cast<double>(p);
        s.planes.push_back(m);
        std::vector<float> buf(frames * h * w);
        for (auto& v : buf) v = static_cast<float>(rng.uniform01());
        s.data.push_back(std::move(buf));
    }
    return s;
}

}  // namespace

// ===========================================================================
// select_frames
// ===========================================================================
TEST_CASE("select_frames worked examples") {
    CHECK(select_frames(50, 5) == std::vector<std::size_t>{0, 10, 20, 30, 40});
    CHECK(select_frames(10, 2) == std::vector<std::size_t>{0, 5});
    const auto all = select_frames(7, 7);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(select_frames(10, 0), UsageError);
    CHECK_THROWS_AS(select_frames(3, 5), UsageError);
}

// ===========================================================================
// patch_extract / unpatchify
// ===========================================================================
TEST_CASE("patch counts: 128x128x5 with 8x8x5 patches -> 256 per plane, 2304 for 9 planes") {
    const CmrStack s = random_stack(6, 3, 5, 128, 128, 1);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});
    CHECK(g.planes[0].count() == 256);
    CHECK(g.total == 2304);
    CHECK(g.patch.pixels() == 320);
    // coordinates are unique per token
    std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> seen;
    for (const auto& c : g.coords) seen.insert({c.x, c.y, c.t, c.plane});
    CHECK(seen.size() == g.total);
}

TEST_CASE("whole-plane patch extents give one patch per plane") {
    const CmrStack s = random_stack(1, 1, 5, 16, 12, 2);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{12, 16, 5});
    CHECK(g.total == 2);
    CHECK(g.planes[0].count() == 1);
}

TEST_CASE("unpatchify(patch_extract(x)) is bit-exact") {
    const CmrStack s = random_stack(2, 1, 10, 32, 24, 3);
    const auto sel = select_frames(10, 5);
    const PatchGrid g = patch_extract(s, sel, PatchExtents{8, 8, 5});
    const auto planes = unpatchify(g.pixels, g);
    REQUIRE(planes.size() == 3);
    for (std::size_t pl = 0; pl < 3; ++pl)
        for (std::size_t ti = 0; ti < sel.size(); ++ti)
            for (std::size_t px = 0; px < 32 * 24; ++px)
                CHECK(planes[pl][ti * 32 * 24 + px] == s.data[pl][sel[ti] * 32 * 24 + px]);
}

TEST_CASE("unpatchify: zero vectors give zero planes; single patch lands at its block") {
    const CmrStack s = random_stack(1, 1, 5, 16, 16, 4);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});
    std::vector<float> zeros(g.total * g.patch.pixels(), 0.0f);
    auto planes = unpatchify(zeros, g);
    for (const auto& p : planes)
        for (float v : p) CHECK(v == 0.0f);

    // mark one patch, check it lands exactly at its recorded coordinates
    const std::size_t tok = 5;  // plane 1 grid is 2x2; token 5 = plane 1, gy 0, gx 1
    std::fill_n(zeros.data() + tok * g.patch.pixels(), g.patch.pixels(), 1.0f);
    planes = unpatchify(zeros, g);
    const TokenCoord c = g.coords[tok];
    for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t j = 0; j < 16; ++j) {
                const bool inside = i >= c.y * 8 && i < (c.y + 1) * 8 && j >= c.x * 8 &&
                                    j < (c.x + 1) * 8;
                CHECK(planes[c.plane][(f * 16 + i) * 16 + j] == (inside ? 1.0f : 0.0f));
            }

    std::vector<float> short_vec(zeros.begin(), zeros.end() - 8);
    CHECK_THROWS_AS(unpatchify(short_vec, g), DimensionError);
}

TEST_CASE("patch_extract rejects non-divisible extents naming the axis") {
    const CmrStack s = random_stack(1, 1, 5, 20, 16, 5);
    try {
        patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("height") != std::string::npos);
    }
}

// ===========================================================================
// token_project
// ===========================================================================
TEST_CASE("token_project: zero input gives bias, scaling is linear") {
    CmrStack s = random_stack(1, 1, 5, 16, 16, 6);
    for (auto& plane : s.data) std::fill(plane.begin(), plane.end(), 0.0f);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});

    Rng rng(9);
    const std::size_t dim = 12, plen = g.patch.pixels();
    std::vector<double> kd(dim * plen), bd(dim);
    for (auto& v : kd) v = rng.uniform(-0.1, 0.1);
    for (auto& v : bd) v = rng.uniform(-1, 1);
    auto kernel = Tensor<double>::from_data({dim, plen}, kd);
    auto bias = Tensor<double>::from_data({dim}, bd);

    auto tokens = token_project(g, kernel, bias);
    CHECK(tokens.shape() == Shape{g.total, dim});
    for (std::size_t r = 0; r < g.total; ++r)
        for (std::size_t c = 0; c < dim; ++c)
            CHECK(tokens.data()[r * dim + c] == doctest::Approx(bd[c]));

    // doubling pixels doubles (token - bias)
    CmrStack s2 = random_stack(1, 1, 5, 16, 16, 7);
    const PatchGrid g1 = patch_extract(s2, select_frames(5, 5), PatchExtents{8, 8, 5});
    CmrStack s2x = s2;
    for (auto& plane : s2x.data)
        for (auto& v : plane) v *= 2.0f;
    const PatchGrid g2 = patch_extract(s2x, select_frames(5, 5), PatchExtents{8, 8, 5});
    auto t1 = token_project(g1, kernel, bias);
    auto t2 = token_project(g2, kernel, bias);
    for (std::size_t i = 0; i < t1.size(); ++i) {
        const double lhs = t2.data()[i] - bias.data()[i % dim];
        const double rhs = 2.0 * (t1.data()[i] - bias.data()[i % dim]);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("token_project equals the strided 3D convolution route") {
    const CmrStack s = random_stack(2, 1, 5, 16, 24, 8);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});
    Rng rng(10);
    const std::size_t dim = 10, plen = g.patch.pixels();
    std::vector<double> kd(dim * plen), bd(dim, 0.0);
    for (auto& v : kd) v = rng.uniform(-0.2, 0.2);
    auto kernel = Tensor<double>::from_data({dim, plen}, kd);
    auto bias = Tensor<double>::from_data({dim}, bd);
    auto tokens = token_project(g, kernel, bias);

    // independent route: conv3d with stride equal to the patch size, per
    // plane, channels reordered token-major
    auto kernel5d = ops::reshape(kernel, {dim, 1, 5, 8, 8});
    std::size_t tok = 0;
    for (std::size_t pl = 0; pl < s.planes.size(); ++pl) {
        std::vector<double> plane(s.data[pl].begin(), s.data[pl].end());
        auto x = Tensor<double>::from_data({1, 5, 16, 24}, plane);
        auto out = ops::conv3d(x, kernel5d, 5, 8, 8);  // [dim x 1 x 2 x 3]
        const std::size_t P = 2 * 3;
        auto out_mat = ops::transpose(ops::reshape(out, {dim, P}));
        for (std::size_t p = 0; p < P; ++p, ++tok)
            for (std::size_t c = 0; c < dim; ++c)
                CHECK(tokens.data()[tok * dim + c] ==
                      doctest::Approx(out_mat.data()[p * dim + c]).epsilon(1e-5));
    }
    CHECK(tok == g.total);
}

TEST_CASE("token_project gradient flows to the kernel") {
    const CmrStack s = random_stack(1, 1, 5, 8, 8, 11);
    const PatchGrid g = patch_extract(s, select_frames(5, 5), PatchExtents{8, 8, 5});
    Rng rng(12);
    std::vector<double> kd(6 * 320), bd(6);
    for (auto& v : kd) v = rng.uniform(-0.1, 0.1);
    for (auto& v : bd) v = rng.uniform(-0.1, 0.1);
    auto kernel = Tensor<double>::from_data({6, 320}, kd, true);
    auto bias = Tensor<double>::from_data({6}, bd, true);
    auto loss = ops::sum_all(ops::mul(token_project(g, kernel, bias),
                                      token_project(g, kernel, bias)));
    loss.backward();
    CHECK(kernel.has_grad());
    double norm = 0;
    for (double v : kernel.grad()) norm += v * v;
    CHECK(norm > 0.0);
}

// ===========================================================================
// sample_mask
// ===========================================================================
TEST_CASE("sample_mask worked examples and partition property") {
    const MaskPlan all_visible = sample_mask(100, 0.0, 1);
    CHECK(all_visible.masked.empty());
    CHECK(all_visible.visible.size() == 100);

    const MaskPlan paper = sample_mask(2304, 70.0, 2);
    CHECK(paper.masked.size() == 1612);
    CHECK(paper.visible.size() == 692);

    const MaskPlan ten = sample_mask(10, 70.0, 3);
    CHECK(ten.masked.size() == 7);

    CHECK_THROWS_AS(sample_mask(10, 100.0, 4), UsageError);
    CHECK_THROWS_AS(sample_mask(10, -1.0, 4), UsageError);

    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t L = 1 + static_cast<std::size_t>(rng.below(4000));
        const double q = rng.uniform(0.0, 99.999);
        const MaskPlan plan = sample_mask(L, q, rng.next_u64());
        CHECK(plan.masked.size() ==
              static_cast<std::size_t>(std::floor(q * static_cast<double>(L) / 100.0)));
        CHECK(plan.masked.size() + plan.visible.size() == L);
        std::set<std::size_t> seen(plan.masked.begin(), plan.masked.end());
        seen.insert(plan.visible.begin(), plan.visible.end());
        CHECK(seen.size() == L);
        CHECK(*seen.rbegin() == L - 1);
    }
}

TEST_CASE("sample_mask is deterministic per seed and uniform-ish across indices") {
    const MaskPlan a = sample_mask(64, 50.0, 42);
    const MaskPlan b = sample_mask(64, 50.0, 42);
    CHECK(a.masked == b.masked);
    const MaskPlan c = sample_mask(64, 50.0, 43);
    CHECK(a.masked != c.masked);

    // each index should be masked roughly half the time over many seeds
    std::vector<std::size_t> hits(64, 0);
    const int trials = 400;
    for (int t = 0; t < trials; ++t) {
        const MaskPlan p = sample_mask(64, 50.0, 1000 + static_cast<std::uint64_t>(t));
        for (std::size_t m : p.masked) ++hits[m];
    }
    for (std::size_t i = 0; i < 64; ++i) {
        const double rate = static_cast<double>(hits[i]) / trials;
        CHECK(rate > 0.35);
        CHECK(rate < 0.65);
    }
}

// ===========================================================================
// positional embedding
// ===========================================================================
TEST_CASE("positional embedding: pos=0 channels are (0,1); i=0 gives sin(1), cos(1)") {
    std::vector<TokenCoord> coords = {{0, 0, 0, 0, ViewKind::SA}, {1, 0, 0, 0, ViewKind::SA}};
    const std::size_t dim = 64;
    const auto pe = build_positional_embedding(coords, dim);
    const std::size_t chunk = (dim - 1) / 4;

    // token 0: all coordinates zero -> every sin channel 0, cos channel 1
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t j = 0; j < chunk; ++j)
            CHECK(pe[a * chunk + j] == doctest::Approx(j % 2 == 0 ? 0.0 : 1.0));
    // remainder channels stay zero, indicator ends the row
    for (std::size_t j = 4 * chunk; j + 1 < dim; ++j) CHECK(pe[j] == 0.0);
    CHECK(pe[dim - 1] == 0.0);

    // token 1: x=1, first pair of the x chunk has exponent 0 -> sin(1), cos(1)
    const double* row = pe.data() + dim;
    CHECK(row[0] == doctest::Approx(0.841470984807897).epsilon(1e-9));
    CHECK(row[1] == doctest::Approx(0.540302305868140).epsilon(1e-9));
}

TEST_CASE("positional embedding reproduces an independent high-precision evaluation") {
    std::vector<TokenCoord> coords = {{3, 7, 1, 5, ViewKind::LA}};
    const std::size_t dim = 65;
    const auto pe = build_positional_embedding(coords, dim);
    const std::size_t chunk = (dim - 1) / 4;
    const double pos_by_axis[4] = {3, 7, 1, 5};
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t j = 0; j < chunk; ++j) {
            const double i = std::floor(static_cast<double>(j) / 2.0);
            const double arg =
                pos_by_axis[a] / std::pow(10000.0, 2.0 * i / (static_cast<double>(dim) - 1.0));
            const double expect = j % 2 == 0 ? std::sin(arg) : std::cos(arg);
            CHECK(pe[a * chunk + j] == doctest::Approx(expect).epsilon(1e-6));
            CHECK(pe[a * chunk + j] >= -1.0);
            CHECK(pe[a * chunk + j] <= 1.0);
        }
    CHECK(pe[dim - 1] == 1.0);  // LA indicator
}

TEST_CASE("positional embedding: distinct coordinates give distinct rows") {
    std::vector<TokenCoord> coords;
    for (std::size_t x = 0; x < 4; ++x)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t t = 0; t < 2; ++t)
                for (std::size_t pl = 0; pl < 2; ++pl) {
                    coords.push_back({x, y, t, pl, ViewKind::SA});
                    coords.push_back({x, y, t, pl + 6, ViewKind::LA});
                }
    const std::size_t dim = 64;
    const auto pe = build_positional_embedding(coords, dim);
    for (std::size_t a = 0; a < coords.size(); ++a)
        for (std::size_t b = a + 1; b < coords.size(); ++b) {
            double linf = 0;
            for (std::size_t j = 0; j < dim; ++j)
                linf = std::max(linf, std::abs(pe[a * dim + j] - pe[b * dim + j]));
            CHECK(linf > 1e-6);
        }
    CHECK_THROWS_AS(build_positional_embedding(coords, 8), DimensionError);
}
