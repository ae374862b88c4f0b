#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cinetab/augment.hpp"
#include "cinetab/dataset.hpp"
#include "cinetab/icd10.hpp"
#include "cinetab/phantom.hpp"
#include "cinetab/tabular.hpp"

using namespace cinetab;
namespace fs = std::filesystem;

namespace {

PhantomParams desk_params() {
    PhantomParams p;
    p.sa_planes = 2;
    p.la_planes = 1;
    p.frames = 20;
    p.image_size = 64;
    p.pixel_mm = 2.0;
    p.sa_gap_mm = 16.0;
    return p;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("cinetab_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

// ===========================================================================
// select_frames lives in patching; analytic phenotype oracles here
// ===========================================================================
TEST_CASE("analytic phenotypes: spherical LV r30->r24 gives EF 48.8%") {
    PhantomParams p;
    p.lv_pool = {0, 0, 0, 30, 30, 30};
    p.lv_es_scale = 24.0 / 30.0;
    const PhenotypeSet ph = analytic_phenotypes(p);
    const double expect_ef = (1.0 - std::pow(24.0 / 30.0, 3)) * 100.0;
    CHECK(ph.lvef == doctest::Approx(expect_ef).epsilon(1e-12));
    CHECK(ph.lvef == doctest::Approx(48.8).epsilon(1e-3));
    CHECK(ph.lvedv == doctest::Approx(4.0 / 3.0 * 3.14159265358979 * 27000.0 / 1000.0));
}

TEST_CASE("analytic phenotypes: no contraction means SV=0, EF=0") {
    PhantomParams p;
    p.lv_es_scale = 1.0;
    const PhenotypeSet ph = analytic_phenotypes(p);
    CHECK(ph.lvsv == doctest::Approx(0.0));
    CHECK(ph.lvef == doctest::Approx(0.0));
}

TEST_CASE("analytic phenotypes: SV = EDV - ESV identity exact for all chambers") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 99ull}) {
        const PhantomParams p = jitter_params(PhantomParams{}, seed);
        const PhenotypeSet ph = analytic_phenotypes(p);
        CHECK(ph.lvsv == ph.lvedv - ph.lvesv);
        CHECK(ph.rvsv == ph.rvedv - ph.rvesv);
        CHECK(ph.lasv == ph.lav_max - ph.lav_min);
        CHECK(ph.rasv == ph.rav_max - ph.rav_min);
        CHECK(ph.lvef == doctest::Approx(ph.lvsv / ph.lvedv * 100.0));
        ph.validate();
    }
}

// ===========================================================================
// phantom generation
// ===========================================================================
TEST_CASE("phantom determinism: identical (params, seed) give identical bytes") {
    const PhantomParams p = desk_params();
    const PhantomSubject a = generate_phantom_subject(p, 77);
    const PhantomSubject b = generate_phantom_subject(p, 77);
    REQUIRE(a.stack.data.size() == b.stack.data.size());
    for (std::size_t pl = 0; pl < a.stack.data.size(); ++pl) {
        CHECK(a.stack.data[pl] == b.stack.data[pl]);
        CHECK(a.mask.labels[pl] == b.mask.labels[pl]);
    }
    CHECK(a.tabular.values == b.tabular.values);
    CHECK(a.labels.flags == b.labels.flags);
    CHECK(a.icd_codes == b.icd_codes);

    const PhantomSubject c = generate_phantom_subject(p, 78);
    CHECK(a.stack.data[0] != c.stack.data[0]);
}

TEST_CASE("phantom with zero noise: mask foreground matches raw intensity levels") {
    PhantomParams p = desk_params();
    p.noise_sigma = 0.0;
    const PhantomSubject s = generate_phantom_subject(p, 5);
    // With no noise every pixel is exactly one class level, so normalized
    // intensities take at most one value per class; the mask boundary must
    // coincide with the intensity level set.
    for (std::size_t pl = 0; pl < s.stack.data.size(); ++pl) {
        std::array<std::set<float>, kNumTissueClasses> values_by_class;
        for (std::size_t i = 0; i < s.stack.data[pl].size(); ++i)
            values_by_class[s.mask.labels[pl][i]].insert(s.stack.data[pl][i]);
        for (std::size_t c0 = 0; c0 < kNumTissueClasses; ++c0) {
            CHECK(values_by_class[c0].size() <= 1);
            if (values_by_class[c0].empty()) continue;
            for (std::size_t c1 = c0 + 1; c1 < kNumTissueClasses; ++c1) {
                if (values_by_class[c1].empty()) continue;
                CHECK(*values_by_class[c0].begin() != *values_by_class[c1].begin());
            }
        }
    }
}

TEST_CASE("voxel-counted volumes match analytic ellipsoid volumes") {
    // dense SA sampling: 1 mm in-plane, 1 mm slice gap
    PhantomParams p;
    p.sa_planes = 96;
    p.sa_gap_mm = 1.0;
    p.pixel_mm = 1.0;
    p.image_size = 128;
    p.la_planes = 1;
    p.frames = 2;
    p.noise_sigma = 0.0;
    const PhantomSubject s = generate_phantom_subject(p, 3);
    const PhenotypeSet ph = analytic_phenotypes(p);

    const double lv = mask_volume_ml(s.stack, s.mask, TissueClass::LVBP, 0);
    CHECK(std::abs(lv - ph.lvedv) / ph.lvedv < 0.05);
    const double rv = mask_volume_ml(s.stack, s.mask, TissueClass::RVBP, 0);
    CHECK(std::abs(rv - ph.rvedv) / ph.rvedv < 0.05);
    const double myo = mask_volume_ml(s.stack, s.mask, TissueClass::LVMYO, 0);
    CHECK(std::abs(myo * 1.05 - ph.lvm) / ph.lvm < 0.05);

    // ES frame: LV pool volume close to analytic ESV
    const double lv_es = mask_volume_ml(s.stack, s.mask, TissueClass::LVBP, es_frame(p));
    CHECK(std::abs(lv_es - ph.lvesv) / ph.lvesv < 0.05);
}

TEST_CASE("voxel volumes tighten to 2% at 0.5 mm voxels") {
    PhantomParams p;
    p.sa_planes = 180;
    p.sa_gap_mm = 0.5;
    p.pixel_mm = 0.5;
    p.image_size = 256;
    p.la_planes = 1;
    p.frames = 1;
    p.noise_sigma = 0.0;
    const PhantomSubject s = generate_phantom_subject(p, 4);
    const PhenotypeSet ph = analytic_phenotypes(p);
    const double lv = mask_volume_ml(s.stack, s.mask, TissueClass::LVBP, 0);
    CHECK(std::abs(lv - ph.lvedv) / ph.lvedv < 0.02);
}

TEST_CASE("atrial classes appear only on LA planes") {
    PhantomParams p = desk_params();
    p.sa_planes = 24;
    p.sa_gap_mm = 4.0;  // dense enough to cross the atrial z-range
    const PhantomSubject s = generate_phantom_subject(p, 9);
    bool atria_on_la = false;
    for (std::size_t pl = 0; pl < s.stack.planes.size(); ++pl) {
        const bool is_sa = s.stack.planes[pl].view == ViewKind::SA;
        for (auto v : s.mask.labels[pl]) {
            if (v == static_cast<std::uint8_t>(TissueClass::LABP) ||
                v == static_cast<std::uint8_t>(TissueClass::RABP)) {
                CHECK(!is_sa);
                atria_on_la = true;
            }
            CHECK(v < kNumTissueClasses);
        }
    }
    CHECK(atria_on_la);
}

TEST_CASE("degenerate geometry: shell thinner than a voxel is rejected") {
    PhantomParams p = desk_params();
    p.lv_wall_mm = 1.0;  // 2 mm voxels; at ES the wall dips below one voxel
    CHECK_THROWS_AS(generate_phantom_subject(p, 1), ConfigError);
}

TEST_CASE("disease labels: imbalanced, EF-linked, monotone code mapping") {
    const PhantomParams base = desk_params();
    std::array<std::size_t, kNumDiseases> positives{};
    std::size_t infarct_without_cad = 0;
    double ef_pos = 0, ef_neg = 0;
    std::size_t n_pos = 0, n_neg = 0;
    const std::size_t N = 600;
    for (std::size_t i = 0; i < N; ++i) {
        const std::uint64_t seed = derive_seed(123, 0xDA7A, i);
        const PhantomParams p = jitter_params(base, seed);
        const PhenotypeSet ph = analytic_phenotypes(p);
        Rng label_rng(derive_seed(seed, Stream::PhantomLabels, 0));
        // reuse the public generator on a tiny render to keep this fast
        PhantomParams tiny = p;
        tiny.image_size = 8;
        tiny.frames = 1;
        tiny.sa_planes = 1;
        tiny.la_planes = 1;
        tiny.pixel_mm = 4.0;
        const PhantomSubject s = generate_phantom_subject(tiny, seed);
        for (std::size_t d = 0; d < kNumDiseases; ++d) positives[d] += s.labels.flags[d];
        if (s.labels.flags[1] && !s.labels.flags[0]) ++infarct_without_cad;
        if (s.labels.flags[0]) {
            ef_pos += ph.lvef;
            ++n_pos;
        } else {
            ef_neg += ph.lvef;
            ++n_neg;
        }
        // flags of the five code-backed diseases reproduce from the codes
        const DiseaseLabels mapped =
            icd10_to_disease_labels(std::set<std::string>(s.icd_codes.begin(), s.icd_codes.end()));
        for (std::size_t d : {0u, 1u, 2u, 3u, 5u}) CHECK(mapped.flags[d] == s.labels.flags[d]);
    }
    CHECK(infarct_without_cad == 0);
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
        const double rate = static_cast<double>(positives[d]) / static_cast<double>(N);
        CAPTURE(d);
        CHECK(rate > 0.02);
        CHECK(rate < 0.25);
    }
    // coronary-disease positives have visibly lower ejection fraction
    CHECK(ef_pos / static_cast<double>(n_pos) + 3.0 < ef_neg / static_cast<double>(n_neg));
}

// ===========================================================================
// augmentation
// ===========================================================================
TEST_CASE("augmentation: identity configuration returns input unchanged") {
    const PhantomParams p = desk_params();
    PhantomSubject s = generate_phantom_subject(p, 12);
    const auto img_before = s.stack.data;
    const auto lab_before = s.mask.labels;

    AugmentConfig cfg;
    cfg.max_rotation_deg = 0.0;
    cfg.flip_prob = 0.0;
    cfg.contrast_lo = cfg.contrast_hi = 1.0;
    augment_subject(s.stack, s.mask, cfg, 99);
    CHECK(s.stack.data == img_before);
    CHECK(s.mask.labels == lab_before);

    AugmentConfig off;
    off.enabled = false;
    augment_subject(s.stack, s.mask, off, 99);
    CHECK(s.stack.data == img_before);
}

TEST_CASE("augmentation: double flip is the identity") {
    const PhantomParams p = desk_params();
    PhantomSubject s = generate_phantom_subject(p, 13);
    const auto before = s.stack.data[0];
    flip_plane_horizontal(s.stack.data[0].data(), s.stack.frames, s.stack.height, s.stack.width);
    CHECK(s.stack.data[0] != before);
    flip_plane_horizontal(s.stack.data[0].data(), s.stack.frames, s.stack.height, s.stack.width);
    CHECK(s.stack.data[0] == before);

    const auto lab_before = s.mask.labels[0];
    flip_plane_vertical(s.mask.labels[0].data(), s.mask.frames, s.mask.height, s.mask.width);
    flip_plane_vertical(s.mask.labels[0].data(), s.mask.frames, s.mask.height, s.mask.width);
    CHECK(s.mask.labels[0] == lab_before);
}

TEST_CASE("augmentation: rotation keeps labels in the class set and preserves counts") {
    PhantomParams p = desk_params();
    p.noise_sigma = 0.0;
    PhantomSubject s = generate_phantom_subject(p, 14);

    std::array<std::size_t, kNumTissueClasses> before{};
    for (auto v : s.mask.labels[0]) ++before[v];

    rotate_plane_nearest(s.mask.labels[0].data(), s.mask.frames, s.mask.height, s.mask.width,
                         17.0);
    std::array<std::size_t, kNumTissueClasses> after{};
    for (auto v : s.mask.labels[0]) {
        CHECK(v < kNumTissueClasses);
        ++after[v];
    }
    // foreground histogram total preserved within interpolation tolerance
    std::size_t fg_before = 0, fg_after = 0;
    for (std::size_t c = 1; c < kNumTissueClasses; ++c) {
        fg_before += before[c];
        fg_after += after[c];
    }
    REQUIRE(fg_before > 0);
    CHECK(std::abs(static_cast<double>(fg_after) - static_cast<double>(fg_before)) <
          0.02 * static_cast<double>(fg_before));
}

TEST_CASE("augmentation: applied transform is seed-deterministic and in-range") {
    const PhantomParams p = desk_params();
    PhantomSubject a = generate_phantom_subject(p, 15);
    PhantomSubject b = generate_phantom_subject(p, 15);
    AugmentConfig cfg;
    augment_subject(a.stack, a.mask, cfg, 42);
    augment_subject(b.stack, b.mask, cfg, 42);
    CHECK(a.stack.data == b.stack.data);
    CHECK(a.mask.labels == b.mask.labels);
    for (const auto& plane : a.stack.data)
        for (float v : plane) {
            CHECK(v >= 0.0f);
            CHECK(v <= 1.0f);
        }
}

// ===========================================================================
// tabular normalization
// ===========================================================================
namespace {
TabularSchema tiny_schema() {
    TabularSchema s;
    s.features.push_back({"num_a", FeatureKind::Numerical, 0, false});
    s.features.push_back({"bin_b", FeatureKind::Binary, 0, false});
    s.features.push_back({"cat_c", FeatureKind::Categorical, 4, false});
    return s;
}

TabularRecord rec(std::vector<double> v, std::vector<std::uint8_t> m) {
    TabularRecord r;
    r.values = std::move(v);
    r.missing = std::move(m);
    return r;
}
}  // namespace

TEST_CASE("normalize_tabular: population std on [1,2,3]") {
    const TabularSchema schema = tiny_schema();
    std::vector<TabularRecord> rs = {rec({1, 0, 1}, {0, 0, 0}), rec({2, 1, 1}, {0, 0, 0}),
                                     rec({3, 0, 2}, {0, 0, 0})};
    auto [normed, stats] = normalize_tabular(rs, schema);
    const double expect = std::sqrt(3.0 / 2.0);  // 1/popstd with popstd sqrt(2/3)
    CHECK(stats.mean[0] == doctest::Approx(2.0));
    CHECK(stats.stdev[0] == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(normed[0].values[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(normed[1].values[0] == doctest::Approx(0.0));
    CHECK(normed[2].values[0] == doctest::Approx(expect).epsilon(1e-12));
    // categorical mode is 1
    CHECK(stats.mode[2] == 1.0);
}

TEST_CASE("normalize_tabular: all-missing numerical becomes zeros; missing categorical -> mode") {
    const TabularSchema schema = tiny_schema();
    std::vector<TabularRecord> rs = {rec({0, 1, 3}, {1, 0, 0}), rec({0, 1, 0}, {1, 0, 1}),
                                     rec({0, 1, 3}, {1, 1, 0})};
    auto [normed, stats] = normalize_tabular(rs, schema);
    for (const auto& r : normed) CHECK(r.values[0] == 0.0);
    CHECK(normed[1].values[2] == 3.0);  // imputed to mode
    CHECK(normed[2].values[1] == 1.0);  // binary mode
    CHECK(!stats.warnings.empty());
}

TEST_CASE("normalize_tabular: categorical with no observations uses the reserved row") {
    const TabularSchema schema = tiny_schema();
    std::vector<TabularRecord> rs = {rec({1, 0, 0}, {0, 0, 1}), rec({2, 0, 0}, {0, 0, 1})};
    auto [normed, stats] = normalize_tabular(rs, schema);
    CHECK(stats.mode[2] == -1.0);
    CHECK(normed[0].values[2] == 4.0);  // cardinality = reserved imputation row
}

TEST_CASE("normalize_tabular: zero-variance feature clamps std with a warning") {
    const TabularSchema schema = tiny_schema();
    std::vector<TabularRecord> rs = {rec({5, 0, 0}, {0, 0, 0}), rec({5, 1, 1}, {0, 0, 0})};
    auto [normed, stats] = normalize_tabular(rs, schema);
    CHECK(stats.stdev[0] == 1.0);
    CHECK(normed[0].values[0] == doctest::Approx(0.0));
    bool warned = false;
    for (const auto& w : stats.warnings)
        if (w.find("zero variance") != std::string::npos) warned = true;
    CHECK(warned);
}

TEST_CASE("normalize_tabular: inverse round trip within 1e-6") {
    const auto& schema = TabularSchema::reference();
    const PhantomParams p = desk_params();
    std::vector<TabularRecord> rs;
    for (std::uint64_t i = 0; i < 8; ++i)
        rs.push_back(generate_phantom_subject(jitter_params(p, i), i).tabular);
    auto [normed, stats] = normalize_tabular(rs, schema);
    for (std::size_t r = 0; r < rs.size(); ++r)
        for (std::size_t f = 0; f < schema.size(); ++f) {
            if (schema.features[f].kind != FeatureKind::Numerical || rs[r].missing[f]) continue;
            const double back = stats.from_standard(f, normed[r].values[f]);
            CHECK(back == doctest::Approx(rs[r].values[f]).epsilon(1e-9));
        }
}

TEST_CASE("reference schema has 117 entries with the documented kind split") {
    const auto& s = TabularSchema::reference();
    CHECK(s.size() == 117);
    CHECK(s.count(FeatureKind::Numerical) == 67);
    CHECK(s.count(FeatureKind::Binary) == 18);
    CHECK(s.count(FeatureKind::Categorical) == 32);
    CHECK(s.phenotype_feature_indices().size() == 10);
    CHECK(s.physio_indices().size() == 57);
}

// ===========================================================================
// ICD-10 mapping
// ===========================================================================
TEST_CASE("icd10 mapping: worked examples") {
    {
        const DiseaseLabels l = icd10_to_disease_labels({"I210"});
        CHECK(l.flags[0] == 1);  // cad
        CHECK(l.flags[1] == 1);  // infarct
        CHECK(l.flags[2] == 0);
        CHECK(l.flags[3] == 0);
        CHECK(l.flags[4] == 0);
        CHECK(l.flags[5] == 0);
    }
    {
        const DiseaseLabels l = icd10_to_disease_labels({});
        for (auto f : l.flags) CHECK(f == 0);
    }
    {
        const DiseaseLabels l = icd10_to_disease_labels({"I10"});
        CHECK(l.flags[3] == 1);
        CHECK(l.flags[0] == 0);
        CHECK(l.flags[1] == 0);
    }
    // unknown codes are ignored
    const DiseaseLabels l = icd10_to_disease_labels({"Z999", "ABC"});
    for (auto f : l.flags) CHECK(f == 0);
}

TEST_CASE("icd10 mapping is monotone: adding codes never clears a flag") {
    Rng rng(7);
    std::vector<std::string> pool;
    for (std::size_t d = 0; d < kNumDiseases; ++d)
        for (const auto& c : icd10_codes_for(d)) pool.push_back(c);
    pool.push_back("Z000");
    for (int trial = 0; trial < 50; ++trial) {
        std::set<std::string> small, big;
        for (const auto& c : pool) {
            if (rng.bernoulli(0.1)) small.insert(c);
        }
        big = small;
        for (const auto& c : pool)
            if (rng.bernoulli(0.2)) big.insert(c);
        const DiseaseLabels ls = icd10_to_disease_labels(small);
        const DiseaseLabels lb = icd10_to_disease_labels(big);
        for (std::size_t d = 0; d < kNumDiseases; ++d) CHECK(lb.flags[d] >= ls.flags[d]);
    }
}

// ===========================================================================
// dataset persistence
// ===========================================================================
TEST_CASE("dataset round trip is bit-exact") {
    const fs::path dir = temp_dir("roundtrip");
    Dataset ds = generate_dataset(desk_params(), 3, 2024);
    write_dataset(ds, dir);
    const Dataset back = read_dataset(dir);

    REQUIRE(back.subjects.size() == 3);
    CHECK(back.schema == ds.schema);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& a = ds.subjects[i];
        const auto& b = back.subjects[i];
        CHECK(a.id == b.id);
        CHECK(a.seed == b.seed);
        CHECK(a.stack.data == b.stack.data);
        CHECK(a.mask.labels == b.mask.labels);
        CHECK(a.tabular.values == b.tabular.values);
        CHECK(a.tabular.missing == b.tabular.missing);
        CHECK(a.labels.flags == b.labels.flags);
        CHECK(a.icd_codes == b.icd_codes);
        CHECK(a.phenotypes.lvedv == b.phenotypes.lvedv);
        CHECK(a.phenotypes.raef == b.phenotypes.raef);
    }

    // writing the same dataset twice produces identical files
    const fs::path dir2 = temp_dir("roundtrip2");
    write_dataset(generate_dataset(desk_params(), 3, 2024), dir2);
    CHECK(slurp(dir / "subjects" / "s0001" / "meta.json") ==
          slurp(dir2 / "subjects" / "s0001" / "meta.json"));
    CHECK(slurp(dir / "subjects" / "s0001" / "images.f32") ==
          slurp(dir2 / "subjects" / "s0001" / "images.f32"));
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("dataset: truncated blob raises a corrupt-data error naming the file") {
    const fs::path dir = temp_dir("corrupt");
    write_dataset(generate_dataset(desk_params(), 1, 7), dir);
    const fs::path blob = dir / "subjects" / "s0000" / "images.f32";
    fs::resize_file(blob, fs::file_size(blob) - 8);
    try {
        read_dataset(dir);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("images.f32") != std::string::npos);
        CHECK(std::string(e.what()).find("corrupt") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("dataset of zero subjects is valid") {
    const fs::path dir = temp_dir("empty");
    Dataset ds;
    ds.schema = TabularSchema::reference();
    write_dataset(ds, dir);
    const Dataset back = read_dataset(dir);
    CHECK(back.subjects.empty());
    CHECK(back.schema.size() == 117);
    fs::remove_all(dir);
}

TEST_CASE("dataset splits are disjoint and cover all subjects") {
    Dataset ds = generate_dataset(desk_params(), 10, 5);
    const SplitIndices sp = split_dataset(ds, 0.6, 0.2);
    CHECK(sp.train.size() == 6);
    CHECK(sp.val.size() == 2);
    CHECK(sp.test.size() == 2);
    std::set<std::size_t> all;
    for (auto i : sp.train) all.insert(i);
    for (auto i : sp.val) all.insert(i);
    for (auto i : sp.test) all.insert(i);
    CHECK(all.size() == 10);
}
