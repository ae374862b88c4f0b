// Synthetic cardiac phantom: time-scaled ellipsoids sliced along short-axis
// and long-axis plane geometries, with analytically known volumes, masks,
// tabular records, and disease labels.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cinetab/common.hpp"
#include "cinetab/tabular.hpp"

namespace cinetab {

enum class ViewKind : std::uint8_t { SA = 0, LA = 1 };

enum class TissueClass : std::uint8_t {
    Background = 0,
    LVBP = 1,   // left ventricular blood pool
    LVMYO = 2,  // left ventricular myocardium
    RVBP = 3,   // right ventricular blood pool
    LABP = 4,   // left atrial blood pool (long-axis planes only)
    RABP = 5,   // right atrial blood pool (long-axis planes only)
};
inline constexpr std::size_t kNumTissueClasses = 6;
const char* tissue_name(TissueClass c);

struct Ellipsoid {
    double cx = 0, cy = 0, cz = 0;  // center, mm
    double ax = 1, ay = 1, az = 1;  // semi-axes, mm
    double volume_ml() const;
    bool contains(double x, double y, double z, double scale) const;
};

struct PhantomParams {
    Ellipsoid lv_pool{0, 0, 0, 18, 18, 28};
    double lv_wall_mm = 7.0;
    Ellipsoid rv_pool{-40, 0, 0, 11, 16, 22};
    Ellipsoid la_pool{10, 0, 46, 9, 9, 8};
    Ellipsoid ra_pool{-10, 0, 46, 9, 9, 8};

    double lv_es_scale = 0.72;       // ED->ES semi-axis scale, (0,1]
    double rv_es_scale = 0.74;
    double atrial_min_scale = 0.80;  // atria are smallest at ventricular ED
    double heart_rate_bpm = 70.0;
    double systole_sharpness = 1.0;  // exponent on the contraction bump

    double noise_sigma = 0.03;
    std::array<double, kNumTissueClasses> intensity{0.10, 0.95, 0.35, 0.90, 0.85, 0.80};

    // acquisition geometry
    std::size_t sa_planes = 6;
    std::size_t la_planes = 3;
    std::size_t frames = 50;
    std::size_t image_size = 128;
    double pixel_mm = 1.0;
    double sa_gap_mm = 10.0;
    double sa_center_z = 0.0;
    double la_center_z = 12.0;

    double tabular_missing_rate = 0.08;

    void validate() const;
};

struct PlaneMeta {
    ViewKind view = ViewKind::SA;
    std::size_t plane_index = 0;  // global index across the SA+LA stack
    double slice_position = 0.0;  // SA: z in mm; LA: rotation angle in degrees
};

struct CmrStack {
    std::size_t frames = 0, height = 0, width = 0;
    double pixel_mm = 1.0, sa_gap_mm = 10.0;
    std::vector<PlaneMeta> planes;
    std::vector<std::vector<float>> data;  // per plane, frames*height*width

    std::size_t sa_count() const;
    std::size_t la_count() const;
    std::size_t plane_pixels() const { return frames * height * width; }
    void validate() const;
};

struct SegMask {
    std::size_t frames = 0, height = 0, width = 0;
    std::vector<std::vector<std::uint8_t>> labels;  // aligned with CmrStack planes
};

struct PhenotypeSet {
    double lvedv = 0, lvesv = 0, lvsv = 0, lvef = 0, lvco = 0, lvm = 0;
    double rvedv = 0, rvesv = 0, rvsv = 0, rvef = 0;
    double lav_max = 0, lav_min = 0, lasv = 0, laef = 0;
    double rav_max = 0, rav_min = 0, rasv = 0, raef = 0;

    // The 17 reported targets, in a fixed order (EFs in percent, LVCO in
    // L/min, LVM in grams, volumes in mL).
    static const std::vector<std::string>& target_names();
    std::array<double, 17> target_vector() const;
    void validate() const;
};

inline constexpr std::size_t kNumDiseases = 6;
const std::array<std::string, kNumDiseases>& disease_names();
std::size_t disease_index(const std::string& name);  // throws UsageError if unknown

struct DiseaseLabels {
    std::array<std::uint8_t, kNumDiseases> flags{};  // cad, infarct, stroke, hypertension,
                                                     // high blood pressure, diabetes
};

struct PhantomSubject {
    CmrStack stack;
    SegMask mask;
    TabularRecord tabular;
    PhenotypeSet phenotypes;
    DiseaseLabels labels;
    std::vector<std::string> icd_codes;
};

// Closed-form volumes/EFs from the ellipsoid axes at the ED and ES phases.
PhenotypeSet analytic_phenotypes(const PhantomParams& p);

// Contraction scale at a cycle phase in [0,1): 1 at ED, es_scale at mid-cycle.
double ventricular_scale(const PhantomParams& p, double phase, double es_scale);
double atrial_scale(const PhantomParams& p, double phase);

// Renders one subject. Deterministic: identical (params, seed) produce
// identical bytes. Raw class levels are perturbed by Gaussian noise and then
// normalized per plane (1st-99th percentile clip, rescale to [0,1]). Masks
// come from the same geometry, noise-free; atrial classes are drawn only on
// LA planes.
PhantomSubject generate_phantom_subject(const PhantomParams& p, std::uint64_t seed);

// Per-subject geometry/physiology jitter used when sampling a cohort.
PhantomParams jitter_params(const PhantomParams& base, std::uint64_t seed);

// Volume of one tissue class integrated over the SA mask planes at a frame:
// count * pixel_mm^2 * sa_gap_mm. Accurate when the SA stack densely covers
// the structure (sa_gap_mm comparable to pixel_mm).
double mask_volume_ml(const CmrStack& stack, const SegMask& mask, TissueClass cls,
                      std::size_t frame);

// Frame index of the analytic end-systole (maximal contraction).
std::size_t es_frame(const PhantomParams& p);

}  // namespace cinetab
