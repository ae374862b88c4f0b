#include "cinetab/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace cinetab {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kMyocardiumDensity = 1.05;  // g/mL

struct ScaledEllipsoid {
    double cx, cy, cz;
    double inv_ax2, inv_ay2, inv_az2;

    static ScaledEllipsoid make(const Ellipsoid& e, double s) {
        ScaledEllipsoid out{e.cx, e.cy, e.cz, 0, 0, 0};
        out.inv_ax2 = 1.0 / ((s * e.ax) * (s * e.ax));
        out.inv_ay2 = 1.0 / ((s * e.ay) * (s * e.ay));
        out.inv_az2 = 1.0 / ((s * e.az) * (s * e.az));
        return out;
    }
    bool contains(double x, double y, double z) const {
        const double dx = x - cx, dy = y - cy, dz = z - cz;
        return dx * dx * inv_ax2 + dy * dy * inv_ay2 + dz * dz * inv_az2 <= 1.0;
    }
};

// Per-frame geometry: the ventricular pools contract with their own scale;
// the outer myocardial surface follows so that shell volume stays constant.
struct FrameGeometry {
    ScaledEllipsoid lv_in, lv_out, rv, la, ra;
};

double outer_scale_for_constant_shell(const Ellipsoid& pool, double wall, double s_in) {
    const double vin_ed = pool.ax * pool.ay * pool.az;
    const double vout_ed = (pool.ax + wall) * (pool.ay + wall) * (pool.az + wall);
    const double shell = vout_ed - vin_ed;
    return std::cbrt((s_in * s_in * s_in * vin_ed + shell) / vout_ed);
}

FrameGeometry frame_geometry(const PhantomParams& p, double phase) {
    FrameGeometry g;
    const double s_lv = ventricular_scale(p, phase, p.lv_es_scale);
    const double s_rv = ventricular_scale(p, phase, p.rv_es_scale);
    const double s_at = atrial_scale(p, phase);
    Ellipsoid lv_outer = p.lv_pool;
    lv_outer.ax += p.lv_wall_mm;
    lv_outer.ay += p.lv_wall_mm;
    lv_outer.az += p.lv_wall_mm;
    g.lv_in = ScaledEllipsoid::make(p.lv_pool, s_lv);
    g.lv_out = ScaledEllipsoid::make(lv_outer,
                                     outer_scale_for_constant_shell(p.lv_pool, p.lv_wall_mm, s_lv));
    g.rv = ScaledEllipsoid::make(p.rv_pool, s_rv);
    g.la = ScaledEllipsoid::make(p.la_pool, s_at);
    g.ra = ScaledEllipsoid::make(p.ra_pool, s_at);
    return g;
}

TissueClass classify(const FrameGeometry& g, double x, double y, double z, bool la_view) {
    if (g.lv_in.contains(x, y, z)) return TissueClass::LVBP;
    if (g.lv_out.contains(x, y, z)) return TissueClass::LVMYO;
    if (g.rv.contains(x, y, z)) return TissueClass::RVBP;
    if (la_view) {
        if (g.la.contains(x, y, z)) return TissueClass::LABP;
        if (g.ra.contains(x, y, z)) return TissueClass::RABP;
    }
    return TissueClass::Background;
}

// 1st-99th percentile clip, then rescale to [0,1]. Quantiles by linear
// interpolation on the sorted order statistics.
void percentile_normalize(std::vector<float>& v) {
    if (v.empty()) return;
    std::vector<float> tmp = v;
    auto quantile = [&tmp](double q) {
        const double pos = q * static_cast<double>(tmp.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, tmp.size() - 1);
        std::nth_element(tmp.begin(), tmp.begin() + lo, tmp.end());
        const float vlo = tmp[lo];
        std::nth_element(tmp.begin() + lo, tmp.begin() + hi, tmp.end());
        const float vhi = tmp[hi];
        return vlo + static_cast<float>(pos - static_cast<double>(lo)) * (vhi - vlo);
    };
    const float p1 = quantile(0.01);
    const float p99 = quantile(0.99);
    const float span = p99 - p1;
    if (span < 1e-9f) {
        std::fill(v.begin(), v.end(), 0.0f);
        return;
    }
    const float inv = 1.0f / span;
    for (float& x : v) x = std::clamp((x - p1) * inv, 0.0f, 1.0f);
}

}  // namespace

const char* tissue_name(TissueClass c) {
    switch (c) {
        case TissueClass::Background: return "background";
        case TissueClass::LVBP: return "LVBP";
        case TissueClass::LVMYO: return "LVMYO";
        case TissueClass::RVBP: return "RVBP";
        case TissueClass::LABP: return "LABP";
        case TissueClass::RABP: return "RABP";
    }
    return "?";
}

double Ellipsoid::volume_ml() const { return 4.0 / 3.0 * kPi * ax * ay * az / 1000.0; }

bool Ellipsoid::contains(double x, double y, double z, double scale) const {
    return ScaledEllipsoid::make(*this, scale).contains(x, y, z);
}

void PhantomParams::validate() const {
    auto check_axes = [](const Ellipsoid& e, const char* what) {
        if (e.ax <= 0 || e.ay <= 0 || e.az <= 0)
            throw ConfigError(std::string("phantom: ") + what + " semi-axes must be positive");
    };
    check_axes(lv_pool, "LV pool");
    check_axes(rv_pool, "RV pool");
    check_axes(la_pool, "LA pool");
    check_axes(ra_pool, "RA pool");
    if (lv_wall_mm <= 0) throw ConfigError("phantom: myocardial wall thickness must be positive");
    if (lv_es_scale <= 0 || lv_es_scale > 1 || rv_es_scale <= 0 || rv_es_scale > 1)
        throw ConfigError("phantom: end-systolic scale must lie in (0,1]");
    if (atrial_min_scale <= 0 || atrial_min_scale > 1)
        throw ConfigError("phantom: atrial minimum scale must lie in (0,1]");
    if (noise_sigma < 0) throw ConfigError("phantom: noise level must be non-negative");
    if (sa_planes < 1 || la_planes < 1)
        throw ConfigError("phantom: at least one SA and one LA plane required");
    if (frames < 1) throw ConfigError("phantom: at least one frame required");
    if (image_size < 8) throw ConfigError("phantom: image size too small");
    if (pixel_mm <= 0 || sa_gap_mm <= 0) throw ConfigError("phantom: spacings must be positive");
    if (heart_rate_bpm <= 0) throw ConfigError("phantom: heart rate must be positive");
}

std::size_t CmrStack::sa_count() const {
    std::size_t n = 0;
    for (const auto& pm : planes)
        if (pm.view == ViewKind::SA) ++n;
    return n;
}
std::size_t CmrStack::la_count() const { return planes.size() - sa_count(); }

void CmrStack::validate() const {
    require(sa_count() >= 1 && la_count() >= 1, "CmrStack needs at least one SA and one LA plane");
    require(planes.size() == data.size(), "CmrStack plane metadata/data mismatch");
    for (const auto& d : data)
        require(d.size() == plane_pixels(), "CmrStack plane buffer has wrong length");
}

double ventricular_scale(const PhantomParams& p, double phase, double es_scale) {
    const double bump = std::pow(std::sin(kPi * phase) * std::sin(kPi * phase),
                                 p.systole_sharpness);
    return 1.0 - (1.0 - es_scale) * bump;
}

double atrial_scale(const PhantomParams& p, double phase) {
    const double bump = std::pow(std::sin(kPi * phase) * std::sin(kPi * phase),
                                 p.systole_sharpness);
    return p.atrial_min_scale + (1.0 - p.atrial_min_scale) * bump;
}

std::size_t es_frame(const PhantomParams& p) { return p.frames / 2; }

const std::vector<std::string>& PhenotypeSet::target_names() {
    static const std::vector<std::string> names = {
        "LVEDV (mL)",   "LVSV (mL)",    "LVEF (%)",     "LVCO (L/min)", "LVM (g)",
        "RVEDV (mL)",   "RVESV (mL)",   "RVSV (mL)",    "RVEF (%)",     "LAV max (mL)",
        "LAV min (mL)", "LASV (mL)",    "LAEF (%)",     "RAV max (mL)", "RAV min (mL)",
        "RASV (mL)",    "RAEF (%)"};
    return names;
}

std::array<double, 17> PhenotypeSet::target_vector() const {
    return {lvedv, lvsv,    lvef,    lvco, lvm,     rvedv,   rvesv, rvsv, rvef,
            lav_max, lav_min, lasv, laef, rav_max, rav_min, rasv,  raef};
}

void PhenotypeSet::validate() const {
    auto check_group = [](double edv, double esv, double sv, double ef, const char* what) {
        if (edv <= 0 || esv < 0)
            throw ConfigError(std::string("phenotypes: non-positive volume for ") + what);
        if (std::abs((edv - esv) - sv) > 1e-9 * std::max(1.0, edv))
            throw ConfigError(std::string("phenotypes: SV != EDV - ESV for ") + what);
        if (ef < 0 || ef > 100.0)
            throw ConfigError(std::string("phenotypes: EF outside [0,100] for ") + what);
    };
    check_group(lvedv, lvesv, lvsv, lvef, "LV");
    check_group(rvedv, rvesv, rvsv, rvef, "RV");
    check_group(lav_max, lav_min, lasv, laef, "LA");
    check_group(rav_max, rav_min, rasv, raef, "RA");
}

const std::array<std::string, kNumDiseases>& disease_names() {
    static const std::array<std::string, kNumDiseases> names = {
        "cad", "infarct", "stroke", "hypertension", "high_blood_pressure", "diabetes"};
    return names;
}

std::size_t disease_index(const std::string& name) {
    const auto& names = disease_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return i;
    throw UsageError("unknown disease '" + name + "'");
}

PhenotypeSet analytic_phenotypes(const PhantomParams& p) {
    p.validate();
    PhenotypeSet ph;
    const double s3_lv = p.lv_es_scale * p.lv_es_scale * p.lv_es_scale;
    const double s3_rv = p.rv_es_scale * p.rv_es_scale * p.rv_es_scale;
    ph.lvedv = p.lv_pool.volume_ml();
    ph.lvesv = ph.lvedv * s3_lv;
    ph.lvsv = ph.lvedv - ph.lvesv;
    ph.lvef = ph.lvsv / ph.lvedv * 100.0;
    ph.lvco = ph.lvsv * p.heart_rate_bpm / 1000.0;
    Ellipsoid outer = p.lv_pool;
    outer.ax += p.lv_wall_mm;
    outer.ay += p.lv_wall_mm;
    outer.az += p.lv_wall_mm;
    ph.lvm = (outer.volume_ml() - p.lv_pool.volume_ml()) * kMyocardiumDensity;

    ph.rvedv = p.rv_pool.volume_ml();
    ph.rvesv = ph.rvedv * s3_rv;
    ph.rvsv = ph.rvedv - ph.rvesv;
    ph.rvef = ph.rvsv / ph.rvedv * 100.0;

    const double a3 = p.atrial_min_scale * p.atrial_min_scale * p.atrial_min_scale;
    ph.lav_max = p.la_pool.volume_ml();
    ph.lav_min = ph.lav_max * a3;
    ph.lasv = ph.lav_max - ph.lav_min;
    ph.laef = ph.lasv / ph.lav_max * 100.0;
    ph.rav_max = p.ra_pool.volume_ml();
    ph.rav_min = ph.rav_max * a3;
    ph.rasv = ph.rav_max - ph.rav_min;
    ph.raef = ph.rasv / ph.rav_max * 100.0;
    return ph;
}

namespace {

// Disease sampling: a logistic function of LVEF plus noise, so labels stay
// learnable from the images but imbalanced (~10% positive).
struct DiseaseModel {
    double ef_slope;   // logit units per percent of EF below the reference
    double ef_ref;     // percent
    double offset;
    double noise_sd;
};

const DiseaseModel kDiseaseModels[kNumDiseases] = {
    {0.44, 56.0, -1.15, 0.6},  // cad
    {0.0, 0.0, 0.0, 0.0},      // infarct: subset of cad, handled separately
    {0.20, 56.0, -2.45, 0.8},  // stroke
    {0.30, 57.0, -1.95, 0.8},  // hypertension
    {0.30, 57.0, -1.95, 0.8},  // high blood pressure (independent draw)
    {0.25, 56.0, -2.15, 0.8},  // diabetes
};

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

DiseaseLabels sample_labels(double lvef_percent, Rng& rng) {
    DiseaseLabels labels;
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
        if (d == 1) continue;
        const auto& m = kDiseaseModels[d];
        const double z =
            m.ef_slope * (m.ef_ref - lvef_percent) + m.offset + rng.normal(0.0, m.noise_sd);
        labels.flags[d] = rng.bernoulli(sigmoid(z)) ? 1 : 0;
    }
    // infarct implies coronary disease (the code lists overlap on I21x/I252)
    labels.flags[1] = (labels.flags[0] && rng.bernoulli(0.45)) ? 1 : 0;
    return labels;
}

}  // namespace

PhantomParams jitter_params(const PhantomParams& base, std::uint64_t seed) {
    Rng rng(derive_seed(seed, Stream::PhantomGeometry, 0));
    PhantomParams p = base;
    auto jitter_axes = [&rng](Ellipsoid& e, double rel) {
        e.ax *= 1.0 + rel * rng.uniform(-1.0, 1.0);
        e.ay *= 1.0 + rel * rng.uniform(-1.0, 1.0);
        e.az *= 1.0 + rel * rng.uniform(-1.0, 1.0);
    };
    jitter_axes(p.lv_pool, 0.12);
    p.lv_wall_mm *= 1.0 + 0.12 * rng.uniform(-1.0, 1.0);
    jitter_axes(p.rv_pool, 0.12);
    p.rv_pool.cx += rng.uniform(-2.0, 2.0);
    p.rv_pool.cy += rng.uniform(-2.0, 2.0);
    p.rv_pool.cz += rng.uniform(-2.0, 2.0);
    jitter_axes(p.la_pool, 0.10);
    jitter_axes(p.ra_pool, 0.10);
    p.la_pool.cx += rng.uniform(-1.0, 1.0);
    p.la_pool.cy += rng.uniform(-1.0, 1.0);
    p.ra_pool.cx += rng.uniform(-1.0, 1.0);
    p.ra_pool.cy += rng.uniform(-1.0, 1.0);
    p.lv_es_scale = std::clamp(base.lv_es_scale + rng.uniform(-0.06, 0.06), 0.05, 1.0);
    p.rv_es_scale = std::clamp(base.rv_es_scale + rng.uniform(-0.05, 0.05), 0.05, 1.0);
    p.atrial_min_scale = std::clamp(base.atrial_min_scale + rng.uniform(-0.05, 0.05), 0.05, 1.0);
    p.heart_rate_bpm = rng.uniform(55.0, 90.0);
    p.systole_sharpness = rng.uniform(0.8, 1.3);
    return p;
}

namespace {

void fill_tabular(const PhantomParams& p, const PhenotypeSet& ph, const DiseaseLabels& labels,
                  TabularRecord& rec, Rng& rng) {
    const auto& schema = TabularSchema::reference();
    const std::size_t F = schema.size();
    rec.values.assign(F, 0.0);
    rec.missing.assign(F, 0);

    std::vector<double> vals(F, 0.0);
    auto idx_of = [&schema](const std::string& name) {
        for (std::size_t i = 0; i < schema.size(); ++i)
            if (schema.features[i].name == name) return i;
        throw ConfigError("reference schema is missing feature '" + name + "'");
    };
    auto set = [&](const std::string& name, double v) { vals[idx_of(name)] = v; };

    // cardiac phenotypes, straight from the analytic ground truth
    set("LVEDV (mL)", ph.lvedv);
    set("LVESV (mL)", ph.lvesv);
    set("LVSV (mL)", ph.lvsv);
    set("LVEF (%)", ph.lvef);
    set("LVCO (L/min)", ph.lvco);
    set("LVM (g)", ph.lvm);
    set("RVEDV (mL)", ph.rvedv);
    set("RVESV (mL)", ph.rvesv);
    set("RVSV (mL)", ph.rvsv);
    set("RVEF (%)", ph.rvef);

    // anthropometrics
    const double height = rng.normal(169.0, 9.0);
    const double bmi = std::max(16.0, rng.normal(26.5, 3.8));
    const double weight = bmi * (height / 100.0) * (height / 100.0);
    const double body_fat = std::clamp(rng.normal(30.0, 7.0), 8.0, 55.0);
    const double fat_mass = weight * body_fat / 100.0;
    const double ffm = weight - fat_mass;
    const double bsa = std::sqrt(height * weight / 3600.0);
    set("Height", height);
    set("Standing height", height + rng.normal(0.0, 0.5));
    set("Sitting height", 0.52 * height + rng.normal(0.0, 2.0));
    set("Weight", weight);
    set("Body mass index (BMI)", bmi);
    set("Body fat percentage", body_fat);
    set("Whole body fat mass", fat_mass);
    set("Whole body fat-free mass", ffm);
    set("Whole body water mass", 0.73 * ffm);
    set("Total mass", weight + rng.normal(0.0, 0.3));
    set("Basal metabolic rate", 370.0 + 21.6 * ffm);
    set("Impedance of whole body", rng.normal(550.0, 60.0));
    set("Waist circumference", rng.normal(90.0, 12.0));
    set("Hip circumference", rng.normal(102.0, 9.0));
    set("Body surface area", bsa);

    // heart-rate family, correlated with the phantom's cycle
    const double hr = p.heart_rate_bpm;
    set("Pulse rate (mean)", hr + rng.normal(0.0, 2.0));
    set("Average heart rate", hr + rng.normal(0.0, 1.5));
    const double vr = hr + rng.normal(0.0, 3.0);
    set("Ventricular rate", vr);
    set("Heart rate during PWA", hr + rng.normal(0.0, 2.5));
    set("RR interval", 60000.0 / vr);
    set("PP interval", 60000.0 / vr + rng.normal(0.0, 10.0));
    set("P duration", rng.normal(100.0, 12.0));
    set("QRS duration", rng.normal(92.0, 10.0));
    set("PQ interval", rng.normal(160.0, 18.0));

    // cardiac output family, correlated with the analytic phenotypes
    const double co = ph.lvco + rng.normal(0.0, 0.3);
    set("Cardiac output", co);
    set("Cardiac index", co / bsa);
    set("Cardiac output during PWA", ph.lvco + rng.normal(0.0, 0.5));
    set("Cardiac index during PWA", (ph.lvco + rng.normal(0.0, 0.5)) / bsa);
    set("Stroke volume during PWA", ph.lvsv + rng.normal(0.0, 4.0));

    // blood pressures; hypertensive subjects trend higher
    const double bp_shift = 8.0 * (labels.flags[3] + labels.flags[4]);
    const double sbp = rng.normal(133.0 + bp_shift, 13.0);
    const double dbp = rng.normal(80.0 + 0.5 * bp_shift, 9.0);
    set("Systolic blood pressure (mean)", sbp);
    set("Diastolic blood pressure (mean)", dbp);
    set("Systolic brachial blood pressure during PWA", sbp + rng.normal(0.0, 4.0));
    set("Diastolic brachial blood pressure during PWA", dbp + rng.normal(0.0, 3.0));
    set("Peripheral pulse pressure during PWA", sbp - dbp + rng.normal(0.0, 3.0));
    set("Central systolic blood pressure during PWA", sbp - rng.normal(8.0, 3.0));
    set("Central pulse pressure during PWA", sbp - dbp - rng.normal(6.0, 3.0));
    set("Central augmentation pressure during PWA", rng.normal(9.0, 4.0));
    set("Augmentation index for PWA", rng.normal(25.0, 9.0));
    set("Mean arterial pressure during PWA", dbp + (sbp - dbp) / 3.0 + rng.normal(0.0, 2.0));
    set("End systolic pressure during PWA", rng.normal(105.0, 10.0));
    set("End systolic pressure index during PWA", rng.normal(95.0, 9.0));
    set("Number of beats in waveform average for PWA", std::floor(rng.uniform(6.0, 16.0)));
    set("Pulse wave Arterial Stiffness index", rng.normal(9.0, 2.5));

    // lifestyle numericals
    set("Cooked vegetable intake", std::max(0.0, rng.normal(2.7, 1.2)));
    set("Salad / raw vegetable intake", std::max(0.0, rng.normal(2.2, 1.2)));
    set("Cardiac operations performed", labels.flags[0] ? std::floor(rng.uniform(0.0, 3.0)) : 0.0);
    set("Duration of walks", std::max(0.0, rng.normal(45.0, 25.0)));
    set("Duration of moderate activity", std::max(0.0, rng.normal(50.0, 30.0)));
    set("Duration of vigorous activity", std::max(0.0, rng.normal(30.0, 25.0)));
    set("Time spent watching television (TV)", std::max(0.0, rng.normal(2.8, 1.4)));
    set("Time spent using computer", std::max(0.0, rng.normal(1.6, 1.3)));
    set("Time spent driving", std::max(0.0, rng.normal(1.0, 0.9)));
    set("Sleep duration", std::clamp(rng.normal(7.1, 1.0), 3.0, 12.0));
    set("Exposure to tobacco smoke at home", std::max(0.0, rng.normal(0.6, 1.3)));
    set("Exposure to tobacco smoke outside home", std::max(0.0, rng.normal(0.9, 1.5)));
    const bool ever_smoked = rng.bernoulli(0.45);
    const double pack_years = ever_smoked ? std::max(0.0, rng.normal(12.0, 9.0)) : 0.0;
    set("Pack years of smoking", pack_years);
    set("Pack years adult smoking as proportion of life span exposed to smoking",
        ever_smoked ? std::clamp(pack_years / rng.uniform(35.0, 60.0), 0.0, 1.0) : 0.0);

    // binaries; diagnosis fields agree with the sampled disease flags most
    // of the time so the tabular modality carries label signal
    auto binflag = [&](const std::string& name, bool truth, double agree) {
        set(name, (rng.bernoulli(agree) ? truth : !truth) ? 1.0 : 0.0);
    };
    set("Sex", rng.bernoulli(0.5) ? 1.0 : 0.0);
    binflag("Diabetes diagnosis", labels.flags[5], 0.92);
    binflag("Heart attack diagnosed by doctor", labels.flags[1], 0.92);
    binflag("Angina diagnosed by doctor", labels.flags[0] && rng.bernoulli(0.6), 0.95);
    binflag("Stroke diagnosed by doctor", labels.flags[2], 0.92);
    binflag("High blood pressure diagnosed by doctor", labels.flags[4], 0.90);
    set("Cholesterol lowering medication regularly taken",
        rng.bernoulli(labels.flags[0] ? 0.7 : 0.15) ? 1.0 : 0.0);
    set("Blood pressure medication regularly taken",
        rng.bernoulli((labels.flags[3] || labels.flags[4]) ? 0.75 : 0.10) ? 1.0 : 0.0);
    set("Insulin medication regularly taken",
        (labels.flags[5] && rng.bernoulli(0.4)) ? 1.0 : 0.0);
    set("Hormone replacement therapy medication regularly taken",
        rng.bernoulli(0.12) ? 1.0 : 0.0);
    set("Oral contraceptive pill or minipill medication regularly taken",
        rng.bernoulli(0.08) ? 1.0 : 0.0);
    set("Pace-maker", rng.bernoulli(0.02) ? 1.0 : 0.0);
    binflag("Ever had diabetes (Type I or Type II)", labels.flags[5], 0.95);
    set("Long-standing illness, disability or infirmity",
        rng.bernoulli(0.2 + 0.25 * (labels.flags[0] || labels.flags[2])) ? 1.0 : 0.0);
    set("Worrier / anxious feelings", rng.bernoulli(0.3) ? 1.0 : 0.0);
    // shortness of breath trends with reduced ejection fraction
    set("Shortness of breath walking on level ground",
        rng.bernoulli(sigmoid(0.25 * (52.0 - ph.lvef))) ? 1.0 : 0.0);
    set("Tense / 'highly strung'", rng.bernoulli(0.18) ? 1.0 : 0.0);
    set("Ever smoked", ever_smoked ? 1.0 : 0.0);

    // categoricals: seeded draws; smoking fields stay consistent
    for (std::size_t i = 0; i < F; ++i) {
        const auto& f = schema.features[i];
        if (f.kind != FeatureKind::Categorical) continue;
        vals[i] = static_cast<double>(rng.below(f.cardinality));
    }
    set("Smoking status", ever_smoked ? (rng.bernoulli(0.4) ? 2.0 : 1.0) : 0.0);
    set("Current tobacco smoking", ever_smoked && rng.bernoulli(0.35) ? 2.0 : 0.0);
    set("Past tobacco smoking", ever_smoked ? std::floor(rng.uniform(1.0, 4.0)) : 0.0);

    rec.values = vals;
    for (std::size_t i = 0; i < F; ++i)
        rec.missing[i] = rng.bernoulli(p.tabular_missing_rate) ? 1 : 0;
    // keep sex observed; it anchors the categorical embeddings
    rec.missing[idx_of("Sex")] = 0;
    rec.validate(schema);
}

std::vector<std::string> synthesize_codes(const DiseaseLabels& labels, Rng& rng) {
    // Codes are drawn so that mapping them back through the code lists
    // reproduces the flags of the five code-backed diseases exactly.
    static const std::vector<std::string> infarct_codes = {"I210", "I211", "I212", "I213",
                                                           "I214", "I219", "I252"};
    static const std::vector<std::string> cad_only_codes = {
        "I200", "I201", "I208", "I209", "I220", "I221", "I228", "I229", "I240",
        "I248", "I249", "I250", "I251", "I253", "I254", "I255", "I256", "I258", "I259"};
    static const std::vector<std::string> stroke_codes = {"I630", "I631", "I632", "I633",
                                                          "I634", "I635", "I636", "I638", "I639"};
    static const std::vector<std::string> hyp_codes = {"I10",  "I110", "I119", "I120", "I129",
                                                       "I130", "I131", "I132", "I139", "I150",
                                                       "I151", "I152", "I158", "I159"};
    static const std::vector<std::string> diabetes_codes = {"E109", "E119", "E110", "E111",
                                                            "E112", "E113", "E114", "E139"};
    std::vector<std::string> codes;
    auto pick = [&rng](const std::vector<std::string>& v) {
        return v[static_cast<std::size_t>(rng.below(v.size()))];
    };
    if (labels.flags[1])
        codes.push_back(pick(infarct_codes));
    else if (labels.flags[0])
        codes.push_back(pick(cad_only_codes));
    if (labels.flags[2]) codes.push_back(pick(stroke_codes));
    if (labels.flags[3]) codes.push_back(pick(hyp_codes));
    if (labels.flags[5]) codes.push_back(pick(diabetes_codes));
    return codes;
}

}  // namespace

PhantomSubject generate_phantom_subject(const PhantomParams& p, std::uint64_t seed) {
    p.validate();

    // degenerate geometry: the myocardial shell must stay thicker than a
    // voxel even at maximal contraction
    {
        const double s_in = ventricular_scale(p, 0.5, p.lv_es_scale);
        const double s_out = outer_scale_for_constant_shell(p.lv_pool, p.lv_wall_mm, s_in);
        const double wall_es =
            std::min({s_out * (p.lv_pool.ax + p.lv_wall_mm) - s_in * p.lv_pool.ax,
                      s_out * (p.lv_pool.ay + p.lv_wall_mm) - s_in * p.lv_pool.ay,
                      s_out * (p.lv_pool.az + p.lv_wall_mm) - s_in * p.lv_pool.az});
        if (wall_es < p.pixel_mm)
            throw ConfigError("phantom: myocardial shell thinner than a voxel at end-systole (" +
                              std::to_string(wall_es) + " mm)");
    }

    PhantomSubject subj;
    const std::size_t H = p.image_size, W = p.image_size, F = p.frames;
    const std::size_t n_planes = p.sa_planes + p.la_planes;

    subj.stack.frames = F;
    subj.stack.height = H;
    subj.stack.width = W;
    subj.stack.pixel_mm = p.pixel_mm;
    subj.stack.sa_gap_mm = p.sa_gap_mm;
    subj.mask.frames = F;
    subj.mask.height = H;
    subj.mask.width = W;

    std::vector<FrameGeometry> geom;
    geom.reserve(F);
    for (std::size_t f = 0; f < F; ++f)
        geom.push_back(frame_geometry(p, static_cast<double>(f) / static_cast<double>(F)));

    const double half_h = 0.5 * static_cast<double>(H - 1);
    const double half_w = 0.5 * static_cast<double>(W - 1);

    for (std::size_t pl = 0; pl < n_planes; ++pl) {
        const bool is_la = pl >= p.sa_planes;
        PlaneMeta meta;
        meta.plane_index = pl;
        double z_pos = 0, angle = 0, cos_t = 1, sin_t = 0;
        if (!is_la) {
            meta.view = ViewKind::SA;
            z_pos = p.sa_center_z +
                    (static_cast<double>(pl) - 0.5 * static_cast<double>(p.sa_planes - 1)) *
                        p.sa_gap_mm;
            meta.slice_position = z_pos;
        } else {
            meta.view = ViewKind::LA;
            const std::size_t k = pl - p.sa_planes;
            angle = 180.0 * static_cast<double>(k) / static_cast<double>(p.la_planes);
            meta.slice_position = angle;
            cos_t = std::cos(angle * kPi / 180.0);
            sin_t = std::sin(angle * kPi / 180.0);
        }
        subj.stack.planes.push_back(meta);

        std::vector<float> img(F * H * W);
        std::vector<std::uint8_t> lab(F * H * W);
        Rng noise(derive_seed(seed, Stream::PhantomNoise, pl));
        std::size_t at = 0;
        for (std::size_t f = 0; f < F; ++f) {
            const FrameGeometry& g = geom[f];
            for (std::size_t i = 0; i < H; ++i) {
                for (std::size_t j = 0; j < W; ++j, ++at) {
                    double x, y, z;
                    if (!is_la) {
                        x = (static_cast<double>(j) - half_w) * p.pixel_mm;
                        y = (static_cast<double>(i) - half_h) * p.pixel_mm;
                        z = z_pos;
                    } else {
                        const double u = (static_cast<double>(j) - half_w) * p.pixel_mm;
                        const double v = (half_h - static_cast<double>(i)) * p.pixel_mm;
                        x = u * cos_t;
                        y = u * sin_t;
                        z = p.la_center_z + v;
                    }
                    const TissueClass cls = classify(g, x, y, z, is_la);
                    lab[at] = static_cast<std::uint8_t>(cls);
                    double v = p.intensity[static_cast<std::size_t>(cls)];
                    if (p.noise_sigma > 0) v += noise.normal(0.0, p.noise_sigma);
                    img[at] = static_cast<float>(v);
                }
            }
        }
        percentile_normalize(img);
        subj.stack.data.push_back(std::move(img));
        subj.mask.labels.push_back(std::move(lab));
    }

    subj.phenotypes = analytic_phenotypes(p);
    subj.phenotypes.validate();

    Rng label_rng(derive_seed(seed, Stream::PhantomLabels, 0));
    subj.labels = sample_labels(subj.phenotypes.lvef, label_rng);
    subj.icd_codes = synthesize_codes(subj.labels, label_rng);

    Rng tab_rng(derive_seed(seed, Stream::PhantomTabular, 0));
    fill_tabular(p, subj.phenotypes, subj.labels, subj.tabular, tab_rng);

    subj.stack.validate();
    return subj;
}

double mask_volume_ml(const CmrStack& stack, const SegMask& mask, TissueClass cls,
                      std::size_t frame) {
    require(frame < stack.frames, "mask_volume_ml: frame out of range");
    require(mask.labels.size() == stack.planes.size(), "mask_volume_ml: mask/stack mismatch");
    const std::size_t foff = frame * stack.height * stack.width;
    const std::size_t n = stack.height * stack.width;
    std::size_t count = 0;
    for (std::size_t pl = 0; pl < stack.planes.size(); ++pl) {
        if (stack.planes[pl].view != ViewKind::SA) continue;
        const auto& lab = mask.labels[pl];
        for (std::size_t i = 0; i < n; ++i)
            if (lab[foff + i] == static_cast<std::uint8_t>(cls)) ++count;
    }
    return static_cast<double>(count) * stack.pixel_mm * stack.pixel_mm * stack.sa_gap_mm / 1000.0;
}

}  // namespace cinetab
