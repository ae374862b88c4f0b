#include "cinetab/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

namespace cinetab {

std::size_t TabularSchema::count(FeatureKind k) const {
    std::size_t n = 0;
    for (const auto& f : features)
        if (f.kind == k) ++n;
    return n;
}

std::vector<std::size_t> TabularSchema::indices(FeatureKind k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].kind == k) out.push_back(i);
    return out;
}

std::vector<std::size_t> TabularSchema::physio_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].kind == FeatureKind::Numerical && !features[i].cardiac_phenotype)
            out.push_back(i);
    return out;
}

std::vector<std::size_t> TabularSchema::phenotype_feature_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].cardiac_phenotype) out.push_back(i);
    return out;
}

void TabularRecord::validate(const TabularSchema& schema) const {
    require(values.size() == schema.size() && missing.size() == schema.size(),
            "tabular record length " + std::to_string(values.size()) +
                " does not match schema length " + std::to_string(schema.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (missing[i]) continue;
        const auto& f = schema.features[i];
        if (f.kind == FeatureKind::Binary) {
            if (values[i] != 0.0 && values[i] != 1.0)
                throw ConfigError("binary feature '" + f.name + "' must be 0 or 1");
        } else if (f.kind == FeatureKind::Categorical) {
            if (values[i] < 0 || values[i] >= static_cast<double>(f.cardinality) ||
                values[i] != std::floor(values[i]))
                throw ConfigError("categorical feature '" + f.name + "' out of range");
        }
    }
}

namespace {

struct Entry {
    const char* name;
    FeatureKind kind;
    std::size_t card;
    bool pheno;
};

constexpr FeatureKind kNum = FeatureKind::Numerical;
constexpr FeatureKind kBin = FeatureKind::Binary;
constexpr FeatureKind kCat = FeatureKind::Categorical;

const Entry kReferenceEntries[] = {
    // numerical
    {"Pulse wave Arterial Stiffness index", kNum, 0, false},
    {"Systolic blood pressure (mean)", kNum, 0, false},
    {"Diastolic blood pressure (mean)", kNum, 0, false},
    {"Pulse rate (mean)", kNum, 0, false},
    {"Body fat percentage", kNum, 0, false},
    {"Whole body fat mass", kNum, 0, false},
    {"Whole body fat-free mass", kNum, 0, false},
    {"Whole body water mass", kNum, 0, false},
    {"Body mass index (BMI)", kNum, 0, false},
    {"Cooked vegetable intake", kNum, 0, false},
    {"Salad / raw vegetable intake", kNum, 0, false},
    {"Cardiac operations performed", kNum, 0, false},
    {"Total mass", kNum, 0, false},
    {"Basal metabolic rate", kNum, 0, false},
    {"Impedance of whole body", kNum, 0, false},
    {"Waist circumference", kNum, 0, false},
    {"Hip circumference", kNum, 0, false},
    {"Standing height", kNum, 0, false},
    {"Height", kNum, 0, false},
    {"Sitting height", kNum, 0, false},
    {"Weight", kNum, 0, false},
    {"Ventricular rate", kNum, 0, false},
    {"P duration", kNum, 0, false},
    {"QRS duration", kNum, 0, false},
    {"PQ interval", kNum, 0, false},
    {"RR interval", kNum, 0, false},
    {"PP interval", kNum, 0, false},
    {"Cardiac output", kNum, 0, false},
    {"Cardiac index", kNum, 0, false},
    {"Average heart rate", kNum, 0, false},
    {"Body surface area", kNum, 0, false},
    {"Duration of walks", kNum, 0, false},
    {"Duration of moderate activity", kNum, 0, false},
    {"Duration of vigorous activity", kNum, 0, false},
    {"Time spent watching television (TV)", kNum, 0, false},
    {"Time spent using computer", kNum, 0, false},
    {"Time spent driving", kNum, 0, false},
    {"Heart rate during PWA", kNum, 0, false},
    {"Systolic brachial blood pressure during PWA", kNum, 0, false},
    {"Diastolic brachial blood pressure during PWA", kNum, 0, false},
    {"Peripheral pulse pressure during PWA", kNum, 0, false},
    {"Central systolic blood pressure during PWA", kNum, 0, false},
    {"Central pulse pressure during PWA", kNum, 0, false},
    {"Number of beats in waveform average for PWA", kNum, 0, false},
    {"Central augmentation pressure during PWA", kNum, 0, false},
    {"Augmentation index for PWA", kNum, 0, false},
    {"Cardiac output during PWA", kNum, 0, false},
    {"End systolic pressure during PWA", kNum, 0, false},
    {"End systolic pressure index during PWA", kNum, 0, false},
    {"Stroke volume during PWA", kNum, 0, false},
    {"Mean arterial pressure during PWA", kNum, 0, false},
    {"Cardiac index during PWA", kNum, 0, false},
    {"Sleep duration", kNum, 0, false},
    {"Exposure to tobacco smoke at home", kNum, 0, false},
    {"Exposure to tobacco smoke outside home", kNum, 0, false},
    {"Pack years of smoking", kNum, 0, false},
    {"Pack years adult smoking as proportion of life span exposed to smoking", kNum, 0, false},
    {"LVEDV (mL)", kNum, 0, true},
    {"LVESV (mL)", kNum, 0, true},
    {"LVSV (mL)", kNum, 0, true},
    {"LVEF (%)", kNum, 0, true},
    {"LVCO (L/min)", kNum, 0, true},
    {"LVM (g)", kNum, 0, true},
    {"RVEDV (mL)", kNum, 0, true},
    {"RVESV (mL)", kNum, 0, true},
    {"RVSV (mL)", kNum, 0, true},
    {"RVEF (%)", kNum, 0, true},
    // binary
    {"Worrier / anxious feelings", kBin, 0, false},
    {"Shortness of breath walking on level ground", kBin, 0, false},
    {"Sex", kBin, 0, false},
    {"Diabetes diagnosis", kBin, 0, false},
    {"Heart attack diagnosed by doctor", kBin, 0, false},
    {"Angina diagnosed by doctor", kBin, 0, false},
    {"Stroke diagnosed by doctor", kBin, 0, false},
    {"High blood pressure diagnosed by doctor", kBin, 0, false},
    {"Cholesterol lowering medication regularly taken", kBin, 0, false},
    {"Blood pressure medication regularly taken", kBin, 0, false},
    {"Insulin medication regularly taken", kBin, 0, false},
    {"Hormone replacement therapy medication regularly taken", kBin, 0, false},
    {"Oral contraceptive pill or minipill medication regularly taken", kBin, 0, false},
    {"Pace-maker", kBin, 0, false},
    {"Ever had diabetes (Type I or Type II)", kBin, 0, false},
    {"Long-standing illness, disability or infirmity", kBin, 0, false},
    {"Tense / 'highly strung'", kBin, 0, false},
    {"Ever smoked", kBin, 0, false},
    // categorical
    {"Sleeplessness / insomnia", kCat, 3, false},
    {"Frequency of heavy DIY in last 4 weeks", kCat, 6, false},
    {"Alcohol intake frequency", kCat, 6, false},
    {"Processed meat intake", kCat, 6, false},
    {"Beef intake", kCat, 6, false},
    {"Pork intake", kCat, 6, false},
    {"Lamb/mutton intake", kCat, 6, false},
    {"Overall health rating", kCat, 4, false},
    {"Alcohol usually taken with meals", kCat, 3, false},
    {"Alcohol drinker status", kCat, 3, false},
    {"Frequency of drinking alcohol", kCat, 5, false},
    {"Frequency of consuming six or more units of alcohol", kCat, 5, false},
    {"Amount of alcohol drunk on a typical drinking day", kCat, 5, false},
    {"Falls in the last year", kCat, 3, false},
    {"Weight change compared with 1 year ago", kCat, 3, false},
    {"Number of days/week walked 10+ minutes", kCat, 8, false},
    {"Number of days/week of moderate physical activity 10+ minutes", kCat, 8, false},
    {"Number of days/week of vigorous physical activity 10+ minutes", kCat, 8, false},
    {"Usual walking pace", kCat, 3, false},
    {"Frequency of stair climbing in last 4 weeks", kCat, 6, false},
    {"Frequency of walking for pleasure in last 4 weeks", kCat, 7, false},
    {"Duration walking for pleasure", kCat, 7, false},
    {"Frequency of strenuous sports in last 4 weeks", kCat, 7, false},
    {"Duration of strenuous sports", kCat, 7, false},
    {"Duration of light DIY", kCat, 7, false},
    {"Duration of heavy DIY", kCat, 7, false},
    {"Frequency of other exercises in last 4 weeks", kCat, 7, false},
    {"Duration of other exercises", kCat, 7, false},
    {"Current tobacco smoking", kCat, 3, false},
    {"Past tobacco smoking", kCat, 4, false},
    {"Smoking/smokers in household", kCat, 3, false},
    {"Smoking status", kCat, 3, false},
};

}  // namespace

const TabularSchema& TabularSchema::reference() {
    static const TabularSchema schema = [] {
        TabularSchema s;
        for (const auto& e : kReferenceEntries)
            s.features.push_back({e.name, e.kind, e.card, e.pheno});
        return s;
    }();
    return schema;
}

NormStats fit_normalization(const std::vector<TabularRecord>& records,
                            const TabularSchema& schema) {
    const std::size_t F = schema.size();
    for (const auto& r : records) r.validate(schema);
    NormStats st;
    st.mean.assign(F, 0.0);
    st.stdev.assign(F, 1.0);
    st.mode.assign(F, -1.0);
    for (std::size_t f = 0; f < F; ++f) {
        const auto& desc = schema.features[f];
        if (desc.kind == FeatureKind::Numerical) {
            double s = 0;
            std::size_t n = 0;
            for (const auto& r : records)
                if (!r.missing[f]) {
                    s += r.values[f];
                    ++n;
                }
            if (n == 0) {
                st.warnings.push_back("feature '" + desc.name +
                                      "' has no observed values; using mean 0, std 1");
                continue;
            }
            const double mean = s / static_cast<double>(n);
            double var = 0;
            for (const auto& r : records)
                if (!r.missing[f]) {
                    const double d = r.values[f] - mean;
                    var += d * d;
                }
            var /= static_cast<double>(n);  // population variance
            st.mean[f] = mean;
            if (var <= 1e-24 || n < 2) {
                st.stdev[f] = 1.0;
                st.warnings.push_back("feature '" + desc.name +
                                      "' has zero variance on the fitting split; std clamped to 1");
            } else {
                st.stdev[f] = std::sqrt(var);
            }
        } else {
            std::map<long long, std::size_t> counts;
            for (const auto& r : records)
                if (!r.missing[f]) ++counts[static_cast<long long>(r.values[f])];
            if (counts.empty()) {
                st.warnings.push_back("feature '" + desc.name +
                                      "' has no observed values; imputing to the reserved row");
                continue;  // mode stays -1
            }
            long long best = counts.begin()->first;
            std::size_t best_n = counts.begin()->second;
            for (const auto& [v, n] : counts)
                if (n > best_n) {
                    best = v;
                    best_n = n;
                }
            st.mode[f] = static_cast<double>(best);
        }
    }
    for (const auto& w : st.warnings) std::cerr << "[normalize_tabular] warning: " << w << "\n";
    return st;
}

TabularRecord apply_normalization(const TabularRecord& r, const TabularSchema& schema,
                                  const NormStats& stats) {
    r.validate(schema);
    TabularRecord out = r;
    for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& desc = schema.features[f];
        if (desc.kind == FeatureKind::Numerical) {
            out.values[f] = r.missing[f] ? 0.0 : stats.to_standard(f, r.values[f]);
        } else if (r.missing[f]) {
            out.values[f] = stats.mode[f] >= 0
                                ? stats.mode[f]
                                : static_cast<double>(desc.lookup_cardinality());
        }
    }
    return out;
}

std::pair<std::vector<TabularRecord>, NormStats> normalize_tabular(
    const std::vector<TabularRecord>& records, const TabularSchema& schema) {
    NormStats stats = fit_normalization(records, schema);
    std::vector<TabularRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(apply_normalization(r, schema, stats));
    return {std::move(out), std::move(stats)};
}

}  // namespace cinetab
