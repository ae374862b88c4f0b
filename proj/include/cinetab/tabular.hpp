// Tabular feature schema, per-subject records, and z-score normalization
// with mean imputation.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cinetab/common.hpp"

namespace cinetab {

enum class FeatureKind : std::uint8_t { Numerical = 0, Binary = 1, Categorical = 2 };

struct FeatureDesc {
    std::string name;
    FeatureKind kind = FeatureKind::Numerical;
    std::size_t cardinality = 0;     // categorical only; binary is implicitly 2
    bool cardiac_phenotype = false;  // drives the stage-III head split

    std::size_t lookup_cardinality() const {
        return kind == FeatureKind::Binary ? 2 : cardinality;
    }

    bool operator==(const FeatureDesc&) const = default;
};

struct TabularSchema {
    std::vector<FeatureDesc> features;

    std::size_t size() const { return features.size(); }
    std::size_t count(FeatureKind k) const;
    std::vector<std::size_t> indices(FeatureKind k) const;
    // numerical features that are not cardiac phenotypes (physiological head)
    std::vector<std::size_t> physio_indices() const;
    std::vector<std::size_t> phenotype_feature_indices() const;

    bool operator==(const TabularSchema&) const = default;

    // The shipped reference schema: 117 features covering anthropometric,
    // physiological, lifestyle, and cardiac phenotype fields.
    static const TabularSchema& reference();
};

struct TabularRecord {
    std::vector<double> values;        // numerical value / binary 0-1 / category index
    std::vector<std::uint8_t> missing;

    void validate(const TabularSchema& schema) const;
};

// Fitting-split statistics retained for the inverse transform at report time.
struct NormStats {
    std::vector<double> mean;  // per feature; 0 for non-numerical
    std::vector<double> stdev;
    std::vector<double> mode;  // imputation value for binary/categorical; -1 when none
    std::vector<std::string> warnings;

    double to_standard(std::size_t f, double raw) const { return (raw - mean[f]) / stdev[f]; }
    double from_standard(std::size_t f, double z) const { return z * stdev[f] + mean[f]; }
};

// Fits mean/population-std (and categorical modes) on the given records.
NormStats fit_normalization(const std::vector<TabularRecord>& records,
                            const TabularSchema& schema);

// Standardizes numerical features and imputes missing entries: numerical ->
// mean (0 post-standardization), binary/categorical -> fitting-split mode.
// A categorical with no observable mode keeps value = cardinality, the
// reserved imputation row of the embedding lookup.
TabularRecord apply_normalization(const TabularRecord& r, const TabularSchema& schema,
                                  const NormStats& stats);

// Fit-and-apply in one call.
std::pair<std::vector<TabularRecord>, NormStats> normalize_tabular(
    const std::vector<TabularRecord>& records, const TabularSchema& schema);

}  // namespace cinetab
