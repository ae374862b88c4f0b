// On-disk dataset: one directory per subject, binary little-endian blobs for
// images/masks and JSON sidecars for everything else. Round trips are
// bit-exact.
//
//   <root>/schema.json
//   <root>/subjects/<id>/meta.json
//   <root>/subjects/<id>/images.f32
//   <root>/subjects/<id>/masks.u8
//   <root>/subjects/<id>/tabular.json
//   <root>/subjects/<id>/labels.json
//   <root>/subjects/<id>/phenotypes.json
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cinetab/phantom.hpp"
#include "cinetab/tabular.hpp"

namespace cinetab {

struct Subject {
    std::string id;
    std::uint64_t seed = 0;
    CmrStack stack;
    SegMask mask;
    TabularRecord tabular;
    PhenotypeSet phenotypes;
    DiseaseLabels labels;
    std::vector<std::string> icd_codes;
};

struct Dataset {
    TabularSchema schema;
    std::vector<Subject> subjects;
};

void write_dataset(const Dataset& ds, const std::filesystem::path& root);
Dataset read_dataset(const std::filesystem::path& root);

// Generates a cohort: subject i gets jittered geometry and its own seed, both
// derived from base_seed. Deterministic.
Dataset generate_dataset(const PhantomParams& base, std::size_t n_subjects,
                         std::uint64_t base_seed);

// Disjoint contiguous splits by subject order: train, then val, then test.
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};
SplitIndices split_dataset(const Dataset& ds, double train_frac, double val_frac);

}  // namespace cinetab
