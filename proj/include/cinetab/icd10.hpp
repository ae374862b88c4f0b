// ICD-10 diagnosis codes -> per-disease binary labels.
#pragma once

#include <set>
#include <string>
#include <vector>

#include "cinetab/phantom.hpp"

namespace cinetab {

// A flag is set iff the code set intersects that disease's code list.
// Unknown codes are ignored. High blood pressure has no code list and is
// never set by this mapping.
DiseaseLabels icd10_to_disease_labels(const std::set<std::string>& codes);

// The code list for one disease (empty for high blood pressure).
const std::vector<std::string>& icd10_codes_for(std::size_t disease_idx);

}  // namespace cinetab
