#include "cinetab/icd10.hpp"

namespace cinetab {

namespace {

const std::vector<std::string> kCad = {
    "I200", "I201", "I208", "I209", "I220", "I221", "I228", "I229", "I210",
    "I211", "I212", "I213", "I214", "I219", "I240", "I248", "I249", "I250",
    "I251", "I252", "I253", "I254", "I255", "I256", "I258", "I259"};

const std::vector<std::string> kStroke = {"I630", "I631", "I632", "I633", "I634",
                                          "I635", "I636", "I638", "I639"};

const std::vector<std::string> kHypertension = {"I10",  "I110", "I119", "I120", "I129",
                                                "I130", "I131", "I132", "I139", "I150",
                                                "I151", "I152", "I158", "I159"};

const std::vector<std::string> kInfarct = {"I210", "I211", "I212", "I213",
                                           "I214", "I219", "I252"};

const std::vector<std::string> kDiabetes = {
    "E100", "E101", "E102", "E103", "E104", "E105", "E106", "E107", "E108", "E109",
    "E110", "E111", "E112", "E113", "E114", "E115", "E116", "E117", "E118", "E119",
    "E121", "E123", "E125", "E128", "E129", "E130", "E131", "E132", "E133", "E134",
    "E135", "E136", "E137", "E138", "E139", "E140", "E141", "E142", "E143", "E144",
    "E145", "E146", "E147", "E148", "E149"};

const std::vector<std::string> kNone = {};

}  // namespace

const std::vector<std::string>& icd10_codes_for(std::size_t disease_idx) {
    switch (disease_idx) {
        case 0: return kCad;
        case 1: return kInfarct;
        case 2: return kStroke;
        case 3: return kHypertension;
        case 4: return kNone;  // high blood pressure: no diagnosis-code source
        case 5: return kDiabetes;
        default: throw UsageError("disease index out of range");
    }
}

DiseaseLabels icd10_to_disease_labels(const std::set<std::string>& codes) {
    DiseaseLabels out;
    for (std::size_t d = 0; d < kNumDiseases; ++d) {
        for (const auto& c : icd10_codes_for(d)) {
            if (codes.count(c)) {
                out.flags[d] = 1;
                break;
            }
        }
    }
    return out;
}

}  // namespace cinetab
