#include "cinetab/dataset.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

namespace cinetab {

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are little-endian; big-endian hosts are not supported");

using nlohmann::json;

namespace {
constexpr int kFormatVersion = 1;

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + p.string());
    f << s;
    if (!f) throw IoError("write failed: " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open: " + p.string());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

json parse_json(const std::filesystem::path& p) {
    try {
        return json::parse(read_text(p));
    } catch (const json::parse_error& e) {
        throw IoError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

template <typename T>
void write_blob(const std::filesystem::path& p, const std::vector<std::vector<T>>& planes) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + p.string());
    for (const auto& plane : planes)
        f.write(reinterpret_cast<const char*>(plane.data()),
                static_cast<std::streamsize>(plane.size() * sizeof(T)));
    if (!f) throw IoError("write failed: " + p.string());
}

template <typename T>
std::vector<std::vector<T>> read_blob(const std::filesystem::path& p, std::size_t n_planes,
                                      std::size_t plane_len) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open: " + p.string());
    f.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(f.tellg());
    const std::size_t want = n_planes * plane_len * sizeof(T);
    if (bytes != want)
        throw IoError("corrupt blob " + p.string() + ": " + std::to_string(bytes) +
                      " bytes, expected " + std::to_string(want));
    f.seekg(0);
    std::vector<std::vector<T>> planes(n_planes);
    for (auto& plane : planes) {
        plane.resize(plane_len);
        f.read(reinterpret_cast<char*>(plane.data()),
               static_cast<std::streamsize>(plane_len * sizeof(T)));
    }
    if (!f) throw IoError("read failed: " + p.string());
    return planes;
}

const char* kind_str(FeatureKind k) {
    switch (k) {
        case FeatureKind::Numerical: return "numerical";
        case FeatureKind::Binary: return "binary";
        case FeatureKind::Categorical: return "categorical";
    }
    return "?";
}

FeatureKind kind_from(const std::string& s) {
    if (s == "numerical") return FeatureKind::Numerical;
    if (s == "binary") return FeatureKind::Binary;
    if (s == "categorical") return FeatureKind::Categorical;
    throw IoError("unknown feature kind '" + s + "' in schema");
}

json schema_to_json(const TabularSchema& schema) {
    json feats = json::array();
    for (const auto& f : schema.features) {
        json e;
        e["name"] = f.name;
        e["kind"] = kind_str(f.kind);
        if (f.kind == FeatureKind::Categorical) e["cardinality"] = f.cardinality;
        if (f.cardiac_phenotype) e["cardiac_phenotype"] = true;
        feats.push_back(e);
    }
    json out;
    out["version"] = kFormatVersion;
    out["features"] = feats;
    return out;
}

TabularSchema schema_from_json(const json& j) {
    if (!j.contains("version") || j["version"].get<int>() != kFormatVersion)
        throw IoError("schema.json: unsupported format version");
    TabularSchema s;
    for (const auto& e : j.at("features")) {
        FeatureDesc f;
        f.name = e.at("name").get<std::string>();
        f.kind = kind_from(e.at("kind").get<std::string>());
        f.cardinality = e.value("cardinality", std::size_t{0});
        f.cardiac_phenotype = e.value("cardiac_phenotype", false);
        s.features.push_back(std::move(f));
    }
    return s;
}

json phenotypes_to_json(const PhenotypeSet& ph) {
    json j;
    j["lvedv"] = ph.lvedv;
    j["lvesv"] = ph.lvesv;
    j["lvsv"] = ph.lvsv;
    j["lvef"] = ph.lvef;
    j["lvco"] = ph.lvco;
    j["lvm"] = ph.lvm;
    j["rvedv"] = ph.rvedv;
    j["rvesv"] = ph.rvesv;
    j["rvsv"] = ph.rvsv;
    j["rvef"] = ph.rvef;
    j["lav_max"] = ph.lav_max;
    j["lav_min"] = ph.lav_min;
    j["lasv"] = ph.lasv;
    j["laef"] = ph.laef;
    j["rav_max"] = ph.rav_max;
    j["rav_min"] = ph.rav_min;
    j["rasv"] = ph.rasv;
    j["raef"] = ph.raef;
    return j;
}

PhenotypeSet phenotypes_from_json(const json& j) {
    PhenotypeSet ph;
    ph.lvedv = j.at("lvedv").get<double>();
    ph.lvesv = j.at("lvesv").get<double>();
    ph.lvsv = j.at("lvsv").get<double>();
    ph.lvef = j.at("lvef").get<double>();
    ph.lvco = j.at("lvco").get<double>();
    ph.lvm = j.at("lvm").get<double>();
    ph.rvedv = j.at("rvedv").get<double>();
    ph.rvesv = j.at("rvesv").get<double>();
    ph.rvsv = j.at("rvsv").get<double>();
    ph.rvef = j.at("rvef").get<double>();
    ph.lav_max = j.at("lav_max").get<double>();
    ph.lav_min = j.at("lav_min").get<double>();
    ph.lasv = j.at("lasv").get<double>();
    ph.laef = j.at("laef").get<double>();
    ph.rav_max = j.at("rav_max").get<double>();
    ph.rav_min = j.at("rav_min").get<double>();
    ph.rasv = j.at("rasv").get<double>();
    ph.raef = j.at("raef").get<double>();
    return ph;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    fs::create_directories(root / "subjects");
    write_text(root / "schema.json", schema_to_json(ds.schema).dump(2) + "\n");

    for (const auto& s : ds.subjects) {
        const fs::path dir = root / "subjects" / s.id;
        fs::create_directories(dir);

        json meta;
        meta["version"] = kFormatVersion;
        meta["seed"] = s.seed;
        meta["frames"] = s.stack.frames;
        meta["height"] = s.stack.height;
        meta["width"] = s.stack.width;
        meta["pixel_mm"] = s.stack.pixel_mm;
        meta["sa_gap_mm"] = s.stack.sa_gap_mm;
        json planes = json::array();
        for (const auto& pm : s.stack.planes) {
            json p;
            p["view"] = pm.view == ViewKind::SA ? "SA" : "LA";
            p["index"] = pm.plane_index;
            p["position"] = pm.slice_position;
            planes.push_back(p);
        }
        meta["planes"] = planes;
        write_text(dir / "meta.json", meta.dump(2) + "\n");

        write_blob(dir / "images.f32", s.stack.data);
        write_blob(dir / "masks.u8", s.mask.labels);

        json tab;
        tab["values"] = s.tabular.values;
        tab["missing"] = s.tabular.missing;
        write_text(dir / "tabular.json", tab.dump(2) + "\n");

        json lab;
        json flags;
        for (std::size_t d = 0; d < kNumDiseases; ++d)
            flags[disease_names()[d]] = static_cast<int>(s.labels.flags[d]);
        lab["flags"] = flags;
        lab["icd10_codes"] = s.icd_codes;
        write_text(dir / "labels.json", lab.dump(2) + "\n");

        write_text(dir / "phenotypes.json", phenotypes_to_json(s.phenotypes).dump(2) + "\n");
    }
}

Dataset read_dataset(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    if (!fs::exists(root / "schema.json"))
        throw IoError("not a dataset directory (no schema.json): " + root.string());
    Dataset ds;
    ds.schema = schema_from_json(parse_json(root / "schema.json"));

    std::vector<fs::path> dirs;
    if (fs::exists(root / "subjects"))
        for (const auto& e : fs::directory_iterator(root / "subjects"))
            if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());

    for (const auto& dir : dirs) {
        Subject s;
        s.id = dir.filename().string();
        const json meta = parse_json(dir / "meta.json");
        if (meta.at("version").get<int>() != kFormatVersion)
            throw IoError("unsupported subject format version in " + dir.string());
        s.seed = meta.at("seed").get<std::uint64_t>();
        s.stack.frames = meta.at("frames").get<std::size_t>();
        s.stack.height = meta.at("height").get<std::size_t>();
        s.stack.width = meta.at("width").get<std::size_t>();
        s.stack.pixel_mm = meta.at("pixel_mm").get<double>();
        s.stack.sa_gap_mm = meta.at("sa_gap_mm").get<double>();
        for (const auto& p : meta.at("planes")) {
            PlaneMeta pm;
            const std::string view = p.at("view").get<std::string>();
            if (view != "SA" && view != "LA") throw IoError("bad view kind in " + dir.string());
            pm.view = view == "SA" ? ViewKind::SA : ViewKind::LA;
            pm.plane_index = p.at("index").get<std::size_t>();
            pm.slice_position = p.at("position").get<double>();
            s.stack.planes.push_back(pm);
        }
        const std::size_t plane_len = s.stack.plane_pixels();
        s.stack.data = read_blob<float>(dir / "images.f32", s.stack.planes.size(), plane_len);
        s.mask.frames = s.stack.frames;
        s.mask.height = s.stack.height;
        s.mask.width = s.stack.width;
        s.mask.labels = read_blob<std::uint8_t>(dir / "masks.u8", s.stack.planes.size(), plane_len);

        const json tab = parse_json(dir / "tabular.json");
        s.tabular.values = tab.at("values").get<std::vector<double>>();
        s.tabular.missing = tab.at("missing").get<std::vector<std::uint8_t>>();
        if (s.tabular.values.size() != ds.schema.size())
            throw IoError("tabular record in " + dir.string() + " does not match schema");
        s.tabular.validate(ds.schema);

        const json lab = parse_json(dir / "labels.json");
        for (std::size_t d = 0; d < kNumDiseases; ++d)
            s.labels.flags[d] =
                static_cast<std::uint8_t>(lab.at("flags").at(disease_names()[d]).get<int>());
        s.icd_codes = lab.at("icd10_codes").get<std::vector<std::string>>();

        s.phenotypes = phenotypes_from_json(parse_json(dir / "phenotypes.json"));
        s.stack.validate();
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

Dataset generate_dataset(const PhantomParams& base, std::size_t n_subjects,
                         std::uint64_t base_seed) {
    Dataset ds;
    ds.schema = TabularSchema::reference();
    ds.subjects.reserve(n_subjects);
    for (std::size_t i = 0; i < n_subjects; ++i) {
        const std::uint64_t subject_seed = derive_seed(base_seed, 0xDA7A, i);
        PhantomParams p = jitter_params(base, subject_seed);
        Subject s;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%04zu", i);
        s.id = buf;
        s.seed = subject_seed;
        PhantomSubject ph = generate_phantom_subject(p, subject_seed);
        s.stack = std::move(ph.stack);
        s.mask = std::move(ph.mask);
        s.tabular = std::move(ph.tabular);
        s.phenotypes = ph.phenotypes;
        s.labels = ph.labels;
        s.icd_codes = std::move(ph.icd_codes);
        ds.subjects.push_back(std::move(s));
    }
    return ds;
}

SplitIndices split_dataset(const Dataset& ds, double train_frac, double val_frac) {
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
        throw ConfigError("split fractions must be non-negative and sum to at most 1");
    const std::size_t n = ds.subjects.size();
    const std::size_t n_train = static_cast<std::size_t>(train_frac * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
    SplitIndices out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train)
            out.train.push_back(i);
        else if (i < n_train + n_val)
            out.val.push_back(i);
        else
            out.test.push_back(i);
    }
    return out;
}

}  // namespace cinetab
