// Checkpoints: a stage tag, a JSON config snapshot, and named little-endian
// float32 parameter blobs. Round trips are bit-exact; structural damage is
// detected on load with the offending parameter named.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cinetab/common.hpp"
#include "cinetab/model.hpp"

namespace cinetab {

struct Checkpoint {
    std::string stage_tag;   // "stage1", "stage2", "stage3:<task>"
    nlohmann::json config;   // resolved config + normalization stats
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<float>>>> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Snapshot / restore of a parameter store (stored as float32 regardless of T).
template <typename T>
Checkpoint snapshot_params(const ParamStore<T>& store, std::string stage_tag,
                           nlohmann::json config) {
    Checkpoint ck;
    ck.stage_tag = std::move(stage_tag);
    ck.config = std::move(config);
    for (const auto& [name, t] : store.entries()) {
        std::vector<float> data(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) data[i] = static_cast<float>(t.data()[i]);
        ck.tensors.push_back({name, {t.shape(), std::move(data)}});
    }
    return ck;
}

template <typename T>
void restore_params(ParamStore<T>& store, const Checkpoint& ck) {
    std::map<std::string, const std::pair<Shape, std::vector<float>>*> by_name;
    for (const auto& [name, payload] : ck.tensors) by_name[name] = &payload;
    for (auto& [name, t] : const_cast<std::vector<std::pair<std::string, Tensor<T>>>&>(
             store.entries())) {
        auto it = by_name.find(name);
        if (it == by_name.end())
            throw IoError("checkpoint is missing tensor '" + name + "'");
        const auto& [shape, data] = *it->second;
        if (shape != t.shape())
            throw IoError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                          ", expected " + shape_str(t.shape()));
        auto& dst = t.values_mut();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(data[i]);
    }
}

}  // namespace cinetab
