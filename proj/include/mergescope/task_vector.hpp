#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mergescope/errors.hpp"
#include "mergescope/rng.hpp"
#include "mergescope/tensor.hpp"

namespace mergescope {

// Per-tensor parameter delta of a fine-tuned model against an anchor,
// widened to f32.
struct TaskVector {
    std::string anchor_id;
    std::string model_id;
    std::map<std::string, std::vector<float>> deltas;
};

inline TaskVector task_vector(const Checkpoint & model, const Checkpoint & anchor,
                              std::string model_id = "", std::string anchor_id = "") {
    require_same_geometry(model, anchor, "model", "anchor");
    TaskVector tv;
    tv.model_id = std::move(model_id);
    tv.anchor_id = std::move(anchor_id);
    for (const auto & [name, rec] : model.tensors) {
        const std::vector<float> m = rec.to_f32();
        const std::vector<float> a = anchor.at(name).to_f32();
        std::vector<float> d(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) d[i] = m[i] - a[i];
        tv.deltas.emplace(name, std::move(d));
    }
    return tv;
}

// Zeroes each element independently with probability drop_p and rescales
// survivors by 1/(1-drop_p). The decision for element i of a tensor depends
// only on (seed, tensor name, i), never on chunking or thread scheduling.
inline void dare_apply(std::span<float> delta, std::string_view tensor_name, double drop_p,
                       std::uint64_t seed) {
    if (drop_p < 0.0 || drop_p >= 1.0) {
        throw Error("dare drop_p must be in [0, 1), got " + std::to_string(drop_p));
    }
    const float scale = static_cast<float>(1.0 / (1.0 - drop_p));
    const CounterRng rng(seed, tensor_name);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        if (rng.uniform(i) < drop_p) {
            delta[i] = 0.0f;
        } else {
            delta[i] *= scale;
        }
    }
}

inline TaskVector dare_transform(const TaskVector & tv, double drop_p, std::uint64_t seed) {
    TaskVector out = tv;
    for (auto & [name, delta] : out.deltas) {
        dare_apply(delta, name, drop_p, seed);
    }
    return out;
}

} // namespace mergescope
