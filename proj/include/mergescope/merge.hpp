#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"
#include "mergescope/task_vector.hpp"
#include "mergescope/tensor.hpp"

namespace mergescope {

// Per-tensor merge kernels. Element arithmetic runs in f32 with fixed
// sequential order; narrowing back to the output dtype happens once, at the
// checkpoint level.

inline std::size_t keep_count(double fraction, std::size_t d) {
    if (d == 0) return 0;
    return std::min<std::size_t>(d, static_cast<std::size_t>(
                                        std::ceil(fraction * static_cast<double>(d))));
}

namespace detail {

inline void require_equal_sizes(const std::vector<std::span<const float>> & vs) {
    for (std::size_t i = 1; i < vs.size(); ++i) {
        if (vs[i].size() != vs[0].size()) {
            throw Error("merge kernel: input lengths differ");
        }
    }
}

inline int sign_of(float v) {
    return v > 0.0f ? 1 : v < 0.0f ? -1 : 0;
}

} // namespace detail

// Arithmetic mean, f32 accumulation, models in listed order.
inline std::vector<float> average_values(const std::vector<std::span<const float>> & models) {
    if (models.empty()) throw Error("average: need at least one model");
    detail::require_equal_sizes(models);
    const std::size_t d = models[0].size();
    const float k = static_cast<float>(models.size());
    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        float s = 0.0f;
        for (const auto & m : models) s += m[i];
        out[i] = s / k;
    }
    return out;
}

// Ties step 1: keep the ceil(density_k * d) largest-magnitude elements.
// Equal magnitudes are resolved in favor of the lower flat index.
inline std::vector<std::uint8_t> ties_trim_mask(std::span<const float> v, double density_k) {
    if (density_k <= 0.0 || density_k > 1.0) {
        throw Error("ties density_k must be in (0, 1], got " + std::to_string(density_k));
    }
    const std::size_t d = v.size();
    const std::size_t m = keep_count(density_k, d);
    std::vector<std::uint8_t> mask(d, 0);
    if (m == d) {
        std::fill(mask.begin(), mask.end(), std::uint8_t{1});
        return mask;
    }
    struct Ranked {
        float mag;
        std::uint64_t idx;
    };
    std::vector<Ranked> ranked(d);
    for (std::size_t i = 0; i < d; ++i) {
        const float a = std::fabs(v[i]);
        ranked[i] = {std::isnan(a) ? std::numeric_limits<float>::infinity() : a,
                     static_cast<std::uint64_t>(i)};
    }
    auto before = [](const Ranked & a, const Ranked & b) {
        return a.mag > b.mag || (a.mag == b.mag && a.idx < b.idx);
    };
    std::nth_element(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(m),
                     ranked.end(), before);
    for (std::size_t i = 0; i < m; ++i) mask[ranked[i].idx] = 1;
    return mask;
}

// Ties trim / elect / disjoint mean over task-vector slices of one tensor.
// Returns the merged delta (anchor and lambda are applied by the caller).
inline std::vector<float> ties_combine(const std::vector<std::span<const float>> & tvs,
                                       double density_k) {
    if (tvs.empty()) throw Error("ties: need at least one task vector");
    detail::require_equal_sizes(tvs);
    const std::size_t d = tvs[0].size();

    std::vector<std::vector<std::uint8_t>> kept;
    kept.reserve(tvs.size());
    for (const auto & tv : tvs) kept.push_back(ties_trim_mask(tv, density_k));

    std::vector<float> merged(d, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        float sign_sum = 0.0f;
        for (std::size_t t = 0; t < tvs.size(); ++t) {
            if (kept[t][i]) sign_sum += tvs[t][i];
        }
        const int elected = detail::sign_of(sign_sum);
        if (elected == 0) continue;
        float sum = 0.0f;
        std::uint32_t survivors = 0;
        for (std::size_t t = 0; t < tvs.size(); ++t) {
            if (kept[t][i] && detail::sign_of(tvs[t][i]) == elected) {
                sum += tvs[t][i];
                ++survivors;
            }
        }
        if (survivors > 0) merged[i] = sum / static_cast<float>(survivors);
    }
    return merged;
}

struct SceDetail {
    std::vector<std::uint8_t> selected;
    std::vector<double> coefficients;
};

// SCE select / calculate / erase over task-vector slices of one tensor.
//   S: keep the ceil(select_tau * d) coordinates of largest cross-model
//      variance (ties to the lower index), zeroing the rest in every vector;
//   C: per-model coefficient = its selected square-sum over the total
//      (uniform when the total is zero);
//   E: per coordinate, drop values whose sign loses the magnitude vote
//      (exact ties keep the positive side), then fuse as sum of c_i * tau_i.
// A single task vector passes through unchanged.
inline std::vector<float> sce_combine(const std::vector<std::span<const float>> & tvs,
                                      double select_tau, SceDetail * detail_out = nullptr) {
    if (select_tau <= 0.0 || select_tau > 1.0) {
        throw Error("sce select_tau must be in (0, 1], got " + std::to_string(select_tau));
    }
    if (tvs.empty()) throw Error("sce: need at least one task vector");
    detail::require_equal_sizes(tvs);
    const std::size_t k = tvs.size();
    const std::size_t d = tvs[0].size();
    if (k == 1) {
        if (detail_out) {
            detail_out->selected.assign(d, 1);
            detail_out->coefficients.assign(1, 1.0);
        }
        return std::vector<float>(tvs[0].begin(), tvs[0].end());
    }

    std::vector<double> variance(d);
    for (std::size_t i = 0; i < d; ++i) {
        double mean = 0.0;
        for (const auto & tv : tvs) mean += tv[i];
        mean /= static_cast<double>(k);
        double var = 0.0;
        for (const auto & tv : tvs) {
            const double c = tv[i] - mean;
            var += c * c;
        }
        variance[i] = var / static_cast<double>(k);
    }

    const std::size_t m = keep_count(select_tau, d);
    std::vector<std::uint8_t> selected(d, 0);
    if (m == d) {
        std::fill(selected.begin(), selected.end(), std::uint8_t{1});
    } else {
        std::vector<std::uint64_t> order(d);
        for (std::size_t i = 0; i < d; ++i) order[i] = i;
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m),
                         order.end(), [&](std::uint64_t a, std::uint64_t b) {
                             return variance[a] > variance[b] ||
                                    (variance[a] == variance[b] && a < b);
                         });
        for (std::size_t i = 0; i < m; ++i) selected[order[i]] = 1;
    }

    std::vector<double> sq(k, 0.0);
    double total = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
        for (std::size_t i = 0; i < d; ++i) {
            if (selected[i]) {
                sq[t] += static_cast<double>(tvs[t][i]) * static_cast<double>(tvs[t][i]);
            }
        }
        total += sq[t];
    }
    std::vector<double> coeff(k);
    for (std::size_t t = 0; t < k; ++t) {
        coeff[t] = total > 0.0 ? sq[t] / total : 1.0 / static_cast<double>(k);
    }

    std::vector<float> merged(d, 0.0f);
    for (std::size_t i = 0; i < d; ++i) {
        if (!selected[i]) continue;
        double pos = 0.0;
        double neg = 0.0;
        for (const auto & tv : tvs) {
            const float v = tv[i];
            if (v > 0.0f) pos += v;
            else neg -= v;
        }
        const int winner = pos >= neg ? 1 : -1;
        double fused = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            const float v = tvs[t][i];
            const int s = detail::sign_of(v);
            if (s == 0 || s == winner) fused += coeff[t] * v;
        }
        merged[i] = static_cast<float>(fused);
    }

    if (detail_out) {
        detail_out->selected = std::move(selected);
        detail_out->coefficients = std::move(coeff);
    }
    return merged;
}

// theta = anchor + lambda * delta, f32. Coordinates with an exactly zero
// delta copy the anchor value bit-for-bit, so untouched weights survive
// renarrowing unchanged (including negative zeros).
inline std::vector<float> apply_delta(std::span<const float> anchor, std::span<const float> delta,
                                      double lambda) {
    if (anchor.size() != delta.size()) throw Error("apply_delta: length mismatch");
    const float lam = static_cast<float>(lambda);
    std::vector<float> out(anchor.size());
    for (std::size_t i = 0; i < anchor.size(); ++i) {
        out[i] = delta[i] == 0.0f ? anchor[i] : anchor[i] + lam * delta[i];
    }
    return out;
}

// Sum of task vectors, f32 accumulation in listed order.
inline std::vector<float> sum_values(const std::vector<std::span<const float>> & tvs) {
    if (tvs.empty()) throw Error("sum: need at least one task vector");
    detail::require_equal_sizes(tvs);
    std::vector<float> out(tvs[0].size(), 0.0f);
    for (const auto & tv : tvs) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += tv[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint-level wrappers.

enum class MergeMethod { AVERAGE, TASK_ARITHMETIC, TIES, SCE };

inline const char * merge_method_name(MergeMethod m) {
    switch (m) {
        case MergeMethod::AVERAGE: return "average";
        case MergeMethod::TASK_ARITHMETIC: return "ta";
        case MergeMethod::TIES: return "ties";
        case MergeMethod::SCE: return "sce";
    }
    return "?";
}

inline MergeMethod merge_method_from_name(std::string_view s) {
    if (s == "average") return MergeMethod::AVERAGE;
    if (s == "ta" || s == "task-arithmetic") return MergeMethod::TASK_ARITHMETIC;
    if (s == "ties") return MergeMethod::TIES;
    if (s == "sce") return MergeMethod::SCE;
    throw Error("unknown merge method: " + std::string(s));
}

struct DareConfig {
    double drop_p = 0.8;
    std::uint64_t seed = 0;
};

struct MergeRecipe {
    MergeMethod method = MergeMethod::TIES;
    double lambda = 1.0;
    double density_k = 0.2;
    double select_tau = 0.1;
    std::optional<DareConfig> dare;
    std::string anchor_id;
    std::vector<std::string> model_ids;
};

namespace detail {

inline Checkpoint narrow_like(const Checkpoint & dtype_source,
                              std::map<std::string, std::vector<float>> values) {
    Checkpoint out;
    for (const auto & [name, rec] : dtype_source.tensors) {
        auto it = values.find(name);
        if (it == values.end()) throw Error("merge: missing result for tensor '" + name + "'");
        out.tensors.emplace(name,
                            TensorRecord::from_f32(name, rec.dtype, rec.shape, it->second));
    }
    return out;
}

inline void check_task_vectors(const Checkpoint & anchor, const std::vector<TaskVector> & tvs) {
    if (tvs.empty()) throw Error("merge: need at least one task vector");
    for (const TaskVector & tv : tvs) {
        if (tv.anchor_id != tvs[0].anchor_id) {
            throw Error("anchor mismatch: task vector '" + tv.model_id + "' was built against '" +
                        tv.anchor_id + "', expected '" + tvs[0].anchor_id + "'");
        }
        if (tv.deltas.size() != anchor.tensors.size()) {
            throw Error("task vector '" + tv.model_id + "' tensor set does not match anchor");
        }
        for (const auto & [name, delta] : tv.deltas) {
            if (delta.size() != anchor.at(name).numel()) {
                throw Error("task vector '" + tv.model_id + "' tensor '" + name +
                            "' length does not match anchor");
            }
        }
    }
}

template <typename PerTensor>
inline Checkpoint merge_deltas(const Checkpoint & anchor, const std::vector<TaskVector> & tvs,
                               double lambda, PerTensor && combine) {
    check_task_vectors(anchor, tvs);
    std::map<std::string, std::vector<float>> merged;
    for (const auto & [name, rec] : anchor.tensors) {
        std::vector<std::span<const float>> slices;
        slices.reserve(tvs.size());
        for (const TaskVector & tv : tvs) slices.emplace_back(tv.deltas.at(name));
        const std::vector<float> delta = combine(slices);
        merged.emplace(name, apply_delta(rec.to_f32(), delta, lambda));
    }
    return narrow_like(anchor, std::move(merged));
}

} // namespace detail

inline Checkpoint average_merge(const std::vector<Checkpoint> & models) {
    if (models.empty()) throw Error("average: need at least one model");
    for (std::size_t i = 1; i < models.size(); ++i) {
        require_same_geometry(models[i], models[0], "model", "model");
    }
    std::map<std::string, std::vector<float>> merged;
    for (const auto & [name, rec] : models[0].tensors) {
        std::vector<std::vector<float>> widened;
        widened.reserve(models.size());
        for (const Checkpoint & m : models) widened.push_back(m.at(name).to_f32());
        std::vector<std::span<const float>> slices(widened.begin(), widened.end());
        merged.emplace(name, average_values(slices));
    }
    return detail::narrow_like(models[0], std::move(merged));
}

inline Checkpoint task_arithmetic_merge(const Checkpoint & anchor,
                                        const std::vector<TaskVector> & tvs, double lambda) {
    return detail::merge_deltas(anchor, tvs, lambda,
                                [](const std::vector<std::span<const float>> & s) {
                                    return sum_values(s);
                                });
}

inline Checkpoint ties_merge(const Checkpoint & anchor, const std::vector<TaskVector> & tvs,
                             double density_k, double lambda) {
    return detail::merge_deltas(anchor, tvs, lambda,
                                [density_k](const std::vector<std::span<const float>> & s) {
                                    return ties_combine(s, density_k);
                                });
}

inline Checkpoint sce_merge(const Checkpoint & anchor, const std::vector<TaskVector> & tvs,
                            double select_tau) {
    return detail::merge_deltas(anchor, tvs, 1.0,
                                [select_tau](const std::vector<std::span<const float>> & s) {
                                    return sce_combine(s, select_tau);
                                });
}

// Seed for the i-th model's DARE mask; models must not share masks even when
// the recipe carries a single seed.
inline std::uint64_t dare_model_seed(std::uint64_t seed, std::size_t model_index) {
    return mix64(seed + 0x9e3779b97f4a7c15ULL * (model_index + 1));
}

// Recipe dispatch: builds task vectors (except AVERAGE), applies DARE when
// requested, runs the method and renarrows to the anchor's dtypes.
inline Checkpoint merge(const MergeRecipe & recipe, const Checkpoint & anchor,
                        const std::vector<Checkpoint> & models) {
    if (models.empty()) throw Error("merge: need at least one model");
    if (!recipe.model_ids.empty() && recipe.model_ids.size() != models.size()) {
        throw Error("merge: recipe lists " + std::to_string(recipe.model_ids.size()) +
                    " model ids for " + std::to_string(models.size()) + " models");
    }
    if (recipe.method == MergeMethod::AVERAGE) {
        return average_merge(models);
    }
    std::vector<TaskVector> tvs;
    tvs.reserve(models.size());
    for (std::size_t i = 0; i < models.size(); ++i) {
        const std::string id =
            i < recipe.model_ids.size() ? recipe.model_ids[i] : "model" + std::to_string(i);
        TaskVector tv = task_vector(models[i], anchor, id, recipe.anchor_id);
        if (recipe.dare) {
            tv = dare_transform(tv, recipe.dare->drop_p, dare_model_seed(recipe.dare->seed, i));
        }
        tvs.push_back(std::move(tv));
    }
    switch (recipe.method) {
        case MergeMethod::TASK_ARITHMETIC:
            return task_arithmetic_merge(anchor, tvs, recipe.lambda);
        case MergeMethod::TIES:
            return ties_merge(anchor, tvs, recipe.density_k, recipe.lambda);
        case MergeMethod::SCE:
            return sce_merge(anchor, tvs, recipe.select_tau);
        case MergeMethod::AVERAGE:
            break;
    }
    throw Error("unreachable merge method");
}

} // namespace mergescope
