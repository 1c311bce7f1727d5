#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"
#include "mergescope/mask.hpp"
#include "mergescope/parallel.hpp"
#include "mergescope/projection.hpp"
#include "mergescope/tensor.hpp"

namespace mergescope {

// Which tensors make up one decoder layer's attention and FFN weights.
// Patterns carry a "{layer}" placeholder; defaults follow the common
// q_proj/k_proj/... naming of open decoder checkpoints.
struct WeightKind {
    std::string name;
    bool attention = true;
    std::string pattern;
};

inline std::vector<WeightKind> default_weight_kinds() {
    return {
        {"Q", true, "model.layers.{layer}.self_attn.q_proj.weight"},
        {"K", true, "model.layers.{layer}.self_attn.k_proj.weight"},
        {"V", true, "model.layers.{layer}.self_attn.v_proj.weight"},
        {"O", true, "model.layers.{layer}.self_attn.o_proj.weight"},
        {"FFN-up", false, "model.layers.{layer}.mlp.up_proj.weight"},
        {"FFN-down", false, "model.layers.{layer}.mlp.down_proj.weight"},
        {"FFN-gate", false, "model.layers.{layer}.mlp.gate_proj.weight"},
    };
}

inline std::string resolve_pattern(const std::string & pattern, int layer) {
    const std::string token = "{layer}";
    std::string out = pattern;
    std::size_t pos = 0;
    while ((pos = out.find(token, pos)) != std::string::npos) {
        out.replace(pos, token.size(), std::to_string(layer));
    }
    return out;
}

// One (jaccard, cosine) pair per weight kind; nullopt marks cells that are
// undefined (empty mask union or empty overlap region) rather than zero.
struct PairCell {
    std::optional<double> jaccard;
    std::optional<double> cosine;
};

struct LayerPairReport {
    std::string model_a;
    std::string model_b;
    std::vector<PairCell> cells;
    std::optional<double> attention_cosine;
    std::optional<double> ffn_cosine;
};

struct LayerReport {
    int layer = 0;
    double eta = 1e-3;
    std::vector<WeightKind> kinds;
    std::vector<std::string> models;
    std::vector<LayerPairReport> pairs; // all unordered pairs, (i, j) with i < j
};

namespace detail {

inline std::optional<double> mean_defined(const std::vector<PairCell> & cells,
                                          const std::vector<WeightKind> & kinds, bool attention) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (kinds[k].attention == attention && cells[k].cosine) {
            sum += *cells[k].cosine;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / n;
}

} // namespace detail

// Cross-model weight-shift report for one layer: per weight kind, the Jaccard
// overlap of the two models' changed masks and the projected cosine of their
// shift vectors over the overlap region (mask AND). Regions no larger than
// target_dim are compared with the exact cosine; projecting cannot reduce
// them any further.
inline LayerReport layer_report(const std::vector<std::string> & labels,
                                const std::vector<Checkpoint> & rl_models, const Checkpoint & sft,
                                int layer, double eta, const ProjectionSpec & spec,
                                std::vector<WeightKind> kinds = default_weight_kinds(),
                                unsigned threads = 1) {
    if (labels.size() != rl_models.size()) {
        throw Error("layer_report: got " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(rl_models.size()) + " models");
    }
    if (rl_models.empty()) throw Error("layer_report: need at least one model");

    std::vector<std::string> tensor_names;
    tensor_names.reserve(kinds.size());
    for (const WeightKind & k : kinds) {
        const std::string name = resolve_pattern(k.pattern, layer);
        if (!sft.tensors.count(name)) {
            throw Error("layer_report: cannot resolve tensor '" + name + "' (kind " + k.name + ")");
        }
        tensor_names.push_back(name);
    }

    // Per model, per kind: changed mask against the baseline.
    std::vector<std::vector<Bitmask>> masks(rl_models.size());
    for (std::size_t m = 0; m < rl_models.size(); ++m) {
        masks[m].reserve(kinds.size());
        for (const std::string & name : tensor_names) {
            Checkpoint one_rl;
            one_rl.tensors.emplace(name, rl_models[m].at(name));
            Checkpoint one_sft;
            one_sft.tensors.emplace(name, sft.at(name));
            MaskMap mm = changed_mask(one_rl, one_sft, eta);
            masks[m].push_back(std::move(mm.masks.at(name)));
        }
    }

    LayerReport report;
    report.layer = layer;
    report.eta = eta;
    report.kinds = std::move(kinds);
    report.models = labels;
    for (std::size_t i = 0; i < rl_models.size(); ++i) {
        for (std::size_t j = i + 1; j < rl_models.size(); ++j) {
            LayerPairReport pr;
            pr.model_a = labels[i];
            pr.model_b = labels[j];
            pr.cells.resize(report.kinds.size());
            report.pairs.push_back(std::move(pr));
        }
    }

    struct Job {
        std::size_t pair;
        std::size_t kind;
        std::size_t a;
        std::size_t b;
    };
    std::vector<Job> jobs;
    {
        std::size_t p = 0;
        for (std::size_t i = 0; i < rl_models.size(); ++i) {
            for (std::size_t j = i + 1; j < rl_models.size(); ++j, ++p) {
                for (std::size_t k = 0; k < report.kinds.size(); ++k) {
                    jobs.push_back({p, k, i, j});
                }
            }
        }
    }

    parallel_for(jobs.size(), threads, [&](std::size_t idx) {
        const Job & job = jobs[idx];
        const Bitmask & ma = masks[job.a][job.kind];
        const Bitmask & mb = masks[job.b][job.kind];
        PairCell & cell = report.pairs[job.pair].cells[job.kind];
        if ((ma | mb).count() > 0) {
            cell.jaccard = jaccard(ma, mb);
        }
        const Bitmask region = ma & mb;
        if (region.count() == 0) return;
        const std::string & tname = tensor_names[job.kind];
        const std::vector<float> sa = shift_vector(rl_models[job.a], sft, tname, region);
        const std::vector<float> sb = shift_vector(rl_models[job.b], sft, tname, region);
        if (region.count() <= spec.target_dim) {
            cell.cosine = cosine(sa, sb);
        } else {
            cell.cosine = project_cosine(sa, sb, spec);
        }
    });

    for (LayerPairReport & pr : report.pairs) {
        pr.attention_cosine = detail::mean_defined(pr.cells, report.kinds, true);
        pr.ffn_cosine = detail::mean_defined(pr.cells, report.kinds, false);
    }
    return report;
}

} // namespace mergescope
