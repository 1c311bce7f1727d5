#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"

namespace mergescope {

// Per-sample accuracies of one model on one task, aligned across models by
// sample id (ids sorted ascending when built from logs).
struct EvalMatrix {
    std::string model_id;
    std::string task;
    std::vector<std::string> sample_ids;
    std::vector<double> acc;

    void validate() const {
        if (!sample_ids.empty() && sample_ids.size() != acc.size()) {
            throw Error("eval matrix '" + model_id + "/" + task +
                        "': sample id and accuracy counts differ");
        }
        for (double a : acc) {
            if (!(a >= 0.0 && a <= 1.0)) {
                throw Error("eval matrix '" + model_id + "/" + task +
                            "': accuracy outside [0, 1]");
            }
        }
    }
};

inline double avg_at_k(const std::vector<bool> & outcomes, std::size_t k) {
    if (k == 0 || outcomes.size() != k) {
        throw Error("avg@k: got " + std::to_string(outcomes.size()) + " outcomes for k = " +
                    std::to_string(k));
    }
    std::size_t hits = 0;
    for (bool b : outcomes) hits += b ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(k);
}

// Per-sample accuracy improvements over a baseline, clamped at zero.
struct GainVector {
    std::string baseline_id;
    std::string model_id;
    std::string task;
    std::vector<double> gains;
};

inline GainVector gain_vector(const EvalMatrix & model, const EvalMatrix & baseline) {
    model.validate();
    baseline.validate();
    if (model.task != baseline.task) {
        throw Error("gain_vector: task mismatch ('" + model.task + "' vs '" + baseline.task +
                    "')");
    }
    if (model.acc.size() != baseline.acc.size()) {
        throw Error("gain_vector: sample count mismatch on task '" + model.task + "'");
    }
    if (!model.sample_ids.empty() && !baseline.sample_ids.empty() &&
        model.sample_ids != baseline.sample_ids) {
        throw Error("gain_vector: sample ids differ on task '" + model.task + "'");
    }
    GainVector g;
    g.baseline_id = baseline.model_id;
    g.model_id = model.model_id;
    g.task = model.task;
    g.gains.resize(model.acc.size());
    for (std::size_t i = 0; i < model.acc.size(); ++i) {
        g.gains[i] = std::max(model.acc[i] - baseline.acc[i], 0.0);
    }
    return g;
}

// Elementwise maximum: the collective footprint of what any input model
// learned beyond the shared baseline.
inline GainVector union_gain(const std::vector<GainVector> & gvs) {
    if (gvs.empty()) throw Error("union_gain: need at least one gain vector");
    for (const GainVector & g : gvs) {
        if (g.task != gvs[0].task) throw Error("union_gain: task mismatch");
        if (g.baseline_id != gvs[0].baseline_id) throw Error("union_gain: baseline mismatch");
        if (g.gains.size() != gvs[0].gains.size()) throw Error("union_gain: length mismatch");
    }
    if (gvs.size() == 1) return gvs[0];
    GainVector out = gvs[0];
    out.model_id = "union";
    for (std::size_t t = 1; t < gvs.size(); ++t) {
        for (std::size_t i = 0; i < out.gains.size(); ++i) {
            out.gains[i] = std::max(out.gains[i], gvs[t].gains[i]);
        }
    }
    return out;
}

// Cosine similarity between a union gain vector and a model's gain vector;
// undefined (not zero) when either vector is all zero.
inline std::optional<double> gain_consistency(const GainVector & u, const GainVector & model) {
    if (u.task != model.task) throw Error("gain_consistency: task mismatch");
    if (u.gains.size() != model.gains.size()) throw Error("gain_consistency: length mismatch");
    double dot = 0.0;
    double nu = 0.0;
    double nm = 0.0;
    for (std::size_t i = 0; i < u.gains.size(); ++i) {
        dot += u.gains[i] * model.gains[i];
        nu += u.gains[i] * u.gains[i];
        nm += model.gains[i] * model.gains[i];
    }
    if (nu == 0.0 || nm == 0.0) return std::nullopt;
    return dot / (std::sqrt(nu) * std::sqrt(nm));
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw Error("pearson: length mismatch");
    if (xs.size() < 2) throw Error("pearson: need at least two points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("pearson: constant series");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace mergescope
