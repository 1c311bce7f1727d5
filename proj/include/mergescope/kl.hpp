#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"

namespace mergescope {

// One sampled trajectory: per-token log-probabilities under the policy that
// generated it and under the comparison policy, token-aligned.
struct TrajectoryRecord {
    std::string prompt_id;
    std::string domain;  // data domain the prompt came from
    std::string expert;  // label of the sampling policy (matrix row)
    std::vector<double> sampler_logprobs;
    std::vector<double> other_logprobs;

    void validate() const {
        if (sampler_logprobs.empty() || sampler_logprobs.size() != other_logprobs.size()) {
            throw Error("trajectory '" + prompt_id + "': log-prob lists must be equal length >= 1");
        }
        for (double v : sampler_logprobs) {
            if (v > 0.0) throw Error("trajectory '" + prompt_id + "': positive log-probability");
        }
        for (double v : other_logprobs) {
            if (v > 0.0) throw Error("trajectory '" + prompt_id + "': positive log-probability");
        }
    }
};

struct KLEstimate {
    double kl = 0.0;
    double stderr_ = 0.0;
    std::uint64_t n_traj = 0;
};

enum class KlNormalization {
    SEQUENCE, // per-trajectory statistic = sum of token log-ratios
    PER_TOKEN // per-trajectory statistic = mean of token log-ratios
};

// Monte-Carlo forward KL over trajectories sampled from the sampler policy.
// With sampler = student and other = teacher this is also the on-policy
// distillation objective. stderr is sample-std / sqrt(n); 0 for n = 1.
inline KLEstimate mc_kl(const std::vector<TrajectoryRecord> & trajs,
                        KlNormalization norm = KlNormalization::SEQUENCE) {
    if (trajs.empty()) throw Error("mc_kl: need at least one trajectory");
    std::vector<double> stats;
    stats.reserve(trajs.size());
    for (const TrajectoryRecord & tr : trajs) {
        tr.validate();
        double sum = 0.0;
        for (std::size_t i = 0; i < tr.sampler_logprobs.size(); ++i) {
            sum += tr.sampler_logprobs[i] - tr.other_logprobs[i];
        }
        if (norm == KlNormalization::PER_TOKEN) {
            sum /= static_cast<double>(tr.sampler_logprobs.size());
        }
        stats.push_back(sum);
    }
    KLEstimate est;
    est.n_traj = stats.size();
    double mean = 0.0;
    for (double s : stats) mean += s;
    mean /= static_cast<double>(stats.size());
    est.kl = mean;
    if (stats.size() >= 2) {
        double ss = 0.0;
        for (double s : stats) {
            const double c = s - mean;
            ss += c * c;
        }
        const double var = ss / static_cast<double>(stats.size() - 1);
        est.stderr_ = std::sqrt(var / static_cast<double>(stats.size()));
    }
    return est;
}

// Exact KL of two categorical distributions; the analytic oracle for mc_kl.
inline double categorical_kl(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw Error("categorical_kl: length mismatch");
    double sp = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0 || q[i] < 0.0) throw Error("categorical_kl: negative probability");
        sp += p[i];
        sq += q[i];
    }
    if (std::fabs(sp - 1.0) > 1e-9 || std::fabs(sq - 1.0) > 1e-9) {
        throw Error("categorical_kl: distributions must sum to 1");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) throw Error("categorical_kl: support violation (q = 0 where p > 0)");
        kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

struct KLCell {
    KLEstimate sequence;
    KLEstimate per_token;
};

// Expert (rows) x data domain (columns) KL matrix with optional per-column
// performance-delta annotations.
struct KLMatrix {
    std::vector<std::string> experts;
    std::vector<std::string> domains;
    std::vector<std::vector<std::optional<KLCell>>> cells; // [expert][domain]
    std::map<std::string, double> perf_delta;              // per data domain

    std::size_t expert_index(const std::string & label) const {
        auto it = std::find(experts.begin(), experts.end(), label);
        if (it == experts.end()) throw Error("unknown expert: " + label);
        return static_cast<std::size_t>(it - experts.begin());
    }

    std::size_t domain_index(const std::string & label) const {
        auto it = std::find(domains.begin(), domains.end(), label);
        if (it == domains.end()) throw Error("unknown data domain: " + label);
        return static_cast<std::size_t>(it - domains.begin());
    }

    const std::optional<KLCell> & cell(const std::string & expert,
                                       const std::string & domain) const {
        return cells[expert_index(expert)][domain_index(domain)];
    }

    void set_cell(const std::string & expert, const std::string & domain, KLCell value) {
        auto & slot = cells[expert_index(expert)][domain_index(domain)];
        if (slot) {
            throw Error("duplicate group for expert '" + expert + "', domain '" + domain + "'");
        }
        slot = std::move(value);
    }
};

// Groups trajectories by (expert, data domain) and estimates each populated
// cell. Labels come out sorted so the matrix layout is deterministic.
inline KLMatrix kl_matrix(const std::vector<TrajectoryRecord> & records,
                          const std::map<std::string, double> & perf = {}) {
    std::map<std::pair<std::string, std::string>, std::vector<TrajectoryRecord>> groups;
    for (const TrajectoryRecord & r : records) {
        if (r.expert.empty() || r.domain.empty()) {
            throw Error("trajectory '" + r.prompt_id + "': empty expert or domain label");
        }
        groups[{r.expert, r.domain}].push_back(r);
    }
    KLMatrix m;
    for (const auto & [key, group] : groups) {
        if (std::find(m.experts.begin(), m.experts.end(), key.first) == m.experts.end()) {
            m.experts.push_back(key.first);
        }
        if (std::find(m.domains.begin(), m.domains.end(), key.second) == m.domains.end()) {
            m.domains.push_back(key.second);
        }
    }
    std::sort(m.experts.begin(), m.experts.end());
    std::sort(m.domains.begin(), m.domains.end());
    m.cells.assign(m.experts.size(), std::vector<std::optional<KLCell>>(m.domains.size()));
    for (const auto & [key, group] : groups) {
        KLCell cell;
        cell.sequence = mc_kl(group, KlNormalization::SEQUENCE);
        cell.per_token = mc_kl(group, KlNormalization::PER_TOKEN);
        m.set_cell(key.first, key.second, std::move(cell));
    }
    m.perf_delta = perf;
    return m;
}

struct NeighborhoodRule {
    enum class Mode { RELATIVE, ABSOLUTE };
    Mode mode = Mode::RELATIVE;
    double c = 1.5;           // RELATIVE: neighbor iff kl <= c * self-expert kl
    double epsilon_abs = 0.0; // ABSOLUTE: neighbor iff kl <  epsilon_abs
};

struct Neighbor {
    std::string expert;
    double kl = 0.0;
};

// Experts (other than the domain's own) whose KL on this domain's data falls
// inside the rule's threshold, ascending by KL.
inline std::vector<Neighbor> neighborhoods(const KLMatrix & matrix, const std::string & domain,
                                           const NeighborhoodRule & rule) {
    const std::size_t col = matrix.domain_index(domain);
    double threshold = rule.epsilon_abs;
    if (rule.mode == NeighborhoodRule::Mode::RELATIVE) {
        if (rule.c <= 0.0) throw Error("neighborhood multiplier c must be positive");
        auto self_it = std::find(matrix.experts.begin(), matrix.experts.end(), domain);
        if (self_it == matrix.experts.end()) {
            throw Error("missing self expert row for domain '" + domain + "'");
        }
        const auto & self_cell =
            matrix.cells[static_cast<std::size_t>(self_it - matrix.experts.begin())][col];
        if (!self_cell) {
            throw Error("missing self cell for domain '" + domain + "'");
        }
        threshold = rule.c * self_cell->sequence.kl;
    }

    std::vector<Neighbor> out;
    for (std::size_t e = 0; e < matrix.experts.size(); ++e) {
        if (matrix.experts[e] == domain) continue;
        const auto & cell = matrix.cells[e][col];
        if (!cell) continue;
        const double kl = cell->sequence.kl;
        const bool in = rule.mode == NeighborhoodRule::Mode::RELATIVE ? kl <= threshold
                                                                      : kl < threshold;
        if (in) out.push_back({matrix.experts[e], kl});
    }
    std::sort(out.begin(), out.end(), [](const Neighbor & a, const Neighbor & b) {
        return a.kl < b.kl || (a.kl == b.kl && a.expert < b.expert);
    });
    return out;
}

} // namespace mergescope
