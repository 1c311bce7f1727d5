#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mergescope/errors.hpp"
#include "mergescope/eval.hpp"
#include "mergescope/kl.hpp"

namespace mergescope {

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string & line, const std::string & path,
                                       std::size_t lineno) {
    try {
        nlohmann::json j = nlohmann::json::parse(line);
        if (!j.is_object()) throw Error("record must be a JSON object");
        return j;
    } catch (const Error &) {
        throw Error(path + ":" + std::to_string(lineno) + ": record must be a JSON object");
    } catch (const nlohmann::json::exception & e) {
        throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
}

} // namespace detail

// Trajectory trace file: one JSON object per line with fields
// {prompt_id, domain, expert, sampler_logprobs: [...], other_logprobs: [...]}.
inline std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path & path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open trace file: " + path.string());
    std::vector<TrajectoryRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const nlohmann::json j = detail::parse_jsonl_line(line, path.string(), lineno);
        TrajectoryRecord r;
        try {
            r.prompt_id = j.value("prompt_id", "");
            r.domain = j.value("domain", "");
            r.expert = j.value("expert", "");
            r.sampler_logprobs = j.at("sampler_logprobs").get<std::vector<double>>();
            r.other_logprobs = j.at("other_logprobs").get<std::vector<double>>();
        } catch (const nlohmann::json::exception & e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            r.validate();
        } catch (const Error & e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(r));
    }
    return out;
}

// Evaluation log: one JSON object per line, either
//   {model_id, task, sample_id, outcomes: [bools]}   (accuracy = Avg@K)
// or
//   {model_id, task, sample_id, acc: float}.
// k_per_task pins the expected rollout count per task where configured.
struct EvalSample {
    std::string model_id;
    std::string task;
    std::string sample_id;
    double acc = 0.0;
};

inline std::vector<EvalSample> read_eval_log(const std::filesystem::path & path,
                                             const std::map<std::string, std::size_t> & k_per_task = {}) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open eval log: " + path.string());
    std::vector<EvalSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        const nlohmann::json j = detail::parse_jsonl_line(line, path.string(), lineno);
        EvalSample s;
        try {
            s.model_id = j.at("model_id").get<std::string>();
            s.task = j.at("task").get<std::string>();
            s.sample_id = j.at("sample_id").is_string()
                              ? j.at("sample_id").get<std::string>()
                              : j.at("sample_id").dump();
            if (j.contains("acc")) {
                s.acc = j.at("acc").get<double>();
            } else {
                const std::vector<bool> outcomes = j.at("outcomes").get<std::vector<bool>>();
                auto it = k_per_task.find(s.task);
                const std::size_t k = it != k_per_task.end() ? it->second : outcomes.size();
                s.acc = avg_at_k(outcomes, k);
            }
        } catch (const Error & e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const nlohmann::json::exception & e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!(s.acc >= 0.0 && s.acc <= 1.0)) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": acc outside [0, 1]");
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Folds samples into one EvalMatrix per (model, task), samples sorted by id.
inline std::map<std::pair<std::string, std::string>, EvalMatrix>
build_eval_matrices(const std::vector<EvalSample> & samples) {
    std::map<std::pair<std::string, std::string>, std::map<std::string, double>> grouped;
    for (const EvalSample & s : samples) {
        auto & g = grouped[{s.model_id, s.task}];
        if (!g.emplace(s.sample_id, s.acc).second) {
            throw Error("duplicate sample '" + s.sample_id + "' for model '" + s.model_id +
                        "' on task '" + s.task + "'");
        }
    }
    std::map<std::pair<std::string, std::string>, EvalMatrix> out;
    for (const auto & [key, g] : grouped) {
        EvalMatrix m;
        m.model_id = key.first;
        m.task = key.second;
        for (const auto & [sid, acc] : g) {
            m.sample_ids.push_back(sid);
            m.acc.push_back(acc);
        }
        out.emplace(key, std::move(m));
    }
    return out;
}

} // namespace mergescope
