#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"
#include "mergescope/rng.hpp"
#include "mergescope/tensor.hpp"

namespace mergescope {

// Packed bit vector with the popcount/AND/OR operations the Jaccard analysis
// needs. Bit i corresponds to flat (row-major) element index i.
class Bitmask {
public:
    Bitmask() = default;

    explicit Bitmask(std::uint64_t nbits) : nbits_(nbits), words_((nbits + 63) / 64, 0) {}

    std::uint64_t size() const { return nbits_; }

    void set(std::uint64_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }

    bool test(std::uint64_t i) const {
        return (words_[i >> 6] >> (i & 63) & 1) != 0;
    }

    std::uint64_t count() const {
        std::uint64_t c = 0;
        for (std::uint64_t w : words_) c += static_cast<std::uint64_t>(std::popcount(w));
        return c;
    }

    friend Bitmask operator&(const Bitmask & a, const Bitmask & b) {
        a.require_same_size(b);
        Bitmask out(a.nbits_);
        for (std::size_t i = 0; i < a.words_.size(); ++i) out.words_[i] = a.words_[i] & b.words_[i];
        return out;
    }

    friend Bitmask operator|(const Bitmask & a, const Bitmask & b) {
        a.require_same_size(b);
        Bitmask out(a.nbits_);
        for (std::size_t i = 0; i < a.words_.size(); ++i) out.words_[i] = a.words_[i] | b.words_[i];
        return out;
    }

    friend bool operator==(const Bitmask & a, const Bitmask & b) {
        return a.nbits_ == b.nbits_ && a.words_ == b.words_;
    }

    void require_same_size(const Bitmask & other) const {
        if (nbits_ != other.nbits_) {
            throw Error("bit vector length mismatch: " + std::to_string(nbits_) + " vs " +
                        std::to_string(other.nbits_));
        }
    }

private:
    std::uint64_t nbits_ = 0;
    std::vector<std::uint64_t> words_;
};

struct MaskMap {
    double eta = 1e-3;
    std::map<std::string, Bitmask> masks;
};

// Weight i counts as changed when |w_rl - w_sft| > eta * max(|w_rl|, |w_sft|),
// evaluated in f32 after widening. Symmetric in its two checkpoints.
inline MaskMap changed_mask(const Checkpoint & rl, const Checkpoint & sft, double eta) {
    if (eta <= 0.0) throw Error("eta must be positive, got " + std::to_string(eta));
    require_same_geometry(rl, sft, "rl", "sft");
    MaskMap out;
    out.eta = eta;
    const float eta_f = static_cast<float>(eta);
    for (const auto & [name, rec] : rl.tensors) {
        const std::vector<float> a = rec.to_f32();
        const std::vector<float> b = sft.at(name).to_f32();
        Bitmask mask(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const float diff = std::fabs(a[i] - b[i]);
            const float bound = eta_f * std::max(std::fabs(a[i]), std::fabs(b[i]));
            if (diff > bound) mask.set(i);
        }
        out.masks.emplace(name, std::move(mask));
    }
    return out;
}

// popcount(AND) / popcount(OR); 0 when the union is empty. Report layers wrap
// the empty-union case in an explicit undefined marker instead.
inline double jaccard(const Bitmask & a, const Bitmask & b) {
    a.require_same_size(b);
    const std::uint64_t unions = (a | b).count();
    if (unions == 0) return 0.0;
    return static_cast<double>((a & b).count()) / static_cast<double>(unions);
}

struct JaccardBaseline {
    double empirical = 0.0;
    double analytic = 0.0;
};

// Jaccard overlap of two independent Bernoulli(p) masks of length d, plus the
// closed form p / (2 - p) they converge to.
inline JaccardBaseline random_jaccard_baseline(double p, std::uint64_t d, std::uint64_t seed) {
    if (!(p > 0.0 && p < 1.0)) throw Error("baseline p must be in (0, 1), got " + std::to_string(p));
    if (d == 0) throw Error("baseline d must be at least 1");
    const CounterRng rng_a(seed, "random-mask-a");
    const CounterRng rng_b(seed, "random-mask-b");
    Bitmask a(d);
    Bitmask b(d);
    for (std::uint64_t i = 0; i < d; ++i) {
        if (rng_a.uniform(i) < p) a.set(i);
        if (rng_b.uniform(i) < p) b.set(i);
    }
    return {jaccard(a, b), p / (2.0 - p)};
}

// Flattened (w_rl - w_sft) values at the set bits of region, ascending index.
inline std::vector<float> shift_vector(const Checkpoint & rl, const Checkpoint & sft,
                                       const std::string & tensor, const Bitmask & region) {
    const std::vector<float> a = rl.at(tensor).to_f32();
    const std::vector<float> b = sft.at(tensor).to_f32();
    if (a.size() != b.size()) {
        throw Error("tensor '" + tensor + "' shape differs between rl and sft");
    }
    if (region.size() != a.size()) {
        throw Error("region length " + std::to_string(region.size()) + " does not match tensor '" +
                    tensor + "' element count " + std::to_string(a.size()));
    }
    std::vector<float> out;
    out.reserve(region.count());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (region.test(i)) out.push_back(a[i] - b[i]);
    }
    return out;
}

} // namespace mergescope
