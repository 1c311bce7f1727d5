#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"
#include "mergescope/rng.hpp"

namespace mergescope {

struct ProjectionSpec {
    std::uint64_t target_dim = 256;
    std::uint64_t seed = 0;
};

inline double cosine(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw Error("cosine: length mismatch");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error("cosine: zero vector");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Cosine similarity after projecting both vectors through the Q factor of a
// seeded standard-normal source_dim x target_dim matrix G.
//
// Q is never materialized: with G = QR and C = G^T G = R^T R, the projection
// Q^T v equals L^{-1} (G^T v) where C = L L^T is the Cholesky factor (L = R^T,
// positive diagonal, the same convention QR would produce). G's entry (i, j)
// is a pure function of (seed, i, j), so vectors of equal length always see
// the same matrix and results do not depend on call order.
inline double project_cosine(std::span<const float> v1, std::span<const float> v2,
                             const ProjectionSpec & spec) {
    if (v1.size() != v2.size()) throw Error("project_cosine: length mismatch");
    const std::size_t n = v1.size();
    const std::size_t t = static_cast<std::size_t>(spec.target_dim);
    if (t == 0) throw Error("project_cosine: target_dim must be positive");
    if (n < t) {
        throw Error("project_cosine: vectors of length " + std::to_string(n) +
                    " cannot be projected to " + std::to_string(t) + " dimensions");
    }
    bool zero1 = true;
    bool zero2 = true;
    for (std::size_t i = 0; i < n && (zero1 || zero2); ++i) {
        if (v1[i] != 0.0f) zero1 = false;
        if (v2[i] != 0.0f) zero2 = false;
    }
    if (zero1 || zero2) throw Error("project_cosine: zero vector");

    const CounterRng rng(spec.seed, "orthogonal-projection");

    // C = G^T G (symmetric, upper triangle), z = G^T v; G generated row-wise.
    std::vector<double> gram(t * t, 0.0);
    std::vector<double> z1(t, 0.0);
    std::vector<double> z2(t, 0.0);
    std::vector<double> row(t);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t base = static_cast<std::uint64_t>(i) * t;
        for (std::size_t j = 0; j < t; ++j) row[j] = rng.normal(base + j);
        const double a = v1[i];
        const double b = v2[i];
        for (std::size_t j = 0; j < t; ++j) {
            z1[j] += row[j] * a;
            z2[j] += row[j] * b;
        }
        for (std::size_t j = 0; j < t; ++j) {
            const double gj = row[j];
            double * c = gram.data() + j * t;
            for (std::size_t kk = j; kk < t; ++kk) c[kk] += gj * row[kk];
        }
    }

    // In-place Cholesky of the upper-triangle Gram matrix: L stored row-wise
    // in the lower triangle.
    for (std::size_t j = 0; j < t; ++j) {
        double diag = gram[j * t + j];
        for (std::size_t kk = 0; kk < j; ++kk) {
            const double l = gram[j * t + kk];
            diag -= l * l;
        }
        if (!(diag > 0.0)) {
            throw Error("project_cosine: projection matrix is numerically singular");
        }
        const double ljj = std::sqrt(diag);
        gram[j * t + j] = ljj;
        for (std::size_t r = j + 1; r < t; ++r) {
            double v = gram[j * t + r]; // upper triangle holds C(j, r)
            for (std::size_t kk = 0; kk < j; ++kk) {
                v -= gram[r * t + kk] * gram[j * t + kk];
            }
            gram[r * t + j] = v / ljj;
        }
    }

    // Forward solves L y = z.
    for (std::size_t j = 0; j < t; ++j) {
        double a = z1[j];
        double b = z2[j];
        for (std::size_t kk = 0; kk < j; ++kk) {
            a -= gram[j * t + kk] * z1[kk];
            b -= gram[j * t + kk] * z2[kk];
        }
        z1[j] = a / gram[j * t + j];
        z2[j] = b / gram[j * t + j];
    }

    double dot = 0.0;
    double n1 = 0.0;
    double n2 = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
        dot += z1[j] * z2[j];
        n1 += z1[j] * z1[j];
        n2 += z2[j] * z2[j];
    }
    if (n1 == 0.0 || n2 == 0.0) throw Error("project_cosine: zero vector");
    return dot / (std::sqrt(n1) * std::sqrt(n2));
}

} // namespace mergescope
