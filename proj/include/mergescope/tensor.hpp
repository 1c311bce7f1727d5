#pragma once

#include <cstdint>
#include <cstring>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mergescope/bf16.hpp"
#include "mergescope/errors.hpp"

namespace mergescope {

enum class DType : std::uint8_t { BF16, F32 };

inline std::size_t dtype_size(DType t) {
    return t == DType::BF16 ? 2 : 4;
}

inline const char * dtype_name(DType t) {
    return t == DType::BF16 ? "BF16" : "F32";
}

inline DType dtype_from_name(std::string_view s) {
    if (s == "BF16") return DType::BF16;
    if (s == "F32") return DType::F32;
    throw ArchiveError("unknown dtype tag: " + std::string(s));
}

// One named tensor: contiguous row-major little-endian element buffer.
struct TensorRecord {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> data;

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (std::uint64_t d : shape) n *= d;
        return n;
    }

    std::uint64_t byte_size() const { return numel() * dtype_size(dtype); }

    void validate() const {
        if (data.size() != byte_size()) {
            throw Error("tensor '" + name + "': buffer holds " + std::to_string(data.size()) +
                        " bytes, dtype and shape require " + std::to_string(byte_size()));
        }
    }

    // Widen the buffer to f32 values.
    std::vector<float> to_f32() const {
        validate();
        const std::uint64_t n = numel();
        std::vector<float> out(n);
        const std::uint8_t * p = data.data();
        if (dtype == DType::BF16) {
            for (std::uint64_t i = 0; i < n; ++i) {
                const std::uint16_t h = static_cast<std::uint16_t>(p[2 * i]) |
                                        static_cast<std::uint16_t>(p[2 * i + 1]) << 8;
                out[i] = bf16_to_f32(h);
            }
        } else {
            for (std::uint64_t i = 0; i < n; ++i) {
                std::uint32_t u = static_cast<std::uint32_t>(p[4 * i]) |
                                  static_cast<std::uint32_t>(p[4 * i + 1]) << 8 |
                                  static_cast<std::uint32_t>(p[4 * i + 2]) << 16 |
                                  static_cast<std::uint32_t>(p[4 * i + 3]) << 24;
                static_assert(sizeof(float) == 4);
                std::memcpy(&out[i], &u, 4);
            }
        }
        return out;
    }

    // Narrow f32 values into a fresh record (round-to-nearest-even for BF16).
    static TensorRecord from_f32(std::string name, DType dtype, std::vector<std::uint64_t> shape,
                                 std::span<const float> values) {
        TensorRecord r;
        r.name = std::move(name);
        r.dtype = dtype;
        r.shape = std::move(shape);
        const std::uint64_t n = r.numel();
        if (values.size() != n) {
            throw Error("tensor '" + r.name + "': got " + std::to_string(values.size()) +
                        " values, shape requires " + std::to_string(n));
        }
        r.data.resize(r.byte_size());
        std::uint8_t * p = r.data.data();
        if (dtype == DType::BF16) {
            for (std::uint64_t i = 0; i < n; ++i) {
                const std::uint16_t h = f32_to_bf16(values[i]);
                p[2 * i] = static_cast<std::uint8_t>(h & 0xff);
                p[2 * i + 1] = static_cast<std::uint8_t>(h >> 8);
            }
        } else {
            for (std::uint64_t i = 0; i < n; ++i) {
                std::uint32_t u;
                std::memcpy(&u, &values[i], 4);
                p[4 * i] = static_cast<std::uint8_t>(u & 0xff);
                p[4 * i + 1] = static_cast<std::uint8_t>(u >> 8 & 0xff);
                p[4 * i + 2] = static_cast<std::uint8_t>(u >> 16 & 0xff);
                p[4 * i + 3] = static_cast<std::uint8_t>(u >> 24 & 0xff);
            }
        }
        return r;
    }

    friend bool operator==(const TensorRecord & a, const TensorRecord & b) {
        return a.name == b.name && a.dtype == b.dtype && a.shape == b.shape && a.data == b.data;
    }
};

// A whole checkpoint. std::map keeps iteration lexicographic by name.
struct Checkpoint {
    std::map<std::string, TensorRecord> tensors;
    std::map<std::string, std::string> metadata;

    void add(TensorRecord r) {
        r.validate();
        const std::string name = r.name;
        if (!tensors.emplace(name, std::move(r)).second) {
            throw Error("duplicate tensor name: " + name);
        }
    }

    const TensorRecord & at(const std::string & name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("unknown tensor: " + name);
        return it->second;
    }

    friend bool operator==(const Checkpoint & a, const Checkpoint & b) {
        return a.tensors == b.tensors && a.metadata == b.metadata;
    }
};

// Checks two checkpoints agree on tensor names and shapes (the precondition
// shared by task vectors, merging and mask construction).
inline void require_same_geometry(const Checkpoint & a, const Checkpoint & b,
                                  std::string_view what_a, std::string_view what_b) {
    auto ia = a.tensors.begin();
    auto ib = b.tensors.begin();
    while (ia != a.tensors.end() && ib != b.tensors.end()) {
        if (ia->first != ib->first) {
            throw Error("tensor name sets differ between " + std::string(what_a) + " and " +
                        std::string(what_b) + " (near '" +
                        (ia->first < ib->first ? ia->first : ib->first) + "')");
        }
        if (ia->second.shape != ib->second.shape) {
            throw Error("tensor '" + ia->first + "' shape differs between " + std::string(what_a) +
                        " and " + std::string(what_b));
        }
        ++ia;
        ++ib;
    }
    if (ia != a.tensors.end() || ib != b.tensors.end()) {
        throw Error("tensor name sets differ between " + std::string(what_a) + " and " +
                    std::string(what_b));
    }
}

} // namespace mergescope
