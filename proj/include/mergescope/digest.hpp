#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "mergescope/errors.hpp"

namespace mergescope {

// FNV-1a 64 content digest, used to name inputs in provenance sidecars.
inline std::string fnv1a64_file_hex(const std::filesystem::path & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for digest: " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize got = f.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x00000100000001b3ULL;
        }
    }
    static const char * hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

} // namespace mergescope
