#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mergescope/errors.hpp"
#include "mergescope/tensor.hpp"

namespace mergescope {

// Single-file tensor archive:
//   bytes 0..7   unsigned 64-bit little-endian header length N
//   bytes 8..8+N UTF-8 JSON object: name -> {dtype, shape, data_offsets},
//                plus an optional "__metadata__" string map
//   rest         raw payload; data_offsets are relative to byte 8+N
// Extents must be non-overlapping and exactly tile the payload.

struct TensorEntry {
    DType dtype = DType::F32;
    std::vector<std::uint64_t> shape;
    std::uint64_t begin = 0;
    std::uint64_t end = 0;
};

namespace detail {

inline nlohmann::json parse_archive_header(const std::string & text) {
    // The callback sees every object key while parsing; top-level keys are the
    // tensor names, which plain DOM parsing would silently deduplicate.
    std::set<std::string> seen;
    nlohmann::json::parser_callback_t cb = [&seen](int depth, nlohmann::json::parse_event_t event,
                                                   nlohmann::json & parsed) {
        if (event == nlohmann::json::parse_event_t::key && depth == 1) {
            const std::string key = parsed.get<std::string>();
            if (!seen.insert(key).second) {
                throw ArchiveError("duplicate tensor name: " + key);
            }
        }
        return true;
    };
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text, cb);
    } catch (const ArchiveError &) {
        throw;
    } catch (const nlohmann::json::exception & e) {
        throw ArchiveError(std::string("header is not valid JSON: ") + e.what());
    }
    if (!header.is_object()) throw ArchiveError("header must be a JSON object");
    return header;
}

inline std::vector<std::uint64_t> parse_shape(const nlohmann::json & j, const std::string & name) {
    if (!j.is_array()) throw ArchiveError("tensor '" + name + "': shape must be an array");
    std::vector<std::uint64_t> shape;
    shape.reserve(j.size());
    for (const auto & d : j) {
        if (!d.is_number_integer() && !d.is_number_unsigned()) {
            throw ArchiveError("tensor '" + name + "': shape entries must be integers");
        }
        if (d.is_number_integer() && d.get<std::int64_t>() < 0) {
            throw ArchiveError("tensor '" + name + "': negative shape entry");
        }
        shape.push_back(d.get<std::uint64_t>());
    }
    return shape;
}

} // namespace detail

// Lazily reads tensors from an archive so checkpoints larger than RAM can be
// processed one tensor at a time.
class ArchiveReader {
public:
    explicit ArchiveReader(const std::filesystem::path & path) : path_(path.string()) {
        file_.open(path, std::ios::binary);
        if (!file_) throw ArchiveError("cannot open archive: " + path_);

        file_.seekg(0, std::ios::end);
        const std::uint64_t file_size = static_cast<std::uint64_t>(file_.tellg());
        file_.seekg(0);
        if (file_size < 8) {
            throw ArchiveError("truncated file: " + path_ + " holds " + std::to_string(file_size) +
                               " bytes, need at least 8 for the header length");
        }

        std::uint8_t len_bytes[8];
        file_.read(reinterpret_cast<char *>(len_bytes), 8);
        std::uint64_t header_len = 0;
        for (int i = 7; i >= 0; --i) header_len = header_len << 8 | len_bytes[i];
        if (header_len > file_size - 8) {
            throw ArchiveError("truncated file: header declares " + std::to_string(header_len) +
                               " bytes but only " + std::to_string(file_size - 8) + " follow");
        }

        std::string header_text(header_len, '\0');
        file_.read(header_text.data(), static_cast<std::streamsize>(header_len));
        if (!file_) throw ArchiveError("i/o error reading header of " + path_);

        payload_offset_ = 8 + header_len;
        payload_size_ = file_size - payload_offset_;

        const nlohmann::json header = detail::parse_archive_header(header_text);
        for (const auto & [key, value] : header.items()) {
            if (key == "__metadata__") {
                if (!value.is_object()) throw ArchiveError("__metadata__ must be an object");
                for (const auto & [mk, mv] : value.items()) {
                    if (!mv.is_string()) {
                        throw ArchiveError("__metadata__ values must be strings");
                    }
                    metadata_[mk] = mv.get<std::string>();
                }
                continue;
            }
            if (!value.is_object()) {
                throw ArchiveError("tensor '" + key + "': entry must be an object");
            }
            if (!value.contains("dtype") || !value.contains("shape") ||
                !value.contains("data_offsets")) {
                throw ArchiveError("tensor '" + key +
                                   "': entry needs dtype, shape and data_offsets");
            }
            TensorEntry entry;
            if (!value["dtype"].is_string()) {
                throw ArchiveError("tensor '" + key + "': dtype must be a string");
            }
            try {
                entry.dtype = dtype_from_name(value["dtype"].get<std::string>());
            } catch (const ArchiveError & e) {
                throw ArchiveError(std::string(e.what()) + " (tensor '" + key + "')");
            }
            entry.shape = detail::parse_shape(value["shape"], key);

            const auto & off = value["data_offsets"];
            if (!off.is_array() || off.size() != 2 || !off[0].is_number_unsigned() ||
                !off[1].is_number_unsigned()) {
                throw ArchiveError("tensor '" + key +
                                   "': data_offsets must be two nonnegative integers");
            }
            entry.begin = off[0].get<std::uint64_t>();
            entry.end = off[1].get<std::uint64_t>();
            if (entry.begin > entry.end) {
                throw ArchiveError("tensor '" + key + "': data_offsets out of order");
            }
            if (entry.end > payload_size_) {
                throw ArchiveError("payload overrun: tensor '" + key + "' extent [" +
                                   std::to_string(entry.begin) + ", " + std::to_string(entry.end) +
                                   ") exceeds payload size " + std::to_string(payload_size_));
            }

            std::uint64_t numel = 1;
            for (std::uint64_t d : entry.shape) numel *= d;
            const std::uint64_t need = numel * dtype_size(entry.dtype);
            if (entry.end - entry.begin != need) {
                throw ArchiveError("tensor '" + key + "': extent holds " +
                                   std::to_string(entry.end - entry.begin) +
                                   " bytes, dtype and shape require " + std::to_string(need));
            }
            entries_.emplace(key, std::move(entry));
        }

        check_tiling();
    }

    const std::string & path() const { return path_; }
    const std::map<std::string, std::string> & metadata() const { return metadata_; }
    const std::map<std::string, TensorEntry> & entries() const { return entries_; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto & [name, entry] : entries_) out.push_back(name);
        return out;
    }

    bool contains(const std::string & name) const { return entries_.count(name) != 0; }

    TensorRecord read_tensor(const std::string & name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) {
            throw ArchiveError("unknown tensor '" + name + "' in " + path_);
        }
        const TensorEntry & e = it->second;
        TensorRecord r;
        r.name = name;
        r.dtype = e.dtype;
        r.shape = e.shape;
        r.data.resize(e.end - e.begin);
        file_.seekg(static_cast<std::streamoff>(payload_offset_ + e.begin));
        file_.read(reinterpret_cast<char *>(r.data.data()),
                   static_cast<std::streamsize>(r.data.size()));
        if (!file_) throw ArchiveError("i/o error reading tensor '" + name + "' from " + path_);
        return r;
    }

private:
    void check_tiling() {
        std::vector<std::pair<std::pair<std::uint64_t, std::uint64_t>, std::string>> spans;
        spans.reserve(entries_.size());
        for (const auto & [name, e] : entries_) spans.push_back({{e.begin, e.end}, name});
        std::sort(spans.begin(), spans.end());
        std::uint64_t cursor = 0;
        std::string prev;
        for (const auto & [span, name] : spans) {
            if (span.first < cursor) {
                throw ArchiveError("overlapping tensor extents: '" + prev + "' and '" + name +
                                   "'");
            }
            if (span.first > cursor) {
                throw ArchiveError("payload gap before tensor '" + name + "': bytes " +
                                   std::to_string(cursor) + ".." + std::to_string(span.first) +
                                   " are not covered");
            }
            cursor = span.second;
            if (span.second > span.first) prev = name;
        }
        if (cursor != payload_size_) {
            throw ArchiveError("payload gap at end of archive: " + std::to_string(cursor) +
                               " bytes declared, payload holds " + std::to_string(payload_size_));
        }
    }

    std::string path_;
    std::ifstream file_;
    std::uint64_t payload_offset_ = 0;
    std::uint64_t payload_size_ = 0;
    std::map<std::string, TensorEntry> entries_;
    std::map<std::string, std::string> metadata_;
};

struct TensorSpec {
    std::string name;
    DType dtype = DType::F32;
    std::vector<std::uint64_t> shape;
};

// Streaming writer: the header (and hence every offset) is fixed up front
// from the declared specs, then payloads are appended in declaration order.
// The file appears at its final path only after finish(); an abandoned sink
// removes its temporary so failures never leave a truncated archive behind.
class ArchiveSink {
public:
    ArchiveSink(const std::filesystem::path & path, std::vector<TensorSpec> specs,
                const std::map<std::string, std::string> & metadata = {})
        : final_path_(path), tmp_path_(path.string() + ".tmp"), specs_(std::move(specs)) {
        std::sort(specs_.begin(), specs_.end(),
                  [](const TensorSpec & a, const TensorSpec & b) { return a.name < b.name; });
        for (std::size_t i = 1; i < specs_.size(); ++i) {
            if (specs_[i].name == specs_[i - 1].name) {
                throw ArchiveError("duplicate tensor name: " + specs_[i].name);
            }
        }

        nlohmann::json header = nlohmann::json::object();
        if (!metadata.empty()) {
            header["__metadata__"] = metadata;
        }
        std::uint64_t cursor = 0;
        for (const TensorSpec & s : specs_) {
            std::uint64_t numel = 1;
            for (std::uint64_t d : s.shape) numel *= d;
            const std::uint64_t bytes = numel * dtype_size(s.dtype);
            header[s.name] = {{"dtype", dtype_name(s.dtype)},
                              {"shape", s.shape},
                              {"data_offsets", {cursor, cursor + bytes}}};
            cursor += bytes;
        }
        payload_size_ = cursor;

        // nlohmann objects iterate sorted by key, so the dump is deterministic.
        const std::string text = header.dump();

        file_.open(tmp_path_, std::ios::binary | std::ios::trunc);
        if (!file_) throw ArchiveError("cannot write archive: " + final_path_.string());
        std::uint8_t len_bytes[8];
        for (int i = 0; i < 8; ++i) {
            len_bytes[i] = static_cast<std::uint8_t>(text.size() >> 8 * i & 0xff);
        }
        file_.write(reinterpret_cast<const char *>(len_bytes), 8);
        file_.write(text.data(), static_cast<std::streamsize>(text.size()));
    }

    ~ArchiveSink() {
        if (!finished_) {
            file_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_path_, ec);
        }
    }

    ArchiveSink(const ArchiveSink &) = delete;
    ArchiveSink & operator=(const ArchiveSink &) = delete;

    // Tensors must be appended in lexicographic name order.
    const std::vector<TensorSpec> & specs() const { return specs_; }

    void append(const TensorRecord & r) {
        if (next_ >= specs_.size()) throw ArchiveError("append past declared tensor list");
        const TensorSpec & s = specs_[next_];
        if (r.name != s.name || r.dtype != s.dtype || r.shape != s.shape) {
            throw ArchiveError("appended tensor '" + r.name + "' does not match declared spec '" +
                               s.name + "'");
        }
        r.validate();
        file_.write(reinterpret_cast<const char *>(r.data.data()),
                    static_cast<std::streamsize>(r.data.size()));
        written_ += r.data.size();
        ++next_;
    }

    void finish() {
        if (next_ != specs_.size() || written_ != payload_size_) {
            throw ArchiveError("archive incomplete: " + std::to_string(next_) + "/" +
                               std::to_string(specs_.size()) + " tensors appended");
        }
        file_.flush();
        if (!file_) throw ArchiveError("i/o error writing " + final_path_.string());
        file_.close();
        std::filesystem::rename(tmp_path_, final_path_);
        finished_ = true;
    }

private:
    std::filesystem::path final_path_;
    std::filesystem::path tmp_path_;
    std::vector<TensorSpec> specs_;
    std::ofstream file_;
    std::uint64_t payload_size_ = 0;
    std::uint64_t written_ = 0;
    std::size_t next_ = 0;
    bool finished_ = false;
};

inline Checkpoint read_archive(const std::filesystem::path & path) {
    ArchiveReader reader(path);
    Checkpoint c;
    c.metadata = reader.metadata();
    for (const std::string & name : reader.names()) {
        c.tensors.emplace(name, reader.read_tensor(name));
    }
    return c;
}

inline void write_archive(const Checkpoint & c, const std::filesystem::path & path) {
    std::vector<TensorSpec> specs;
    specs.reserve(c.tensors.size());
    for (const auto & [name, r] : c.tensors) {
        if (name != r.name) throw Error("tensor key '" + name + "' != record name '" + r.name + "'");
        r.validate();
        specs.push_back({r.name, r.dtype, r.shape});
    }
    ArchiveSink sink(path, std::move(specs), c.metadata);
    for (const auto & [name, r] : c.tensors) sink.append(r);
    sink.finish();
}

} // namespace mergescope
