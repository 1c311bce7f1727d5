#pragma once

#include <stdexcept>
#include <string>

namespace mergescope {

// Base class for everything this library throws on bad input or bad files.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string & msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable tensor archives.
class ArchiveError : public Error {
public:
    explicit ArchiveError(const std::string & msg) : Error(msg) {}
};

} // namespace mergescope
