#pragma once

#include <stdexcept>
#include <string>

namespace ncodec {

enum class ErrorKind {
    io,
    format,
    config,        // invalid configuration
    prerequisite,  // missing checkpoint or other precondition
    compatibility, // checkpoint / bitstream mismatch
    corrupt,       // malformed bitstream or container
    shape,
    state,         // operation not allowed in the current state (e.g. frozen codebook)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace ncodec
