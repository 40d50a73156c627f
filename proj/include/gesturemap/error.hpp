#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmap {

enum class ErrorCode {
    parse,
    schema,
    domain,
    degenerate,
    not_found,
    validation,
    conflict,
    internal,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` classifies the failure
/// so the service layer can map it onto an HTTP status.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace gmap
