#pragma once

#include <stdexcept>
#include <string>

namespace qer {

// Rejection raised by a library module. The message is prefixed with the
// module name ("geometry: ...", "eigensolver: ...") so that errors surfacing
// through the CLI stay attributable.
class DomainError : public std::runtime_error {
public:
    DomainError(const std::string& module, const std::string& what)
        : std::runtime_error(module + ": " + what), module_(module) {}

    const std::string& module() const noexcept { return module_; }

private:
    std::string module_;
};

// Malformed configuration (unknown key, bad value, stage dependency).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const char* module, const std::string& what) {
    if (!cond) throw DomainError(module, what);
}

}  // namespace detail
}  // namespace qer
