#pragma once

#include <stdexcept>
#include <string>

namespace gramsld {

// Input or state that violates a documented contract. Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimistic-concurrency failure on the label store.
class RevisionConflict : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NotFound : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Detector plugin failed (nonzero exit, timeout, malformed report). Exit code 3.
class PluginFailure : public std::runtime_error {
public:
    PluginFailure(const std::string& what, std::string diagnostics = {})
        : std::runtime_error(what), diagnostics_(std::move(diagnostics)) {}

    const std::string& diagnostics() const noexcept { return diagnostics_; }

private:
    std::string diagnostics_;
};

// Optional plugin capability is absent. Distinct from failure.
class Unsupported : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gramsld
