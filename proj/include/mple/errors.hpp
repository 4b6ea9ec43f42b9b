#pragma once

#include <stdexcept>
#include <string>

namespace mple {

// Bad configuration supplied by the operator (unknown language, malformed
// recipe, invalid flag combination).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure; message carries the offending path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data (dataset record, script entry).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structurally well-formed input that violates a domain invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Harness-level failure that prevents reaching a verdict for a task.
// Tasks failing this way are reported separately and excluded from the
// pass@1 denominator.
struct InfrastructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Live backend gave up after exhausting retries.
struct BackendError : InfrastructureError {
    BackendError(const std::string& msg, int http_status = 0)
        : InfrastructureError(msg), status(http_status) {}
    int status;
};

// Scripted backend has no entry for the request fingerprint.
struct ScriptMissError : InfrastructureError {
    explicit ScriptMissError(const std::string& request_fingerprint)
        : InfrastructureError("no scripted response for request: " + request_fingerprint),
          fingerprint(request_fingerprint) {}
    std::string fingerprint;
};

// Backend response contained no usable code.
struct ExtractionError : InfrastructureError {
    explicit ExtractionError(std::string raw)
        : InfrastructureError("no extractable code block in backend response"),
          raw_response(std::move(raw)) {}
    std::string raw_response;
};

// Caller broke an API precondition.
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace mple
