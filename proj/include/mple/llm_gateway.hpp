#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mple/sandbox.hpp"
#include "mple/task_model.hpp"

namespace mple {

// Template version recorded in run reports; bump when prompt wording changes.
inline constexpr const char* kPromptTemplateVersion = "v1";

// Environment variable holding the live API credential. Never echoed in
// reports and scrubbed from candidate subprocesses.
inline constexpr const char* kApiKeyEnvVar = "MPLE_API_KEY";

struct GenerationRequest {
    GenStep kind = GenStep::generate;
    std::string task_id;
    std::string description;  // the task's Q
    std::vector<TestCase> visible_tests;
    Language target_language = Language::python;
    std::optional<CandidateProgram> source_program;  // required for translate
    std::optional<Feedback> feedback;                // required for refine
    int attempt_index = 0;
    int iteration = 0;  // outer strategy iteration, lineage only
};

// Throws ContractViolation when the request invariants do not hold.
void validate_request(const GenerationRequest& request);

enum class BackendMode { live, scripted };

struct BackendDescriptor {
    BackendMode mode = BackendMode::scripted;
    std::string endpoint;     // live only
    std::string model_name;   // live only
    std::string script_path;  // scripted only
    double request_timeout = 60.0;
    int max_retries = 3;
    double temperature = 0.0;
    unsigned max_inflight = 4;  // live only
};

struct UsageRecord {
    std::uint64_t requests = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    double total_latency_seconds = 0.0;
};

class LlmBackend {
  public:
    virtual ~LlmBackend() = default;
    // Returns the raw model response for a request; `prompt` is the text
    // built by build_prompt (the scripted backend keys on the request
    // fingerprint instead).
    virtual std::string complete(const GenerationRequest& request, const std::string& prompt) = 0;
    virtual UsageRecord record_usage() const = 0;
    virtual std::string model_name() const = 0;
};

std::unique_ptr<LlmBackend> make_backend(const BackendDescriptor& descriptor);

// Deterministic text for a request: description + visible tests (generate),
// source program and both language names (translate), failure summary
// appended (refine or any request carrying feedback).
std::string build_prompt(const GenerationRequest& request);

// Lookup key for the scripted backend and error messages:
// task_id, kind, target language, attempt index, and (refine only) a stable
// hash of the feedback summary.
std::string request_fingerprint(const GenerationRequest& request);

// FNV-1a 64-bit hex digest; used to key refine responses on their feedback.
std::string feedback_hash(const std::string& summary);

// First fenced code block if present, else the whole response. Throws
// ExtractionError when no non-blank code can be extracted.
std::string extract_code(const std::string& response);

// One LLM round trip: build the prompt, call the backend, extract the code,
// stamp lineage from the request.
CandidateProgram generate(const GenerationRequest& request, LlmBackend& backend);

}  // namespace mple
