#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mple/task_model.hpp"

namespace mple {

struct ExecutionLimits {
    double wall_clock_timeout = 10.0;          // seconds per test
    std::uint64_t memory_cap = 512ull << 20;   // bytes of address space
    std::size_t max_output_bytes = 64 * 1024;  // captured stdout+stderr
};

enum class TestStatus { passed, failed, error, timeout };

std::string test_status_name(TestStatus status);

struct TestOutcome {
    std::string test_id;
    TestStatus status = TestStatus::error;
    std::string diagnostic;  // empty iff passed
    double duration = 0.0;   // seconds
};

struct EvalReport {
    CandidateProgram program;
    std::vector<TestOutcome> outcomes;  // one per submitted test, in order
    bool all_passed = false;
};

struct FailedTest {
    std::string test_id;
    std::string snippet;
    std::string diagnostic;
};

// Distilled failure evidence fed back into refinement prompts. Exists only
// for failing reports.
struct Feedback {
    std::vector<FailedTest> failed_tests;
    std::string summary;
};

// Pairs every non-passed outcome with its snippet and builds a bounded,
// deterministic summary keeping the earliest failures. Throws
// ContractViolation on an all-passed report.
Feedback collect_feedback(const EvalReport& report, const std::vector<TestCase>& tests,
                          std::size_t summary_budget_bytes = 2048);

// How to run candidates in one language: the composed source file name, an
// optional compile step, the run command, and the stderr markers that
// distinguish an assertion failure from any other crash. Commands are shell
// templates with {source}, {scratch} and {exe} placeholders.
struct ExecutionRecipe {
    std::string source_file;
    std::optional<std::string> compile_command;
    std::string run_command;
    std::vector<std::string> assertion_markers;
};

// Seam between the strategies and the real subprocess sandbox; test code
// substitutes an in-memory runner here.
class TestRunner {
  public:
    virtual ~TestRunner() = default;
    virtual EvalReport run_tests(const CandidateProgram& program,
                                 const std::vector<TestCase>& tests,
                                 const ExecutionLimits& limits) = 0;
};

struct SandboxOptions {
    std::filesystem::path scratch_root;  // empty → system temp dir
    bool keep_artifacts = false;
    unsigned max_parallel = 0;  // 0 → hardware concurrency
};

// Runs each test in an isolated subprocess: fresh scratch directory,
// scrubbed environment, wall-clock timeout, address-space cap, output cap.
// The snippet is appended to the candidate source and the composed file is
// executed per test, so one failing test cannot mask another.
class Sandbox : public TestRunner {
  public:
    explicit Sandbox(SandboxOptions options = {});

    void register_language(Language language, ExecutionRecipe recipe);
    bool has_recipe(Language language) const;

    EvalReport run_tests(const CandidateProgram& program, const std::vector<TestCase>& tests,
                         const ExecutionLimits& limits) override;

  private:
    SandboxOptions options_;
    mutable std::mutex mutex_;
    std::map<Language, ExecutionRecipe> recipes_;
};

}  // namespace mple
