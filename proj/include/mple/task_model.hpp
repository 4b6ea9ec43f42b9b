#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mple {

// Closed language registry. Every primary language must also have an
// execution recipe registered in the sandbox before it can be evaluated.
enum class Language { python, java, cpp };

std::string language_name(Language lang);
Language parse_language(const std::string& name);  // throws ConfigError

enum class TestKind { visible, hidden };

// One executable assertion in the task's primary language. The snippet is
// appended verbatim to a candidate program's source before execution.
struct TestCase {
    std::string test_id;
    std::string snippet;
    TestKind kind = TestKind::visible;

    bool operator==(const TestCase&) const = default;
};

// One benchmark problem: description Q, visible tests T_v, hidden tests T_h.
struct TaskSpec {
    std::string task_id;
    std::string description;
    std::vector<TestCase> visible_tests;
    std::vector<TestCase> hidden_tests;
    std::string entry_point;
    Language primary_language = Language::python;

    bool operator==(const TaskSpec&) const = default;
};

enum class GenStep { generate, translate, refine };

std::string gen_step_name(GenStep step);

// Provenance of a candidate: which step produced it, at which ladder
// position, from which language (translations only), in which outer
// strategy iteration.
struct Lineage {
    GenStep step = GenStep::generate;
    int attempt_index = 0;
    std::optional<Language> source_language;
    int iteration = 0;

    bool operator==(const Lineage&) const = default;
};

struct CandidateProgram {
    std::string source;
    Language language = Language::python;
    Lineage lineage;

    bool operator==(const CandidateProgram&) const = default;
};

// A single invariant violation found by validate_task.
struct Violation {
    std::string invariant;
    std::string field;

    bool operator==(const Violation&) const = default;
};

// Empty result means the task is well-formed. Violations are returned,
// never thrown.
std::vector<Violation> validate_task(const TaskSpec& task);

// Loads a line-delimited JSON dataset. One TaskSpec per record, record
// order preserved. Any malformed record aborts the load; there are no
// partial datasets. The only registered format is "jsonl".
std::vector<TaskSpec> load_dataset(const std::string& path, const std::string& format = "jsonl");

// Parses worked examples embedded in a task description (lines beginning
// with ">>>" followed by a literal expected-value line) into assertion
// snippets. Returns an empty list when the description carries no examples.
std::vector<TestCase> extract_visible_tests(const std::string& description,
                                            const std::string& entry_point);

// Dataset-format (de)serialization; round-trips a loaded TaskSpec.
nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& record, std::size_t record_index);

}  // namespace mple
