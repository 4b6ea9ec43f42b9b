#include "mple/task_model.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mple/errors.hpp"

namespace mple {

std::string language_name(Language lang) {
    switch (lang) {
        case Language::python: return "python";
        case Language::java: return "java";
        case Language::cpp: return "cpp";
    }
    return "unknown";
}

Language parse_language(const std::string& name) {
    if (name == "python") return Language::python;
    if (name == "java") return Language::java;
    if (name == "cpp" || name == "c++") return Language::cpp;
    throw ConfigError("unknown language: " + name);
}

std::string gen_step_name(GenStep step) {
    switch (step) {
        case GenStep::generate: return "generate";
        case GenStep::translate: return "translate";
        case GenStep::refine: return "refine";
    }
    return "unknown";
}

std::vector<Violation> validate_task(const TaskSpec& task) {
    std::vector<Violation> out;
    if (task.task_id.empty()) out.push_back({"task_id non-empty", "task_id"});
    if (task.visible_tests.empty()) out.push_back({"visible_tests non-empty", "visible_tests"});
    if (task.hidden_tests.empty()) out.push_back({"hidden_tests non-empty", "hidden_tests"});
    if (task.entry_point.empty()) out.push_back({"entry_point non-empty", "entry_point"});

    auto check_tests = [&out](const std::vector<TestCase>& tests, const std::string& field) {
        std::set<std::string> ids;
        for (const auto& t : tests) {
            if (t.snippet.empty()) out.push_back({"snippet non-empty", field});
            if (!ids.insert(t.test_id).second)
                out.push_back({"test_id unique within task", field});
        }
    };
    check_tests(task.visible_tests, "visible_tests");
    check_tests(task.hidden_tests, "hidden_tests");

    std::set<std::string> visible_snippets;
    for (const auto& t : task.visible_tests) visible_snippets.insert(t.snippet);
    for (const auto& t : task.hidden_tests) {
        if (visible_snippets.count(t.snippet)) {
            out.push_back({"disjoint test sets", "hidden_tests"});
            break;
        }
    }
    return out;
}

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<TestCase> tests_from_field(const nlohmann::json& value, TestKind kind,
                                       const std::string& field, std::size_t record_index) {
    std::vector<TestCase> out;
    const std::string prefix = kind == TestKind::visible ? "v" : "h";
    auto add = [&](const std::string& snippet) {
        out.push_back({prefix + std::to_string(out.size()), snippet, kind});
    };
    if (value.is_string()) {
        add(value.get<std::string>());
    } else if (value.is_array()) {
        for (const auto& item : value) {
            if (!item.is_string())
                throw ParseError("record " + std::to_string(record_index) + ": field '" + field +
                                 "' must contain strings");
            add(item.get<std::string>());
        }
    } else {
        throw ParseError("record " + std::to_string(record_index) + ": field '" + field +
                         "' must be a string or list of strings");
    }
    return out;
}

}  // namespace

TaskSpec task_from_json(const nlohmann::json& record, std::size_t record_index) {
    auto require = [&](const char* field) -> const nlohmann::json& {
        if (!record.contains(field))
            throw ParseError("record " + std::to_string(record_index) + ": missing field '" +
                             std::string(field) + "'");
        return record.at(field);
    };

    TaskSpec task;
    task.task_id = require("task_id").get<std::string>();
    task.description = require("prompt").get<std::string>();
    task.entry_point = require("entry_point").get<std::string>();
    task.primary_language =
        record.contains("language") ? parse_language(record.at("language").get<std::string>())
                                    : Language::python;

    task.hidden_tests =
        tests_from_field(require("hidden_tests"), TestKind::hidden, "hidden_tests", record_index);

    if (record.contains("visible_tests")) {
        task.visible_tests = tests_from_field(record.at("visible_tests"), TestKind::visible,
                                              "visible_tests", record_index);
    } else {
        task.visible_tests = extract_visible_tests(task.description, task.entry_point);
    }
    if (task.visible_tests.empty())
        throw ParseError("record " + std::to_string(record_index) +
                         ": missing field 'visible_tests' and no docstring examples in prompt");
    return task;
}

nlohmann::json task_to_json(const TaskSpec& task) {
    nlohmann::json record;
    record["task_id"] = task.task_id;
    record["prompt"] = task.description;
    record["entry_point"] = task.entry_point;
    record["language"] = language_name(task.primary_language);
    nlohmann::json visible = nlohmann::json::array();
    for (const auto& t : task.visible_tests) visible.push_back(t.snippet);
    record["visible_tests"] = visible;
    nlohmann::json hidden = nlohmann::json::array();
    for (const auto& t : task.hidden_tests) hidden.push_back(t.snippet);
    record["hidden_tests"] = hidden;
    return record;
}

std::vector<TaskSpec> load_dataset(const std::string& path, const std::string& format) {
    if (format != "jsonl") throw ConfigError("unknown dataset format: " + format);
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset file: " + path);

    std::vector<TaskSpec> tasks;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t record_index = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("record " + std::to_string(record_index) + ": invalid JSON: " +
                             e.what());
        }
        TaskSpec task = task_from_json(record, record_index);
        const auto violations = validate_task(task);
        if (!violations.empty())
            throw ValidationError("record " + std::to_string(record_index) +
                                  ": invariant violated: " + violations.front().invariant);
        if (!seen_ids.insert(task.task_id).second)
            throw ValidationError("record " + std::to_string(record_index) +
                                  ": duplicate task_id '" + task.task_id + "'");
        tasks.push_back(std::move(task));
        ++record_index;
    }
    return tasks;
}

std::vector<TestCase> extract_visible_tests(const std::string& description,
                                            const std::string& entry_point) {
    (void)entry_point;  // examples already invoke the entry point by name
    std::vector<std::string> lines;
    {
        std::istringstream stream(description);
        std::string line;
        while (std::getline(stream, line)) lines.push_back(line);
    }

    std::vector<TestCase> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (line.rfind(">>>", 0) != 0) continue;
        const std::string expr = trim(line.substr(3));
        if (expr.empty() || i + 1 >= lines.size()) continue;
        const std::string expected = trim(lines[i + 1]);
        // A bare statement (no printed value) or a follow-up example line
        // yields no assertion.
        if (expected.empty() || expected.rfind(">>>", 0) == 0 || expected.rfind("\"\"\"", 0) == 0)
            continue;
        out.push_back({"v" + std::to_string(out.size()),
                       "assert (" + expr + ") == (" + expected + ")", TestKind::visible});
    }
    return out;
}

}  // namespace mple
