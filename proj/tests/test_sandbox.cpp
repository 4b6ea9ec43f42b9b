#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "mple/errors.hpp"
#include "mple/llm_gateway.hpp"
#include "mple/sandbox.hpp"

using namespace mple;

namespace {

CandidateProgram python_program(const std::string& source) {
    return {source, Language::python, {}};
}

ExecutionLimits fast_limits() {
    ExecutionLimits limits;
    limits.wall_clock_timeout = 5.0;
    return limits;
}

}  // namespace

TEST_CASE("correct program passes its assertion") {
    Sandbox sandbox;
    const auto report = sandbox.run_tests(python_program("def add(a, b):\n    return a + b"),
                                          {{"t0", "assert add(1, 2) == 3", TestKind::visible}},
                                          fast_limits());
    REQUIRE(report.outcomes.size() == 1);
    CHECK(report.all_passed);
    CHECK(report.outcomes[0].status == TestStatus::passed);
    CHECK(report.outcomes[0].diagnostic.empty());
}

TEST_CASE("wrong arithmetic yields [failed, passed]") {
    // Hand-derived: add(1,2) = 1-2 = -1 != 3 → failed; add(0,0) = 0 → passed.
    Sandbox sandbox;
    const auto report =
        sandbox.run_tests(python_program("def add(a, b):\n    return a - b"),
                          {{"t0", "assert add(1, 2) == 3", TestKind::visible},
                           {"t1", "assert add(0, 0) == 0", TestKind::visible}},
                          fast_limits());
    REQUIRE(report.outcomes.size() == 2);
    CHECK_FALSE(report.all_passed);
    CHECK(report.outcomes[0].status == TestStatus::failed);
    CHECK(!report.outcomes[0].diagnostic.empty());
    CHECK(report.outcomes[1].status == TestStatus::passed);
}

TEST_CASE("infinite loop hits the wall-clock timeout") {
    Sandbox sandbox;
    ExecutionLimits limits;
    limits.wall_clock_timeout = 1.0;
    const auto report = sandbox.run_tests(
        python_program("def f():\n    return 1\nwhile True:\n    pass"),
        {{"t0", "assert f() == 1", TestKind::visible}}, limits);
    REQUIRE(report.outcomes.size() == 1);
    CHECK(report.outcomes[0].status == TestStatus::timeout);
    CHECK(report.outcomes[0].diagnostic == "timeout");
    CHECK(report.outcomes[0].duration >= 1.0);
}

TEST_CASE("assertion failures are failed, other crashes are error") {
    Sandbox sandbox;
    const auto report = sandbox.run_tests(
        python_program("def f(x):\n    if x == 2:\n        raise ValueError('bad')\n"
                       "    return 0"),
        {{"assert", "assert f(1) == 1", TestKind::visible},
         {"crash", "f(2)", TestKind::visible}},
        fast_limits());
    REQUIRE(report.outcomes.size() == 2);
    CHECK(report.outcomes[0].status == TestStatus::failed);
    CHECK(report.outcomes[1].status == TestStatus::error);
    CHECK(report.outcomes[1].diagnostic.find("ValueError") != std::string::npos);
}

TEST_CASE("unregistered language is a configuration error") {
    Sandbox sandbox;  // java has no default recipe
    CHECK_THROWS_AS(sandbox.run_tests({"class A {}", Language::java, {}},
                                      {{"t0", "x", TestKind::visible}}, fast_limits()),
                    ConfigError);
}

TEST_CASE("register_language replaces recipes and rejects malformed ones") {
    Sandbox sandbox;
    CHECK_THROWS_AS(sandbox.register_language(Language::java, {"", std::nullopt, "", {}}),
                    ConfigError);
    CHECK_FALSE(sandbox.has_recipe(Language::java));
    sandbox.register_language(Language::java, {"Main.py", std::nullopt, "python3 {source}",
                                               {"AssertionError"}});
    CHECK(sandbox.has_recipe(Language::java));
}

TEST_CASE("equivalent programs pass in two registered languages") {
    // Two-language fixture pair: same function, same assertion semantics.
    Sandbox sandbox;
    const auto py = sandbox.run_tests(python_program("def add(a, b):\n    return a + b"),
                                      {{"t0", "assert add(2, 3) == 5", TestKind::visible}},
                                      fast_limits());
    CHECK(py.all_passed);

    CandidateProgram cpp{"#include <cassert>\nint add(int a, int b) { return a + b; }",
                         Language::cpp,
                         {}};
    const auto cc = sandbox.run_tests(
        cpp, {{"t0", "int main() { assert(add(2, 3) == 5); return 0; }", TestKind::visible}},
        fast_limits());
    CHECK(cc.all_passed);

    // And a failing C++ assertion is classified as failed, not error.
    const auto bad = sandbox.run_tests(
        cpp, {{"t0", "int main() { assert(add(2, 3) == 6); return 0; }", TestKind::visible}},
        fast_limits());
    CHECK(bad.outcomes[0].status == TestStatus::failed);
}

TEST_CASE("compile errors yield status error with the compiler diagnostic") {
    Sandbox sandbox;
    const auto report = sandbox.run_tests({"int add(int a { return a; }", Language::cpp, {}},
                                          {{"t0", "int main() { return 0; }", TestKind::visible}},
                                          fast_limits());
    CHECK(report.outcomes[0].status == TestStatus::error);
    CHECK(!report.outcomes[0].diagnostic.empty());
}

TEST_CASE("candidate environment is scrubbed") {
    setenv(kApiKeyEnvVar, "super-secret", 1);
    Sandbox sandbox;
    const auto report = sandbox.run_tests(
        python_program("import os\ndef probe():\n    return os.environ.get('MPLE_API_KEY')"),
        {{"t0", "assert probe() is None", TestKind::visible}}, fast_limits());
    CHECK(report.all_passed);
    unsetenv(kApiKeyEnvVar);
}

TEST_CASE("each execution gets a fresh scratch directory") {
    Sandbox sandbox;
    const auto writer = sandbox.run_tests(
        python_program("def f():\n    open('marker.txt', 'w').write('x')\n    return 1"),
        {{"t0", "assert f() == 1", TestKind::visible}}, fast_limits());
    CHECK(writer.all_passed);

    const auto reader = sandbox.run_tests(
        python_program("import os\ndef f():\n    return os.path.exists('marker.txt')"),
        {{"t0", "assert f() == False", TestKind::visible}}, fast_limits());
    CHECK(reader.all_passed);
}

TEST_CASE("concurrent filesystem writers never observe each other") {
    Sandbox sandbox;
    auto writer_program = [](const std::string& tag) {
        return python_program("def f():\n"
                              "    open('shared.txt', 'w').write('" + tag + "')\n"
                              "    return open('shared.txt').read()");
    };
    EvalReport a, b;
    std::thread ta([&] {
        a = sandbox.run_tests(writer_program("A"),
                              {{"t0", "assert f() == 'A'", TestKind::visible}}, fast_limits());
    });
    std::thread tb([&] {
        b = sandbox.run_tests(writer_program("B"),
                              {{"t0", "assert f() == 'B'", TestKind::visible}}, fast_limits());
    });
    ta.join();
    tb.join();
    CHECK(a.all_passed);
    CHECK(b.all_passed);
}

TEST_CASE("deterministic candidates give identical status vectors") {
    Sandbox sandbox;
    const CandidateProgram program = python_program("def add(a, b):\n    return a - b");
    const std::vector<TestCase> tests = {{"t0", "assert add(1, 2) == 3", TestKind::visible},
                                         {"t1", "assert add(0, 0) == 0", TestKind::visible}};
    const auto first = sandbox.run_tests(program, tests, fast_limits());
    for (int i = 0; i < 3; ++i) {
        const auto again = sandbox.run_tests(program, tests, fast_limits());
        REQUIRE(again.outcomes.size() == first.outcomes.size());
        for (std::size_t j = 0; j < again.outcomes.size(); ++j) {
            CHECK(again.outcomes[j].status == first.outcomes[j].status);
            CHECK(again.outcomes[j].diagnostic == first.outcomes[j].diagnostic);
        }
    }
}

TEST_CASE("collect_feedback pairs failures and builds a bounded summary") {
    std::vector<TestCase> tests = {{"a", "assert f(1) == 2", TestKind::visible},
                                   {"b", "assert f(2) == 3", TestKind::visible},
                                   {"c", "assert f(3) == 4", TestKind::visible}};

    SUBCASE("one failure, one entry") {
        EvalReport report;
        report.outcomes = {{"a", TestStatus::failed, "boom", 0.0},
                           {"b", TestStatus::passed, "", 0.0},
                           {"c", TestStatus::passed, "", 0.0}};
        report.all_passed = false;
        const auto feedback = collect_feedback(report, tests);
        REQUIRE(feedback.failed_tests.size() == 1);
        CHECK(feedback.failed_tests[0].test_id == "a");
        CHECK(feedback.failed_tests[0].snippet == "assert f(1) == 2");
        CHECK(feedback.failed_tests[0].diagnostic == "boom");
    }

    SUBCASE("all-timeout report lists every test with diagnostic 'timeout'") {
        EvalReport report;
        report.outcomes = {{"a", TestStatus::timeout, "timeout", 0.0},
                           {"b", TestStatus::timeout, "timeout", 0.0},
                           {"c", TestStatus::timeout, "timeout", 0.0}};
        report.all_passed = false;
        const auto feedback = collect_feedback(report, tests);
        REQUIRE(feedback.failed_tests.size() == 3);
        for (const auto& failed : feedback.failed_tests) CHECK(failed.diagnostic == "timeout");
    }

    SUBCASE("truncation keeps the earliest failures, deterministically") {
        EvalReport report;
        report.outcomes = {{"a", TestStatus::failed, "boom1", 0.0},
                           {"b", TestStatus::failed, "boom2", 0.0},
                           {"c", TestStatus::failed, "boom3", 0.0}};
        report.all_passed = false;
        // Frozen expectation: each block is
        //   "test <id> failed: <snippet>\n<diagnostic>\n"  (38 bytes here),
        // so a 60-byte budget keeps block a and the first 22 bytes of block b.
        const std::string expected =
            "test a failed: assert f(1) == 2\nboom1\ntest b failed: assert ";
        const auto feedback = collect_feedback(report, tests, 60);
        CHECK(feedback.summary == expected);
        CHECK(feedback.summary.size() == 60);
        CHECK(collect_feedback(report, tests, 60).summary == expected);
    }

    SUBCASE("all-passed report is a contract violation") {
        EvalReport report;
        report.outcomes = {{"a", TestStatus::passed, "", 0.0},
                           {"b", TestStatus::passed, "", 0.0},
                           {"c", TestStatus::passed, "", 0.0}};
        report.all_passed = true;
        CHECK_THROWS_AS(collect_feedback(report, tests), ContractViolation);
    }
}

TEST_CASE("non-positive limits are rejected") {
    Sandbox sandbox;
    ExecutionLimits limits;
    limits.wall_clock_timeout = 0.0;
    CHECK_THROWS_AS(sandbox.run_tests(python_program("x = 1"),
                                      {{"t0", "assert x == 1", TestKind::visible}}, limits),
                    ConfigError);
}
