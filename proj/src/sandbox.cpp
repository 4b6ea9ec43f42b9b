#include "mple/sandbox.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <thread>

#include "mple/errors.hpp"

namespace mple {

std::string test_status_name(TestStatus status) {
    switch (status) {
        case TestStatus::passed: return "passed";
        case TestStatus::failed: return "failed";
        case TestStatus::error: return "error";
        case TestStatus::timeout: return "timeout";
    }
    return "unknown";
}

Feedback collect_feedback(const EvalReport& report, const std::vector<TestCase>& tests,
                          std::size_t summary_budget_bytes) {
    if (report.all_passed)
        throw ContractViolation("collect_feedback called with an all-passed report");
    if (report.outcomes.size() != tests.size())
        throw ContractViolation("collect_feedback: outcome/test count mismatch");

    Feedback feedback;
    for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
        const auto& outcome = report.outcomes[i];
        if (outcome.status == TestStatus::passed) continue;
        feedback.failed_tests.push_back({outcome.test_id, tests[i].snippet, outcome.diagnostic});
    }
    for (const auto& failed : feedback.failed_tests) {
        feedback.summary +=
            "test " + failed.test_id + " failed: " + failed.snippet + "\n" + failed.diagnostic +
            "\n";
    }
    if (feedback.summary.size() > summary_budget_bytes)
        feedback.summary.resize(summary_budget_bytes);
    return feedback;
}

namespace {

// Caps concurrent candidate subprocesses across all Sandbox instances.
class ProcessGate {
  public:
    explicit ProcessGate(unsigned slots) : slots_(slots ? slots : 1) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [this] { return in_use_ < slots_; });
        ++in_use_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            --in_use_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    unsigned slots_;
    unsigned in_use_ = 0;
};

ProcessGate& process_gate(unsigned configured) {
    static ProcessGate gate(configured ? configured
                                       : std::max(1u, std::thread::hardware_concurrency()));
    return gate;
}

struct ProcResult {
    bool timed_out = false;
    bool spawn_failed = false;
    int exit_code = 0;
    int term_signal = 0;
    std::string output;  // stdout+stderr, truncated
    double duration = 0.0;
};

std::string substitute(std::string templ, const std::string& placeholder,
                       const std::string& value) {
    std::size_t pos = 0;
    while ((pos = templ.find(placeholder, pos)) != std::string::npos) {
        templ.replace(pos, placeholder.size(), value);
        pos += value.size();
    }
    return templ;
}

// Runs `command` through /bin/sh in `scratch` with a scrubbed environment.
ProcResult run_command(const std::string& command, const std::filesystem::path& scratch,
                       const ExecutionLimits& limits) {
    const auto output_path = scratch / "__capture.log";
    const std::string home = "HOME=" + scratch.string();

    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = fork();
    if (pid < 0) throw InfrastructureError("sandbox: fork failed");
    if (pid == 0) {
        setpgid(0, 0);
        if (chdir(scratch.c_str()) != 0) _exit(125);

        struct rlimit mem {};
        mem.rlim_cur = mem.rlim_max = limits.memory_cap;
        setrlimit(RLIMIT_AS, &mem);

        const int fd = open(output_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0600);
        if (fd < 0) _exit(125);
        dup2(fd, STDOUT_FILENO);
        dup2(fd, STDERR_FILENO);
        close(fd);

        // Candidates never see the harness environment (API credentials).
        const char* env[] = {"PATH=/usr/local/bin:/usr/bin:/bin", home.c_str(), "LC_ALL=C.UTF-8",
                             nullptr};
        execle("/bin/sh", "sh", "-c", command.c_str(), nullptr, env);
        _exit(126);
    }

    ProcResult result;
    int status = 0;
    const auto deadline =
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                    std::chrono::duration<double>(limits.wall_clock_timeout));
    for (;;) {
        const pid_t waited = waitpid(pid, &status, WNOHANG);
        if (waited == pid) break;
        if (waited < 0) throw InfrastructureError("sandbox: waitpid failed");
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            result.timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    result.duration =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
        // 125/126 are our own exec-failure exits; 127 is sh's command-not-found.
        if (result.exit_code >= 125 && result.exit_code <= 127) result.spawn_failed = true;
    } else if (WIFSIGNALED(status)) {
        result.term_signal = WTERMSIG(status);
    }

    std::ifstream capture(output_path, std::ios::binary);
    if (capture) {
        std::string buffer(limits.max_output_bytes, '\0');
        capture.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        buffer.resize(static_cast<std::size_t>(capture.gcount()));
        result.output = std::move(buffer);
    }
    return result;
}

std::filesystem::path make_scratch_dir(const std::filesystem::path& root) {
    static std::atomic<std::uint64_t> counter{0};
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    const auto dir = root / ("run-" + std::to_string(::getpid()) + "-" +
                             std::to_string(counter.fetch_add(1)));
    if (!std::filesystem::create_directory(dir))
        throw InfrastructureError("sandbox: cannot create scratch directory " + dir.string());
    return dir;
}

bool contains_any(const std::string& text, const std::vector<std::string>& needles) {
    for (const auto& needle : needles)
        if (text.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

Sandbox::Sandbox(SandboxOptions options) : options_(std::move(options)) {
    if (options_.scratch_root.empty())
        options_.scratch_root = std::filesystem::temp_directory_path() / "mple-sandbox";

    register_language(Language::python,
                      {"main.py", std::nullopt, "python3 {source}", {"AssertionError"}});
    register_language(Language::cpp,
                      {"main.cpp", "g++ -std=c++17 -O0 {source} -o {exe}", "{exe}",
                       {"Assertion"}});
}

void Sandbox::register_language(Language language, ExecutionRecipe recipe) {
    if (recipe.source_file.empty() || recipe.run_command.empty())
        throw ConfigError("execution recipe needs a source file name and a run command");
    std::lock_guard lock(mutex_);
    recipes_[language] = std::move(recipe);
}

bool Sandbox::has_recipe(Language language) const {
    std::lock_guard lock(mutex_);
    return recipes_.count(language) > 0;
}

EvalReport Sandbox::run_tests(const CandidateProgram& program, const std::vector<TestCase>& tests,
                              const ExecutionLimits& limits) {
    if (tests.empty()) throw ContractViolation("run_tests: empty test list");
    if (limits.wall_clock_timeout <= 0 || limits.memory_cap == 0 || limits.max_output_bytes == 0)
        throw ConfigError("execution limits must be strictly positive");

    ExecutionRecipe recipe;
    {
        std::lock_guard lock(mutex_);
        const auto it = recipes_.find(program.language);
        if (it == recipes_.end())
            throw ConfigError("no execution recipe registered for language " +
                              language_name(program.language));
        recipe = it->second;
    }

    EvalReport report;
    report.program = program;
    report.all_passed = true;

    for (const auto& test : tests) {
        const auto scratch = make_scratch_dir(options_.scratch_root);
        const auto source_path = scratch / recipe.source_file;
        const auto exe_path = scratch / "candidate_bin";
        {
            std::ofstream source(source_path, std::ios::binary);
            if (!source)
                throw InfrastructureError("sandbox: cannot write " + source_path.string());
            source << program.source << "\n\n" << test.snippet << "\n";
        }

        auto fill = [&](const std::string& templ) {
            std::string cmd = substitute(templ, "{source}", source_path.string());
            cmd = substitute(cmd, "{scratch}", scratch.string());
            return substitute(cmd, "{exe}", exe_path.string());
        };

        TestOutcome outcome;
        outcome.test_id = test.test_id;

        auto& gate = process_gate(options_.max_parallel);
        gate.acquire();
        ProcResult run;
        bool compile_failed = false;
        try {
            if (recipe.compile_command) {
                const ProcResult compiled = run_command(fill(*recipe.compile_command), scratch,
                                                        limits);
                if (compiled.spawn_failed)
                    throw InfrastructureError("sandbox: cannot spawn compiler: " +
                                              compiled.output);
                if (compiled.timed_out || compiled.exit_code != 0 || compiled.term_signal != 0) {
                    compile_failed = true;
                    run = compiled;
                }
            }
            if (!compile_failed) run = run_command(fill(recipe.run_command), scratch, limits);
        } catch (...) {
            gate.release();
            throw;
        }
        gate.release();

        if (run.spawn_failed)
            throw InfrastructureError("sandbox: cannot spawn interpreter: " + run.output);

        // Scratch paths are unique per execution; scrub them so diagnostics
        // (and the feedback hashes derived from them) stay deterministic.
        std::string diagnostic = substitute(run.output, scratch.string(), "<scratch>");

        outcome.duration = run.duration;
        if (run.timed_out) {
            outcome.status = TestStatus::timeout;
            outcome.diagnostic = "timeout";
        } else if (compile_failed) {
            outcome.status = TestStatus::error;
            outcome.diagnostic = diagnostic.empty() ? "compile error" : diagnostic;
        } else if (run.exit_code == 0 && run.term_signal == 0) {
            outcome.status = TestStatus::passed;
        } else if (contains_any(diagnostic, recipe.assertion_markers)) {
            outcome.status = TestStatus::failed;
            outcome.diagnostic = diagnostic;
        } else {
            outcome.status = TestStatus::error;
            if (diagnostic.empty()) {
                diagnostic = run.term_signal != 0
                                 ? "terminated by signal " + std::to_string(run.term_signal)
                                 : "exit code " + std::to_string(run.exit_code);
            }
            outcome.diagnostic = diagnostic;
        }
        if (outcome.status != TestStatus::passed) report.all_passed = false;
        report.outcomes.push_back(std::move(outcome));

        if (!options_.keep_artifacts) {
            std::error_code ec;
            std::filesystem::remove_all(scratch, ec);
        }
    }
    return report;
}

}  // namespace mple
