#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mple/llm_gateway.hpp"
#include "mple/sandbox.hpp"
#include "mple/strategies.hpp"
#include "mple/task_model.hpp"

namespace mple {

struct RunConfig {
    std::string dataset_path;
    std::string dataset_format = "jsonl";
    StrategyId strategy = StrategyId::mple;
    StrategyConfig strategy_config;
    BackendDescriptor backend;
    ExecutionLimits limits;
    SandboxOptions sandbox;
    unsigned worker_count = 1;
    std::string machine_report_path;  // JSONL, empty → skip
    std::string human_report_path;    // plain text table, empty → skip
    // Asserts scripted mode and zeroes all timing fields in outputs so a
    // rerun is byte-identical.
    bool deterministic = false;
    std::string report_template_version = "v1";
    bool print_config = false;
};

void validate_run_config(const RunConfig& cfg);  // throws ConfigError
nlohmann::json run_config_to_json(const RunConfig& cfg);

enum class TaskVerdict { succeed, fail, infrastructure_error };

std::string task_verdict_name(TaskVerdict verdict);

struct TaskResult {
    std::string task_id;
    TaskVerdict verdict = TaskVerdict::fail;
    std::optional<StrategyOutcome> outcome;  // absent for infrastructure errors
    std::string error;                       // infrastructure errors only
    double wall_time_seconds = 0.0;
};

struct BenchReport {
    RunConfig config;
    std::string model_name;
    std::vector<TaskResult> results;  // sorted by task_id
    double pass_at_1_value = 0.0;
    int succeed_count = 0;
    int fail_count = 0;
    int infrastructure_error_count = 0;
    UsageRecord usage;
    double total_wall_time_seconds = 0.0;
};

// succeed / (succeed + fail); infrastructure errors are excluded from the
// denominator. Throws ContractViolation when no task was scored.
double pass_at_1(const std::vector<TaskResult>& results);

// "65.83%" style, two decimals.
std::string format_percent(double fraction);

// Runs every task once under the configured strategy with a bounded worker
// pool; aggregation is order-independent and results are sorted by task_id.
BenchReport run_benchmark(const RunConfig& cfg);

// Machine output: one TaskResult JSON per line, then one summary line.
// Human output: a strategy-vs-pass@1 table plus raw counts.
void emit_report(const BenchReport& report, const std::string& machine_path,
                 const std::string& human_path);

// The four-column strategy table; reports for strategies not present show
// "-". All reports must share one model.
std::string render_strategy_table(const std::vector<BenchReport>& reports);

nlohmann::json task_result_to_json(const TaskResult& result, bool deterministic);

// Parses `mple run ...`. Flags override config-file values. Throws
// ConfigError on usage errors; returns nullopt when the invocation only
// printed help.
std::optional<RunConfig> parse_cli(const std::vector<std::string>& args);

}  // namespace mple
