#include "mple/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mple/errors.hpp"

namespace mple {

std::string task_verdict_name(TaskVerdict verdict) {
    switch (verdict) {
        case TaskVerdict::succeed: return "succeed";
        case TaskVerdict::fail: return "fail";
        case TaskVerdict::infrastructure_error: return "infrastructure-error";
    }
    return "unknown";
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.dataset_path.empty()) throw ConfigError("missing dataset path");
    if (cfg.worker_count < 1) throw ConfigError("worker_count must be >= 1");
    validate_strategy_config(cfg.strategy_config);
    if (cfg.limits.wall_clock_timeout <= 0 || cfg.limits.memory_cap == 0 ||
        cfg.limits.max_output_bytes == 0)
        throw ConfigError("execution limits must be strictly positive");
    if (cfg.deterministic && cfg.backend.mode != BackendMode::scripted)
        throw ConfigError("deterministic mode requires the scripted backend");
    if (cfg.backend.mode == BackendMode::scripted) {
        if (!cfg.backend.endpoint.empty())
            throw ConfigError("scripted backend must not set an endpoint");
        if (cfg.backend.script_path.empty())
            throw ConfigError("scripted backend requires --script");
    } else {
        if (cfg.backend.endpoint.empty() || cfg.backend.model_name.empty())
            throw ConfigError("live backend requires --endpoint and --model");
    }
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
    nlohmann::json ladder = nlohmann::json::array();
    for (const auto lang : cfg.strategy_config.language_ladder)
        ladder.push_back(language_name(lang));
    return nlohmann::json{
        {"dataset", cfg.dataset_path},
        {"dataset_format", cfg.dataset_format},
        {"strategy", strategy_name(cfg.strategy)},
        {"languages", ladder},
        {"max_iterations", cfg.strategy_config.max_iterations},
        {"node_expansion", cfg.strategy_config.node_expansion},
        {"exploration_constant", cfg.strategy_config.exploration_constant},
        {"feedback_budget_bytes", cfg.strategy_config.feedback_budget_bytes},
        {"backend", cfg.backend.mode == BackendMode::live ? "live" : "scripted"},
        {"endpoint", cfg.backend.endpoint},
        {"model", cfg.backend.model_name},
        {"script", cfg.backend.script_path},
        {"request_timeout", cfg.backend.request_timeout},
        {"max_retries", cfg.backend.max_retries},
        {"temperature", cfg.backend.temperature},
        {"timeout_per_test", cfg.limits.wall_clock_timeout},
        {"memory_cap_bytes", cfg.limits.memory_cap},
        {"max_output_bytes", cfg.limits.max_output_bytes},
        {"scratch_root", cfg.sandbox.scratch_root.string()},
        {"keep_artifacts", cfg.sandbox.keep_artifacts},
        {"workers", cfg.worker_count},
        {"out", cfg.machine_report_path},
        {"report", cfg.human_report_path},
        {"deterministic", cfg.deterministic},
        {"prompt_template_version", kPromptTemplateVersion},
        {"report_template_version", cfg.report_template_version},
    };
}

double pass_at_1(const std::vector<TaskResult>& results) {
    int succeed = 0;
    int fail = 0;
    for (const auto& result : results) {
        if (result.verdict == TaskVerdict::succeed) ++succeed;
        if (result.verdict == TaskVerdict::fail) ++fail;
    }
    if (succeed + fail == 0)
        throw ContractViolation("pass_at_1: no scored task (empty denominator)");
    return static_cast<double>(succeed) / static_cast<double>(succeed + fail);
}

std::string format_percent(double fraction) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.2f%%", fraction * 100.0);
    return buffer;
}

BenchReport run_benchmark(const RunConfig& cfg) {
    validate_run_config(cfg);
    const auto run_start = std::chrono::steady_clock::now();

    const std::vector<TaskSpec> tasks = load_dataset(cfg.dataset_path, cfg.dataset_format);
    const auto backend = make_backend(cfg.backend);
    Sandbox sandbox(cfg.sandbox);

    std::vector<TaskResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t index = next.fetch_add(1);
            if (index >= tasks.size()) return;
            const TaskSpec& task = tasks[index];
            TaskResult result;
            result.task_id = task.task_id;
            const auto start = std::chrono::steady_clock::now();
            try {
                StrategyOutcome outcome = run_strategy(cfg.strategy, task, cfg.strategy_config,
                                                       *backend, sandbox, cfg.limits);
                result.verdict = outcome.verdict == Verdict::succeed ? TaskVerdict::succeed
                                                                     : TaskVerdict::fail;
                result.outcome = std::move(outcome);
            } catch (const InfrastructureError& e) {
                result.verdict = TaskVerdict::infrastructure_error;
                result.error = e.what();
            } catch (const ConfigError&) {
                throw;  // misconfiguration is fatal, not a per-task failure
            } catch (const std::runtime_error& e) {
                result.verdict = TaskVerdict::infrastructure_error;
                result.error = e.what();
            }
            result.wall_time_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            results[index] = std::move(result);
        }
    };

    std::vector<std::thread> pool;
    const unsigned workers = std::min<unsigned>(cfg.worker_count,
                                                std::max<std::size_t>(tasks.size(), 1));
    for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::sort(results.begin(), results.end(),
              [](const TaskResult& a, const TaskResult& b) { return a.task_id < b.task_id; });

    BenchReport report;
    report.config = cfg;
    report.model_name = backend->model_name();
    report.results = std::move(results);
    for (const auto& result : report.results) {
        switch (result.verdict) {
            case TaskVerdict::succeed: ++report.succeed_count; break;
            case TaskVerdict::fail: ++report.fail_count; break;
            case TaskVerdict::infrastructure_error:
                ++report.infrastructure_error_count;
                break;
        }
    }
    report.pass_at_1_value = (report.succeed_count + report.fail_count) > 0
                                 ? pass_at_1(report.results)
                                 : 0.0;
    report.usage = backend->record_usage();
    report.total_wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
    return report;
}

nlohmann::json task_result_to_json(const TaskResult& result, bool deterministic) {
    nlohmann::json out{
        {"task_id", result.task_id},
        {"verdict", task_verdict_name(result.verdict)},
        {"wall_time_seconds", deterministic ? 0.0 : result.wall_time_seconds},
    };
    if (result.outcome) {
        const auto& counters = result.outcome->counters;
        out["generate_calls"] = counters.generate_calls;
        out["translate_calls"] = counters.translate_calls;
        out["refine_calls"] = counters.refine_calls;
        out["sandbox_runs"] = counters.sandbox_runs;
        out["attempts"] = result.outcome->trace.size();
        out["final_language"] = language_name(result.outcome->final_program.language);
    }
    if (!result.error.empty()) out["error"] = result.error;
    return out;
}

std::string render_strategy_table(const std::vector<BenchReport>& reports) {
    static const StrategyId column_order[] = {StrategyId::baseline, StrategyId::mple,
                                              StrategyId::mple_reflection,
                                              StrategyId::mple_mcts};
    std::string model = reports.empty() ? "-" : reports.front().model_name;
    std::string cells[4] = {"-", "-", "-", "-"};
    for (const auto& report : reports) {
        for (int i = 0; i < 4; ++i)
            if (report.config.strategy == column_order[i])
                cells[i] = format_percent(report.pass_at_1_value);
    }

    std::ostringstream out;
    auto row = [&out](const std::string& c0, const std::string& c1, const std::string& c2,
                      const std::string& c3, const std::string& c4) {
        out << c0;
        out << std::string(c0.size() < 24 ? 24 - c0.size() : 1, ' ') << c1;
        out << std::string(c1.size() < 12 ? 12 - c1.size() : 1, ' ') << c2;
        out << std::string(c2.size() < 12 ? 12 - c2.size() : 1, ' ') << c3;
        out << std::string(c3.size() < 18 ? 18 - c3.size() : 1, ' ') << c4 << "\n";
    };
    row("Model", "Baseline", "MPLE", "MPLE+Reflection", "MPLE+MCTS");
    row(model, cells[0], cells[1], cells[2], cells[3]);
    return out.str();
}

void emit_report(const BenchReport& report, const std::string& machine_path,
                 const std::string& human_path) {
    const bool deterministic = report.config.deterministic;
    if (!machine_path.empty()) {
        std::ofstream out(machine_path, std::ios::binary);
        if (!out) throw IoError("cannot write machine report: " + machine_path);
        for (const auto& result : report.results)
            out << task_result_to_json(result, deterministic).dump() << "\n";
        nlohmann::json summary{
            {"summary", true},
            {"pass_at_1", report.pass_at_1_value},
            {"succeed", report.succeed_count},
            {"fail", report.fail_count},
            {"infrastructure_error", report.infrastructure_error_count},
            {"tasks", report.results.size()},
            {"model", report.model_name},
            {"usage",
             {{"requests", report.usage.requests},
              {"prompt_tokens", report.usage.prompt_tokens},
              {"completion_tokens", report.usage.completion_tokens},
              {"total_latency_seconds",
               deterministic ? 0.0 : report.usage.total_latency_seconds}}},
            {"total_wall_time_seconds",
             deterministic ? 0.0 : report.total_wall_time_seconds},
            {"config", run_config_to_json(report.config)},
        };
        out << summary.dump() << "\n";
    }
    if (!human_path.empty()) {
        std::ofstream out(human_path, std::ios::binary);
        if (!out) throw IoError("cannot write human report: " + human_path);
        out << "pass@1 report (strategy " << strategy_name(report.config.strategy) << ", model "
            << report.model_name << ")\n\n";
        out << render_strategy_table({report}) << "\n";
        out << "succeed: " << report.succeed_count << "\n";
        out << "fail: " << report.fail_count << "\n";
        out << "infrastructure-error: " << report.infrastructure_error_count << "\n";
        out << "pass@1: " << format_percent(report.pass_at_1_value) << " ("
            << report.succeed_count << "/" << (report.succeed_count + report.fail_count)
            << ")\n";
        out << "prompt template: " << kPromptTemplateVersion << "\n";
        out << "report template: " << report.config.report_template_version << "\n";
        if (!deterministic)
            out << "total wall time: " << report.total_wall_time_seconds << " s\n";
    }
}

std::optional<RunConfig> parse_cli(const std::vector<std::string>& args) {
    CLI::App app{"MPLE code-generation benchmark harness"};
    app.require_subcommand(1);
    auto* run = app.add_subcommand("run", "run a benchmark");

    RunConfig cfg;
    std::string config_path;
    std::string strategy = "mple";
    std::string backend_mode = "scripted";
    std::string languages = "python,java,cpp";
    double timeout_per_test = 10.0;
    std::uint64_t memory_cap_mb = 512;
    std::uint64_t output_cap_kb = 64;
    unsigned workers = 1;
    std::string scratch_root;

    run->add_option("--config", config_path, "JSON config file; flags override it");
    auto* dataset_opt = run->add_option("--dataset", cfg.dataset_path, "dataset JSONL path");
    auto* format_opt =
        run->add_option("--dataset-format", cfg.dataset_format, "dataset format (jsonl)");
    auto* strategy_opt =
        run->add_option("--strategy", strategy, "baseline|mple|mple-reflection|mple-mcts");
    auto* backend_opt = run->add_option("--backend", backend_mode, "live|scripted");
    auto* endpoint_opt = run->add_option("--endpoint", cfg.backend.endpoint, "live endpoint URL");
    auto* model_opt = run->add_option("--model", cfg.backend.model_name, "live model name");
    auto* script_opt =
        run->add_option("--script", cfg.backend.script_path, "scripted responses JSONL");
    auto* languages_opt =
        run->add_option("--languages", languages, "ordered comma list, primary first");
    auto* iter_opt = run->add_option("--max-iterations", cfg.strategy_config.max_iterations,
                                     "reflection/MCTS iteration cap");
    auto* expansion_opt = run->add_option("--node-expansion",
                                          cfg.strategy_config.node_expansion,
                                          "MCTS children per expansion");
    auto* explore_opt = run->add_option("--exploration-constant",
                                        cfg.strategy_config.exploration_constant,
                                        "UCT exploration constant");
    auto* timeout_opt =
        run->add_option("--timeout-per-test", timeout_per_test, "seconds per test");
    auto* memory_opt = run->add_option("--memory-cap-mb", memory_cap_mb, "per-test memory cap");
    auto* output_opt =
        run->add_option("--output-cap-kb", output_cap_kb, "captured output cap per test");
    auto* workers_opt = run->add_option("--workers", workers, "parallel task workers");
    auto* out_opt = run->add_option("--out", cfg.machine_report_path, "machine report (JSONL)");
    auto* report_opt = run->add_option("--report", cfg.human_report_path, "human report (text)");
    auto* scratch_opt = run->add_option("--scratch-root", scratch_root, "sandbox scratch root");
    auto* keep_flag =
        run->add_flag("--keep-artifacts", cfg.sandbox.keep_artifacts, "keep scratch dirs");
    auto* det_flag = run->add_flag("--deterministic", cfg.deterministic,
                                   "scripted mode with zeroed timings (bit-reproducible)");
    run->add_flag("--print-config", cfg.print_config, "echo the resolved config and exit");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::puts(app.help().c_str());
        return std::nullopt;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("usage error: ") + e.what());
    }

    // Config-file values apply wherever the flag was not given.
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot read config file: " + config_path);
        nlohmann::json file;
        try {
            file = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("config file: invalid JSON: " + std::string(e.what()));
        }
        auto fill = [&file](CLI::Option* opt, const char* key, auto& target) {
            if (opt->count() == 0 && file.contains(key))
                target = file.at(key).get<std::decay_t<decltype(target)>>();
        };
        fill(dataset_opt, "dataset", cfg.dataset_path);
        fill(format_opt, "dataset_format", cfg.dataset_format);
        fill(strategy_opt, "strategy", strategy);
        fill(backend_opt, "backend", backend_mode);
        fill(endpoint_opt, "endpoint", cfg.backend.endpoint);
        fill(model_opt, "model", cfg.backend.model_name);
        fill(script_opt, "script", cfg.backend.script_path);
        fill(iter_opt, "max_iterations", cfg.strategy_config.max_iterations);
        fill(expansion_opt, "node_expansion", cfg.strategy_config.node_expansion);
        fill(explore_opt, "exploration_constant", cfg.strategy_config.exploration_constant);
        fill(timeout_opt, "timeout_per_test", timeout_per_test);
        fill(memory_opt, "memory_cap_mb", memory_cap_mb);
        fill(output_opt, "output_cap_kb", output_cap_kb);
        fill(workers_opt, "workers", workers);
        fill(out_opt, "out", cfg.machine_report_path);
        fill(report_opt, "report", cfg.human_report_path);
        fill(scratch_opt, "scratch_root", scratch_root);
        if (keep_flag->count() == 0 && file.contains("keep_artifacts"))
            cfg.sandbox.keep_artifacts = file.at("keep_artifacts").get<bool>();
        if (det_flag->count() == 0 && file.contains("deterministic"))
            cfg.deterministic = file.at("deterministic").get<bool>();
        if (languages_opt->count() == 0 && file.contains("languages")) {
            const auto& value = file.at("languages");
            if (value.is_array()) {
                languages.clear();
                for (const auto& item : value) {
                    if (!languages.empty()) languages += ",";
                    languages += item.get<std::string>();
                }
            } else {
                languages = value.get<std::string>();
            }
        }
    }

    cfg.strategy = parse_strategy(strategy);
    if (backend_mode == "live")
        cfg.backend.mode = BackendMode::live;
    else if (backend_mode == "scripted")
        cfg.backend.mode = BackendMode::scripted;
    else
        throw ConfigError("unknown backend mode: " + backend_mode);

    cfg.strategy_config.language_ladder.clear();
    std::istringstream lang_stream(languages);
    std::string token;
    while (std::getline(lang_stream, token, ','))
        if (!token.empty()) cfg.strategy_config.language_ladder.push_back(parse_language(token));

    cfg.limits.wall_clock_timeout = timeout_per_test;
    cfg.limits.memory_cap = memory_cap_mb << 20;
    cfg.limits.max_output_bytes = static_cast<std::size_t>(output_cap_kb) << 10;
    cfg.worker_count = workers;
    cfg.sandbox.scratch_root = scratch_root;

    validate_run_config(cfg);
    return cfg;
}

}  // namespace mple
