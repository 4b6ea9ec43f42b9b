#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mple/bench.hpp"
#include "mple/errors.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        const auto cfg = mple::parse_cli(args);
        if (!cfg) return 0;  // help printed

        if (cfg->print_config) {
            std::puts(mple::run_config_to_json(*cfg).dump(2).c_str());
            return 0;
        }

        const mple::BenchReport report = mple::run_benchmark(*cfg);
        mple::emit_report(report, cfg->machine_report_path, cfg->human_report_path);

        std::printf("tasks: %zu  succeed: %d  fail: %d  infrastructure-error: %d\n",
                    report.results.size(), report.succeed_count, report.fail_count,
                    report.infrastructure_error_count);
        if (report.succeed_count + report.fail_count > 0)
            std::printf("pass@1: %s\n", mple::format_percent(report.pass_at_1_value).c_str());
        return 0;
    } catch (const mple::ConfigError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
