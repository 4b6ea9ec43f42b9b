#include "mple/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mple/errors.hpp"

namespace mple {

void validate_strategy_config(const StrategyConfig& cfg) {
    if (cfg.language_ladder.empty()) throw ConfigError("language ladder must be non-empty");
    for (std::size_t i = 0; i < cfg.language_ladder.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.language_ladder.size(); ++j)
            if (cfg.language_ladder[i] == cfg.language_ladder[j])
                throw ConfigError("language ladder entries must be distinct");
    if (cfg.max_iterations < 1) throw ConfigError("max_iterations must be >= 1");
    if (cfg.node_expansion < 1) throw ConfigError("node_expansion must be >= 1");
    if (cfg.exploration_constant < 0) throw ConfigError("exploration_constant must be >= 0");
}

std::string strategy_name(StrategyId id) {
    switch (id) {
        case StrategyId::baseline: return "baseline";
        case StrategyId::mple: return "mple";
        case StrategyId::mple_reflection: return "mple-reflection";
        case StrategyId::mple_mcts: return "mple-mcts";
    }
    return "unknown";
}

StrategyId parse_strategy(const std::string& name) {
    if (name == "baseline") return StrategyId::baseline;
    if (name == "mple") return StrategyId::mple;
    if (name == "mple-reflection") return StrategyId::mple_reflection;
    if (name == "mple-mcts") return StrategyId::mple_mcts;
    throw ConfigError("unknown strategy: " + name);
}

double reward_of(const EvalReport& report) {
    if (report.outcomes.empty()) return 0.0;
    std::size_t passed = 0;
    for (const auto& outcome : report.outcomes)
        if (outcome.status == TestStatus::passed) ++passed;
    return static_cast<double>(passed) / static_cast<double>(report.outcomes.size());
}

namespace {

struct LadderContext {
    const TaskSpec& task;
    const StrategyConfig& cfg;
    LlmBackend& backend;
    TestRunner& runner;
    const ExecutionLimits& limits;
    StrategyCounters& counters;
    std::vector<AttemptRecord>& trace;
};

EvalReport eval_visible(LadderContext& ctx, const CandidateProgram& program) {
    ++ctx.counters.sandbox_runs;
    return ctx.runner.run_tests(program, ctx.task.visible_tests, ctx.limits);
}

// One pass over the language ladder (Alg. 1 body). When `seed_feedback` is
// set the ladder runs in refine mode: the direct-generation steps become
// refine requests and the feedback is threaded into every prompt. Returns
// the index into ctx.trace of the first visible-passing record, if any;
// otherwise the pass's last record is the trace's last entry.
std::optional<std::size_t> run_ladder(LadderContext& ctx, int iteration,
                                      const std::optional<CandidateProgram>& seed_program,
                                      const std::optional<Feedback>& seed_feedback) {
    const Language primary = ctx.cfg.language_ladder.front();
    const int ladder_size = static_cast<int>(ctx.cfg.language_ladder.size());

    for (int i = 0; i < ladder_size; ++i) {
        const Language lang = ctx.cfg.language_ladder[static_cast<std::size_t>(i)];

        GenerationRequest request;
        request.kind = seed_feedback ? GenStep::refine : GenStep::generate;
        request.task_id = ctx.task.task_id;
        request.description = ctx.task.description;
        request.visible_tests = ctx.task.visible_tests;
        request.target_language = lang;
        request.feedback = seed_feedback;
        if (seed_feedback) request.source_program = seed_program;
        request.attempt_index = i;
        request.iteration = iteration;

        CandidateProgram candidate = generate(request, ctx.backend);
        if (request.kind == GenStep::refine)
            ++ctx.counters.refine_calls;
        else
            ++ctx.counters.generate_calls;

        if (lang != primary) {
            GenerationRequest back;
            back.kind = GenStep::translate;
            back.task_id = ctx.task.task_id;
            back.description = ctx.task.description;
            back.target_language = primary;
            back.source_program = candidate;
            back.feedback = seed_feedback;  // prompt context only
            back.attempt_index = i;
            back.iteration = iteration;
            candidate = generate(back, ctx.backend);
            ++ctx.counters.translate_calls;
        }

        AttemptRecord record;
        record.iteration = iteration;
        record.attempt_index = i;
        record.language = lang;
        record.program = candidate;
        record.visible_report = eval_visible(ctx, candidate);
        if (!record.visible_report.all_passed)
            record.feedback = collect_feedback(record.visible_report, ctx.task.visible_tests,
                                               ctx.cfg.feedback_budget_bytes);
        ctx.trace.push_back(std::move(record));
        if (ctx.trace.back().visible_report.all_passed) return ctx.trace.size() - 1;
    }
    return std::nullopt;
}

// Runs T_h on the designated final candidate and closes out the outcome.
// The hidden report always lands on the trace's last record; when the
// designated candidate sits mid-trace (MCTS exhaustion) its record is
// re-appended as the final one.
StrategyOutcome finish(LadderContext& ctx, std::size_t final_index) {
    ++ctx.counters.sandbox_runs;
    if (final_index + 1 != ctx.trace.size()) ctx.trace.push_back(ctx.trace[final_index]);

    AttemptRecord& final_record = ctx.trace.back();
    final_record.hidden_report =
        ctx.runner.run_tests(final_record.program, ctx.task.hidden_tests, ctx.limits);

    StrategyOutcome outcome;
    outcome.verdict =
        final_record.hidden_report->all_passed ? Verdict::succeed : Verdict::fail;
    outcome.final_program = final_record.program;
    outcome.trace = std::move(ctx.trace);
    outcome.counters = ctx.counters;
    return outcome;
}

}  // namespace

StrategyOutcome run_baseline(const TaskSpec& task, const StrategyConfig& cfg,
                             LlmBackend& backend, TestRunner& runner,
                             const ExecutionLimits& limits) {
    validate_strategy_config(cfg);
    StrategyCounters counters;
    std::vector<AttemptRecord> trace;
    LadderContext ctx{task, cfg, backend, runner, limits, counters, trace};

    GenerationRequest request;
    request.kind = GenStep::generate;
    request.task_id = task.task_id;
    request.description = task.description;
    request.visible_tests = task.visible_tests;
    request.target_language = task.primary_language;
    request.attempt_index = 0;

    CandidateProgram program = generate(request, backend);
    ++counters.generate_calls;

    AttemptRecord record;
    record.language = task.primary_language;
    record.program = program;
    record.visible_report = eval_visible(ctx, program);
    if (!record.visible_report.all_passed)
        record.feedback =
            collect_feedback(record.visible_report, task.visible_tests, cfg.feedback_budget_bytes);
    trace.push_back(std::move(record));

    return finish(ctx, 0);
}

StrategyOutcome run_mple(const TaskSpec& task, const StrategyConfig& cfg, LlmBackend& backend,
                         TestRunner& runner, const ExecutionLimits& limits) {
    validate_strategy_config(cfg);
    if (cfg.language_ladder.front() != task.primary_language)
        throw ConfigError("language ladder must start with the task's primary language");

    StrategyCounters counters;
    std::vector<AttemptRecord> trace;
    LadderContext ctx{task, cfg, backend, runner, limits, counters, trace};

    const auto passed = run_ladder(ctx, 0, std::nullopt, std::nullopt);
    // Ladder exhausted: the last generated candidate still gets the one
    // hidden evaluation to fix the verdict.
    return finish(ctx, passed.value_or(trace.size() - 1));
}

StrategyOutcome run_reflection(const TaskSpec& task, const StrategyConfig& cfg,
                               LlmBackend& backend, TestRunner& runner,
                               const ExecutionLimits& limits) {
    validate_strategy_config(cfg);
    if (cfg.language_ladder.front() != task.primary_language)
        throw ConfigError("language ladder must start with the task's primary language");

    StrategyCounters counters;
    std::vector<AttemptRecord> trace;
    LadderContext ctx{task, cfg, backend, runner, limits, counters, trace};

    std::optional<CandidateProgram> seed_program;
    std::optional<Feedback> seed_feedback;
    for (int iteration = 0; iteration < cfg.max_iterations; ++iteration) {
        const auto passed = run_ladder(ctx, iteration, seed_program, seed_feedback);
        if (passed) return finish(ctx, *passed);
        seed_program = trace.back().program;
        seed_feedback = trace.back().feedback;
    }
    return finish(ctx, trace.size() - 1);
}

NodeId SearchTree::add_child(NodeId parent) {
    const NodeId id = nodes.size();
    SearchNode node;
    node.node_id = id;
    node.parent = parent;
    nodes.push_back(std::move(node));
    nodes[parent].children.push_back(id);
    return id;
}

NodeId select_node(const SearchTree& tree, double exploration_constant) {
    if (tree.nodes.empty()) throw ContractViolation("select_node: empty tree");
    NodeId current = 0;
    while (!tree.nodes[current].children.empty()) {
        const SearchNode& parent = tree.nodes[current];
        NodeId best = parent.children.front();
        bool found_unvisited = false;
        double best_score = -std::numeric_limits<double>::infinity();
        for (const NodeId child_id : parent.children) {
            const SearchNode& child = tree.nodes[child_id];
            if (child.visits == 0) {
                if (!found_unvisited) {
                    best = child_id;
                    found_unvisited = true;
                }
                continue;
            }
            if (found_unvisited) continue;
            const double mean = child.total_value / child.visits;
            const double score =
                mean + exploration_constant *
                           std::sqrt(std::log(parent.visits + 1.0) / (child.visits + 1.0));
            if (score > best_score) {  // strict: ties keep the earlier child
                best_score = score;
                best = child_id;
            }
        }
        if (found_unvisited) return best;  // unvisited nodes are leaves
        current = best;
    }
    return current;
}

void backpropagate(SearchTree& tree, NodeId node, double reward) {
    if (node >= tree.nodes.size()) throw ContractViolation("backpropagate: unknown node id");
    if (reward < 0.0 || reward > 1.0)
        throw ContractViolation("backpropagate: reward outside [0,1]");
    std::optional<NodeId> current = node;
    while (current) {
        SearchNode& n = tree.nodes[*current];
        n.visits += 1;
        n.total_value += reward;
        current = n.parent;
    }
}

StrategyOutcome run_mcts(const TaskSpec& task, const StrategyConfig& cfg, LlmBackend& backend,
                         TestRunner& runner, const ExecutionLimits& limits) {
    validate_strategy_config(cfg);
    if (cfg.language_ladder.front() != task.primary_language)
        throw ConfigError("language ladder must start with the task's primary language");

    StrategyCounters counters;
    std::vector<AttemptRecord> trace;
    LadderContext ctx{task, cfg, backend, runner, limits, counters, trace};

    SearchTree tree;
    for (int iteration = 1; iteration <= cfg.max_iterations; ++iteration) {
        const NodeId selected = select_node(tree, cfg.exploration_constant);

        // The root carries no program: its pass is the plain generate
        // ladder; every other node seeds a refine ladder.
        const std::size_t pass_begin = trace.size();
        const auto passed =
            run_ladder(ctx, iteration, tree.nodes[selected].program, tree.nodes[selected].feedback);
        if (passed) return finish(ctx, *passed);

        int added = 0;
        for (std::size_t r = pass_begin; r < trace.size() && added < cfg.node_expansion; ++r) {
            const NodeId child = tree.add_child(selected);
            tree.nodes[child].program = trace[r].program;
            tree.nodes[child].visible_report = trace[r].visible_report;
            tree.nodes[child].feedback = trace[r].feedback;
            ++added;
        }
        backpropagate(tree, selected, reward_of(trace.back().visible_report));
    }

    // Exhausted: the best-reward candidate (ties to the earliest) gets the
    // single hidden evaluation.
    std::size_t best = 0;
    double best_reward = -1.0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const double r = reward_of(trace[i].visible_report);
        if (r > best_reward) {
            best_reward = r;
            best = i;
        }
    }
    return finish(ctx, best);
}

StrategyOutcome run_strategy(StrategyId id, const TaskSpec& task, const StrategyConfig& cfg,
                             LlmBackend& backend, TestRunner& runner,
                             const ExecutionLimits& limits) {
    switch (id) {
        case StrategyId::baseline: return run_baseline(task, cfg, backend, runner, limits);
        case StrategyId::mple: return run_mple(task, cfg, backend, runner, limits);
        case StrategyId::mple_reflection:
            return run_reflection(task, cfg, backend, runner, limits);
        case StrategyId::mple_mcts: return run_mcts(task, cfg, backend, runner, limits);
    }
    throw ConfigError("unknown strategy id");
}

namespace {

void describe_report(std::ostringstream& out, const EvalReport& report) {
    out << (report.all_passed ? "pass" : "fail") << "[";
    for (std::size_t i = 0; i < report.outcomes.size(); ++i) {
        if (i) out << ",";
        switch (report.outcomes[i].status) {
            case TestStatus::passed: out << "P"; break;
            case TestStatus::failed: out << "F"; break;
            case TestStatus::error: out << "E"; break;
            case TestStatus::timeout: out << "T"; break;
        }
    }
    out << "]";
}

}  // namespace

std::string describe(const StrategyOutcome& outcome) {
    std::ostringstream out;
    out << "verdict=" << (outcome.verdict == Verdict::succeed ? "succeed" : "fail") << "\n";
    out << "counters generate=" << outcome.counters.generate_calls
        << " translate=" << outcome.counters.translate_calls
        << " refine=" << outcome.counters.refine_calls
        << " sandbox=" << outcome.counters.sandbox_runs << "\n";
    for (const auto& record : outcome.trace) {
        out << "attempt iter=" << record.iteration << " idx=" << record.attempt_index
            << " lang=" << language_name(record.language)
            << " step=" << gen_step_name(record.program.lineage.step);
        if (record.program.lineage.source_language)
            out << "(from " << language_name(*record.program.lineage.source_language) << ")";
        out << " visible=";
        describe_report(out, record.visible_report);
        out << " hidden=";
        if (record.hidden_report)
            describe_report(out, *record.hidden_report);
        else
            out << "-";
        out << "\n";
        std::istringstream source(record.program.source);
        std::string line;
        while (std::getline(source, line)) out << "  | " << line << "\n";
    }
    return out.str();
}

}  // namespace mple
