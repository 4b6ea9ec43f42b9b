#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mple/llm_gateway.hpp"
#include "mple/sandbox.hpp"
#include "mple/task_model.hpp"

namespace mple {

struct StrategyConfig {
    // ladder[0] is the primary language; non-primary candidates are
    // translated back to it before evaluation.
    std::vector<Language> language_ladder = {Language::python, Language::java, Language::cpp};
    int max_iterations = 8;    // reflection / MCTS outer loop
    int node_expansion = 5;    // MCTS children per expansion
    double exploration_constant = std::sqrt(2.0);
    std::size_t feedback_budget_bytes = 2048;
};

void validate_strategy_config(const StrategyConfig& cfg);  // throws ConfigError

// One evaluated candidate: the ladder language it came from, the
// primary-language program actually run, its visible report, and feedback
// when it failed. Exactly one record per run carries a hidden report, and
// it is the last record of the trace.
struct AttemptRecord {
    int iteration = 0;
    int attempt_index = 0;
    Language language = Language::python;  // ladder language used
    CandidateProgram program;              // primary-language candidate evaluated
    EvalReport visible_report;
    std::optional<EvalReport> hidden_report;
    std::optional<Feedback> feedback;
};

enum class Verdict { succeed, fail };

struct StrategyCounters {
    int generate_calls = 0;
    int translate_calls = 0;
    int refine_calls = 0;
    int sandbox_runs = 0;
};

struct StrategyOutcome {
    Verdict verdict = Verdict::fail;
    CandidateProgram final_program;
    std::vector<AttemptRecord> trace;
    StrategyCounters counters;
};

enum class StrategyId { baseline, mple, mple_reflection, mple_mcts };

std::string strategy_name(StrategyId id);
StrategyId parse_strategy(const std::string& name);  // throws ConfigError

// One direct generation in the primary language; hidden tests decide the
// verdict.
StrategyOutcome run_baseline(const TaskSpec& task, const StrategyConfig& cfg,
                             LlmBackend& backend, TestRunner& runner,
                             const ExecutionLimits& limits);

// The language-ladder ensemble: generate in each ladder language in turn,
// translating non-primary candidates back, until one passes the visible
// tests. The final candidate is always scored on the hidden tests exactly
// once.
StrategyOutcome run_mple(const TaskSpec& task, const StrategyConfig& cfg, LlmBackend& backend,
                         TestRunner& runner, const ExecutionLimits& limits);

// Outer reflection loop: each failing iteration distills feedback from the
// visible report and reruns the full ladder with that feedback threaded
// into every prompt.
StrategyOutcome run_reflection(const TaskSpec& task, const StrategyConfig& cfg,
                               LlmBackend& backend, TestRunner& runner,
                               const ExecutionLimits& limits);

// UCT tree search over ladder passes: each iteration selects a node, runs
// the ladder seeded with that node's program and feedback, expands the node
// with the pass's candidates, and backpropagates the visible-test reward.
StrategyOutcome run_mcts(const TaskSpec& task, const StrategyConfig& cfg, LlmBackend& backend,
                         TestRunner& runner, const ExecutionLimits& limits);

StrategyOutcome run_strategy(StrategyId id, const TaskSpec& task, const StrategyConfig& cfg,
                             LlmBackend& backend, TestRunner& runner,
                             const ExecutionLimits& limits);

// --- MCTS machinery (exposed for direct testing) ---

using NodeId = std::size_t;

struct SearchNode {
    NodeId node_id = 0;
    std::optional<CandidateProgram> program;  // root starts empty
    std::optional<EvalReport> visible_report;
    std::optional<Feedback> feedback;
    int visits = 0;
    double total_value = 0.0;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;
};

struct SearchTree {
    std::vector<SearchNode> nodes;  // nodes[0] is the root; ids are indices

    SearchTree() { nodes.push_back(SearchNode{}); }
    NodeId add_child(NodeId parent);
};

// Root-to-leaf descent maximizing
//   mean_value + c * sqrt(ln(parent visits + 1) / (node visits + 1)).
// Unvisited children are taken before any visited sibling; ties break to
// the lowest node_id (creation order).
NodeId select_node(const SearchTree& tree, double exploration_constant);

// Adds one visit and `reward` to the node and every ancestor up to the root.
void backpropagate(SearchTree& tree, NodeId node, double reward);

// Fraction of visible tests passed.
double reward_of(const EvalReport& report);

// Canonical trace serialization used for trace-equality assertions and
// debugging dumps. Excludes durations (the only non-deterministic field).
std::string describe(const StrategyOutcome& outcome);

}  // namespace mple
