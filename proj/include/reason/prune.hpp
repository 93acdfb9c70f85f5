#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reason/dag.hpp"
#include "reason/logic.hpp"
#include "reason/prob.hpp"

namespace reason {

struct PruneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : PruneError { using PruneError::PruneError; };
struct BudgetTooLarge : PruneError { using PruneError::PruneError; };

// -------- logic pruning (implication graph) --------

struct ImplicationGraph {
  int num_vars = 0;
  // adj[lit_index(l)] = successors of literal l.
  std::vector<std::vector<uint32_t>> adj;

  size_t edge_count() const {
    size_t n = 0;
    for (const auto& v : adj) n += v.size();
    return n;
  }
  // True iff a path of length >= 1 leads from literal `from` to `to`.
  bool implies(Lit from, Lit to) const;
};

ImplicationGraph build_implication_graph(const CnfFormula& cnf);

struct PruneLog {
  struct Drop {
    size_t clause = 0;
    Lit removed = 0;
    Lit implied = 0;  // removed => implied held in the graph
  };
  std::vector<Drop> drops;
  int rounds = 0;
};

// Removes from each clause any literal a for which the clause also
// contains some b with a => b in the implication graph. Runs to
// fixpoint; the result has the same model set given the binary clauses.
std::pair<CnfFormula, PruneLog> prune_hidden_literals(const CnfFormula& cnf);

// -------- probabilistic pruning (circuit flow) --------

struct SumEdge {
  NodeId parent = kNoNode;
  size_t child_index = 0;
};

struct FlowStats {
  std::vector<SumEdge> edges;            // all Sum edges, by (parent, child index)
  std::vector<double> cumulative;        // F_{n,c}(D), aligned with edges
  size_t samples_used = 0;
  size_t zero_probability_skipped = 0;
};

FlowStats compute_flows(const Dag& dag, const std::vector<Assignment>& dataset);

struct PruneReport {
  std::vector<SumEdge> edges_removed;
  double bound_delta_loglik = 0;     // sum of F_{n,c}(D) / |D| over removed edges
  double measured_delta_loglik = 0;  // avg loglik before - after, on the dataset
  size_t nodes_before = 0, nodes_after = 0;
  size_t edges_before = 0, edges_after = 0;
  std::string to_json() const;
};

struct PruneBudget {
  // Exactly one of the two is active: edge_count >= 0 selects that many
  // lowest-flow edges; otherwise all edges with cumulative flow <=
  // flow_threshold are selected.
  long edge_count = -1;
  double flow_threshold = 0;
  static PruneBudget count(long n) { return {n, 0}; }
  static PruneBudget threshold(double t) { return {-1, t}; }
};

struct FlowPruneResult {
  Dag dag;
  std::vector<NodeId> remap;  // old -> new, kNoNode if dropped
  PruneReport report;
};

FlowPruneResult prune_low_flow(const Dag& dag, const FlowStats& stats,
                               const PruneBudget& budget,
                               const std::vector<Assignment>& dataset);

// -------- HMM pruning (posterior usage) --------

struct ForwardBackwardResult {
  std::vector<std::vector<double>> gamma;            // T x K
  std::vector<std::vector<std::vector<double>>> xi;  // (T-1) x K x K
  double loglik = 0;
};

ForwardBackwardResult forward_backward(const HmmSpec& hmm, const std::vector<int>& obs);

struct HmmPruneReport {
  int transitions_pruned = 0;
  int emissions_pruned = 0;
  int rows_left_untouched = 0;  // would have become all-zero
  double delta_avg_loglik = 0;  // before - after, averaged over dataset
  std::string to_json() const;
};

std::pair<HmmSpec, HmmPruneReport> hmm_posterior_prune(
    const HmmSpec& hmm, const std::vector<std::vector<int>>& dataset, double eps);

}  // namespace reason
