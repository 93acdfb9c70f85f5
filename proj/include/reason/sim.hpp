#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "reason/compiler.hpp"
#include "reason/config.hpp"
#include "reason/dag.hpp"
#include "reason/logic.hpp"

namespace reason {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HazardViolation : SimError { using SimError::SimError; };
struct BankConflict : SimError { using SimError::SimError; };
struct ResourceExhausted : SimError { using SimError::SimError; };
struct DimensionMismatch : SimError { using SimError::SimError; };
struct LengthMismatch : SimError { using SimError::SimError; };

struct CycleReport {
  long total_cycles = 0;
  std::map<std::string, long> busy;        // per-unit busy cycles
  std::map<std::string, double> utilization;
  std::map<std::string, long> stalls;      // raw / bank_conflict / fifo_full / sram_miss
  std::vector<long> fifo_histogram;        // occupancy -> cycles
  long raw_violations = 0;
  long bank_conflicts = 0;
  double tree_utilization_steady = 0;      // node utilization, fill cycles excluded
  std::vector<PredictedWrite> actual_writes;
  std::string config_json;                 // machine config, recorded verbatim
  std::string trace;                       // empty unless tracing was requested
  std::string to_json() const;
};

struct SimOptions {
  bool trace = false;
};

// Per-leaf runtime values for a dag under an assignment: distribution
// leaves read their table, literal leaves become 0/1 indicators. With
// allow_marginalize, unassigned distribution leaves contribute 1.0.
std::unordered_map<NodeId, double> leaf_inputs_for(const Dag& dag,
                                                   const Assignment& assignment,
                                                   bool allow_marginalize = false);

// Executes a compiled probabilistic program. leaf_inputs maps dag leaf
// NodeId -> current value (distribution leaves: table[assignment];
// literal leaves: 0/1 indicator).
std::pair<EvalResult, CycleReport> run_probabilistic(
    const MappedProgram& program,
    const std::unordered_map<NodeId, double>& leaf_inputs,
    const SimOptions& opts = {});

// ---- SpMSpM mode ----

struct SparseMatrix {
  int rows = 0, cols = 0;
  struct Entry { int row, col; double value; };
  std::vector<Entry> entries;

  static SparseMatrix identity(int n);
  static SparseMatrix from_dense(const std::vector<std::vector<double>>& d);
  std::vector<std::vector<double>> to_dense() const;
};

std::pair<SparseMatrix, CycleReport> run_spmspm(const SparseMatrix& a,
                                                const SparseMatrix& b,
                                                const MachineConfig& cfg);

// ---- symbolic (SAT) mode ----

enum class Verdict { SAT, UNSAT };
enum class DecisionHeuristic { StaticOccurrence, Vsids };

struct SatResult {
  Verdict verdict = Verdict::UNSAT;
  std::vector<int> model;  // 1-based; model[v] in {0,1}; index 0 unused
  long learned_clauses = 0;
  long deleted_clauses = 0;
  long decisions = 0;
  long propagations = 0;
  long conflicts = 0;
};

std::pair<SatResult, CycleReport> run_symbolic_sat(
    const CnfFormula& cnf, const MachineConfig& cfg,
    DecisionHeuristic heuristic = DecisionHeuristic::StaticOccurrence,
    const SimOptions& opts = {});

// ---- analytical latency models ----

enum class Topology { Tree, Mesh, Bus };
long interconnect_latency(Topology t, long n);

struct PipelineTimeline {
  struct Batch { double start_neural, end_neural, start_sym, end_sym; };
  std::vector<Batch> batches;
  double makespan = 0;
};

PipelineTimeline pipeline_two_level(const std::vector<double>& neural_latencies,
                                    const std::vector<double>& symbolic_latencies);

}  // namespace reason
