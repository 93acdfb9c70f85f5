#pragma once

#include <cstdint>
#include <vector>

#include "reason/dag.hpp"
#include "reason/logic.hpp"
#include "reason/prob.hpp"

namespace reason {

// Deterministic generators for the test and benchmark corpora. All output
// is a pure function of the arguments; the RNG stream is fixed-width so
// results do not depend on the standard library's distribution details.

struct Rng {
  uint64_t s;
  explicit Rng(uint64_t seed) : s(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  uint64_t next() {
    // xorshift* — stable across platforms
    s ^= s >> 12;
    s ^= s << 25;
    s ^= s >> 27;
    return s * 0x2545f4914f6cdd1dull;
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  // uniform integer in [0, n)
  uint64_t below(uint64_t n) { return next() % n; }
};

// Smooth, decomposable PC over num_vars binary variables (0-based ids)
// built by recursive variable partitioning. When dead_branch is set,
// variable 0 gates the root mixture and the gate-1 component is
// unreachable for any dataset with x0 = 0 (its sum edges carry zero flow).
PcSpec gen_pc(uint64_t seed, int num_vars, int components = 2, bool dead_branch = false);

// Full random assignments over variables 0..num_vars-1; x0 pinned to 0
// when pin_first is set.
std::vector<Assignment> gen_pc_dataset(uint64_t seed, int num_vars, size_t count,
                                       bool pin_first = false);

HmmSpec gen_hmm(uint64_t seed, int K, int V, int T);

// Uniform k-SAT with distinct variables per clause.
CnfFormula gen_cnf(uint64_t seed, int num_vars, int num_clauses, int k = 3);

// Mix of binary and ternary clauses; binary_fraction of clauses have width 2.
CnfFormula gen_cnf_mixed(uint64_t seed, int num_vars, int num_clauses,
                         double binary_fraction);

// 20-var / 91-clause 3-CNF filtered to be satisfiable (uf20-91 style).
CnfFormula gen_uf20_style(uint64_t seed);

// Complete product tree of the given depth: 2^depth distinct-variable
// leaves, every compiled block full. Used for utilization measurements.
Dag gen_balanced_tree(uint64_t seed, int depth);

// Random smooth/decomposable dag (lowered gen_pc) of roughly target_nodes.
Dag gen_random_dag(uint64_t seed, int num_vars);

}  // namespace reason
