#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "reason/dag.hpp"

namespace reason {

using Lit = int;  // +v / -v, 1-based variable ids

// Dense literal index: +v -> 2(v-1), -v -> 2(v-1)+1.
inline uint32_t lit_index(Lit l) {
  return 2u * static_cast<uint32_t>(std::abs(l) - 1) + (l < 0 ? 1u : 0u);
}
inline Lit lit_from_index(uint32_t idx) {
  Lit v = static_cast<Lit>(idx / 2) + 1;
  return (idx & 1) ? -v : v;
}

struct CnfFormula {
  int num_vars = 0;
  std::vector<std::vector<Lit>> clauses;
  int tautologies_dropped = 0;
};

struct LogicError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MalformedHeader : LogicError { using LogicError::LogicError; };
struct LiteralOutOfRange : LogicError { using LogicError::LogicError; };
struct UnterminatedClause : LogicError { using LogicError::LogicError; };
struct QuantifierPresent : LogicError { using LogicError::LogicError; };

CnfFormula parse_dimacs(const std::string& text);
std::string serialize_dimacs(const CnfFormula& cnf);

bool clause_satisfied(const std::vector<Lit>& clause, const std::vector<int>& model);
bool cnf_satisfied(const CnfFormula& cnf, const std::vector<int>& model);

// Propositional AST, prefix s-expression syntax:
//   (and (or a (not b)) (imp a c) (iff b c))
struct Formula {
  enum class Op { Atom, Not, And, Or, Imp, Iff } op = Op::Atom;
  std::string atom;
  std::vector<std::shared_ptr<Formula>> args;
};
using FormulaPtr = std::shared_ptr<Formula>;

FormulaPtr parse_sexpr(const std::string& text);
size_t formula_size(const Formula& f);
std::vector<std::string> formula_atoms(const Formula& f);

struct TseitinResult {
  CnfFormula cnf;
  std::vector<std::string> atom_names;  // atom i <-> variable i+1
};
TseitinResult tseitin_cnf(const Formula& f);

Dag lower_cnf_to_dag(const CnfFormula& cnf);

constexpr uint32_t kNil = UINT32_MAX;

struct WatchIndex {
  struct ClauseEntry {
    uint32_t base = 0;                  // clause storage base address (words)
    int watch[2] = {-1, -1};            // literal positions watched
    uint32_t watched_idx[2] = {kNil, kNil};  // literal index per watch slot
    uint32_t next[2] = {kNil, kNil};    // next clause on each watch list
  };
  std::vector<uint32_t> head;          // size 2*num_vars, literal idx -> clause or kNil
  std::vector<ClauseEntry> clauses;
  uint32_t total_words = 0;

  // Clauses currently watching literal l, in list order.
  std::vector<uint32_t> traverse(Lit l) const;
};

WatchIndex build_watch_index(const CnfFormula& cnf);

}  // namespace reason
