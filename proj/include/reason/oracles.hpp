#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "reason/logic.hpp"
#include "reason/prob.hpp"

namespace reason::oracle {

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotDecomposable : OracleError { using OracleError::OracleError; };
struct ZeroLikelihoodSequence : OracleError { using OracleError::OracleError; };
struct DimensionMismatch : OracleError { using OracleError::OracleError; };

// Evidence: variable -> value; unassigned variables are marginalized.
// Implemented directly from the recursive node semantics, sharing no
// code with dag-core evaluation.
double exact_pc_eval(const PcSpec& spec, const Assignment& evidence,
                     bool marginalize = false);

// Exhaustive marginal over all assignments consistent with the
// evidence; exponential, for cross-checks on small circuits only.
double exhaustive_pc_marginal(const PcSpec& spec, const Assignment& evidence,
                              const std::vector<int>& domain_sizes);

double hmm_forward_loglik(const HmmSpec& hmm);

struct ViterbiResult {
  std::vector<int> path;
  double logprob = 0;
};
ViterbiResult hmm_viterbi(const HmmSpec& hmm);

// Brute-force sum over all K^T state paths; K^T capped at 4096.
double hmm_path_enumeration(const HmmSpec& hmm);

struct PathPosteriors {
  std::vector<std::vector<double>> gamma;               // T x K
  std::vector<std::vector<std::vector<double>>> xi;     // (T-1) x K x K
};
PathPosteriors hmm_path_posteriors(const HmmSpec& hmm);

struct SatOracleResult {
  bool sat = false;
  std::vector<int> model;  // 1-based, valid iff sat
};

// Textbook recursive DPLL with unit propagation and pure-literal
// elimination. No hardware modeling.
SatOracleResult reference_sat(const CnfFormula& cnf);

// All satisfying assignments as bitmasks over variables 1..num_vars
// (bit v-1 set means v true). num_vars capped at 24.
std::vector<uint64_t> enumerate_models(const CnfFormula& cnf);

using Matrix = std::vector<std::vector<double>>;
Matrix dense_matmul(const Matrix& a, const Matrix& b);

}  // namespace reason::oracle
