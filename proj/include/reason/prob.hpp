#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "reason/dag.hpp"

namespace reason {

struct ProbError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ForwardReference : ProbError { using ProbError::ProbError; };
struct NegativeWeight : ProbError { using ProbError::ProbError; };
struct BadLeafTable : ProbError { using ProbError::ProbError; };

struct PcNode {
  enum class Type { Leaf, Sum, Product } type = Type::Leaf;
  std::vector<uint32_t> children;
  std::vector<double> weights;  // Sum only
  int var = -1;                 // Leaf only
  std::vector<double> table;    // Leaf only
};

struct PcSpec {
  int num_vars = 0;
  bool normalized = false;
  std::vector<PcNode> nodes;  // children precede parents; last node is the root
};

PcSpec parse_pc(const std::string& text);
std::string serialize_pc(const PcSpec& spec);

Dag lower_pc_to_dag(const PcSpec& spec);

struct StructureReport {
  bool smooth = true;
  bool decomposable = true;
  NodeId smooth_witness = kNoNode;
  NodeId decomposable_witness = kNoNode;
};

StructureReport check_structure(const Dag& dag);

struct HmmSpec {
  int K = 0;  // states
  int V = 0;  // observation alphabet size
  std::vector<double> pi;                  // K
  std::vector<std::vector<double>> A;      // K x K transitions
  std::vector<std::vector<double>> B;      // K x V emissions
  std::vector<int> obs;                    // T observations in [0, V)

  int T() const { return static_cast<int>(obs.size()); }
  void check() const;  // throws ProbError on invariant violations
};

HmmSpec parse_hmm_json(const std::string& text);
std::string serialize_hmm_json(const HmmSpec& hmm);

// Unrolls the forward recursion into a DAG whose single root evaluates
// the sequence likelihood. Model constants enter as constant leaves.
Dag unroll_hmm_to_dag(const HmmSpec& hmm);

}  // namespace reason
