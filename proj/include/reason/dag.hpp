#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace reason {

using NodeId = uint32_t;
constexpr NodeId kNoNode = UINT32_MAX;

enum class NodeKind { LeafDist, LeafLiteral, Sum, Product, Or, And };
enum class KernelKind { SAT, FOL_GROUNDED, PC, HMM, SPMSPM };

const char* to_string(NodeKind k);
const char* to_string(KernelKind k);
std::optional<NodeKind> node_kind_from_string(const std::string& s);
std::optional<KernelKind> kernel_kind_from_string(const std::string& s);

// A constant leaf is a LeafDist with var = kConstVar and a single-entry
// table holding the constant value. Its scope is empty and the
// sums-to-one rule does not apply.
constexpr int kConstVar = -1;

struct DagNode {
  NodeKind kind = NodeKind::Sum;
  std::vector<NodeId> children;
  std::vector<double> weights;  // Sum only, same length as children
  int var = kConstVar;          // LeafDist / LeafLiteral
  bool positive = true;         // LeafLiteral polarity
  std::vector<double> table;    // LeafDist categorical table
  std::vector<int> scope;       // sorted, deduplicated variable ids

  bool is_leaf() const {
    return kind == NodeKind::LeafDist || kind == NodeKind::LeafLiteral;
  }
  bool is_const() const { return kind == NodeKind::LeafDist && var == kConstVar; }
};

struct Dag {
  KernelKind kernel = KernelKind::PC;
  std::vector<DagNode> nodes;
  std::vector<NodeId> roots;
  std::vector<NodeId> topo;  // children-first order
  std::map<NodeId, std::string> labels;

  size_t size() const { return nodes.size(); }
  size_t edge_count() const;
  const DagNode& node(NodeId id) const { return nodes[id]; }
  DagNode& node(NodeId id) { return nodes[id]; }
};

struct Violation {
  NodeId node = kNoNode;
  std::string rule;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

using Assignment = std::unordered_map<int, int>;

struct EvalOptions {
  bool log_domain = false;
  // When true, leaves over unassigned variables marginalize to 1.0
  // (valid for smooth/decomposable circuits only; caller's contract).
  bool allow_marginalize = false;
};

struct EvalResult {
  std::vector<double> root_values;           // linear domain (exp'd if log eval)
  std::vector<double> node_values;           // per-node, linear domain
  double value() const { return root_values.empty() ? 0.0 : root_values[0]; }
};

ValidationReport validate(const Dag& dag);

// Throws CycleDetected on a cyclic edge set. Deterministic: ties broken
// by NodeId (ascending).
std::vector<NodeId> topo_sort(const Dag& dag);

// Recomputes topo order and per-node scopes bottom-up. Call after
// constructing or mutating a Dag by hand.
void finalize(Dag& dag);

EvalResult evaluate(const Dag& dag, const Assignment& a, const EvalOptions& opts = {});

struct RegularizeResult {
  Dag dag;
  std::vector<NodeId> remap;  // old NodeId -> new NodeId
};

// Decomposes every node with fan-in > 2 into a balanced binary tree of
// two-input nodes. Sum weights stay on the edges adjacent to the
// original children; intermediate Sum edges carry weight 1.0.
RegularizeResult regularize_two_input(const Dag& dag);

// Longest root-to-leaf path, counting internal nodes.
size_t dag_depth(const Dag& dag);
size_t max_fan_in(const Dag& dag);

// Line-oriented serialization, byte-stable round trip.
std::string serialize_dag(const Dag& dag);
Dag parse_dag(const std::string& text);

// Canonical shortest-round-trip double formatting shared by all text
// serializers.
std::string format_double(double v);

struct DagError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CycleDetected : DagError {
  using DagError::DagError;
};
struct UnassignedVariable : DagError {
  using DagError::DagError;
};

}  // namespace reason
