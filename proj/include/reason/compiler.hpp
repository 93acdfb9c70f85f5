#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "reason/config.hpp"
#include "reason/dag.hpp"

namespace reason {

struct CompileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InfeasibleWidth : CompileError { using CompileError::CompileError; };
struct BlockTooWide : CompileError { using CompileError::CompileError; };

enum class TreeOp : uint8_t { ADD, MUL, MAX, MIN, CMP, PASS, NOP };
const char* to_string(TreeOp op);

// ---- operation graph (DAG lowered to hardware ops) ----

struct OpRef {
  enum class Kind : uint8_t { Op, Leaf, Imm } kind = Kind::Imm;
  uint32_t index = 0;  // op id or dag leaf NodeId
  double imm = 0;
};

struct OpNode {
  TreeOp op = TreeOp::PASS;
  std::vector<OpRef> operands;  // 1 or 2
  NodeId dag_node = kNoNode;    // provenance (kNoNode for weight multiplies)
};

struct OpGraph {
  std::vector<OpNode> ops;          // topologically ordered (operands precede)
  std::vector<uint32_t> parents_count;
  uint32_t root_op = 0;             // op producing the dag root value
  std::vector<NodeId> leaves;       // dag leaf nodes referenced
};

OpGraph build_op_graph(const Dag& dag);

// ---- values ----

// A value is a dag leaf input, a block output, or a copy alias of
// another value placed in a different bank to dodge a port conflict.
struct Value {
  enum class Kind : uint8_t { LeafInput, BlockOut, CopyAlias } kind = Kind::LeafInput;
  NodeId dag_node = kNoNode;  // LeafInput: the leaf id; otherwise provenance
  uint32_t block = 0;         // BlockOut only
  uint32_t source = UINT32_MAX;  // CopyAlias only
};

// ---- program ----

struct Block {
  std::vector<uint32_t> ops;   // member op ids
  int depth = 0;
  int pe = 0;
  std::vector<uint32_t> deps;  // producing blocks this block reads from
};

struct LeafInput {
  enum class Kind : uint8_t { None, Reg, Imm } kind = Kind::None;
  int bank = -1;
  int addr = -1;          // patched by the address replay
  bool free_after_read = false;
  double imm = 0;
  uint32_t value = UINT32_MAX;  // value id for Reg operands
};

struct TreeInstr {
  long issue_cycle = 0;
  int pe = 0;
  uint32_t block = 0;
  std::vector<TreeOp> node_ops;     // level-major: level 0 leaves first
  std::vector<LeafInput> leaf_inputs;  // size leaves_per_pe
  int out_bank = 0;
  uint32_t out_value = UINT32_MAX;
};

struct AuxOp {
  enum class Kind : uint8_t { LOAD, STORE, COPY } kind = Kind::LOAD;
  long cycle = 0;
  int src_bank = -1, src_addr = -1;  // STORE / COPY source
  bool free_src = false;
  int dst_bank = -1;                 // LOAD / COPY destination
  int scratch_addr = -1;             // LOAD source / STORE destination
  uint32_t value = UINT32_MAX;       // value being moved
  uint32_t alias = UINT32_MAX;       // COPY: new alias value id
};

struct Preload {
  uint32_t value = UINT32_MAX;
  int bank = -1;
  int addr = -1;
};

struct PredictedWrite {
  long cycle = 0;
  int bank = 0;
  int addr = 0;
  NodeId dag_node = kNoNode;  // kNoNode for aux-op writes
  uint32_t value = UINT32_MAX;
  bool operator==(const PredictedWrite&) const = default;
};

struct MappedProgram {
  MachineConfig cfg;
  KernelKind kernel = KernelKind::PC;
  std::vector<Value> values;
  std::vector<Block> block_table;
  std::vector<TreeInstr> instrs;      // ascending issue cycle
  std::vector<AuxOp> aux;             // ascending cycle, stable order
  std::vector<Preload> preload;
  std::vector<PredictedWrite> predicted_writes;
  uint32_t root_value = UINT32_MAX;
  int spill_count = 0;
  int copy_count = 0;
  size_t cross_block_edges = 0;

  long last_cycle() const;
  std::string stats_json() const;
  std::string serialize() const;
  static MappedProgram deserialize(const std::string& text);
};

// Individual compiler steps (exposed for inspection/tests) and the
// composed pipeline. The dag must be validated and regularized.
std::vector<Block> decompose_blocks(const OpGraph& g, const MachineConfig& cfg);
MappedProgram compile(const Dag& dag, const MachineConfig& cfg);

}  // namespace reason
