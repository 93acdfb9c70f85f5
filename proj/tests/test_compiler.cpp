#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <climits>
#include <map>
#include <set>

#include "reason/compiler.hpp"
#include "reason/dag.hpp"
#include "reason/gen.hpp"

using namespace reason;

namespace {

NodeId add_const(Dag& d, double v) {
  DagNode n;
  n.kind = NodeKind::LeafDist;
  n.var = kConstVar;
  n.table = {v};
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

NodeId add_dist(Dag& d, int var) {
  DagNode n;
  n.kind = NodeKind::LeafDist;
  n.var = var;
  n.table = {0.4, 0.6};
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

NodeId add_node(Dag& d, NodeKind kind, std::vector<NodeId> children,
                std::vector<double> weights = {}) {
  DagNode n;
  n.kind = kind;
  n.children = std::move(children);
  n.weights = std::move(weights);
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

// product tree over 2^depth fresh distribution leaves, built inside d
NodeId build_tree(Dag& d, int depth, int var_base) {
  std::vector<NodeId> layer;
  for (int i = 0; i < (1 << depth); ++i) {
    DagNode n;
    n.kind = NodeKind::LeafDist;
    n.var = var_base + i;
    n.table = {0.4, 0.6};
    d.nodes.push_back(std::move(n));
    layer.push_back(static_cast<NodeId>(d.nodes.size() - 1));
  }
  while (layer.size() > 1) {
    std::vector<NodeId> next;
    for (size_t i = 0; i + 1 < layer.size(); i += 2)
      next.push_back(add_node(d, NodeKind::Product, {layer[i], layer[i + 1]}));
    layer = std::move(next);
  }
  return layer[0];
}

MachineConfig small_cfg() {
  MachineConfig cfg;
  cfg.tree_depth = 2;
  cfg.banks = 8;
  cfg.pipeline_interval = 3;
  return cfg;
}

}  // namespace

TEST_CASE("build_op_graph: weighted sum expands weight multiplies") {
  Dag d;
  NodeId a = add_const(d, 0.5);
  NodeId b = add_const(d, 0.25);
  d.roots = {add_node(d, NodeKind::Sum, {a, b}, {0.3, 0.7})};
  finalize(d);
  OpGraph g = build_op_graph(d);
  int muls = 0, adds = 0;
  for (const auto& op : g.ops) {
    if (op.op == TreeOp::MUL) ++muls;
    if (op.op == TreeOp::ADD) ++adds;
  }
  CHECK(muls == 2);
  CHECK(adds == 1);
}

TEST_CASE("build_op_graph: unit weights add no multiplies") {
  Dag d;
  NodeId a = add_const(d, 0.5);
  NodeId b = add_const(d, 0.25);
  d.roots = {add_node(d, NodeKind::Sum, {a, b}, {1.0, 1.0})};
  finalize(d);
  OpGraph g = build_op_graph(d);
  CHECK(g.ops.size() == 1);
  CHECK(g.ops[0].op == TreeOp::ADD);
}

TEST_CASE("decompose_blocks: 3-node tree fits one block") {
  Dag d;
  NodeId a = add_const(d, 0.5);
  NodeId b = add_const(d, 0.25);
  d.roots = {add_node(d, NodeKind::Product, {a, b})};
  finalize(d);
  OpGraph g = build_op_graph(d);
  auto blocks = decompose_blocks(g, MachineConfig::defaults());
  CHECK(blocks.size() == 1);
  CHECK(blocks[0].depth == 1);
}

TEST_CASE("decompose_blocks: depth-6 tree on D=3 gives 9 blocks") {
  Dag d = gen_balanced_tree(1, 6);
  OpGraph g = build_op_graph(d);
  auto blocks = decompose_blocks(g, MachineConfig::defaults());
  CHECK(blocks.size() == 9);
  int depth3 = 0;
  for (const auto& b : blocks) {
    CHECK(b.depth <= 3);
    if (b.depth == 3) ++depth3;
  }
  CHECK(depth3 == 9);
}

TEST_CASE("decompose_blocks: audit on random dags") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Dag d = gen_random_dag(seed, 16);
    CHECK(d.size() >= 100);
    OpGraph g = build_op_graph(d);
    MachineConfig cfg = MachineConfig::defaults();
    auto blocks = decompose_blocks(g, cfg);
    std::vector<int> seen(g.ops.size(), 0);
    for (const auto& b : blocks) {
      CHECK(b.depth <= cfg.tree_depth);
      for (uint32_t op : b.ops) seen[op]++;
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("register mapping: two operands land in banks 0 and 1") {
  Dag d;
  NodeId a = add_dist(d, 0);
  NodeId b = add_dist(d, 1);
  d.roots = {add_node(d, NodeKind::Sum, {a, b}, {1.0, 1.0})};
  finalize(d);
  MappedProgram p = compile(d, MachineConfig::defaults());
  REQUIRE(p.instrs.size() == 1);
  std::set<int> banks;
  for (const auto& li : p.instrs[0].leaf_inputs)
    if (li.kind == LeafInput::Kind::Reg) banks.insert(li.bank);
  CHECK(banks == std::set<int>{0, 1});
}

TEST_CASE("tree mapping: single ADD uses 2 pass leaves") {
  Dag d;
  NodeId a = add_const(d, 0.25);
  NodeId b = add_const(d, 0.5);
  d.roots = {add_node(d, NodeKind::Sum, {a, b}, {1.0, 1.0})};
  finalize(d);
  MachineConfig cfg = MachineConfig::defaults();
  MappedProgram p = compile(d, cfg);
  REQUIRE(p.instrs.size() == 1);
  const TreeInstr& ins = p.instrs[0];
  REQUIRE(ins.node_ops.size() == static_cast<size_t>(cfg.tree_nodes_per_pe()));
  int leaf_pass = 0, leaf_nop = 0;
  for (int s = 0; s < cfg.leaves_per_pe(); ++s) {
    if (ins.node_ops[s] == TreeOp::PASS) ++leaf_pass;
    if (ins.node_ops[s] == TreeOp::NOP) ++leaf_nop;
  }
  CHECK(leaf_pass == 2);
  CHECK(leaf_nop == 6);
  CHECK(ins.node_ops.back() == TreeOp::ADD);  // root position
}

TEST_CASE("tree mapping: replicated operand stays in one issue") {
  Dag d;
  NodeId c = add_dist(d, 0);
  d.roots = {add_node(d, NodeKind::Sum, {c, c}, {1.0, 1.0})};
  finalize(d);
  MappedProgram p = compile(d, MachineConfig::defaults());
  CHECK(p.instrs.size() == 1);
  int reg_reads = 0;
  std::set<std::pair<int, int>> locs;
  for (const auto& li : p.instrs[0].leaf_inputs)
    if (li.kind == LeafInput::Kind::Reg) {
      ++reg_reads;
      locs.insert({li.bank, li.addr});
    }
  CHECK(reg_reads == 2);
  // both slots read the one register: a single port access
  CHECK(locs.size() == 1);
}

TEST_CASE("tree mapping: full depth-3 block fills the tree") {
  Dag d;
  d.roots = {build_tree(d, 3, 0)};
  finalize(d);
  MachineConfig cfg = MachineConfig::defaults();
  MappedProgram p = compile(d, cfg);
  REQUIRE(p.instrs.size() == 1);
  int active = 0;
  for (TreeOp op : p.instrs[0].node_ops)
    if (op != TreeOp::NOP) ++active;
  CHECK(active == 15);
}

TEST_CASE("schedule: two dependent blocks at cycles 0 and 4") {
  Dag d;
  NodeId t = build_tree(d, 3, 0);
  NodeId extra = add_const(d, 0.5);
  d.roots = {add_node(d, NodeKind::Product, {t, extra})};
  finalize(d);
  MappedProgram p = compile(d, MachineConfig::defaults());
  REQUIRE(p.instrs.size() == 2);
  CHECK(p.instrs[0].issue_cycle == 0);
  CHECK(p.instrs[1].issue_cycle == 4);
}

TEST_CASE("schedule: independent blocks interleave in the gap") {
  Dag d;
  NodeId t1 = build_tree(d, 3, 0);
  NodeId t2 = build_tree(d, 3, 8);
  d.roots = {add_node(d, NodeKind::Product, {t1, t2})};
  finalize(d);
  MappedProgram p = compile(d, MachineConfig::defaults());
  REQUIRE(p.instrs.size() == 3);
  CHECK(p.instrs[0].issue_cycle == 0);
  CHECK(p.instrs[1].issue_cycle == 1);
  // both producers must clear the spacing rule
  CHECK(p.instrs[2].issue_cycle == 5);
}

TEST_CASE("schedule: producer-consumer spacing holds everywhere") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Dag d = gen_random_dag(seed, 16);
    MachineConfig cfg = MachineConfig::defaults();
    MappedProgram p = compile(d, cfg);
    std::map<uint32_t, long> issue_of;  // block -> cycle
    for (const auto& ins : p.instrs) issue_of[ins.block] = ins.issue_cycle;
    for (const auto& ins : p.instrs)
      for (uint32_t dep : p.block_table[ins.block].deps)
        CHECK(ins.issue_cycle - issue_of[dep] >= cfg.pipeline_interval);
  }
}

TEST_CASE("schedule: port legality over the whole program") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Dag d = gen_random_dag(seed, 16);
    MappedProgram p = compile(d, small_cfg());
    // cycle -> bank -> reads/writes
    std::map<long, std::map<int, int>> reads, writes;
    for (const auto& ins : p.instrs) {
      for (const auto& li : ins.leaf_inputs)
        if (li.kind == LeafInput::Kind::Reg) reads[ins.issue_cycle][li.bank]++;
      writes[ins.issue_cycle + p.cfg.tree_depth][ins.out_bank]++;
    }
    for (const auto& a : p.aux) {
      if (a.kind == AuxOp::Kind::STORE || a.kind == AuxOp::Kind::COPY)
        reads[a.cycle][a.src_bank]++;
      if (a.kind == AuxOp::Kind::LOAD || a.kind == AuxOp::Kind::COPY)
        writes[a.cycle][a.dst_bank]++;
    }
    for (const auto& [cycle, per_bank] : reads)
      for (const auto& [bank, n] : per_bank) CHECK(n <= 1);
    for (const auto& [cycle, per_bank] : writes)
      for (const auto& [bank, n] : per_bank) CHECK(n <= 1);
  }
}

TEST_CASE("spills: scarce registers trigger spill/reload") {
  Dag d = gen_balanced_tree(3, 5);
  MachineConfig cfg = small_cfg();
  cfg.regs_per_bank = 2;
  MappedProgram p = compile(d, cfg);
  CHECK(p.spill_count > 0);
}

TEST_CASE("spills: more registers never spill more") {
  Dag d = gen_balanced_tree(4, 5);
  MachineConfig cfg = small_cfg();
  int prev = INT_MAX;
  for (int r : {2, 4, 8, 32}) {
    cfg.regs_per_bank = r;
    MappedProgram p = compile(d, cfg);
    CHECK(p.spill_count <= prev);
    prev = p.spill_count;
  }
}

TEST_CASE("compile: determinism") {
  Dag d = gen_random_dag(5, 16);
  MappedProgram a = compile(d, MachineConfig::defaults());
  MappedProgram b = compile(d, MachineConfig::defaults());
  CHECK(a.serialize() == b.serialize());
}

TEST_CASE("compile: serialization round trip") {
  Dag d = gen_random_dag(6, 12);
  MappedProgram p = compile(d, small_cfg());
  MappedProgram back = MappedProgram::deserialize(p.serialize());
  CHECK(back.serialize() == p.serialize());
  CHECK(back.predicted_writes == p.predicted_writes);
}

TEST_CASE("compile: predicted write addresses follow lowest-available policy") {
  Dag d = gen_random_dag(2, 16);
  MappedProgram p = compile(d, small_cfg());
  // replay an independent lowest-free allocator over the predicted stream
  std::map<int, std::set<int>> free_addrs;
  for (int b = 0; b < p.cfg.banks; ++b)
    for (int r = 0; r < p.cfg.regs_per_bank; ++r) free_addrs[b].insert(r);
  for (const auto& pl : p.preload) free_addrs[pl.bank].erase(pl.addr);

  // frees: collect (cycle, bank, addr) for reads that free
  std::map<long, std::vector<std::pair<int, int>>> frees;
  for (const auto& ins : p.instrs)
    for (const auto& li : ins.leaf_inputs)
      if (li.kind == LeafInput::Kind::Reg && li.free_after_read)
        frees[ins.issue_cycle].push_back({li.bank, li.addr});
  for (const auto& a : p.aux)
    if ((a.kind == AuxOp::Kind::STORE || a.kind == AuxOp::Kind::COPY) && a.free_src)
      frees[a.cycle].push_back({a.src_bank, a.src_addr});

  std::map<long, std::vector<PredictedWrite>> by_cycle;
  for (const auto& w : p.predicted_writes) by_cycle[w.cycle].push_back(w);
  std::set<long> cycles;
  for (const auto& [c, f] : frees) cycles.insert(c);
  for (const auto& [c, w] : by_cycle) cycles.insert(c);
  for (long cycle : cycles) {
    if (frees.count(cycle))
      for (auto [b, addr] : frees[cycle]) free_addrs[b].insert(addr);
    if (!by_cycle.count(cycle)) continue;
    for (const auto& w : by_cycle[cycle]) {
      REQUIRE(!free_addrs[w.bank].empty());
      CHECK(w.addr == *free_addrs[w.bank].begin());
      free_addrs[w.bank].erase(w.addr);
    }
  }
}

TEST_CASE("program stats are well formed") {
  Dag d = gen_random_dag(8, 8);
  MappedProgram p = compile(d, MachineConfig::defaults());
  std::string s = p.stats_json();
  CHECK(s.find("spill_count") != std::string::npos);
  CHECK(p.last_cycle() >= p.instrs.back().issue_cycle);
}
