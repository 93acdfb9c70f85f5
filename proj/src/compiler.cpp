#include "reason/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace reason {

using nlohmann::json;

const char* to_string(TreeOp op) {
  switch (op) {
    case TreeOp::ADD: return "ADD";
    case TreeOp::MUL: return "MUL";
    case TreeOp::MAX: return "MAX";
    case TreeOp::MIN: return "MIN";
    case TreeOp::CMP: return "CMP";
    case TreeOp::PASS: return "PASS";
    case TreeOp::NOP: return "NOP";
  }
  return "?";
}

static TreeOp tree_op_from_string(const std::string& s) {
  if (s == "ADD") return TreeOp::ADD;
  if (s == "MUL") return TreeOp::MUL;
  if (s == "MAX") return TreeOp::MAX;
  if (s == "MIN") return TreeOp::MIN;
  if (s == "CMP") return TreeOp::CMP;
  if (s == "PASS") return TreeOp::PASS;
  if (s == "NOP") return TreeOp::NOP;
  throw CompileError("unknown tree op: " + s);
}

// ---------------------------------------------------------------------------
// DAG -> op graph
// ---------------------------------------------------------------------------

OpGraph build_op_graph(const Dag& dag) {
  if (dag.roots.size() != 1) throw CompileError("compile expects a single-root dag");
  OpGraph g;
  std::unordered_set<NodeId> leaf_seen;
  // ref_of[node] is the hardware-level value of each dag node.
  std::vector<OpRef> ref_of(dag.nodes.size());

  auto make_op = [&](TreeOp op, std::vector<OpRef> operands, NodeId prov) {
    OpNode n;
    n.op = op;
    n.operands = std::move(operands);
    n.dag_node = prov;
    g.ops.push_back(std::move(n));
    OpRef r;
    r.kind = OpRef::Kind::Op;
    r.index = static_cast<uint32_t>(g.ops.size() - 1);
    return r;
  };
  auto leaf_ref = [&](NodeId id) {
    const DagNode& n = dag.nodes[id];
    if (n.is_const()) {
      OpRef r;
      r.kind = OpRef::Kind::Imm;
      r.imm = n.table.empty() ? 0.0 : n.table[0];
      return r;
    }
    if (leaf_seen.insert(id).second) g.leaves.push_back(id);
    OpRef r;
    r.kind = OpRef::Kind::Leaf;
    r.index = id;
    return r;
  };

  for (NodeId id : dag.topo) {
    const DagNode& n = dag.nodes[id];
    switch (n.kind) {
      case NodeKind::LeafDist:
      case NodeKind::LeafLiteral:
        ref_of[id] = leaf_ref(id);
        break;
      case NodeKind::Sum: {
        if (n.children.size() > 2) throw CompileError("dag not regularized (sum fan-in > 2)");
        std::vector<OpRef> terms;
        for (size_t i = 0; i < n.children.size(); ++i) {
          OpRef c = ref_of[n.children[i]];
          double w = n.weights[i];
          if (w == 1.0) {
            terms.push_back(c);
          } else {
            OpRef imm;
            imm.kind = OpRef::Kind::Imm;
            imm.imm = w;
            // weight multiply carries the parent's provenance only when it
            // is the whole value of a unary sum
            terms.push_back(make_op(TreeOp::MUL, {c, imm},
                                    n.children.size() == 1 ? id : kNoNode));
          }
        }
        if (terms.size() == 1) {
          ref_of[id] = terms[0];  // unary sum collapses to its term
        } else {
          ref_of[id] = make_op(TreeOp::ADD, {terms[0], terms[1]}, id);
        }
        break;
      }
      case NodeKind::Product:
      case NodeKind::Or:
      case NodeKind::And: {
        if (n.children.size() > 2) throw CompileError("dag not regularized (fan-in > 2)");
        TreeOp op = n.kind == NodeKind::Product ? TreeOp::MUL
                    : n.kind == NodeKind::Or    ? TreeOp::MAX
                                                : TreeOp::MIN;
        if (n.children.size() == 1) {
          ref_of[id] = ref_of[n.children[0]];
        } else {
          ref_of[id] = make_op(op, {ref_of[n.children[0]], ref_of[n.children[1]]}, id);
        }
        break;
      }
    }
  }

  OpRef root = ref_of[dag.roots[0]];
  if (root.kind != OpRef::Kind::Op)
    root = make_op(TreeOp::PASS, {root}, dag.roots[0]);
  g.root_op = root.index;

  // distinct parent counts
  g.parents_count.assign(g.ops.size(), 0);
  for (const OpNode& op : g.ops) {
    uint32_t prev = UINT32_MAX;
    for (const OpRef& r : op.operands) {
      if (r.kind == OpRef::Kind::Op && r.index != prev) {
        ++g.parents_count[r.index];
        prev = r.index;
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Step 1: block decomposition
// ---------------------------------------------------------------------------

namespace {

struct UnionFind {
  std::vector<uint32_t> p;
  explicit UnionFind(size_t n) : p(n) {
    for (size_t i = 0; i < n; ++i) p[i] = static_cast<uint32_t>(i);
  }
  uint32_t find(uint32_t x) {
    while (p[x] != x) x = p[x] = p[p[x]];
    return x;
  }
  void unite(uint32_t a, uint32_t b) { p[find(a)] = find(b); }
};

}  // namespace

std::vector<Block> decompose_blocks(const OpGraph& g, const MachineConfig& cfg) {
  const int D = cfg.tree_depth;
  const size_t n = g.ops.size();
  UnionFind uf(n);
  std::vector<int> depth(n, 1);       // indexed by block representative
  std::vector<char> is_root(n, 1);    // op is the root of its block

  for (uint32_t i = 0; i < n; ++i) {
    // Absorb operand subtrees while the depth budget allows, deepest first.
    struct Cand { int depth; uint32_t op; };
    std::vector<Cand> cands;
    uint32_t prev = UINT32_MAX;
    for (const OpRef& r : g.ops[i].operands) {
      if (r.kind != OpRef::Kind::Op || r.index == prev) continue;
      prev = r.index;
      uint32_t c = r.index;
      if (!is_root[c]) continue;               // already consumed in its block
      if (g.parents_count[c] > 1) continue;    // shared value stays a block root
      cands.push_back({depth[uf.find(c)], c});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.depth != b.depth ? a.depth > b.depth : a.op < b.op;
    });
    int d = 1;
    for (const Cand& c : cands) {
      if (std::max(d, 1 + c.depth) > D) continue;
      d = std::max(d, 1 + c.depth);
      is_root[c.op] = 0;
      uf.unite(c.op, i);
    }
    depth[uf.find(i)] = d;
  }

  // Emit blocks keyed by root op id ascending (a topological order).
  std::map<uint32_t, std::vector<uint32_t>> members;  // root op -> member ops
  std::unordered_map<uint32_t, uint32_t> rep_root;
  for (uint32_t i = 0; i < n; ++i)
    if (is_root[i]) rep_root[uf.find(i)] = i;
  for (uint32_t i = 0; i < n; ++i) members[rep_root.at(uf.find(i))].push_back(i);

  std::vector<Block> blocks;
  blocks.reserve(members.size());
  for (auto& [root, ops] : members) {
    Block b;
    b.ops = std::move(ops);
    b.depth = depth[uf.find(root)];
    blocks.push_back(std::move(b));
  }
  return blocks;
}

// ---------------------------------------------------------------------------
// compile: steps 2-4 plus the address replay
// ---------------------------------------------------------------------------

namespace {

constexpr int kAuxSlotsPerCycle = 4;
constexpr long kSpacingHorizon = 1L << 40;  // "never" for next-use ordering

struct PortState {
  std::map<long, std::set<int>> reads, writes;  // cycle -> banks in use
  std::map<long, int> aux_count;

  bool read_free(long c, int bank) const {
    auto it = reads.find(c);
    return it == reads.end() || !it->second.count(bank);
  }
  bool write_free(long c, int bank) const {
    auto it = writes.find(c);
    return it == writes.end() || !it->second.count(bank);
  }
  bool aux_free(long c) const {
    auto it = aux_count.find(c);
    return it == aux_count.end() || it->second < kAuxSlotsPerCycle;
  }
};

struct Compiler {
  const Dag& dag;
  const MachineConfig& cfg;
  OpGraph g;
  MappedProgram prog;

  std::vector<Block> blocks;
  std::vector<uint32_t> block_of_op;
  std::vector<uint32_t> blockout_value;  // block -> value id
  std::unordered_map<NodeId, uint32_t> leaf_value;  // dag leaf -> value id
  std::vector<int> value_bank;           // value -> bank (-1 until mapped)
  std::vector<long> value_birth;         // first cycle the value is readable
  std::vector<std::vector<uint32_t>> block_operands;  // distinct reg values, slot order

  PortState ports;
  std::vector<long> issue;  // block -> issue cycle
  int scratch_next = 0;
  long issue_stride;  // tree issues restricted to multiples of this

  Compiler(const Dag& d, const MachineConfig& c, long stride = 1)
      : dag(d), cfg(c), issue_stride(stride) {}

  void run() {
    prog.cfg = cfg;
    prog.kernel = dag.kernel;
    g = build_op_graph(dag);
    blocks = decompose_blocks(g, cfg);
    index_blocks();
    make_values();
    map_trees();
    map_registers();
    schedule();
    sort_aux();
    insert_spills();
    mark_frees();
    replay_addresses();
    prog.block_table = blocks;
  }

  void index_blocks() {
    block_of_op.assign(g.ops.size(), 0);
    for (uint32_t b = 0; b < blocks.size(); ++b) {
      blocks[b].pe = static_cast<int>(b % cfg.pe_count);
      for (uint32_t op : blocks[b].ops) block_of_op[op] = b;
    }
    for (uint32_t i = 0; i < g.ops.size(); ++i) {
      uint32_t prev = UINT32_MAX;
      for (const OpRef& r : g.ops[i].operands) {
        if (r.kind != OpRef::Kind::Op || r.index == prev) continue;
        prev = r.index;
        if (block_of_op[r.index] != block_of_op[i]) ++prog.cross_block_edges;
      }
    }
  }

  uint32_t root_op_of(uint32_t b) const { return blocks[b].ops.back(); }

  void make_values() {
    // Leaf input values first (dag node id order), then block outputs.
    for (NodeId leaf : g.leaves) {
      Value v;
      v.kind = Value::Kind::LeafInput;
      v.dag_node = leaf;
      leaf_value[leaf] = static_cast<uint32_t>(prog.values.size());
      prog.values.push_back(v);
    }
    std::sort(prog.values.begin(), prog.values.end(),
              [](const Value& a, const Value& b) { return a.dag_node < b.dag_node; });
    leaf_value.clear();
    for (uint32_t i = 0; i < prog.values.size(); ++i)
      leaf_value[prog.values[i].dag_node] = i;

    blockout_value.resize(blocks.size());
    for (uint32_t b = 0; b < blocks.size(); ++b) {
      Value v;
      v.kind = Value::Kind::BlockOut;
      v.block = b;
      v.dag_node = g.ops[root_op_of(b)].dag_node;
      blockout_value[b] = static_cast<uint32_t>(prog.values.size());
      prog.values.push_back(v);
    }
    prog.root_value = blockout_value[block_of_op[g.root_op]];
    value_bank.assign(prog.values.size(), -1);
    value_birth.assign(prog.values.size(), 0);
  }

  OpRef value_of_ref(const OpRef& r, uint32_t& vid) const {
    // For an operand that is external to the current block, which value
    // feeds it? Returns r unchanged for Imm.
    vid = UINT32_MAX;
    if (r.kind == OpRef::Kind::Leaf) vid = leaf_value.at(r.index);
    else if (r.kind == OpRef::Kind::Op) vid = blockout_value[block_of_op[r.index]];
    return r;
  }

  // Step 3: place each block's ops onto tree positions; fill the per-block
  // instruction template (node_ops + leaf inputs, banks not yet known).
  size_t pos_index(int level, int slot) const {
    size_t off = 0;
    for (int m = 0; m < level; ++m) off += size_t{1} << (cfg.tree_depth - m);
    return off + static_cast<size_t>(slot);
  }

  void map_trees() {
    const int D = cfg.tree_depth;
    prog.instrs.resize(blocks.size());
    block_operands.resize(blocks.size());
    for (uint32_t b = 0; b < blocks.size(); ++b) {
      TreeInstr& ins = prog.instrs[b];
      ins.block = b;
      ins.pe = blocks[b].pe;
      ins.out_bank = blocks[b].pe % cfg.banks;
      ins.out_value = blockout_value[b];
      ins.node_ops.assign(static_cast<size_t>(cfg.tree_nodes_per_pe()), TreeOp::NOP);
      ins.leaf_inputs.assign(static_cast<size_t>(cfg.leaves_per_pe()), LeafInput{});

      std::set<uint32_t> deps;
      std::vector<char> seen(prog.values.size(), 0);
      place_op(b, root_op_of(b), D, 0, ins, deps, seen);
      blocks[b].deps.assign(deps.begin(), deps.end());
    }
  }

  void place_op(uint32_t b, uint32_t op, int level, int slot, TreeInstr& ins,
                std::set<uint32_t>& deps, std::vector<char>& seen) {
    size_t idx = pos_index(level, slot);
    if (ins.node_ops[idx] != TreeOp::NOP) throw BlockTooWide("tree position collision");
    ins.node_ops[idx] = g.ops[op].op;
    const auto& operands = g.ops[op].operands;
    for (size_t i = 0; i < operands.size(); ++i) {
      const OpRef& r = operands[i];
      int cslot = 2 * slot + static_cast<int>(i);
      if (r.kind == OpRef::Kind::Op && block_of_op[r.index] == b &&
          r.index != root_op_of(b)) {
        place_op(b, r.index, level - 1, cslot, ins, deps, seen);
        continue;
      }
      // External operand: route from a leaf slot through a PASS chain.
      int leaf_slot = cslot << (level - 1);
      for (int m = 1; m < level; ++m) {
        size_t p = pos_index(m, cslot << (level - 1 - m));
        if (ins.node_ops[p] != TreeOp::NOP) throw BlockTooWide("tree position collision");
        ins.node_ops[p] = TreeOp::PASS;
      }
      LeafInput& li = ins.leaf_inputs[static_cast<size_t>(leaf_slot)];
      size_t lidx = pos_index(0, leaf_slot);
      ins.node_ops[lidx] = TreeOp::PASS;
      if (r.kind == OpRef::Kind::Imm) {
        li.kind = LeafInput::Kind::Imm;
        li.imm = r.imm;
      } else {
        uint32_t vid;
        value_of_ref(r, vid);
        li.kind = LeafInput::Kind::Reg;
        li.value = vid;
        if (prog.values[vid].kind == Value::Kind::BlockOut)
          deps.insert(prog.values[vid].block);
        if (!seen[vid]) {
          seen[vid] = 1;
          block_operands[b].push_back(vid);
        }
      }
    }
  }

  // Step 2: bank assignment. Block outputs are pinned by the one-bank-one-PE
  // rule; leaf inputs get most-constrained-first, least-loaded placement.
  void map_registers() {
    for (uint32_t b = 0; b < blocks.size(); ++b) {
      if (block_operands[b].size() > static_cast<size_t>(cfg.banks))
        throw InfeasibleWidth("block needs more operand banks than exist");
      value_bank[blockout_value[b]] = blocks[b].pe % cfg.banks;
    }

    std::vector<uint32_t> pending;
    for (uint32_t v = 0; v < prog.values.size(); ++v)
      if (prog.values[v].kind == Value::Kind::LeafInput) pending.push_back(v);

    // co-operand sets per value
    std::vector<std::vector<uint32_t>> in_blocks(prog.values.size());
    for (uint32_t b = 0; b < blocks.size(); ++b)
      for (uint32_t v : block_operands[b]) in_blocks[v].push_back(b);

    std::vector<int> load(static_cast<size_t>(cfg.banks), 0);
    auto feasible = [&](uint32_t v) {
      std::vector<char> bad(static_cast<size_t>(cfg.banks), 0);
      for (uint32_t b : in_blocks[v])
        for (uint32_t o : block_operands[b])
          if (o != v && value_bank[o] >= 0) bad[static_cast<size_t>(value_bank[o])] = 1;
      std::vector<int> out;
      for (int k = 0; k < cfg.banks; ++k)
        if (!bad[static_cast<size_t>(k)]) out.push_back(k);
      return out;
    };

    while (!pending.empty()) {
      size_t best = 0;
      size_t best_n = SIZE_MAX;
      std::vector<int> best_feas;
      for (size_t i = 0; i < pending.size(); ++i) {
        auto f = feasible(pending[i]);
        if (f.size() < best_n ||
            (f.size() == best_n && pending[i] < pending[best])) {
          best = i;
          best_n = f.size();
          best_feas = std::move(f);
        }
      }
      uint32_t v = pending[best];
      pending.erase(pending.begin() + static_cast<long>(best));
      int pick;
      if (best_feas.empty()) {
        // every bank clashes in some block; schedule-time COPY will fix it
        pick = static_cast<int>(std::min_element(load.begin(), load.end()) - load.begin());
      } else {
        pick = best_feas[0];
        for (int k : best_feas)
          if (load[static_cast<size_t>(k)] < load[static_cast<size_t>(pick)]) pick = k;
      }
      value_bank[v] = pick;
      ++load[static_cast<size_t>(pick)];
    }
  }

  // Step 4: list scheduling with read-port conflict copies.
  long spacing() const {
    return std::max<long>(cfg.pipeline_interval, cfg.tree_depth + 1);
  }

  void schedule() {
    const size_t n = blocks.size();
    issue.assign(n, -1);
    size_t placed = 0;
    long t = 0;
    std::vector<TreeInstr> out;
    out.reserve(n);
    long guard = 0;
    while (placed < n) {
      if (++guard > 4'000'000) throw CompileError("scheduler livelock");
      if (t % issue_stride != 0) { ++t; continue; }
      // candidate blocks: all deps issued and spacing satisfied
      uint32_t pick = UINT32_MAX;
      for (uint32_t b = 0; b < n; ++b) {
        if (issue[b] >= 0) continue;
        bool ready = true;
        long r = 0;
        for (uint32_t d : blocks[b].deps) {
          if (issue[d] < 0) { ready = false; break; }
          r = std::max(r, issue[d] + spacing());
        }
        if (!ready || r > t) continue;
        if (try_place(b, t, /*commit=*/false)) { pick = b; break; }
      }
      if (pick != UINT32_MAX) {
        try_place(pick, t, /*commit=*/true);
        issue[pick] = t;
        ++placed;
      }
      ++t;
    }
    std::sort(prog.instrs.begin(), prog.instrs.end(),
              [](const TreeInstr& a, const TreeInstr& b) {
                return a.issue_cycle < b.issue_cycle;
              });
  }

  // Attempt to place block b at cycle t; on commit, reserve ports, emit
  // conflict copies, and stamp the instruction. prog.instrs is still
  // indexed by block id at this stage.
  bool try_place(uint32_t b, long t, bool commit) {
    TreeInstr& ins = prog.instrs[b];
    std::set<int> used;  // banks read by this instruction
    struct PlannedCopy { uint32_t vid; long cycle; int src, dst; };
    std::vector<PlannedCopy> copies;
    std::map<uint32_t, int> resolved_bank;  // value -> bank used at this issue

    for (uint32_t vid : block_operands[b]) {
      int bank = value_bank[vid];
      bool clash = used.count(bank) || !ports.read_free(t, bank);
      if (!clash) {
        used.insert(bank);
        resolved_bank[vid] = bank;
        continue;
      }
      // need a copy of vid into a conflict-free bank before t
      bool done = false;
      for (long c = t - 1; c >= value_birth[vid] && c >= t - 64; --c) {
        if (!ports.read_free(c, bank) || !ports.aux_free(c)) continue;
        int dst = -1;
        for (int k = 0; k < cfg.banks; ++k) {
          if (used.count(k)) continue;
          if (!ports.write_free(c, k) || !ports.read_free(t, k)) continue;
          dst = k;
          break;
        }
        if (dst < 0) continue;
        copies.push_back({vid, c, bank, dst});
        used.insert(dst);
        resolved_bank[vid] = dst;  // the alias's bank, patched below on commit
        done = true;
        break;
      }
      if (!done) return false;
    }
    if (!ports.write_free(t + cfg.tree_depth, ins.out_bank)) return false;
    if (!commit) return true;

    std::map<uint32_t, uint32_t> alias_of;
    for (const PlannedCopy& pc : copies) {
      Value av;
      av.kind = Value::Kind::CopyAlias;
      av.source = pc.vid;
      av.dag_node = prog.values[pc.vid].dag_node;
      uint32_t avid = static_cast<uint32_t>(prog.values.size());
      prog.values.push_back(av);
      value_bank.push_back(pc.dst);
      value_birth.push_back(pc.cycle + 1);
      alias_of[pc.vid] = avid;

      AuxOp cp;
      cp.kind = AuxOp::Kind::COPY;
      cp.cycle = pc.cycle;
      cp.src_bank = pc.src;
      cp.dst_bank = pc.dst;
      cp.value = pc.vid;
      cp.alias = avid;
      prog.aux.push_back(cp);
      ++prog.copy_count;
      ports.reads[pc.cycle].insert(pc.src);
      ports.writes[pc.cycle].insert(pc.dst);
      ++ports.aux_count[pc.cycle];
    }
    for (LeafInput& li : ins.leaf_inputs) {
      if (li.kind != LeafInput::Kind::Reg) continue;
      auto it = alias_of.find(li.value);
      if (it != alias_of.end()) li.value = it->second;
      li.bank = value_bank[li.value];
    }
    for (auto& [vid, bank] : resolved_bank) ports.reads[t].insert(bank);
    ports.writes[t + cfg.tree_depth].insert(ins.out_bank);
    ins.issue_cycle = t;
    value_birth[ins.out_value] = t + cfg.tree_depth + 1;
    return true;
  }

  // ---- live ranges and spills ----

  struct UseEv {
    long cycle;
    int kind;     // 0 = tree read, 1 = aux src read
    size_t index; // instr or aux index
  };

  std::vector<std::vector<UseEv>> collect_uses() const {
    std::vector<std::vector<UseEv>> uses(prog.values.size());
    for (size_t i = 0; i < prog.instrs.size(); ++i) {
      const TreeInstr& ins = prog.instrs[i];
      std::set<uint32_t> dedup;
      for (const LeafInput& li : ins.leaf_inputs)
        if (li.kind == LeafInput::Kind::Reg && dedup.insert(li.value).second)
          uses[li.value].push_back({ins.issue_cycle, 0, i});
    }
    for (size_t i = 0; i < prog.aux.size(); ++i) {
      const AuxOp& a = prog.aux[i];
      if (a.kind == AuxOp::Kind::COPY || a.kind == AuxOp::Kind::STORE)
        uses[a.value].push_back({a.cycle, 1, i});
    }
    for (auto& u : uses)
      std::sort(u.begin(), u.end(), [](const UseEv& a, const UseEv& b) {
        return a.cycle < b.cycle;
      });
    return uses;
  }

  // Residency segments of a value in its bank: [start, end), start being
  // the cycle the register is allocated (write cycle), end the cycle the
  // slot is released (a STORE or a last-use read; frees precede allocs
  // within a cycle). end = kSpacingHorizon for values that persist.
  struct Residency { long start; long end; };

  void insert_spills() {
    for (int round = 0; round < 100000; ++round) {
      if (!spill_one()) return;
    }
    throw CompileError("spill pass did not converge");
  }

  std::set<uint32_t> demoted;  // leaf values living in the scratchpad at start

  long value_ready_cycle(uint32_t v) const {
    return prog.values[v].kind == Value::Kind::LeafInput ? 0 : value_birth[v];
  }
  long value_alloc_cycle(uint32_t v) const {
    return prog.values[v].kind == Value::Kind::LeafInput ? 0 : value_birth[v] - 1;
  }

  // One sweep over all banks; fixes the first overflow found. Returns true
  // if it changed anything.
  bool spill_one() {
    auto uses = collect_uses();
    // residency intervals per value
    std::vector<std::vector<Residency>> res(prog.values.size());
    std::vector<std::vector<long>> stores(prog.values.size()), loads(prog.values.size());
    for (const AuxOp& a : prog.aux) {
      if (a.kind == AuxOp::Kind::STORE) stores[a.value].push_back(a.cycle);
      if (a.kind == AuxOp::Kind::LOAD) loads[a.value].push_back(a.cycle);
    }
    for (uint32_t v = 0; v < prog.values.size(); ++v) {
      std::vector<std::pair<long, int>> evs;  // (cycle, +1 alloc / -1 store)
      if (!demoted.count(v)) evs.push_back({value_alloc_cycle(v), +1});
      for (long c : loads[v]) evs.push_back({c, +1});
      for (long c : stores[v]) evs.push_back({c, -1});
      std::sort(evs.begin(), evs.end());
      long open = -1;
      for (auto& [c, d] : evs) {
        if (d > 0) {
          if (open >= 0) {
            // re-LOAD without an intervening STORE: the previous segment
            // ended at its last read (the scratch copy stayed valid)
            long end = open;
            for (const auto& u : uses[v])
              if (u.cycle > open && u.cycle <= c) end = std::max(end, u.cycle);
            res[v].push_back({open, end > open ? end : c});
          }
          open = c;
        } else {
          res[v].push_back({open, c});
          open = -1;
        }
      }
      if (open >= 0) {
        // final segment: released at the last read (if any falls after the
        // segment starts), otherwise held forever
        long end = kSpacingHorizon;
        for (const auto& u : uses[v])
          if (u.cycle > open) end = u.cycle;
        if (end <= open) end = kSpacingHorizon;
        res[v].push_back({open, end});
      }
    }

    // Sweep each bank for the earliest overflow.
    struct Ev { long cycle; int delta; uint32_t vid; };
    for (int bank = 0; bank < cfg.banks; ++bank) {
      std::vector<Ev> evs;
      for (uint32_t v = 0; v < prog.values.size(); ++v) {
        if (value_bank[v] != bank) continue;
        for (const Residency& r : res[v]) {
          evs.push_back({r.start, +1, v});
          if (r.end < kSpacingHorizon) evs.push_back({r.end, -1, v});
        }
      }
      std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
        if (a.cycle != b.cycle) return a.cycle < b.cycle;
        return a.delta < b.delta;  // frees before allocs
      });
      int occ = 0;
      std::set<uint32_t> live;
      for (const Ev& e : evs) {
        if (e.delta < 0) { --occ; live.erase(e.vid); continue; }
        ++occ;
        live.insert(e.vid);
        if (occ <= cfg.regs_per_bank) continue;
        if (fix_overflow(bank, e.cycle, live, uses)) return true;
        throw CompileError("unable to relieve register pressure in bank " +
                           std::to_string(bank));
      }
    }
    return false;
  }

  bool fix_overflow(int bank, long t, const std::set<uint32_t>& live,
                    const std::vector<std::vector<UseEv>>& uses) {
    // victims ordered by furthest next use after t
    struct V { long next; uint32_t vid; };
    std::vector<V> victims;
    for (uint32_t v : live) {
      long next = kSpacingHorizon;
      for (const auto& u : uses[v])
        if (u.cycle > t) { next = u.cycle; break; }
      victims.push_back({next, v});
    }
    std::sort(victims.begin(), victims.end(), [](const V& a, const V& b) {
      return a.next != b.next ? a.next > b.next : a.vid < b.vid;
    });
    for (const V& cand : victims) {
      uint32_t v = cand.vid;
      long next = cand.next;
      long prev_use = -1;
      for (const auto& u : uses[v])
        if (u.cycle <= t) prev_use = std::max(prev_use, u.cycle);

      bool is_fresh_preload =
          prog.values[v].kind == Value::Kind::LeafInput && !demoted.count(v) &&
          [&] { for (const auto& u : uses[v]) if (u.cycle <= t) return false; return true; }();

      if (is_fresh_preload) {
        // never touched yet: keep it in the scratchpad instead of preloading
        if (next == kSpacingHorizon) continue;  // unused operand; shouldn't happen
        long l = place_load(v, bank, t, next);
        if (l < 0) continue;
        demoted.insert(v);
        return true;
      }
      // Already backed by a scratchpad copy: free the register at its most
      // recent read and LOAD the copy back before the next use (no STORE).
      if (scratch_of.count(v) && next != kSpacingHorizon &&
          next - 1 > std::max(t, prev_use)) {
        long seg_open = demoted.count(v) ? -1 : value_alloc_cycle(v);
        for (const AuxOp& a : prog.aux)
          if (a.value == v && a.kind == AuxOp::Kind::LOAD && a.cycle <= t)
            seg_open = std::max(seg_open, a.cycle);
        if (prev_use >= seg_open && prev_use >= 0) {
          long l = place_load(v, bank, std::max(t, prev_use), next);
          if (l >= 0) {
            ++prog.spill_count;
            return true;
          }
        }
      }
      // STORE after its last use up to t, LOAD before the next one
      if (next != kSpacingHorizon && next - 1 <= t) continue;  // no room to help
      long s = -1;
      for (long c = std::max(value_ready_cycle(v), prev_use + 1); c <= t; ++c) {
        if (ports.read_free(c, bank) && ports.aux_free(c)) { s = c; break; }
      }
      if (s < 0) continue;
      long l = -1;
      if (next != kSpacingHorizon) {
        l = place_load(v, bank, std::max(t, s), next);
        if (l < 0) continue;
      }
      AuxOp st;
      st.kind = AuxOp::Kind::STORE;
      st.cycle = s;
      st.src_bank = bank;
      st.free_src = true;
      st.scratch_addr = scratch_home(v);
      st.value = v;
      prog.aux.push_back(st);
      ports.reads[s].insert(bank);
      ++ports.aux_count[s];
      ++prog.spill_count;
      sort_aux();
      return true;
    }
    return false;
  }

  std::map<uint32_t, int> scratch_of;
  int scratch_home(uint32_t v) {
    auto it = scratch_of.find(v);
    if (it != scratch_of.end()) return it->second;
    int a = scratch_next++;
    scratch_of[v] = a;
    return a;
  }

  // LOAD of v into its bank at the latest feasible cycle in (after, next_use).
  long place_load(uint32_t v, int bank, long after, long next_use) {
    for (long c = next_use - 1; c > after; --c) {
      if (!ports.write_free(c, bank) || !ports.aux_free(c)) continue;
      AuxOp ld;
      ld.kind = AuxOp::Kind::LOAD;
      ld.cycle = c;
      ld.dst_bank = bank;
      ld.scratch_addr = scratch_home(v);
      ld.value = v;
      prog.aux.push_back(ld);
      ports.writes[c].insert(bank);
      ++ports.aux_count[c];
      sort_aux();
      return c;
    }
    return -1;
  }

  void sort_aux() {
    std::sort(prog.aux.begin(), prog.aux.end(), [](const AuxOp& a, const AuxOp& b) {
      if (a.cycle != b.cycle) return a.cycle < b.cycle;
      if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind);
      int ab = a.kind == AuxOp::Kind::STORE ? a.src_bank : a.dst_bank;
      int bb = b.kind == AuxOp::Kind::STORE ? b.src_bank : b.dst_bank;
      if (ab != bb) return ab < bb;
      return a.value < b.value;
    });
  }

  // ---- free-on-last-use flags ----

  void mark_frees() {
    auto uses = collect_uses();
    std::vector<std::vector<long>> loads(prog.values.size());
    for (const AuxOp& a : prog.aux)
      if (a.kind == AuxOp::Kind::LOAD) loads[a.value].push_back(a.cycle);
    for (uint32_t v = 0; v < prog.values.size(); ++v) {
      if (uses[v].empty()) continue;
      // A read ends a residency segment if it is the final use overall, or
      // the last use before a re-LOAD of the same value.
      std::set<size_t> enders = {uses[v].size() - 1};
      for (long lc : loads[v]) {
        size_t best = SIZE_MAX;
        for (size_t i = 0; i < uses[v].size(); ++i)
          if (uses[v][i].cycle < lc) best = i;
        if (best != SIZE_MAX) enders.insert(best);
      }
      for (size_t ei : enders) {
        const UseEv& last = uses[v][ei];
        if (last.kind == 1) {
          AuxOp& a = prog.aux[last.index];
          if (a.kind == AuxOp::Kind::COPY) a.free_src = true;
          // STORE already frees
          continue;
        }
        TreeInstr& ins = prog.instrs[last.index];
        for (LeafInput& li : ins.leaf_inputs)
          if (li.kind == LeafInput::Kind::Reg && li.value == v) {
            li.free_after_read = true;
            break;
          }
      }
    }
  }

  // ---- address replay ----

  void replay_addresses() {
    std::vector<std::vector<uint32_t>> slots(
        static_cast<size_t>(cfg.banks),
        std::vector<uint32_t>(static_cast<size_t>(cfg.regs_per_bank), UINT32_MAX));
    std::unordered_map<uint32_t, std::pair<int, int>> loc;  // value -> (bank, addr)

    auto alloc = [&](int bank, uint32_t vid) {
      auto& col = slots[static_cast<size_t>(bank)];
      for (int a = 0; a < cfg.regs_per_bank; ++a)
        if (col[static_cast<size_t>(a)] == UINT32_MAX) {
          col[static_cast<size_t>(a)] = vid;
          loc[vid] = {bank, a};
          return a;
        }
      throw CompileError("register bank overflow during address replay");
    };
    auto release = [&](uint32_t vid) {
      auto it = loc.find(vid);
      if (it == loc.end()) return;
      slots[static_cast<size_t>(it->second.first)]
           [static_cast<size_t>(it->second.second)] = UINT32_MAX;
      loc.erase(it);
    };

    // preloads: leaf values not demoted, value-id order gives per-bank order
    for (uint32_t v = 0; v < prog.values.size(); ++v) {
      if (prog.values[v].kind != Value::Kind::LeafInput || demoted.count(v)) continue;
      Preload p;
      p.value = v;
      p.bank = value_bank[v];
      p.addr = alloc(p.bank, v);
      prog.preload.push_back(p);
    }

    std::map<long, std::vector<size_t>> instr_at, aux_at;
    for (size_t i = 0; i < prog.instrs.size(); ++i)
      instr_at[prog.instrs[i].issue_cycle].push_back(i);
    for (size_t i = 0; i < prog.aux.size(); ++i) aux_at[prog.aux[i].cycle].push_back(i);

    long last = prog.last_cycle();
    for (long t = 0; t <= last; ++t) {
      std::vector<uint32_t> to_free;
      // reads: tree operands
      auto ii = instr_at.find(t);
      if (ii != instr_at.end())
        for (size_t idx : ii->second) {
          TreeInstr& ins = prog.instrs[idx];
          std::set<uint32_t> seen;
          for (LeafInput& li : ins.leaf_inputs) {
            if (li.kind != LeafInput::Kind::Reg) continue;
            auto it = loc.find(li.value);
            if (it == loc.end())
              throw CompileError("operand not resident at read time");
            li.bank = it->second.first;
            li.addr = it->second.second;
            if (li.free_after_read && seen.insert(li.value).second)
              to_free.push_back(li.value);
          }
        }
      auto ai = aux_at.find(t);
      if (ai != aux_at.end())
        for (size_t idx : ai->second) {
          AuxOp& a = prog.aux[idx];
          if (a.kind == AuxOp::Kind::COPY || a.kind == AuxOp::Kind::STORE) {
            auto it = loc.find(a.value);
            if (it == loc.end()) throw CompileError("aux source not resident");
            a.src_bank = it->second.first;
            a.src_addr = it->second.second;
            if (a.free_src) to_free.push_back(a.value);
          }
        }
      for (uint32_t v : to_free) release(v);
      // allocs: tree writeback first, then aux in list order
      auto wi = instr_at.find(t - cfg.tree_depth);
      if (wi != instr_at.end())
        for (size_t idx : wi->second) {
          TreeInstr& ins = prog.instrs[idx];
          int a = alloc(ins.out_bank, ins.out_value);
          prog.predicted_writes.push_back(
              {t, ins.out_bank, a, prog.values[ins.out_value].dag_node, ins.out_value});
        }
      if (ai != aux_at.end())
        for (size_t idx : ai->second) {
          AuxOp& a = prog.aux[idx];
          if (a.kind == AuxOp::Kind::LOAD) {
            int ad = alloc(a.dst_bank, a.value);
            prog.predicted_writes.push_back(
                {t, a.dst_bank, ad, prog.values[a.value].dag_node, a.value});
          } else if (a.kind == AuxOp::Kind::COPY) {
            int ad = alloc(a.dst_bank, a.alias);
            prog.predicted_writes.push_back(
                {t, a.dst_bank, ad, prog.values[a.alias].dag_node, a.alias});
          }
        }
    }
  }
};

}  // namespace

MappedProgram compile(const Dag& dag, const MachineConfig& cfg) {
  cfg.check();
  // A dense schedule can leave the spill pass with no free port slots; retry
  // with sparser issue until the spill pass converges.
  for (long stride = 1;; stride *= 2) {
    Compiler c(dag, cfg, stride);
    try {
      c.run();
      return std::move(c.prog);
    } catch (const InfeasibleWidth&) {
      throw;
    } catch (const BlockTooWide&) {
      throw;
    } catch (const CompileError&) {
      if (stride >= 16) throw;
    }
  }
}

// ---------------------------------------------------------------------------
// program queries + serialization
// ---------------------------------------------------------------------------

long MappedProgram::last_cycle() const {
  long last = 0;
  for (const TreeInstr& i : instrs) last = std::max(last, i.issue_cycle + cfg.tree_depth);
  for (const AuxOp& a : aux) last = std::max(last, a.cycle);
  return last;
}

std::string MappedProgram::stats_json() const {
  json j;
  j["instructions"] = instrs.size();
  j["blocks"] = block_table.size();
  j["values"] = values.size();
  j["spill_count"] = spill_count;
  j["copy_count"] = copy_count;
  j["cross_block_edges"] = cross_block_edges;
  j["predicted_writes"] = predicted_writes.size();
  j["preloads"] = preload.size();
  j["aux_ops"] = aux.size();
  j["last_cycle"] = last_cycle();
  j["config"] = json::parse(cfg.to_json());
  return j.dump(2);
}

std::string MappedProgram::serialize() const {
  json j;
  j["config"] = json::parse(cfg.to_json());
  j["kernel"] = to_string(kernel);
  j["root_value"] = root_value;
  j["spill_count"] = spill_count;
  j["copy_count"] = copy_count;
  j["cross_block_edges"] = cross_block_edges;
  auto& vals = j["values"] = json::array();
  for (const Value& v : values) {
    json e;
    e["kind"] = v.kind == Value::Kind::LeafInput ? "leaf"
                : v.kind == Value::Kind::BlockOut ? "out" : "copy";
    e["dag_node"] = v.dag_node == kNoNode ? -1 : static_cast<long>(v.dag_node);
    e["block"] = v.block;
    e["source"] = v.source == UINT32_MAX ? -1 : static_cast<long>(v.source);
    vals.push_back(e);
  }
  auto& bt = j["blocks"] = json::array();
  for (const Block& b : block_table) {
    json e;
    e["ops"] = b.ops;
    e["depth"] = b.depth;
    e["pe"] = b.pe;
    e["deps"] = b.deps;
    bt.push_back(e);
  }
  auto& is = j["instrs"] = json::array();
  for (const TreeInstr& i : instrs) {
    json e;
    e["cycle"] = i.issue_cycle;
    e["pe"] = i.pe;
    e["block"] = i.block;
    std::vector<std::string> ops;
    for (TreeOp op : i.node_ops) ops.push_back(to_string(op));
    e["ops"] = ops;
    auto& li = e["leaf"] = json::array();
    for (const LeafInput& l : i.leaf_inputs) {
      json le;
      le["k"] = l.kind == LeafInput::Kind::None ? "n"
                : l.kind == LeafInput::Kind::Reg ? "r" : "i";
      le["bank"] = l.bank;
      le["addr"] = l.addr;
      le["free"] = l.free_after_read;
      le["imm"] = l.imm;
      le["value"] = l.value == UINT32_MAX ? -1 : static_cast<long>(l.value);
      li.push_back(le);
    }
    e["out_bank"] = i.out_bank;
    e["out_value"] = i.out_value;
    is.push_back(e);
  }
  auto& ax = j["aux"] = json::array();
  for (const AuxOp& a : aux) {
    json e;
    e["kind"] = a.kind == AuxOp::Kind::LOAD ? "LOAD"
                : a.kind == AuxOp::Kind::STORE ? "STORE" : "COPY";
    e["cycle"] = a.cycle;
    e["src_bank"] = a.src_bank;
    e["src_addr"] = a.src_addr;
    e["free_src"] = a.free_src;
    e["dst_bank"] = a.dst_bank;
    e["scratch"] = a.scratch_addr;
    e["value"] = a.value == UINT32_MAX ? -1 : static_cast<long>(a.value);
    e["alias"] = a.alias == UINT32_MAX ? -1 : static_cast<long>(a.alias);
    ax.push_back(e);
  }
  auto& pl = j["preload"] = json::array();
  for (const Preload& p : preload)
    pl.push_back({{"value", p.value}, {"bank", p.bank}, {"addr", p.addr}});
  auto& pw = j["predicted_writes"] = json::array();
  for (const PredictedWrite& w : predicted_writes)
    pw.push_back({{"cycle", w.cycle},
                  {"bank", w.bank},
                  {"addr", w.addr},
                  {"dag_node", w.dag_node == kNoNode ? -1 : static_cast<long>(w.dag_node)},
                  {"value", w.value}});
  return j.dump(2);
}

MappedProgram MappedProgram::deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw CompileError(std::string("bad program json: ") + e.what());
  }
  MappedProgram p;
  p.cfg = MachineConfig::from_json(j.at("config").dump());
  auto kk = kernel_kind_from_string(j.at("kernel").get<std::string>());
  if (!kk) throw CompileError("unknown kernel kind in program json");
  p.kernel = *kk;
  p.root_value = j.at("root_value").get<uint32_t>();
  p.spill_count = j.at("spill_count").get<int>();
  p.copy_count = j.at("copy_count").get<int>();
  p.cross_block_edges = j.at("cross_block_edges").get<size_t>();
  for (const auto& e : j.at("values")) {
    Value v;
    std::string k = e.at("kind").get<std::string>();
    v.kind = k == "leaf" ? Value::Kind::LeafInput
             : k == "out" ? Value::Kind::BlockOut : Value::Kind::CopyAlias;
    long dn = e.at("dag_node").get<long>();
    v.dag_node = dn < 0 ? kNoNode : static_cast<NodeId>(dn);
    v.block = e.at("block").get<uint32_t>();
    long src = e.at("source").get<long>();
    v.source = src < 0 ? UINT32_MAX : static_cast<uint32_t>(src);
    p.values.push_back(v);
  }
  for (const auto& e : j.at("blocks")) {
    Block b;
    b.ops = e.at("ops").get<std::vector<uint32_t>>();
    b.depth = e.at("depth").get<int>();
    b.pe = e.at("pe").get<int>();
    b.deps = e.at("deps").get<std::vector<uint32_t>>();
    p.block_table.push_back(std::move(b));
  }
  for (const auto& e : j.at("instrs")) {
    TreeInstr i;
    i.issue_cycle = e.at("cycle").get<long>();
    i.pe = e.at("pe").get<int>();
    i.block = e.at("block").get<uint32_t>();
    for (const auto& s : e.at("ops")) i.node_ops.push_back(tree_op_from_string(s.get<std::string>()));
    for (const auto& le : e.at("leaf")) {
      LeafInput l;
      std::string k = le.at("k").get<std::string>();
      l.kind = k == "n" ? LeafInput::Kind::None
               : k == "r" ? LeafInput::Kind::Reg : LeafInput::Kind::Imm;
      l.bank = le.at("bank").get<int>();
      l.addr = le.at("addr").get<int>();
      l.free_after_read = le.at("free").get<bool>();
      l.imm = le.at("imm").get<double>();
      long v = le.at("value").get<long>();
      l.value = v < 0 ? UINT32_MAX : static_cast<uint32_t>(v);
      i.leaf_inputs.push_back(l);
    }
    i.out_bank = e.at("out_bank").get<int>();
    i.out_value = e.at("out_value").get<uint32_t>();
    p.instrs.push_back(std::move(i));
  }
  for (const auto& e : j.at("aux")) {
    AuxOp a;
    std::string k = e.at("kind").get<std::string>();
    a.kind = k == "LOAD" ? AuxOp::Kind::LOAD
             : k == "STORE" ? AuxOp::Kind::STORE : AuxOp::Kind::COPY;
    a.cycle = e.at("cycle").get<long>();
    a.src_bank = e.at("src_bank").get<int>();
    a.src_addr = e.at("src_addr").get<int>();
    a.free_src = e.at("free_src").get<bool>();
    a.dst_bank = e.at("dst_bank").get<int>();
    a.scratch_addr = e.at("scratch").get<int>();
    long v = e.at("value").get<long>();
    a.value = v < 0 ? UINT32_MAX : static_cast<uint32_t>(v);
    long al = e.at("alias").get<long>();
    a.alias = al < 0 ? UINT32_MAX : static_cast<uint32_t>(al);
    p.aux.push_back(a);
  }
  for (const auto& e : j.at("preload"))
    p.preload.push_back({e.at("value").get<uint32_t>(), e.at("bank").get<int>(),
                         e.at("addr").get<int>()});
  for (const auto& e : j.at("predicted_writes")) {
    long dn = e.at("dag_node").get<long>();
    p.predicted_writes.push_back({e.at("cycle").get<long>(), e.at("bank").get<int>(),
                                  e.at("addr").get<int>(),
                                  dn < 0 ? kNoNode : static_cast<NodeId>(dn),
                                  e.at("value").get<uint32_t>()});
  }
  return p;
}

}  // namespace reason
