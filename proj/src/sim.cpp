#include "reason/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace reason {

using nlohmann::json;

std::string CycleReport::to_json() const {
  json j;
  j["total_cycles"] = total_cycles;
  j["busy"] = busy;
  j["utilization"] = utilization;
  j["stalls"] = stalls;
  j["fifo_histogram"] = fifo_histogram;
  j["raw_violations"] = raw_violations;
  j["bank_conflicts"] = bank_conflicts;
  j["tree_utilization_steady"] = tree_utilization_steady;
  if (!config_json.empty()) j["config"] = json::parse(config_json);
  auto& w = j["writes"] = json::array();
  for (const PredictedWrite& pw : actual_writes)
    w.push_back({{"cycle", pw.cycle},
                 {"bank", pw.bank},
                 {"addr", pw.addr},
                 {"value", pw.value}});
  return j.dump(2);
}

std::unordered_map<NodeId, double> leaf_inputs_for(const Dag& dag,
                                                   const Assignment& assignment,
                                                   bool allow_marginalize) {
  std::unordered_map<NodeId, double> out;
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    const DagNode& nd = dag.nodes[id];
    if (!nd.is_leaf() || nd.is_const()) continue;
    auto it = assignment.find(nd.var);
    if (it == assignment.end()) {
      if (!allow_marginalize)
        throw UnassignedVariable("variable " + std::to_string(nd.var) + " unassigned");
      out[id] = 1.0;
      continue;
    }
    if (nd.kind == NodeKind::LeafDist) {
      int v = it->second;
      if (v < 0 || static_cast<size_t>(v) >= nd.table.size())
        throw DagError("assignment value out of leaf domain");
      out[id] = nd.table[static_cast<size_t>(v)];
    } else {
      out[id] = ((it->second != 0) == nd.positive) ? 1.0 : 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// probabilistic / pipelined tree execution
// ---------------------------------------------------------------------------

namespace {

struct BankFile {
  int banks, regs;
  std::vector<std::vector<uint32_t>> owner;  // bank x reg -> value id
  std::vector<std::vector<double>> word;
  std::unordered_map<uint32_t, std::pair<int, int>> loc;

  BankFile(int b, int r)
      : banks(b), regs(r),
        owner(static_cast<size_t>(b), std::vector<uint32_t>(static_cast<size_t>(r), UINT32_MAX)),
        word(static_cast<size_t>(b), std::vector<double>(static_cast<size_t>(r), 0.0)) {}

  int alloc(int bank, uint32_t vid, double v) {
    auto& col = owner[static_cast<size_t>(bank)];
    for (int a = 0; a < regs; ++a)
      if (col[static_cast<size_t>(a)] == UINT32_MAX) {
        col[static_cast<size_t>(a)] = vid;
        word[static_cast<size_t>(bank)][static_cast<size_t>(a)] = v;
        loc[vid] = {bank, a};
        return a;
      }
    throw ResourceExhausted("register bank overflow at runtime");
  }
  void release(uint32_t vid) {
    auto it = loc.find(vid);
    if (it == loc.end()) return;
    owner[static_cast<size_t>(it->second.first)][static_cast<size_t>(it->second.second)] =
        UINT32_MAX;
    loc.erase(it);
  }
};

// per-level counts of active (non-NOP) tree positions for one instruction
std::vector<int> level_activity(const TreeInstr& ins, const MachineConfig& cfg) {
  std::vector<int> act(static_cast<size_t>(cfg.tree_depth) + 1, 0);
  size_t idx = 0;
  for (int level = 0; level <= cfg.tree_depth; ++level) {
    size_t width = size_t{1} << (cfg.tree_depth - level);
    for (size_t s = 0; s < width; ++s, ++idx)
      if (ins.node_ops[idx] != TreeOp::NOP) ++act[static_cast<size_t>(level)];
  }
  return act;
}

double combine(TreeOp op, bool h0, double v0, bool h1, double v1) {
  switch (op) {
    case TreeOp::ADD: return (h0 ? v0 : 0.0) + (h1 ? v1 : 0.0);
    case TreeOp::MUL: return (h0 ? v0 : 1.0) * (h1 ? v1 : 1.0);
    case TreeOp::MAX:
    case TreeOp::CMP:
      if (h0 && h1) return std::max(v0, v1);
      return h0 ? v0 : v1;
    case TreeOp::MIN:
      if (h0 && h1) return std::min(v0, v1);
      return h0 ? v0 : v1;
    case TreeOp::PASS: return h0 ? v0 : v1;
    case TreeOp::NOP: return 0.0;
  }
  return 0.0;
}

// evaluate one instruction's tree given leaf slot values
double eval_tree(const TreeInstr& ins, const MachineConfig& cfg,
                 const std::vector<double>& leaf_vals,
                 const std::vector<char>& leaf_has) {
  size_t nleaf = static_cast<size_t>(cfg.leaves_per_pe());
  std::vector<double> cur(leaf_vals);
  std::vector<char> has(leaf_has);
  size_t off = nleaf;
  for (int level = 1; level <= cfg.tree_depth; ++level) {
    size_t width = size_t{1} << (cfg.tree_depth - level);
    std::vector<double> nxt(width, 0.0);
    std::vector<char> nh(width, 0);
    for (size_t s = 0; s < width; ++s) {
      TreeOp op = ins.node_ops[off + s];
      if (op == TreeOp::NOP) continue;
      bool h0 = has[2 * s], h1 = has[2 * s + 1];
      if (!h0 && !h1) continue;
      nxt[s] = combine(op, h0, cur[2 * s], h1, cur[2 * s + 1]);
      nh[s] = 1;
    }
    cur = std::move(nxt);
    has = std::move(nh);
    off += width;
  }
  if (!has[0]) throw SimError("instruction produced no root value");
  return cur[0];
}

}  // namespace

std::pair<EvalResult, CycleReport> run_probabilistic(
    const MappedProgram& program,
    const std::unordered_map<NodeId, double>& leaf_inputs,
    const SimOptions& opts) {
  const MachineConfig& cfg = program.cfg;
  CycleReport rep;
  rep.config_json = cfg.to_json();
  std::ostringstream trace;

  std::vector<double> data(program.values.size(), 0.0);
  std::vector<char> has(program.values.size(), 0);
  std::vector<long> write_cycle(program.values.size(), -1);
  for (uint32_t v = 0; v < program.values.size(); ++v) {
    if (program.values[v].kind != Value::Kind::LeafInput) continue;
    auto it = leaf_inputs.find(program.values[v].dag_node);
    if (it == leaf_inputs.end())
      throw SimError("missing input for leaf node " +
                     std::to_string(program.values[v].dag_node));
    data[v] = it->second;
    has[v] = 1;
  }

  BankFile rf(cfg.banks, cfg.regs_per_bank);
  for (const Preload& p : program.preload) {
    int a = rf.alloc(p.bank, p.value, data[p.value]);
    if (a != p.addr)
      throw HazardViolation("preload address disagrees with allocation policy");
  }

  std::map<long, size_t> instr_at;
  std::map<long, std::vector<size_t>> aux_at;
  for (size_t i = 0; i < program.instrs.size(); ++i) {
    if (instr_at.count(program.instrs[i].issue_cycle))
      throw SimError("two instructions share an issue cycle");
    instr_at[program.instrs[i].issue_cycle] = i;
  }
  for (size_t i = 0; i < program.aux.size(); ++i)
    aux_at[program.aux[i].cycle].push_back(i);

  std::map<long, std::pair<size_t, double>> pending;  // writeback cycle -> (instr, value)
  long last = program.last_cycle();
  long max_issue = -1;
  for (const TreeInstr& i : program.instrs) max_issue = std::max(max_issue, i.issue_cycle);

  std::vector<std::vector<int>> activity;
  activity.reserve(program.instrs.size());
  for (const TreeInstr& i : program.instrs) activity.push_back(level_activity(i, cfg));

  long node_busy_steady = 0, steady_cycles = 0;
  std::vector<long> level_busy(static_cast<size_t>(cfg.tree_depth) + 1, 0);
  long aux_busy = 0, idle_issue = 0;

  for (long t = 0; t <= last; ++t) {
    // ---- per-cycle busy bookkeeping ----
    long nodes_now = 0;
    for (int k = 0; k <= cfg.tree_depth; ++k) {
      auto it = instr_at.find(t - k);
      if (it == instr_at.end()) continue;
      int a = activity[it->second][static_cast<size_t>(k)];
      if (a > 0) ++level_busy[static_cast<size_t>(k)];
      nodes_now += a;
    }
    if (t >= cfg.tree_depth && t <= max_issue) {
      node_busy_steady += nodes_now;
      ++steady_cycles;
    }
    if (t <= max_issue && !instr_at.count(t)) ++idle_issue;

    std::vector<uint32_t> to_free;
    std::map<int, std::set<int>> bank_reads;  // bank -> addresses read this cycle

    auto read_value = [&](uint32_t vid, int want_bank, int want_addr) {
      auto it = rf.loc.find(vid);
      if (it == rf.loc.end())
        throw HazardViolation("value " + std::to_string(vid) +
                              " not resident at cycle " + std::to_string(t));
      auto [bank, addr] = it->second;
      if (bank != want_bank || addr != want_addr)
        throw HazardViolation("operand address mismatch at cycle " + std::to_string(t));
      if (write_cycle[vid] >= 0 && t <= write_cycle[vid]) ++rep.raw_violations;
      bank_reads[bank].insert(addr);
      return rf.word[static_cast<size_t>(bank)][static_cast<size_t>(addr)];
    };

    // ---- reads ----
    auto ii = instr_at.find(t);
    if (ii != instr_at.end()) {
      const TreeInstr& ins = program.instrs[ii->second];
      size_t nleaf = static_cast<size_t>(cfg.leaves_per_pe());
      std::vector<double> lv(nleaf, 0.0);
      std::vector<char> lh(nleaf, 0);
      std::set<uint32_t> freed;
      for (size_t s = 0; s < nleaf; ++s) {
        const LeafInput& li = ins.leaf_inputs[s];
        if (li.kind == LeafInput::Kind::None) continue;
        lh[s] = 1;
        if (li.kind == LeafInput::Kind::Imm) {
          lv[s] = li.imm;
        } else {
          lv[s] = read_value(li.value, li.bank, li.addr);
          if (li.free_after_read && freed.insert(li.value).second)
            to_free.push_back(li.value);
        }
      }
      double result = eval_tree(ins, cfg, lv, lh);
      pending[t + cfg.tree_depth] = {ii->second, result};
      if (opts.trace)
        trace << "cycle=" << t << " unit=tree ev=issue block=" << ins.block
              << " pe=" << ins.pe << "\n";
    }
    auto ai = aux_at.find(t);
    if (ai != aux_at.end()) {
      aux_busy += 1;
      for (size_t idx : ai->second) {
        const AuxOp& a = program.aux[idx];
        if (a.kind == AuxOp::Kind::COPY || a.kind == AuxOp::Kind::STORE) {
          double v = read_value(a.value, a.src_bank, a.src_addr);
          if (a.kind == AuxOp::Kind::COPY) {
            data[a.alias] = v;
            has[a.alias] = 1;
          }
          if (a.free_src) to_free.push_back(a.value);
        }
      }
    }

    // bank-port audit: one read per bank per cycle (fan-out of one word is fine)
    for (auto& [bank, addrs] : bank_reads)
      if (addrs.size() > 1) {
        ++rep.bank_conflicts;
        ++rep.stalls["bank_conflict"];
      }

    for (uint32_t v : to_free) rf.release(v);

    // ---- writes: tree writeback first, then aux in program order ----
    auto pi = pending.find(t);
    if (pi != pending.end()) {
      const TreeInstr& ins = program.instrs[pi->second.first];
      double v = pi->second.second;
      data[ins.out_value] = v;
      has[ins.out_value] = 1;
      write_cycle[ins.out_value] = t;
      int addr = rf.alloc(ins.out_bank, ins.out_value, v);
      rep.actual_writes.push_back({t, ins.out_bank, addr,
                                   program.values[ins.out_value].dag_node,
                                   ins.out_value});
      if (opts.trace)
        trace << "cycle=" << t << " unit=bank ev=write bank=" << ins.out_bank
              << " addr=" << addr << " value=" << ins.out_value << "\n";
      pending.erase(pi);
    }
    if (ai != aux_at.end()) {
      for (size_t idx : ai->second) {
        const AuxOp& a = program.aux[idx];
        if (a.kind == AuxOp::Kind::LOAD) {
          if (!has[a.value]) throw SimError("load of a value never produced");
          write_cycle[a.value] = t;
          int addr = rf.alloc(a.dst_bank, a.value, data[a.value]);
          rep.actual_writes.push_back({t, a.dst_bank, addr,
                                       program.values[a.value].dag_node, a.value});
          if (opts.trace)
            trace << "cycle=" << t << " unit=aux ev=load bank=" << a.dst_bank
                  << " addr=" << addr << " value=" << a.value << "\n";
        } else if (a.kind == AuxOp::Kind::COPY) {
          write_cycle[a.alias] = t;
          int addr = rf.alloc(a.dst_bank, a.alias, data[a.alias]);
          rep.actual_writes.push_back({t, a.dst_bank, addr,
                                       program.values[a.alias].dag_node, a.alias});
          if (opts.trace)
            trace << "cycle=" << t << " unit=aux ev=copy bank=" << a.dst_bank
                  << " addr=" << addr << " value=" << a.alias << "\n";
        } else if (opts.trace) {
          trace << "cycle=" << t << " unit=aux ev=store scratch=" << a.scratch_addr
                << " value=" << a.value << "\n";
        }
      }
    }
  }

  if (rep.actual_writes != program.predicted_writes)
    throw HazardViolation("write-address contract violated");

  rep.total_cycles = last + 1;
  for (int k = 0; k <= cfg.tree_depth; ++k) {
    std::string name = "level" + std::to_string(k);
    rep.busy[name] = level_busy[static_cast<size_t>(k)];
    rep.utilization[name] =
        rep.total_cycles ? static_cast<double>(level_busy[static_cast<size_t>(k)]) /
                               static_cast<double>(rep.total_cycles)
                         : 0.0;
  }
  rep.busy["aux"] = aux_busy;
  rep.utilization["aux"] =
      rep.total_cycles ? static_cast<double>(aux_busy) / static_cast<double>(rep.total_cycles)
                       : 0.0;
  rep.stalls["raw"] = idle_issue;
  rep.stalls.emplace("bank_conflict", 0);
  rep.stalls.emplace("fifo_full", 0);
  rep.stalls.emplace("sram_miss", 0);
  long denom = steady_cycles * cfg.tree_nodes_per_pe();
  rep.tree_utilization_steady =
      denom > 0 ? static_cast<double>(node_busy_steady) / static_cast<double>(denom) : 1.0;
  rep.trace = trace.str();

  EvalResult out;
  if (!has[program.root_value]) throw SimError("root value never produced");
  out.root_values.push_back(data[program.root_value]);
  NodeId max_node = 0;
  for (const Value& v : program.values)
    if (v.dag_node != kNoNode) max_node = std::max(max_node, v.dag_node);
  out.node_values.assign(static_cast<size_t>(max_node) + 1,
                         std::numeric_limits<double>::quiet_NaN());
  for (uint32_t v = 0; v < program.values.size(); ++v)
    if (has[v] && program.values[v].dag_node != kNoNode)
      out.node_values[program.values[v].dag_node] = data[v];
  return {std::move(out), std::move(rep)};
}

// ---------------------------------------------------------------------------
// SpMSpM mode
// ---------------------------------------------------------------------------

SparseMatrix SparseMatrix::identity(int n) {
  SparseMatrix m;
  m.rows = m.cols = n;
  for (int i = 0; i < n; ++i) m.entries.push_back({i, i, 1.0});
  return m;
}

SparseMatrix SparseMatrix::from_dense(const std::vector<std::vector<double>>& d) {
  SparseMatrix m;
  m.rows = static_cast<int>(d.size());
  m.cols = d.empty() ? 0 : static_cast<int>(d[0].size());
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      if (d[static_cast<size_t>(i)][static_cast<size_t>(j)] != 0.0)
        m.entries.push_back({i, j, d[static_cast<size_t>(i)][static_cast<size_t>(j)]});
  return m;
}

std::vector<std::vector<double>> SparseMatrix::to_dense() const {
  std::vector<std::vector<double>> d(static_cast<size_t>(rows),
                                     std::vector<double>(static_cast<size_t>(cols), 0.0));
  for (const Entry& e : entries)
    d[static_cast<size_t>(e.row)][static_cast<size_t>(e.col)] += e.value;
  return d;
}

std::pair<SparseMatrix, CycleReport> run_spmspm(const SparseMatrix& a,
                                                const SparseMatrix& b,
                                                const MachineConfig& cfg) {
  if (a.cols != b.rows) throw DimensionMismatch("inner dimensions disagree");
  cfg.check();
  // rows of A and of B indexed for pair enumeration
  std::vector<std::vector<std::pair<int, double>>> arow(static_cast<size_t>(a.rows));
  for (const auto& e : a.entries) arow[static_cast<size_t>(e.row)].push_back({e.col, e.value});
  std::vector<std::vector<std::pair<int, double>>> brow(static_cast<size_t>(b.rows));
  for (const auto& e : b.entries) brow[static_cast<size_t>(e.row)].push_back({e.col, e.value});
  for (auto& r : arow) std::sort(r.begin(), r.end());
  for (auto& r : brow) std::sort(r.begin(), r.end());

  std::map<std::pair<int, int>, long> pair_count;
  std::map<std::pair<int, int>, double> acc;
  for (int i = 0; i < a.rows; ++i)
    for (const auto& [k, av] : arow[static_cast<size_t>(i)])
      for (const auto& [j, bv] : brow[static_cast<size_t>(k)]) {
        acc[{i, j}] += av * bv;
        ++pair_count[{i, j}];
      }

  SparseMatrix c;
  c.rows = a.rows;
  c.cols = b.cols;
  for (const auto& [ij, v] : acc) c.entries.push_back({ij.first, ij.second, v});

  // In SpMSpM mode each leaf multiplies one nonzero pair per issue; an
  // output element needing more than 2^D pairs takes multiple issues.
  long issues = 0;
  long pair_total = 0;
  for (const auto& [ij, n] : pair_count) {
    issues += (n + cfg.leaves_per_pe() - 1) / cfg.leaves_per_pe();
    pair_total += n;
  }
  CycleReport rep;
  rep.config_json = cfg.to_json();
  rep.total_cycles = issues * cfg.pipeline_interval;
  rep.busy["leaf_multipliers"] = pair_total;
  rep.busy["issues"] = issues;
  long cap = issues * cfg.leaves_per_pe();
  rep.utilization["leaf_multipliers"] =
      cap > 0 ? static_cast<double>(pair_total) / static_cast<double>(cap) : 0.0;
  rep.tree_utilization_steady = rep.utilization["leaf_multipliers"];
  return {std::move(c), std::move(rep)};
}

// ---------------------------------------------------------------------------
// analytical latency models
// ---------------------------------------------------------------------------

long interconnect_latency(Topology t, long n) {
  if (n < 1) throw SimError("interconnect latency needs n >= 1");
  switch (t) {
    case Topology::Tree: {
      long lat = 0;
      while ((1L << lat) < n) ++lat;  // ceil(log2 n)
      return lat;
    }
    case Topology::Mesh: {
      long side = 1;
      while (side * side < n) ++side;  // ceil(sqrt(n))
      return 2 * (side - 1);
    }
    case Topology::Bus:
      return n - 1;
  }
  return 0;
}

PipelineTimeline pipeline_two_level(const std::vector<double>& neural_latencies,
                                    const std::vector<double>& symbolic_latencies) {
  if (neural_latencies.size() != symbolic_latencies.size())
    throw LengthMismatch("latency lists differ in length");
  PipelineTimeline tl;
  double neural_clock = 0, sym_free = 0;
  for (size_t i = 0; i < neural_latencies.size(); ++i) {
    PipelineTimeline::Batch b;
    b.start_neural = neural_clock;
    b.end_neural = b.start_neural + neural_latencies[i];
    neural_clock = b.end_neural;
    b.start_sym = std::max(b.end_neural, sym_free);
    b.end_sym = b.start_sym + symbolic_latencies[i];
    sym_free = b.end_sym;
    tl.batches.push_back(b);
  }
  tl.makespan = tl.batches.empty() ? 0.0 : tl.batches.back().end_sym;
  return tl;
}

}  // namespace reason
