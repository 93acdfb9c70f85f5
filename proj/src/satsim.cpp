#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "reason/sim.hpp"

namespace reason {

namespace {

constexpr int kUnassigned = -1;

struct Clause {
  std::vector<Lit> lits;
  bool learned = false;
  bool deleted = false;
  long base_addr = 0;  // word address of the clause record
  long words() const { return static_cast<long>(lits.size()) + 2; }
};

struct SatMachine {
  const CnfFormula& cnf;
  const MachineConfig& cfg;
  DecisionHeuristic heuristic;
  bool tracing;

  std::vector<Clause> clauses;
  std::vector<std::vector<int>> watches;  // lit_index -> clause ids watching that literal
  long orig_words = 0;
  long learned_words = 0;

  std::vector<int> val;        // var -> 0/1/kUnassigned
  std::vector<int> level_of;
  std::vector<int> reason_of;  // clause id or -1
  std::vector<Lit> trail;
  std::vector<size_t> level_start;  // trail index where each level begins
  int level = 0;

  // timing
  long T = 0;
  long busy_broadcast = 0, busy_leaf = 0, busy_scalar = 0, busy_dma = 0;
  long stall_penalty = 0;
  CycleReport rep;
  std::vector<std::pair<long, std::string>> events;

  // BCP FIFO: literals assigned but not yet propagated
  struct Pending { Lit lit; long ready; long enq; };
  std::deque<Pending> fifo;
  long overlap_pop_at = -1;  // a pop pre-announced during a DMA window

  // heuristic state
  std::vector<long> occ;          // static occurrence counts
  std::vector<int> static_order;  // vars by occurrence desc
  std::vector<double> activity;
  double act_inc = 1.0;

  SatResult res;

  SatMachine(const CnfFormula& f, const MachineConfig& c, DecisionHeuristic h, bool tr)
      : cnf(f), cfg(c), heuristic(h), tracing(tr) {
    rep.config_json = cfg.to_json();
    rep.fifo_histogram.assign(static_cast<size_t>(cfg.fifo_depth) + 2, 0);
    val.assign(static_cast<size_t>(cnf.num_vars) + 1, kUnassigned);
    level_of.assign(static_cast<size_t>(cnf.num_vars) + 1, 0);
    reason_of.assign(static_cast<size_t>(cnf.num_vars) + 1, -1);
    watches.assign(2 * static_cast<size_t>(cnf.num_vars), {});
    occ.assign(static_cast<size_t>(cnf.num_vars) + 1, 0);
    activity.assign(static_cast<size_t>(cnf.num_vars) + 1, 0.0);
    level_start.push_back(0);

    long addr = 0;
    for (const auto& c0 : cnf.clauses) {
      Clause cl;
      cl.lits = c0;
      cl.base_addr = addr;
      addr += cl.words();
      clauses.push_back(std::move(cl));
      for (Lit l : c0) ++occ[static_cast<size_t>(std::abs(l))];
    }
    orig_words = addr;
    for (int v = 1; v <= cnf.num_vars; ++v) static_order.push_back(v);
    std::stable_sort(static_order.begin(), static_order.end(), [&](int a, int b) {
      return occ[static_cast<size_t>(a)] != occ[static_cast<size_t>(b)]
                 ? occ[static_cast<size_t>(a)] > occ[static_cast<size_t>(b)]
                 : a < b;
    });
    for (size_t ci = 0; ci < clauses.size(); ++ci) attach(static_cast<int>(ci));
  }

  void attach(int ci) {
    auto& ls = clauses[static_cast<size_t>(ci)].lits;
    if (ls.empty()) return;
    watches[lit_index(ls[0])].push_back(ci);
    watches[lit_index(ls.size() > 1 ? ls[1] : ls[0])].push_back(ci);
  }

  int value_of(Lit l) const {
    int v = val[static_cast<size_t>(std::abs(l))];
    if (v == kUnassigned) return kUnassigned;
    return l > 0 ? v : 1 - v;
  }

  void emit(long cycle, const char* unit, const char* ev, const std::string& kv = "") {
    if (!tracing) return;
    std::string line = "cycle=" + std::to_string(cycle) + " unit=" + unit + " ev=" + ev;
    if (!kv.empty()) line += ' ' + kv;
    events.emplace_back(cycle, std::move(line));
  }

  std::string trace_text() {
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (auto& [c, line] : events) {
      out += line;
      out += '\n';
    }
    return out;
  }

  int leaf_of(Lit l) const {
    return static_cast<int>(lit_index(l) % static_cast<size_t>(cfg.leaves_per_pe()));
  }

  bool resident(const Clause& c) const {
    return c.base_addr + c.words() <= cfg.sram_words;
  }

  void assign(Lit l, int reason) {
    val[static_cast<size_t>(std::abs(l))] = l > 0 ? 1 : 0;
    level_of[static_cast<size_t>(std::abs(l))] = level;
    reason_of[static_cast<size_t>(std::abs(l))] = reason;
    trail.push_back(l);
  }

  // `ready` = earliest cycle the root can rebroadcast this literal
  void enqueue(Lit l, long cycle, long ready) {
    if (fifo.size() >= static_cast<size_t>(cfg.fifo_depth)) {
      ++rep.stalls["fifo_full"];
      ++stall_penalty;  // backpressure on the producing walk
    }
    fifo.push_back({l, ready, cycle});
    size_t occ_now = std::min(fifo.size(), rep.fifo_histogram.size() - 1);
    ++rep.fifo_histogram[occ_now];
    emit(cycle, "fifo", "enqueue",
         "lit=" + std::to_string(l) + " occ=" + std::to_string(fifo.size()));
  }

  // ---- propagation of one broadcast literal; returns conflict clause or -1
  int walk(Lit assigned, long arrive) {
    Lit fl = -assigned;  // literal that just became false
    size_t wi = lit_index(fl);
    long t = arrive;
    emit(t, "leaf", "head", "lit=" + std::to_string(fl) +
                                " leaf=" + std::to_string(leaf_of(fl)));
    t += 1;  // head-table lookup
    ++busy_leaf;

    std::vector<int> old;
    old.swap(watches[wi]);
    std::vector<int>& keep = watches[wi];
    std::vector<int> missed;
    int conflict = -1;
    long dma_started = -1;

    auto visit = [&](int ci, long& tw) -> bool {
      // returns false on conflict
      Clause& c = clauses[static_cast<size_t>(ci)];
      if (c.deleted) return true;  // lazily dropped watcher
      ++busy_leaf;
      emit(tw, "leaf", "visit", "clause=" + std::to_string(ci));
      auto& ls = c.lits;
      if (ls.size() > 1 && ls[0] == fl) std::swap(ls[0], ls[1]);
      if (value_of(ls[0]) == 1) {
        keep.push_back(ci);
        return true;
      }
      for (size_t k = 2; k < ls.size(); ++k) {
        if (value_of(ls[k]) != 0) {
          std::swap(ls[1], ls[k]);
          watches[lit_index(ls[1])].push_back(ci);
          return true;  // watch moved elsewhere
        }
      }
      keep.push_back(ci);
      if (value_of(ls[0]) == kUnassigned) {
        assign(ls[0], ci);
        ++res.propagations;
        long reduced =
            tw + static_cast<long>(cfg.tree_depth) * cfg.broadcast_latency_per_level;
        emit(tw, "leaf", "imply",
             "lit=" + std::to_string(ls[0]) + " clause=" + std::to_string(ci));
        emit(reduced, "tree", "reduce", "lit=" + std::to_string(ls[0]));
        busy_broadcast += cfg.tree_depth;
        enqueue(ls[0], tw, reduced);
        return true;
      }
      conflict = ci;
      emit(tw, "controller", "conflict", "clause=" + std::to_string(ci));
      return false;
    };

    for (size_t i = 0; i < old.size(); ++i) {
      int ci = old[i];
      if (clauses[static_cast<size_t>(ci)].deleted) continue;
      if (!resident(clauses[static_cast<size_t>(ci)])) {
        // remote clause: start the fetch, keep walking local ones
        ++rep.stalls["sram_miss"];
        emit(t, "dma", "fetch_start", "clause=" + std::to_string(ci));
        if (dma_started < 0) {
          dma_started = t;
          // a queued implication can be serviced under the fetch
          if (!fifo.empty() && overlap_pop_at < 0) overlap_pop_at = t + 1;
        }
        missed.push_back(ci);
        t += 1;  // issue slot for the fetch request
        continue;
      }
      t += cfg.sram_hit_latency;
      if (!visit(ci, t)) {
        // conflict: retain the unvisited tail, halt any in-flight fetch
        for (size_t k = i + 1; k < old.size(); ++k) keep.push_back(old[k]);
        for (int m : missed) keep.push_back(m);
        if (dma_started >= 0) {
          emit(t, "dma", "halt", "");
          overlap_pop_at = -1;
        }
        T = std::max(T, t) + stall_penalty;
        stall_penalty = 0;
        return conflict;
      }
    }
    for (int ci : missed) {
      long done = std::max(t, dma_started + cfg.dma_latency);
      busy_dma += cfg.dma_latency;
      emit(done, "dma", "fetch_done", "clause=" + std::to_string(ci));
      t = done;
      dma_started = t;  // next remote fetch chains after this one
      if (!visit(ci, t)) {
        T = std::max(T, t) + stall_penalty;
        stall_penalty = 0;
        return conflict;
      }
    }
    T = std::max(T, t) + stall_penalty;
    stall_penalty = 0;
    return -1;
  }

  // ---- first-UIP learning; returns (learned clause, backjump level, steps)
  struct Learned {
    std::vector<Lit> lits;
    int backjump = 0;
    long steps = 0;
  };

  Learned analyze(int conflict_ci) {
    Learned out;
    std::vector<char> seen(static_cast<size_t>(cnf.num_vars) + 1, 0);
    int counter = 0;
    Lit uip = 0;
    size_t ti = trail.size();
    int ci = conflict_ci;
    long steps = 0;

    auto bump = [&](int v) {
      if (heuristic != DecisionHeuristic::Vsids) return;
      activity[static_cast<size_t>(v)] += act_inc;
      if (activity[static_cast<size_t>(v)] > 1e100) {
        for (double& a : activity) a *= 1e-100;
        act_inc *= 1e-100;
      }
    };

    while (true) {
      ++steps;
      for (Lit l : clauses[static_cast<size_t>(ci)].lits) {
        int v = std::abs(l);
        if (seen[static_cast<size_t>(v)] || level_of[static_cast<size_t>(v)] == 0)
          continue;
        if (l == uip) continue;
        seen[static_cast<size_t>(v)] = 1;
        bump(v);
        if (level_of[static_cast<size_t>(v)] == level) ++counter;
        else out.lits.push_back(l);
      }
      // next trail literal at the conflict level that was seen
      while (true) {
        --ti;
        if (seen[static_cast<size_t>(std::abs(trail[ti]))]) break;
      }
      uip = trail[ti];
      seen[static_cast<size_t>(std::abs(uip))] = 0;
      --counter;
      if (counter == 0) break;
      ci = reason_of[static_cast<size_t>(std::abs(uip))];
    }
    out.lits.insert(out.lits.begin(), -uip);
    out.steps = steps;
    out.backjump = 0;
    for (size_t i = 1; i < out.lits.size(); ++i)
      out.backjump = std::max(
          out.backjump, level_of[static_cast<size_t>(std::abs(out.lits[i]))]);
    // put a literal of the backjump level in the second watch position
    for (size_t i = 1; i < out.lits.size(); ++i)
      if (level_of[static_cast<size_t>(std::abs(out.lits[i]))] == out.backjump) {
        std::swap(out.lits[1], out.lits[i]);
        break;
      }
    if (heuristic == DecisionHeuristic::Vsids) act_inc /= 0.95;
    return out;
  }

  void backjump(int to_level) {
    while (trail.size() > level_start[static_cast<size_t>(to_level) + 1]) {
      Lit l = trail.back();
      trail.pop_back();
      val[static_cast<size_t>(std::abs(l))] = kUnassigned;
      reason_of[static_cast<size_t>(std::abs(l))] = -1;
    }
    level_start.resize(static_cast<size_t>(to_level) + 1);
    level = to_level;
    emit(T, "controller", "backtrack", "level=" + std::to_string(to_level));
  }

  // deterministic clause-DB trimming: longest learned clauses go first
  void trim_learned(long need_words) {
    long budget = std::max<long>(0, cfg.sram_words - orig_words);
    if (learned_words + need_words <= budget) return;
    std::vector<int> cands;
    for (size_t i = cnf.clauses.size(); i < clauses.size(); ++i)
      if (!clauses[i].deleted) cands.push_back(static_cast<int>(i));
    std::stable_sort(cands.begin(), cands.end(), [&](int a, int b) {
      return clauses[static_cast<size_t>(a)].lits.size() >
             clauses[static_cast<size_t>(b)].lits.size();
    });
    std::vector<char> is_reason(clauses.size(), 0);
    for (Lit l : trail) {
      int r = reason_of[static_cast<size_t>(std::abs(l))];
      if (r >= 0) is_reason[static_cast<size_t>(r)] = 1;
    }
    for (int ci : cands) {
      if (learned_words + need_words <= budget) break;
      if (is_reason[static_cast<size_t>(ci)]) continue;
      Clause& c = clauses[static_cast<size_t>(ci)];
      c.deleted = true;
      learned_words -= c.words();
      ++res.deleted_clauses;
      emit(T, "controller", "delete", "clause=" + std::to_string(ci));
    }
    if (learned_words + need_words > budget)
      throw ResourceExhausted("learned clauses exceed clause memory");
    // repack surviving learned clauses after the original region
    long addr = orig_words;
    for (size_t i = cnf.clauses.size(); i < clauses.size(); ++i) {
      if (clauses[i].deleted) continue;
      clauses[i].base_addr = addr;
      addr += clauses[i].words();
    }
  }

  int add_learned(std::vector<Lit> lits) {
    Clause c;
    c.lits = std::move(lits);
    c.learned = true;
    trim_learned(c.words());
    c.base_addr = orig_words + learned_words;
    learned_words += c.words();
    int ci = static_cast<int>(clauses.size());
    clauses.push_back(std::move(c));
    attach(ci);
    ++res.learned_clauses;
    return ci;
  }

  Lit pick_decision() {
    if (heuristic == DecisionHeuristic::Vsids) {
      int best = 0;
      for (int v = 1; v <= cnf.num_vars; ++v) {
        if (val[static_cast<size_t>(v)] != kUnassigned) continue;
        if (best == 0 ||
            activity[static_cast<size_t>(v)] > activity[static_cast<size_t>(best)])
          best = v;
      }
      return best;
    }
    for (int v : static_order)
      if (val[static_cast<size_t>(v)] == kUnassigned) return v;
    return 0;
  }

  bool handle_conflict(int ci) {
    // returns false when the formula is UNSAT
    ++res.conflicts;
    if (!fifo.empty()) {
      emit(T, "fifo", "flush", "count=" + std::to_string(fifo.size()));
      fifo.clear();
    }
    overlap_pop_at = -1;
    if (level == 0) return false;
    Learned lc = analyze(ci);
    T += lc.steps * cfg.scalar_op_latency;
    busy_scalar += lc.steps * cfg.scalar_op_latency;
    emit(T, "scalar", "learn",
         "size=" + std::to_string(lc.lits.size()) +
             " steps=" + std::to_string(lc.steps));
    backjump(lc.backjump);
    int reason = add_learned(lc.lits);
    assign(lc.lits[0], reason);
    ++res.propagations;
    enqueue(lc.lits[0], T, T);
    return true;
  }

  SatResult solve() {
    // empty clauses: immediately unsatisfiable
    for (const auto& c : cnf.clauses)
      if (c.empty()) {
        res.verdict = Verdict::UNSAT;
        return res;
      }
    // top-level units
    for (size_t ci = 0; ci < cnf.clauses.size(); ++ci) {
      const auto& c = cnf.clauses[ci];
      if (c.size() != 1) continue;
      int v = value_of(c[0]);
      if (v == 0) { res.verdict = Verdict::UNSAT; return res; }
      if (v == kUnassigned) {
        assign(c[0], static_cast<int>(ci));
        ++res.propagations;
        enqueue(c[0], T, T);
      }
    }

    while (true) {
      if (fifo.empty()) {
        Lit d = pick_decision();
        if (d == 0) {
          res.verdict = Verdict::SAT;
          res.model.assign(static_cast<size_t>(cnf.num_vars) + 1, 0);
          for (int v = 1; v <= cnf.num_vars; ++v)
            res.model[static_cast<size_t>(v)] = val[static_cast<size_t>(v)];
          emit(T, "controller", "sat", "");
          return res;
        }
        ++level;
        level_start.push_back(trail.size());
        ++res.decisions;
        assign(d, -1);
        emit(T, "controller", "decide", "lit=" + std::to_string(d));
        enqueue(d, T, T);
      }
      Pending p = fifo.front();
      fifo.pop_front();
      long pop_at = overlap_pop_at >= 0 ? overlap_pop_at : T;
      pop_at = std::max(pop_at, p.enq + 1);  // a pop strictly follows its enqueue
      overlap_pop_at = -1;
      emit(pop_at, "fifo", "pop",
           "lit=" + std::to_string(p.lit) + " occ=" + std::to_string(fifo.size()));
      long bstart = std::max(pop_at, p.ready);
      for (int k = 1; k <= cfg.tree_depth; ++k)
        emit(bstart + static_cast<long>(k) * cfg.broadcast_latency_per_level, "tree",
             "broadcast", "lit=" + std::to_string(p.lit) + " level=" + std::to_string(k));
      busy_broadcast += cfg.tree_depth;
      long arrive = bstart + static_cast<long>(cfg.tree_depth) *
                                 cfg.broadcast_latency_per_level;
      T = std::max(T, arrive);
      int conflict = walk(p.lit, arrive);
      if (conflict >= 0) {
        if (!handle_conflict(conflict)) {
          res.verdict = Verdict::UNSAT;
          emit(T, "controller", "unsat", "");
          return res;
        }
      }
    }
  }
};

}  // namespace

std::pair<SatResult, CycleReport> run_symbolic_sat(const CnfFormula& cnf,
                                                   const MachineConfig& cfg,
                                                   DecisionHeuristic heuristic,
                                                   const SimOptions& opts) {
  cfg.check();
  SatMachine m(cnf, cfg, heuristic, opts.trace);
  SatResult res = m.solve();
  CycleReport rep = std::move(m.rep);
  rep.total_cycles = m.T;
  rep.busy["broadcast"] = m.busy_broadcast;
  rep.busy["leaf"] = m.busy_leaf;
  rep.busy["scalar"] = m.busy_scalar;
  rep.busy["dma"] = m.busy_dma;
  for (const auto& [k, v] : rep.busy)
    rep.utilization[k] = rep.total_cycles
                             ? static_cast<double>(v) / static_cast<double>(rep.total_cycles)
                             : 0.0;
  rep.stalls.emplace("raw", 0);
  rep.stalls.emplace("bank_conflict", 0);
  rep.stalls.emplace("fifo_full", 0);
  rep.stalls.emplace("sram_miss", 0);
  rep.trace = m.trace_text();
  return {std::move(res), std::move(rep)};
}

}  // namespace reason
