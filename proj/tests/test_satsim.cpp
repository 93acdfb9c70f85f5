#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "reason/gen.hpp"
#include "reason/logic.hpp"
#include "reason/oracles.hpp"
#include "reason/sim.hpp"

using namespace reason;

namespace {

long cycle_of(const std::string& line) {
  // lines look like "cycle=12 unit=... ev=..."
  return std::stol(line.substr(6));
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("unit clause: SAT by propagation alone") {
  CnfFormula f = parse_dimacs("p cnf 1 1\n1 0\n");
  auto [r, rep] = run_symbolic_sat(f, MachineConfig::defaults());
  CHECK(r.verdict == Verdict::SAT);
  REQUIRE(r.model.size() == 2);
  CHECK(r.model[1] == 1);
  CHECK(r.conflicts == 0);
  CHECK(r.decisions == 0);
}

TEST_CASE("empty formula is SAT, empty clause is UNSAT") {
  CnfFormula empty;
  empty.num_vars = 2;
  CHECK(run_symbolic_sat(empty, MachineConfig::defaults()).first.verdict ==
        Verdict::SAT);
  CnfFormula contradiction;
  contradiction.num_vars = 1;
  contradiction.clauses = {{1}, {-1}};
  CHECK(run_symbolic_sat(contradiction, MachineConfig::defaults()).first.verdict ==
        Verdict::UNSAT);
}

TEST_CASE("minimal unsat square") {
  CnfFormula f = parse_dimacs("p cnf 2 4\n1 2 0\n-1 2 0\n1 -2 0\n-1 -2 0\n");
  auto [r, rep] = run_symbolic_sat(f, MachineConfig::defaults());
  CHECK(r.verdict == Verdict::UNSAT);
  CHECK(r.conflicts >= 1);
  CHECK(r.decisions >= 1);
  CHECK(r.learned_clauses >= 1);
}

TEST_CASE("verdicts match the reference solver") {
  MachineConfig cfg = MachineConfig::defaults();
  for (uint64_t seed = 1; seed <= 60; ++seed) {
    CnfFormula f = gen_cnf(seed, 14, 60, 3);
    bool want = oracle::reference_sat(f).sat;
    auto [r, rep] = run_symbolic_sat(f, cfg);
    CHECK((r.verdict == Verdict::SAT) == want);
    if (r.verdict == Verdict::SAT) CHECK(cnf_satisfied(f, r.model));
  }
}

TEST_CASE("vsids heuristic agrees on verdicts") {
  MachineConfig cfg = MachineConfig::defaults();
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CnfFormula f = gen_cnf(seed + 500, 12, 50, 3);
    bool want = oracle::reference_sat(f).sat;
    auto [r, rep] = run_symbolic_sat(f, cfg, DecisionHeuristic::Vsids);
    CHECK((r.verdict == Verdict::SAT) == want);
    if (r.verdict == Verdict::SAT) CHECK(cnf_satisfied(f, r.model));
  }
}

TEST_CASE("uf20-style instances solve correctly") {
  MachineConfig cfg = MachineConfig::defaults();
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    CnfFormula f = gen_uf20_style(seed);
    CHECK(f.num_vars == 20);
    CHECK(f.clauses.size() == 91);
    auto [r, rep] = run_symbolic_sat(f, cfg);
    CHECK(r.verdict == Verdict::SAT);
    CHECK(cnf_satisfied(f, r.model));
  }
}

TEST_CASE("trace: cycle-ordered, deterministic, causal") {
  CnfFormula f = gen_cnf(77, 12, 48, 3);
  SimOptions opts;
  opts.trace = true;
  MachineConfig cfg = MachineConfig::defaults();
  auto [r1, rep1] = run_symbolic_sat(f, cfg, DecisionHeuristic::StaticOccurrence, opts);
  auto [r2, rep2] = run_symbolic_sat(f, cfg, DecisionHeuristic::StaticOccurrence, opts);
  CHECK(rep1.trace == rep2.trace);
  auto lines = lines_of(rep1.trace);
  REQUIRE(!lines.empty());
  long prev = -1;
  long first_enqueue = -1, first_pop = -1;
  for (const auto& line : lines) {
    long c = cycle_of(line);
    CHECK(c >= prev);
    prev = c;
    if (first_enqueue < 0 && line.find("ev=enqueue") != std::string::npos)
      first_enqueue = c;
    if (first_pop < 0 && line.find("ev=pop") != std::string::npos) first_pop = c;
  }
  if (first_pop >= 0 && first_enqueue >= 0) CHECK(first_pop > first_enqueue);
}

TEST_CASE("trace: broadcast spans D levels") {
  CnfFormula f = parse_dimacs("p cnf 2 2\n1 2 0\n-1 2 0\n");
  SimOptions opts;
  opts.trace = true;
  MachineConfig cfg = MachineConfig::defaults();
  auto [r, rep] = run_symbolic_sat(f, cfg, DecisionHeuristic::StaticOccurrence, opts);
  auto lines = lines_of(rep.trace);
  long first_b = -1, last_b = -1;
  for (const auto& line : lines) {
    if (line.find("ev=broadcast") == std::string::npos) continue;
    long c = cycle_of(line);
    if (first_b < 0) first_b = c;
    last_b = c;
    if (last_b - first_b + 1 == cfg.tree_depth) break;
  }
  REQUIRE(first_b >= 0);
  // one event per level, one cycle apart
  CHECK(last_b - first_b == cfg.tree_depth - 1);
}

TEST_CASE("learned-clause budget forces deletion but not wrong answers") {
  MachineConfig cfg = MachineConfig::defaults();
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    CnfFormula f = gen_cnf(seed + 40, 16, 70, 3);
    size_t orig_words = 0;
    for (const auto& c : f.clauses) orig_words += c.size() + 2;
    cfg.sram_words = static_cast<int>(orig_words) + 24;
    bool want = oracle::reference_sat(f).sat;
    try {
      auto [r, rep] = run_symbolic_sat(f, cfg);
      CHECK((r.verdict == Verdict::SAT) == want);
      if (r.verdict == Verdict::SAT) CHECK(cnf_satisfied(f, r.model));
    } catch (const ResourceExhausted&) {
      // acceptable when even a single learned clause cannot fit
    }
  }
}

TEST_CASE("tight fifo produces fifo_full stalls, never wrong verdicts") {
  MachineConfig cfg = MachineConfig::defaults();
  cfg.fifo_depth = 1;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    CnfFormula f = gen_cnf(seed + 900, 12, 50, 3);
    bool want = oracle::reference_sat(f).sat;
    auto [r, rep] = run_symbolic_sat(f, cfg);
    CHECK((r.verdict == Verdict::SAT) == want);
    CHECK(rep.stalls.count("fifo_full"));
  }
}

TEST_CASE("cycle counts grow with broadcast latency") {
  CnfFormula f = gen_cnf(123, 14, 58, 3);
  MachineConfig cfg = MachineConfig::defaults();
  auto [r1, rep1] = run_symbolic_sat(f, cfg);
  cfg.broadcast_latency_per_level = 4;
  auto [r2, rep2] = run_symbolic_sat(f, cfg);
  CHECK(r1.verdict == r2.verdict);
  CHECK(rep2.total_cycles > rep1.total_cycles);
}
