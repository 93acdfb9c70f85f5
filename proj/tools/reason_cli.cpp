// Command-line driver for the accelerator toolchain. Talks to the core
// exclusively through the C API in reason/capi.h.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "reason/capi.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvariant = 1;
constexpr int kExitInput = 2;

struct Exit {
  int code;
  std::string message;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Exit{kExitInput, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Exit{kExitInput, "cannot write " + path};
  out << content;
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty())
    std::cout << content << "\n";
  else
    write_file(out_path, content);
}

struct Ctx {
  reason_ctx* c;
  Ctx() : c(reason_ctx_create()) {}
  ~Ctx() { reason_ctx_destroy(c); }
  Ctx(const Ctx&) = delete;
  Ctx& operator=(const Ctx&) = delete;
};

int exit_code_for(reason_status st) {
  switch (st) {
    case REASON_OK: return kExitOk;
    case REASON_ERR_INVALID_ARGUMENT:
    case REASON_ERR_PARSE: return kExitInput;
    default: return kExitInvariant;
  }
}

// Raises Exit unless the call succeeded.
void check(reason_ctx* c, reason_status st) {
  if (st != REASON_OK) throw Exit{exit_code_for(st), reason_last_error(c)};
}

std::string take(char* p) {
  std::string s = p ? p : "";
  reason_free(p);
  return s;
}

struct DagHandle {
  reason_dag* d = nullptr;
  ~DagHandle() { reason_dag_free(d); }
};
struct ProgHandle {
  reason_program* p = nullptr;
  ~ProgHandle() { reason_program_free(p); }
};

struct Options {
  std::string input;
  std::string mode = "pc";
  std::string config_path;
  std::string assignment_path;
  std::string dataset_path;
  std::string out;
  long prune_budget = -1;
  double prune_threshold = -1;
  double prune_eps = -1;
  bool trace = false;
  unsigned long long seed = 1;
  // dse grid
  std::string grid_depth = "2,3";
  std::string grid_banks = "16,64";
  std::string grid_regs = "8,32";
  // gen
  std::string gen_kind;
  std::string gen_params = "{}";
};

json manifest(const std::string& command, const Options& o) {
  json m;
  m["tool"] = "reason_cli";
  m["version"] = reason_version();
  m["command"] = command;
  if (!o.input.empty()) m["input"] = o.input;
  m["mode"] = o.mode;
  if (!o.config_path.empty()) m["config"] = o.config_path;
  if (!o.assignment_path.empty()) m["assignment"] = o.assignment_path;
  if (!o.dataset_path.empty()) m["dataset"] = o.dataset_path;
  if (o.prune_budget >= 0) m["prune_budget"] = o.prune_budget;
  if (o.prune_threshold >= 0) m["prune_threshold"] = o.prune_threshold;
  if (o.prune_eps >= 0) m["prune_eps"] = o.prune_eps;
  m["seed"] = o.seed;
  m["trace"] = o.trace;
  return m;
}

std::string config_text(const Options& o) {
  return o.config_path.empty() ? std::string() : read_file(o.config_path);
}

DagHandle load_dag(reason_ctx* c, const Options& o) {
  std::string text = read_file(o.input);
  DagHandle h;
  if (o.mode == "pc")
    check(c, reason_dag_from_pc_text(c, text.c_str(), &h.d));
  else if (o.mode == "hmm")
    check(c, reason_dag_from_hmm_json(c, text.c_str(), &h.d));
  else if (o.mode == "sat")
    check(c, reason_dag_from_dimacs(c, text.c_str(), &h.d));
  else if (o.mode == "dag")
    check(c, reason_dag_parse(c, text.c_str(), &h.d));
  else
    throw Exit{kExitInput, "mode " + o.mode + " does not lower to a graph"};
  return h;
}

// ---------------------------------------------------------------------------

int cmd_compile(const Options& o) {
  Ctx ctx;
  DagHandle dag = load_dag(ctx.c, o);
  std::string cfg = config_text(o);
  ProgHandle prog;
  check(ctx.c, reason_compile(ctx.c, dag.d, cfg.c_str(), &prog.p));

  char* ser = nullptr;
  check(ctx.c, reason_program_serialize(ctx.c, prog.p, &ser));
  char* stats = nullptr;
  check(ctx.c, reason_program_stats(ctx.c, prog.p, &stats));

  json report;
  report["manifest"] = manifest("compile", o);
  report["stats"] = json::parse(take(stats));

  std::string dir = o.out.empty() ? "." : o.out;
  write_file(dir + "/program.json", take(ser));
  write_file(dir + "/compile_report.json", report.dump(2) + "\n");
  std::cout << "wrote " << dir << "/program.json and " << dir
            << "/compile_report.json\n";
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  Ctx ctx;
  std::string cfg = config_text(o);
  json report;
  report["manifest"] = manifest("simulate", o);

  if (o.mode == "sat") {
    std::string text = read_file(o.input);
    char* out = nullptr;
    check(ctx.c, reason_simulate_sat(ctx.c, text.c_str(), cfg.c_str(), "static",
                                     o.trace ? 1 : 0, &out));
    report["result"] = json::parse(take(out));
  } else if (o.mode == "spmspm") {
    json in = json::parse(read_file(o.input));
    char* out = nullptr;
    check(ctx.c, reason_spmspm(ctx.c, in.at("a").dump().c_str(),
                               in.at("b").dump().c_str(), cfg.c_str(), &out));
    report["result"] = json::parse(take(out));
  } else {
    DagHandle dag = load_dag(ctx.c, o);
    ProgHandle prog;
    check(ctx.c, reason_compile(ctx.c, dag.d, cfg.c_str(), &prog.p));
    std::string assignment =
        o.assignment_path.empty() ? "{}" : read_file(o.assignment_path);
    int marginalize = o.assignment_path.empty() ? 1 : 0;
    char* out = nullptr;
    check(ctx.c, reason_simulate(ctx.c, prog.p, assignment.c_str(), marginalize,
                                 o.trace ? 1 : 0, &out));
    report["result"] = json::parse(take(out));
  }
  emit(o.out, report.dump(2));
  return kExitOk;
}

int cmd_prune(const Options& o) {
  Ctx ctx;
  std::string dir = o.out.empty() ? "." : o.out;
  json report;
  report["manifest"] = manifest("prune", o);

  if (o.mode == "sat") {
    std::string text = read_file(o.input);
    char* cnf = nullptr;
    char* rep = nullptr;
    check(ctx.c, reason_prune_literals(ctx.c, text.c_str(), &cnf, &rep));
    write_file(dir + "/pruned.cnf", take(cnf));
    report["result"] = json::parse(take(rep));
  } else if (o.mode == "hmm") {
    if (o.dataset_path.empty()) throw Exit{kExitInput, "--dataset required"};
    if (o.prune_eps < 0) throw Exit{kExitInput, "--prune-eps required"};
    std::string hmm = read_file(o.input);
    std::string dataset = read_file(o.dataset_path);
    char* out_hmm = nullptr;
    char* rep = nullptr;
    check(ctx.c, reason_prune_hmm(ctx.c, hmm.c_str(), dataset.c_str(), o.prune_eps,
                                  &out_hmm, &rep));
    write_file(dir + "/pruned_hmm.json", take(out_hmm));
    report["result"] = json::parse(take(rep));
  } else if (o.mode == "pc" || o.mode == "dag") {
    if (o.dataset_path.empty()) throw Exit{kExitInput, "--dataset required"};
    DagHandle dag = load_dag(ctx.c, o);
    std::string dataset = read_file(o.dataset_path);
    json budget;
    if (o.prune_budget >= 0)
      budget["edge_count"] = o.prune_budget;
    else if (o.prune_threshold >= 0)
      budget["flow_threshold"] = o.prune_threshold;
    else
      throw Exit{kExitInput, "--prune-budget or --prune-threshold required"};
    DagHandle pruned;
    char* rep = nullptr;
    check(ctx.c, reason_prune_flow(ctx.c, dag.d, dataset.c_str(),
                                   budget.dump().c_str(), &pruned.d, &rep));
    char* ser = nullptr;
    check(ctx.c, reason_dag_serialize(ctx.c, pruned.d, &ser));
    write_file(dir + "/pruned.dag", take(ser));
    report["result"] = json::parse(take(rep));
  } else {
    throw Exit{kExitInput, "unsupported prune mode: " + o.mode};
  }
  write_file(dir + "/prune_report.json", report.dump(2) + "\n");
  std::cout << "wrote prune outputs to " << dir << "\n";
  return kExitOk;
}

// one bench row; status "ok" or the failing stage's message
struct BenchRow {
  std::string instance, kind, status = "ok";
  long cycles = 0;
  double utilization = 0;
  long stall_raw = 0, stall_bank = 0, stall_fifo = 0, stall_sram = 0;
  long spills = 0, copies = 0;
};

BenchRow bench_one(reason_ctx* c, const fs::path& path, const std::string& cfg) {
  BenchRow row;
  row.instance = path.filename().string();
  std::string ext = path.extension().string();
  try {
    if (ext == ".cnf" || ext == ".dimacs") {
      row.kind = "sat";
      std::string text = read_file(path.string());
      char* out = nullptr;
      check(c, reason_simulate_sat(c, text.c_str(), cfg.c_str(), "static", 0, &out));
      json r = json::parse(take(out));
      const json& rep = r.at("report");
      row.cycles = rep.at("total_cycles").get<long>();
      if (rep.at("utilization").contains("leaf"))
        row.utilization = rep.at("utilization").at("leaf").get<double>();
      row.stall_fifo = rep.at("stalls").value("fifo_full", 0L);
      row.stall_sram = rep.at("stalls").value("sram_miss", 0L);
    } else {
      Options lo;
      lo.input = path.string();
      lo.mode = (ext == ".pc") ? "pc" : (ext == ".dag") ? "dag" : "hmm";
      row.kind = lo.mode;
      DagHandle dag = load_dag(c, lo);
      ProgHandle prog;
      check(c, reason_compile(c, dag.d, cfg.c_str(), &prog.p));
      char* stats_text = nullptr;
      check(c, reason_program_stats(c, prog.p, &stats_text));
      json stats = json::parse(take(stats_text));
      row.spills = stats.at("spill_count").get<long>();
      row.copies = stats.at("copy_count").get<long>();
      char* out = nullptr;
      check(c, reason_simulate(c, prog.p, "{}", 1, 0, &out));
      json r = json::parse(take(out));
      const json& rep = r.at("report");
      row.cycles = rep.at("total_cycles").get<long>();
      row.utilization = rep.at("tree_utilization_steady").get<double>();
      row.stall_raw = rep.at("stalls").value("raw", 0L);
      row.stall_bank = rep.at("stalls").value("bank_conflict", 0L);
    }
  } catch (const Exit& e) {
    row.status = e.message;
  }
  return row;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

int cmd_bench(const Options& o) {
  Ctx ctx;
  std::string cfg = config_text(o);
  if (!fs::is_directory(o.input)) throw Exit{kExitInput, o.input + " is not a directory"};

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.input))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::vector<BenchRow> rows;
  for (const auto& f : files) rows.push_back(bench_one(ctx.c, f, cfg));

  std::ostringstream csv;
  csv << "# manifest: " << manifest("bench", o).dump() << "\n";
  csv << "instance,kind,status,cycles,utilization,stall_raw,stall_bank_conflict,"
         "stall_fifo_full,stall_sram_miss,spills,copies\n";
  long total_cycles = 0;
  double util_sum = 0;
  long ok = 0;
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6f", r.utilization);
    csv << csv_escape(r.instance) << ',' << r.kind << ',' << csv_escape(r.status)
        << ',' << r.cycles << ',' << buf << ',' << r.stall_raw << ',' << r.stall_bank
        << ',' << r.stall_fifo << ',' << r.stall_sram << ',' << r.spills << ','
        << r.copies << "\n";
    if (r.status == "ok") {
      total_cycles += r.cycles;
      util_sum += r.utilization;
      ++ok;
    }
  }
  std::snprintf(buf, sizeof buf, "%.6f", ok ? util_sum / ok : 0.0);
  csv << "TOTAL," << rows.size() << " instances," << ok << " ok," << total_cycles
      << ',' << buf << ",,,,,,\n";
  emit(o.out, csv.str());
  return kExitOk;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  if (out.empty()) throw Exit{kExitInput, "empty grid axis: " + s};
  return out;
}

int cmd_dse(const Options& o) {
  Ctx ctx;
  json base = o.config_path.empty() ? json::object() : json::parse(config_text(o));
  std::vector<int> depths = parse_int_list(o.grid_depth);
  std::vector<int> banks = parse_int_list(o.grid_banks);
  std::vector<int> regs = parse_int_list(o.grid_regs);

  DagHandle dag = load_dag(ctx.c, o);

  struct Cell {
    int d, b, r;
    std::string status = "ok";
    long cycles = 0, spills = 0, copies = 0, traffic = 0;
  };
  std::vector<Cell> cells;
  for (int d : depths)
    for (int b : banks)
      for (int r : regs) {
        Cell cell{d, b, r};
        json cfg = base;
        cfg["tree_depth"] = d;
        cfg["banks"] = b;
        cfg["regs_per_bank"] = r;
        try {
          ProgHandle prog;
          check(ctx.c, reason_compile(ctx.c, dag.d, cfg.dump().c_str(), &prog.p));
          char* stats_text = nullptr;
          check(ctx.c, reason_program_stats(ctx.c, prog.p, &stats_text));
          json stats = json::parse(take(stats_text));
          cell.spills = stats.at("spill_count").get<long>();
          cell.copies = stats.at("copy_count").get<long>();
          cell.traffic = stats.at("predicted_writes").get<long>() +
                         stats.at("preloads").get<long>();
          char* out = nullptr;
          check(ctx.c, reason_simulate(ctx.c, prog.p, "{}", 1, 0, &out));
          cell.cycles = json::parse(take(out)).at("report").at("total_cycles").get<long>();
        } catch (const Exit& e) {
          cell.status = e.message;
        }
        cells.push_back(cell);
      }

  // sanity: for fixed (depth, banks), more registers never spills more
  bool monotone = true;
  std::map<std::pair<int, int>, std::vector<std::pair<int, long>>> by_db;
  for (const auto& c : cells)
    if (c.status == "ok") by_db[{c.d, c.b}].push_back({c.r, c.spills});
  for (auto& [key, v] : by_db) {
    std::sort(v.begin(), v.end());
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i].second > v[i - 1].second) monotone = false;
  }

  std::ostringstream csv;
  csv << "# manifest: " << manifest("dse", o).dump() << "\n";
  csv << "tree_depth,banks,regs_per_bank,default,status,cycles,spill_count,"
         "copy_count,register_traffic\n";
  for (const auto& c : cells) {
    bool def = c.d == 3 && c.b == 64 && c.r == 32;
    csv << c.d << ',' << c.b << ',' << c.r << ',' << (def ? 1 : 0) << ','
        << csv_escape(c.status) << ',' << c.cycles << ',' << c.spills << ','
        << c.copies << ',' << c.traffic << "\n";
  }
  emit(o.out, csv.str());
  if (!monotone) {
    std::cerr << "spill counts increased with register count\n";
    return kExitInvariant;
  }
  return kExitOk;
}

int cmd_gen(const Options& o) {
  Ctx ctx;
  char* out = nullptr;
  check(ctx.c, reason_generate(ctx.c, o.gen_kind.c_str(), o.seed,
                               o.gen_params.c_str(), &out));
  emit(o.out, take(out));
  return kExitOk;
}

int cmd_check(const Options& o) {
  Ctx ctx;
  int failures = 0;
  auto verdict = [&](const char* name, bool ok) {
    std::cout << (ok ? "PASS" : "FAIL") << " " << name << "\n";
    if (!ok) ++failures;
  };

  // compiled/simulated value matches direct evaluation
  {
    char* pc_text = nullptr;
    check(ctx.c, reason_generate(ctx.c, "pc", o.seed, "{\"num_vars\":10}", &pc_text));
    std::string pc = take(pc_text);
    DagHandle dag;
    check(ctx.c, reason_dag_from_pc_text(ctx.c, pc.c_str(), &dag.d));
    double direct = 0;
    check(ctx.c, reason_dag_evaluate(ctx.c, dag.d, "{}", 1, &direct));
    ProgHandle prog;
    check(ctx.c, reason_compile(ctx.c, dag.d, "", &prog.p));
    char* sim_out = nullptr;
    check(ctx.c, reason_simulate(ctx.c, prog.p, "{}", 1, 0, &sim_out));
    double simulated = json::parse(take(sim_out)).at("root").get<double>();
    double denom = std::max(std::abs(direct), 1e-300);
    verdict("simulated value matches evaluation", std::abs(simulated - direct) / denom < 1e-9);

    char* s1 = nullptr;
    char* s2 = nullptr;
    ProgHandle prog2;
    check(ctx.c, reason_compile(ctx.c, dag.d, "", &prog2.p));
    check(ctx.c, reason_program_serialize(ctx.c, prog.p, &s1));
    check(ctx.c, reason_program_serialize(ctx.c, prog2.p, &s2));
    verdict("recompilation is byte-identical", take(s1) == take(s2));
  }

  // SAT verdict is self-consistent: reported model satisfies the formula
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      char* cnf_text = nullptr;
      json params = {{"num_vars", 12}, {"num_clauses", 40}};
      check(ctx.c, reason_generate(ctx.c, "cnf", o.seed + i, params.dump().c_str(),
                                   &cnf_text));
      std::string cnf = take(cnf_text);
      char* out = nullptr;
      check(ctx.c, reason_simulate_sat(ctx.c, cnf.c_str(), "", "static", 0, &out));
      json r = json::parse(take(out));
      if (r.at("verdict") == "SAT") {
        DagHandle dag;
        check(ctx.c, reason_dag_from_dimacs(ctx.c, cnf.c_str(), &dag.d));
        json assignment = json::object();
        auto model = r.at("model").get<std::vector<int>>();
        for (size_t v = 1; v < model.size(); ++v)
          assignment[std::to_string(v)] = model[v];
        double val = 0;
        check(ctx.c, reason_dag_evaluate(ctx.c, dag.d, assignment.dump().c_str(), 0, &val));
        ok = val == 1.0;
      }
    }
    verdict("reported models satisfy their formulas", ok);
  }

  // broadcast topology ordering
  {
    long t = reason_interconnect_latency("tree", 64);
    long m = reason_interconnect_latency("mesh", 64);
    long b = reason_interconnect_latency("bus", 64);
    verdict("interconnect latency tree < mesh < bus", t < m && m < b);
  }

  return failures ? kExitInvariant : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probabilistic-logical accelerator toolchain"};
  app.require_subcommand(1);

  Options o;
  auto add_common = [&](CLI::App* sub, bool with_input) {
    if (with_input) sub->add_option("input", o.input, "input file")->required();
    sub->add_option("--mode", o.mode, "pc|hmm|sat|spmspm|dag");
    sub->add_option("--config", o.config_path, "machine config JSON file");
    sub->add_option("--out", o.out, "output path (directory or file)");
    sub->add_option("--seed", o.seed, "generator seed");
  };

  auto* c_compile = app.add_subcommand("compile", "lower and map an input to a program");
  add_common(c_compile, true);

  auto* c_sim = app.add_subcommand("simulate", "cycle-level simulation");
  add_common(c_sim, true);
  c_sim->add_option("--assignment", o.assignment_path, "variable assignment JSON file");
  c_sim->add_flag("--trace", o.trace, "emit the event trace");

  auto* c_prune = app.add_subcommand("prune", "dataset- or graph-driven pruning");
  add_common(c_prune, true);
  c_prune->add_option("--dataset", o.dataset_path, "dataset JSON file");
  c_prune->add_option("--prune-budget", o.prune_budget, "number of edges to remove");
  c_prune->add_option("--prune-threshold", o.prune_threshold, "flow threshold");
  c_prune->add_option("--prune-eps", o.prune_eps, "posterior usage threshold");

  auto* c_bench = app.add_subcommand("bench", "run an instance directory, emit CSV");
  add_common(c_bench, true);

  auto* c_dse = app.add_subcommand("dse", "design-space sweep over D x B x R");
  add_common(c_dse, true);
  c_dse->add_option("--grid-depth", o.grid_depth, "comma list of tree depths");
  c_dse->add_option("--grid-banks", o.grid_banks, "comma list of bank counts");
  c_dse->add_option("--grid-regs", o.grid_regs, "comma list of registers per bank");

  auto* c_gen = app.add_subcommand("gen", "generate a corpus artifact");
  c_gen->add_option("kind", o.gen_kind, "pc|dataset|hmm|cnf|cnf_mixed|uf20|tree")
      ->required();
  c_gen->add_option("--params", o.gen_params, "generator parameters JSON");
  c_gen->add_option("--out", o.out, "output path");
  c_gen->add_option("--seed", o.seed, "generator seed");

  auto* c_check = app.add_subcommand("check", "built-in consistency suite");
  c_check->add_option("--seed", o.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_compile->parsed()) return cmd_compile(o);
    if (c_sim->parsed()) return cmd_simulate(o);
    if (c_prune->parsed()) return cmd_prune(o);
    if (c_bench->parsed()) return cmd_bench(o);
    if (c_dse->parsed()) return cmd_dse(o);
    if (c_gen->parsed()) return cmd_gen(o);
    if (c_check->parsed()) return cmd_check(o);
  } catch (const Exit& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvariant;
  }
  return kExitInput;
}
