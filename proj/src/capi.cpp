#include "reason/capi.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "reason/compiler.hpp"
#include "reason/config.hpp"
#include "reason/dag.hpp"
#include "reason/gen.hpp"
#include "reason/host.hpp"
#include "reason/logic.hpp"
#include "reason/prob.hpp"
#include "reason/prune.hpp"
#include "reason/sim.hpp"

using nlohmann::json;

struct reason_ctx_t {
  std::string last_error;
  reason::HostRuntime host;
};

struct reason_dag_t {
  reason::Dag dag;
};

struct reason_program_t {
  reason::MappedProgram prog;
  // The (regularized) dag the program was compiled from; empty for
  // deserialized programs.
  std::unique_ptr<reason::Dag> dag;
};

namespace {

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

reason_status fail(reason_ctx* ctx, reason_status st, const std::string& msg) {
  if (ctx) ctx->last_error = msg;
  return st;
}

// Runs `fn`, translating exceptions into status codes + ctx message.
template <typename Fn>
reason_status guarded(reason_ctx* ctx, Fn&& fn) {
  if (!ctx) return REASON_ERR_INVALID_ARGUMENT;
  try {
    fn();
    ctx->last_error.clear();
    return REASON_OK;
  } catch (const reason::BusySlot& e) {
    return fail(ctx, REASON_ERR_BUSY, e.what());
  } catch (const reason::HazardViolation& e) {
    return fail(ctx, REASON_ERR_INVARIANT, e.what());
  } catch (const reason::BankConflict& e) {
    return fail(ctx, REASON_ERR_INVARIANT, e.what());
  } catch (const reason::ResourceExhausted& e) {
    return fail(ctx, REASON_ERR_RESOURCE, e.what());
  } catch (const reason::BudgetTooLarge& e) {
    return fail(ctx, REASON_ERR_RESOURCE, e.what());
  } catch (const reason::InfeasibleWidth& e) {
    return fail(ctx, REASON_ERR_RESOURCE, e.what());
  } catch (const reason::CompileError& e) {
    return fail(ctx, REASON_ERR_RESOURCE, e.what());
  } catch (const reason::EmptyDataset& e) {
    return fail(ctx, REASON_ERR_INVALID_ARGUMENT, e.what());
  } catch (const reason::UnassignedVariable& e) {
    return fail(ctx, REASON_ERR_INVALID_ARGUMENT, e.what());
  } catch (const reason::CycleDetected& e) {
    return fail(ctx, REASON_ERR_INVARIANT, e.what());
  } catch (const reason::LogicError& e) {
    return fail(ctx, REASON_ERR_PARSE, e.what());
  } catch (const reason::ProbError& e) {
    return fail(ctx, REASON_ERR_PARSE, e.what());
  } catch (const reason::ConfigError& e) {
    return fail(ctx, REASON_ERR_PARSE, e.what());
  } catch (const reason::DagError& e) {
    return fail(ctx, REASON_ERR_PARSE, e.what());
  } catch (const reason::SimError& e) {
    return fail(ctx, REASON_ERR_INVARIANT, e.what());
  } catch (const reason::PruneError& e) {
    return fail(ctx, REASON_ERR_INVALID_ARGUMENT, e.what());
  } catch (const json::exception& e) {
    return fail(ctx, REASON_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return fail(ctx, REASON_ERR_INTERNAL, e.what());
  }
}

reason_status need(reason_ctx* ctx, bool ok, const char* what) {
  return ok ? REASON_OK : fail(ctx, REASON_ERR_INVALID_ARGUMENT, what);
}

reason::MachineConfig config_from(const char* config_json) {
  if (!config_json || !*config_json) return reason::MachineConfig::defaults();
  return reason::MachineConfig::from_json(config_json);
}

reason::Assignment assignment_from(const char* text) {
  reason::Assignment a;
  if (!text || !*text) return a;
  json j = json::parse(text);
  for (auto& [k, v] : j.items()) a[std::stoi(k)] = v.get<int>();
  return a;
}

std::vector<reason::Assignment> dataset_from(const char* text) {
  std::vector<reason::Assignment> out;
  json j = json::parse(text);
  for (auto& row : j) {
    reason::Assignment a;
    for (auto& [k, v] : row.items()) a[std::stoi(k)] = v.get<int>();
    out.push_back(std::move(a));
  }
  return out;
}

reason::SparseMatrix matrix_from(const char* text) {
  json j = json::parse(text);
  reason::SparseMatrix m;
  m.rows = j.at("rows").get<int>();
  m.cols = j.at("cols").get<int>();
  for (auto& e : j.at("entries"))
    m.entries.push_back({e.at(0).get<int>(), e.at(1).get<int>(), e.at(2).get<double>()});
  return m;
}

json matrix_to_json(const reason::SparseMatrix& m) {
  json j;
  j["rows"] = m.rows;
  j["cols"] = m.cols;
  auto& es = j["entries"] = json::array();
  for (const auto& e : m.entries) es.push_back({e.row, e.col, e.value});
  return j;
}

reason_dag* wrap(reason::Dag d) {
  auto* h = new reason_dag_t;
  h->dag = std::move(d);
  return h;
}

// compile() wants a two-input dag; widen-as-needed happens here so the
// stored dag always matches the program's leaf node ids.
reason::Dag prepare_for_compile(const reason::Dag& dag) {
  if (reason::max_fan_in(dag) <= 2) return dag;
  return reason::regularize_two_input(dag).dag;
}

json cycle_report_json(const reason::CycleReport& rep) { return json::parse(rep.to_json()); }

}  // namespace

extern "C" {

const char* reason_version(void) { return "0.1.0"; }

reason_ctx* reason_ctx_create(void) { return new reason_ctx_t; }

void reason_ctx_destroy(reason_ctx* ctx) { delete ctx; }

const char* reason_last_error(const reason_ctx* ctx) {
  return ctx ? ctx->last_error.c_str() : "null context";
}

void reason_free(char* s) { std::free(s); }

reason_status reason_dag_parse(reason_ctx* ctx, const char* text, reason_dag** out) {
  if (auto st = need(ctx, text && out, "null argument")) return st;
  return guarded(ctx, [&] { *out = wrap(reason::parse_dag(text)); });
}

reason_status reason_dag_from_pc_text(reason_ctx* ctx, const char* text, reason_dag** out) {
  if (auto st = need(ctx, text && out, "null argument")) return st;
  return guarded(ctx, [&] { *out = wrap(reason::lower_pc_to_dag(reason::parse_pc(text))); });
}

reason_status reason_dag_from_hmm_json(reason_ctx* ctx, const char* text, reason_dag** out) {
  if (auto st = need(ctx, text && out, "null argument")) return st;
  return guarded(ctx, [&] {
    *out = wrap(reason::unroll_hmm_to_dag(reason::parse_hmm_json(text)));
  });
}

reason_status reason_dag_from_dimacs(reason_ctx* ctx, const char* text, reason_dag** out) {
  if (auto st = need(ctx, text && out, "null argument")) return st;
  return guarded(ctx, [&] {
    *out = wrap(reason::lower_cnf_to_dag(reason::parse_dimacs(text)));
  });
}

void reason_dag_free(reason_dag* dag) { delete dag; }

reason_status reason_dag_serialize(reason_ctx* ctx, const reason_dag* dag, char** out_text) {
  if (auto st = need(ctx, dag && out_text, "null argument")) return st;
  return guarded(ctx, [&] { *out_text = dup_string(reason::serialize_dag(dag->dag)); });
}

reason_status reason_dag_validate(reason_ctx* ctx, const reason_dag* dag, char** out_json) {
  if (auto st = need(ctx, dag && out_json, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::ValidationReport rep = reason::validate(dag->dag);
    json j;
    j["ok"] = rep.ok();
    auto& vs = j["violations"] = json::array();
    for (const auto& v : rep.violations)
      vs.push_back({{"node", v.node}, {"rule", v.rule}, {"detail", v.detail}});
    *out_json = dup_string(j.dump(2));
  });
}

reason_status reason_dag_stats(reason_ctx* ctx, const reason_dag* dag, char** out_json) {
  if (auto st = need(ctx, dag && out_json, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::StructureReport sr = reason::check_structure(dag->dag);
    json j;
    j["kernel"] = reason::to_string(dag->dag.kernel);
    j["nodes"] = dag->dag.size();
    j["edges"] = dag->dag.edge_count();
    j["depth"] = reason::dag_depth(dag->dag);
    j["max_fan_in"] = reason::max_fan_in(dag->dag);
    j["smooth"] = sr.smooth;
    j["decomposable"] = sr.decomposable;
    *out_json = dup_string(j.dump(2));
  });
}

reason_status reason_dag_regularize(reason_ctx* ctx, const reason_dag* dag, reason_dag** out) {
  if (auto st = need(ctx, dag && out, "null argument")) return st;
  return guarded(ctx, [&] { *out = wrap(reason::regularize_two_input(dag->dag).dag); });
}

reason_status reason_dag_evaluate(reason_ctx* ctx, const reason_dag* dag,
                                  const char* assignment_json, int allow_marginalize,
                                  double* out_value) {
  if (auto st = need(ctx, dag && out_value, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::EvalOptions opts;
    opts.allow_marginalize = allow_marginalize != 0;
    *out_value = reason::evaluate(dag->dag, assignment_from(assignment_json), opts).value();
  });
}

reason_status reason_prune_flow(reason_ctx* ctx, const reason_dag* dag,
                                const char* dataset_json, const char* budget_json,
                                reason_dag** out_dag, char** out_report_json) {
  if (auto st = need(ctx, dag && dataset_json && budget_json && out_dag && out_report_json,
                     "null argument"))
    return st;
  return guarded(ctx, [&] {
    auto dataset = dataset_from(dataset_json);
    json jb = json::parse(budget_json);
    reason::PruneBudget budget =
        jb.contains("edge_count")
            ? reason::PruneBudget::count(jb.at("edge_count").get<long>())
            : reason::PruneBudget::threshold(jb.at("flow_threshold").get<double>());
    reason::FlowStats stats = reason::compute_flows(dag->dag, dataset);
    reason::FlowPruneResult res = reason::prune_low_flow(dag->dag, stats, budget, dataset);
    *out_report_json = dup_string(res.report.to_json());
    *out_dag = wrap(std::move(res.dag));
  });
}

reason_status reason_prune_literals(reason_ctx* ctx, const char* dimacs_text,
                                    char** out_dimacs, char** out_report_json) {
  if (auto st = need(ctx, dimacs_text && out_dimacs && out_report_json, "null argument"))
    return st;
  return guarded(ctx, [&] {
    auto [pruned, log] = reason::prune_hidden_literals(reason::parse_dimacs(dimacs_text));
    json j;
    j["rounds"] = log.rounds;
    auto& ds = j["drops"] = json::array();
    for (const auto& d : log.drops)
      ds.push_back({{"clause", d.clause}, {"removed", d.removed}, {"implied", d.implied}});
    *out_report_json = dup_string(j.dump(2));
    *out_dimacs = dup_string(reason::serialize_dimacs(pruned));
  });
}

reason_status reason_prune_hmm(reason_ctx* ctx, const char* hmm_json,
                               const char* dataset_json, double eps,
                               char** out_hmm_json, char** out_report_json) {
  if (auto st = need(ctx, hmm_json && dataset_json && out_hmm_json && out_report_json,
                     "null argument"))
    return st;
  return guarded(ctx, [&] {
    reason::HmmSpec hmm = reason::parse_hmm_json(hmm_json);
    std::vector<std::vector<int>> dataset =
        json::parse(dataset_json).get<std::vector<std::vector<int>>>();
    auto [pruned, rep] = reason::hmm_posterior_prune(hmm, dataset, eps);
    *out_report_json = dup_string(rep.to_json());
    *out_hmm_json = dup_string(reason::serialize_hmm_json(pruned));
  });
}

reason_status reason_compile(reason_ctx* ctx, const reason_dag* dag,
                             const char* config_json, reason_program** out) {
  if (auto st = need(ctx, dag && out, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::MachineConfig cfg = config_from(config_json);
    auto h = std::make_unique<reason_program_t>();
    h->dag = std::make_unique<reason::Dag>(prepare_for_compile(dag->dag));
    h->prog = reason::compile(*h->dag, cfg);
    *out = h.release();
  });
}

void reason_program_free(reason_program* prog) { delete prog; }

reason_status reason_program_serialize(reason_ctx* ctx, const reason_program* prog,
                                       char** out_json) {
  if (auto st = need(ctx, prog && out_json, "null argument")) return st;
  return guarded(ctx, [&] { *out_json = dup_string(prog->prog.serialize()); });
}

reason_status reason_program_deserialize(reason_ctx* ctx, const char* text,
                                         reason_program** out) {
  if (auto st = need(ctx, text && out, "null argument")) return st;
  return guarded(ctx, [&] {
    auto h = std::make_unique<reason_program_t>();
    h->prog = reason::MappedProgram::deserialize(text);
    *out = h.release();
  });
}

reason_status reason_program_stats(reason_ctx* ctx, const reason_program* prog,
                                   char** out_json) {
  if (auto st = need(ctx, prog && out_json, "null argument")) return st;
  return guarded(ctx, [&] { *out_json = dup_string(prog->prog.stats_json()); });
}

static char* simulate_to_json(const reason_program* prog,
                              const std::unordered_map<reason::NodeId, double>& inputs,
                              int trace) {
  reason::SimOptions opts;
  opts.trace = trace != 0;
  auto [result, rep] = reason::run_probabilistic(prog->prog, inputs, opts);
  json j;
  j["root"] = result.value();
  j["report"] = cycle_report_json(rep);
  if (opts.trace) j["trace"] = rep.trace;
  return dup_string(j.dump(2));
}

reason_status reason_simulate(reason_ctx* ctx, const reason_program* prog,
                              const char* assignment_json, int allow_marginalize,
                              int trace, char** out_json) {
  if (auto st = need(ctx, prog && out_json, "null argument")) return st;
  if (auto st = need(ctx, prog->dag != nullptr,
                     "program has no attached graph; use reason_simulate_values"))
    return st;
  return guarded(ctx, [&] {
    auto inputs = reason::leaf_inputs_for(*prog->dag, assignment_from(assignment_json),
                                          allow_marginalize != 0);
    *out_json = simulate_to_json(prog, inputs, trace);
  });
}

reason_status reason_simulate_values(reason_ctx* ctx, const reason_program* prog,
                                     const char* leaf_values_json, int trace,
                                     char** out_json) {
  if (auto st = need(ctx, prog && leaf_values_json && out_json, "null argument")) return st;
  return guarded(ctx, [&] {
    std::unordered_map<reason::NodeId, double> inputs;
    json j = json::parse(leaf_values_json);
    for (auto& [k, v] : j.items())
      inputs[static_cast<reason::NodeId>(std::stoul(k))] = v.get<double>();
    *out_json = simulate_to_json(prog, inputs, trace);
  });
}

reason_status reason_simulate_sat(reason_ctx* ctx, const char* dimacs_text,
                                  const char* config_json, const char* heuristic,
                                  int trace, char** out_json) {
  if (auto st = need(ctx, dimacs_text && out_json, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::CnfFormula cnf = reason::parse_dimacs(dimacs_text);
    reason::MachineConfig cfg = config_from(config_json);
    reason::DecisionHeuristic h = reason::DecisionHeuristic::StaticOccurrence;
    if (heuristic && *heuristic) {
      std::string hs = heuristic;
      if (hs == "vsids")
        h = reason::DecisionHeuristic::Vsids;
      else if (hs != "static")
        throw reason::ConfigError("unknown decision heuristic: " + hs);
    }
    reason::SimOptions opts;
    opts.trace = trace != 0;
    auto [result, rep] = reason::run_symbolic_sat(cnf, cfg, h, opts);
    json j;
    j["verdict"] = result.verdict == reason::Verdict::SAT ? "SAT" : "UNSAT";
    if (result.verdict == reason::Verdict::SAT) j["model"] = result.model;
    j["decisions"] = result.decisions;
    j["propagations"] = result.propagations;
    j["conflicts"] = result.conflicts;
    j["learned_clauses"] = result.learned_clauses;
    j["deleted_clauses"] = result.deleted_clauses;
    j["report"] = cycle_report_json(rep);
    if (opts.trace) j["trace"] = rep.trace;
    *out_json = dup_string(j.dump(2));
  });
}

reason_status reason_spmspm(reason_ctx* ctx, const char* a_json, const char* b_json,
                            const char* config_json, char** out_json) {
  if (auto st = need(ctx, a_json && b_json && out_json, "null argument")) return st;
  return guarded(ctx, [&] {
    auto [product, rep] =
        reason::run_spmspm(matrix_from(a_json), matrix_from(b_json), config_from(config_json));
    json j;
    j["product"] = matrix_to_json(product);
    j["report"] = cycle_report_json(rep);
    *out_json = dup_string(j.dump(2));
  });
}

long reason_interconnect_latency(const char* topology, long n) {
  if (!topology || n < 1) return -1;
  std::string t = topology;
  reason::Topology topo;
  if (t == "tree")
    topo = reason::Topology::Tree;
  else if (t == "mesh")
    topo = reason::Topology::Mesh;
  else if (t == "bus")
    topo = reason::Topology::Bus;
  else
    return -1;
  return reason::interconnect_latency(topo, n);
}

reason_status reason_pipeline(reason_ctx* ctx, const char* neural_json,
                              const char* symbolic_json, char** out_json) {
  if (auto st = need(ctx, neural_json && symbolic_json && out_json, "null argument"))
    return st;
  return guarded(ctx, [&] {
    auto neural = json::parse(neural_json).get<std::vector<double>>();
    auto symbolic = json::parse(symbolic_json).get<std::vector<double>>();
    reason::PipelineTimeline tl = reason::pipeline_two_level(neural, symbolic);
    json j;
    j["makespan"] = tl.makespan;
    auto& bs = j["batches"] = json::array();
    for (const auto& b : tl.batches)
      bs.push_back({{"start_neural", b.start_neural},
                    {"end_neural", b.end_neural},
                    {"start_sym", b.start_sym},
                    {"end_sym", b.end_sym}});
    *out_json = dup_string(j.dump(2));
  });
}

reason_status reason_host_submit_prob(reason_ctx* ctx, int batch_id,
                                      const reason_dag* dag,
                                      const char* assignment_json,
                                      const char* config_json) {
  if (auto st = need(ctx, dag != nullptr, "null argument")) return st;
  return guarded(ctx, [&] {
    reason::Dag prepared = prepare_for_compile(dag->dag);
    auto inputs = reason::leaf_inputs_for(prepared, assignment_from(assignment_json));
    ctx->host.execute_probabilistic(batch_id, prepared, inputs, config_from(config_json));
  });
}

reason_status reason_host_submit_sat(reason_ctx* ctx, int batch_id,
                                     const char* dimacs_text, const char* config_json) {
  if (auto st = need(ctx, dimacs_text != nullptr, "null argument")) return st;
  return guarded(ctx, [&] {
    ctx->host.execute_sat(batch_id, reason::parse_dimacs(dimacs_text),
                          config_from(config_json));
  });
}

reason_status reason_host_status(reason_ctx* ctx, int batch_id, int blocking,
                                 int* out_status) {
  if (auto st = need(ctx, out_status != nullptr, "null argument")) return st;
  return guarded(ctx, [&] {
    *out_status =
        ctx->host.check_status(batch_id, blocking != 0) == reason::SlotStatus::IDLE ? 0 : 1;
  });
}

reason_status reason_host_result(reason_ctx* ctx, int batch_id, char** out_json) {
  if (auto st = need(ctx, out_json != nullptr, "null argument")) return st;
  return guarded(ctx, [&] { *out_json = dup_string(ctx->host.result(batch_id)); });
}

reason_status reason_generate(reason_ctx* ctx, const char* kind,
                              unsigned long long seed, const char* params_json,
                              char** out_text) {
  if (auto st = need(ctx, kind && out_text, "null argument")) return st;
  return guarded(ctx, [&] {
    json p = (params_json && *params_json) ? json::parse(params_json) : json::object();
    std::string k = kind;
    std::string out;
    if (k == "pc") {
      out = reason::serialize_pc(reason::gen_pc(seed, p.at("num_vars").get<int>(),
                                                p.value("components", 2),
                                                p.value("dead_branch", false)));
    } else if (k == "dataset") {
      auto rows = reason::gen_pc_dataset(seed, p.at("num_vars").get<int>(),
                                         p.at("count").get<size_t>(),
                                         p.value("pin_first", false));
      json j = json::array();
      for (const auto& a : rows) {
        json row = json::object();
        for (const auto& [var, val] : a) row[std::to_string(var)] = val;
        j.push_back(std::move(row));
      }
      out = j.dump();
    } else if (k == "hmm") {
      out = reason::serialize_hmm_json(reason::gen_hmm(seed, p.at("states").get<int>(),
                                                       p.at("alphabet").get<int>(),
                                                       p.at("length").get<int>()));
    } else if (k == "cnf") {
      out = reason::serialize_dimacs(reason::gen_cnf(seed, p.at("num_vars").get<int>(),
                                                     p.at("num_clauses").get<int>(),
                                                     p.value("k", 3)));
    } else if (k == "cnf_mixed") {
      out = reason::serialize_dimacs(
          reason::gen_cnf_mixed(seed, p.at("num_vars").get<int>(),
                                p.at("num_clauses").get<int>(),
                                p.at("binary_fraction").get<double>()));
    } else if (k == "uf20") {
      out = reason::serialize_dimacs(reason::gen_uf20_style(seed));
    } else if (k == "tree") {
      out = reason::serialize_dag(reason::gen_balanced_tree(seed, p.at("depth").get<int>()));
    } else {
      throw reason::ConfigError("unknown generator kind: " + k);
    }
    *out_text = dup_string(out);
  });
}

}  // extern "C"
