#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include <json.hpp>

#include "reason/capi.h"

using nlohmann::json;

namespace {

struct Ctx {
  reason_ctx* c;
  Ctx() : c(reason_ctx_create()) {}
  ~Ctx() { reason_ctx_destroy(c); }
};

std::string take(char* p) {
  REQUIRE(p != nullptr);
  std::string s = p;
  reason_free(p);
  return s;
}

std::string gen(reason_ctx* c, const char* kind, unsigned long long seed,
                const char* params) {
  char* out = nullptr;
  REQUIRE(reason_generate(c, kind, seed, params, &out) == REASON_OK);
  return take(out);
}

}  // namespace

TEST_CASE("context lifecycle and error reporting") {
  Ctx ctx;
  CHECK(std::string(reason_last_error(ctx.c)).empty());
  reason_dag* d = nullptr;
  CHECK(reason_dag_from_dimacs(ctx.c, "p cnf x\n", &d) == REASON_ERR_PARSE);
  CHECK(!std::string(reason_last_error(ctx.c)).empty());
  CHECK(reason_dag_parse(ctx.c, nullptr, &d) == REASON_ERR_INVALID_ARGUMENT);
  CHECK(std::string(reason_version()).size() > 0);
}

TEST_CASE("pc pipeline end to end through the C surface") {
  Ctx ctx;
  std::string pc = gen(ctx.c, "pc", 3, "{\"num_vars\":8}");
  reason_dag* d = nullptr;
  REQUIRE(reason_dag_from_pc_text(ctx.c, pc.c_str(), &d) == REASON_OK);

  char* stats = nullptr;
  REQUIRE(reason_dag_stats(ctx.c, d, &stats) == REASON_OK);
  json js = json::parse(take(stats));
  CHECK(js.at("kernel") == "PC");
  CHECK(js.at("smooth") == true);
  CHECK(js.at("decomposable") == true);

  char* validation = nullptr;
  REQUIRE(reason_dag_validate(ctx.c, d, &validation) == REASON_OK);
  CHECK(json::parse(take(validation)).at("ok") == true);

  double direct = 0;
  REQUIRE(reason_dag_evaluate(ctx.c, d, "{}", 1, &direct) == REASON_OK);

  reason_program* prog = nullptr;
  REQUIRE(reason_compile(ctx.c, d, "", &prog) == REASON_OK);
  char* out = nullptr;
  REQUIRE(reason_simulate(ctx.c, prog, "{}", 1, 0, &out) == REASON_OK);
  json r = json::parse(take(out));
  CHECK(r.at("root").get<double>() == doctest::Approx(direct).epsilon(1e-9));
  CHECK(r.at("report").at("raw_violations") == 0);

  char* ser = nullptr;
  REQUIRE(reason_program_serialize(ctx.c, prog, &ser) == REASON_OK);
  std::string prog_text = take(ser);
  reason_program* prog2 = nullptr;
  REQUIRE(reason_program_deserialize(ctx.c, prog_text.c_str(), &prog2) == REASON_OK);
  char* ser2 = nullptr;
  REQUIRE(reason_program_serialize(ctx.c, prog2, &ser2) == REASON_OK);
  CHECK(take(ser2) == prog_text);

  // a deserialized program has no graph attached
  CHECK(reason_simulate(ctx.c, prog2, "{}", 1, 0, &out) ==
        REASON_ERR_INVALID_ARGUMENT);

  reason_program_free(prog2);
  reason_program_free(prog);
  reason_dag_free(d);
}

TEST_CASE("sat and literal pruning through the C surface") {
  Ctx ctx;
  std::string cnf = gen(ctx.c, "cnf_mixed", 9,
                        "{\"num_vars\":12,\"num_clauses\":40,\"binary_fraction\":0.4}");
  char* out = nullptr;
  REQUIRE(reason_simulate_sat(ctx.c, cnf.c_str(), "", "static", 0, &out) == REASON_OK);
  json r = json::parse(take(out));
  CHECK((r.at("verdict") == "SAT" || r.at("verdict") == "UNSAT"));

  char* pruned = nullptr;
  char* report = nullptr;
  REQUIRE(reason_prune_literals(ctx.c, cnf.c_str(), &pruned, &report) == REASON_OK);
  std::string pruned_text = take(pruned);
  json rep = json::parse(take(report));
  CHECK(rep.contains("drops"));
  char* out2 = nullptr;
  REQUIRE(reason_simulate_sat(ctx.c, pruned_text.c_str(), "", "vsids", 0, &out2) ==
          REASON_OK);
  CHECK(json::parse(take(out2)).at("verdict") == r.at("verdict"));

  CHECK(reason_simulate_sat(ctx.c, cnf.c_str(), "", "bogus", 0, &out) ==
        REASON_ERR_PARSE);
}

TEST_CASE("flow pruning through the C surface") {
  Ctx ctx;
  std::string pc = gen(ctx.c, "pc", 11, "{\"num_vars\":8,\"dead_branch\":true}");
  std::string dataset =
      gen(ctx.c, "dataset", 12, "{\"num_vars\":8,\"count\":32,\"pin_first\":true}");
  reason_dag* d = nullptr;
  REQUIRE(reason_dag_from_pc_text(ctx.c, pc.c_str(), &d) == REASON_OK);
  reason_dag* pruned = nullptr;
  char* report = nullptr;
  REQUIRE(reason_prune_flow(ctx.c, d, dataset.c_str(), "{\"edge_count\":4}",
                            &pruned, &report) == REASON_OK);
  json rep = json::parse(take(report));
  CHECK(rep.at("edges_removed").size() == 4);
  CHECK(rep.at("measured_delta_loglik").get<double>() <=
        rep.at("bound_delta_loglik").get<double>() + 1e-9);
  reason_dag_free(pruned);
  reason_dag_free(d);
}

TEST_CASE("hmm pruning through the C surface") {
  Ctx ctx;
  std::string hmm = gen(ctx.c, "hmm", 21, "{\"states\":3,\"alphabet\":3,\"length\":6}");
  json obs = json::parse(hmm).at("obs");
  json dataset = json::array({obs, obs});
  char* out_hmm = nullptr;
  char* report = nullptr;
  REQUIRE(reason_prune_hmm(ctx.c, hmm.c_str(), dataset.dump().c_str(), 1e-4,
                           &out_hmm, &report) == REASON_OK);
  CHECK(json::parse(take(out_hmm)).contains("A"));
  CHECK(json::parse(take(report)).contains("transitions_pruned"));
}

TEST_CASE("spmspm, interconnect and pipeline through the C surface") {
  Ctx ctx;
  std::string m = R"({"rows":2,"cols":2,"entries":[[0,0,1.0],[1,1,1.0]]})";
  char* out = nullptr;
  REQUIRE(reason_spmspm(ctx.c, m.c_str(), m.c_str(), "", &out) == REASON_OK);
  json r = json::parse(take(out));
  CHECK(r.at("product").at("entries").size() == 2);

  CHECK(reason_interconnect_latency("tree", 64) == 6);
  CHECK(reason_interconnect_latency("mesh", 64) == 14);
  CHECK(reason_interconnect_latency("bus", 64) == 63);
  CHECK(reason_interconnect_latency("ring", 64) == -1);

  REQUIRE(reason_pipeline(ctx.c, "[3,3]", "[3,3]", &out) == REASON_OK);
  CHECK(json::parse(take(out)).at("makespan").get<double>() == doctest::Approx(9.0));
}

TEST_CASE("host handshake through the C surface") {
  Ctx ctx;
  std::string cnf = gen(ctx.c, "cnf", 31, "{\"num_vars\":10,\"num_clauses\":40}");
  REQUIRE(reason_host_submit_sat(ctx.c, 0, cnf.c_str(), "") == REASON_OK);
  int status = -1;
  REQUIRE(reason_host_status(ctx.c, 0, 1, &status) == REASON_OK);
  CHECK(status == 0);
  char* out = nullptr;
  REQUIRE(reason_host_result(ctx.c, 0, &out) == REASON_OK);
  json r = json::parse(take(out));
  CHECK(r.at("mode") == "sat");
}

TEST_CASE("generators are deterministic") {
  Ctx ctx;
  CHECK(gen(ctx.c, "pc", 5, "{\"num_vars\":6}") == gen(ctx.c, "pc", 5, "{\"num_vars\":6}"));
  CHECK(gen(ctx.c, "uf20", 1, "{}").substr(0, 11) == "p cnf 20 91");
  reason_dag* d = nullptr;
  std::string tree = gen(ctx.c, "tree", 2, "{\"depth\":4}");
  REQUIRE(reason_dag_parse(ctx.c, tree.c_str(), &d) == REASON_OK);
  reason_dag_free(d);
  char* out = nullptr;
  CHECK(reason_generate(ctx.c, "nope", 1, "{}", &out) == REASON_ERR_PARSE);
}
