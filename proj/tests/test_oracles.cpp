#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reason/gen.hpp"
#include "reason/logic.hpp"
#include "reason/oracles.hpp"
#include "reason/prob.hpp"

using namespace reason;

TEST_CASE("exact_pc_eval: leaf lookup") {
  PcSpec s = parse_pc("pc v1 vars=1\n0 L 0 0.3 0.7\n");
  CHECK(oracle::exact_pc_eval(s, {{0, 1}}) == doctest::Approx(0.7));
}

TEST_CASE("exact_pc_eval: full marginal of generated circuit matches explicit sum") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    PcSpec s = gen_pc(seed, 8);
    double marginal = oracle::exact_pc_eval(s, {}, true);
    double explicit_sum =
        oracle::exhaustive_pc_marginal(s, {}, std::vector<int>(8, 2));
    CHECK(marginal == doctest::Approx(explicit_sum).epsilon(1e-12));
  }
}

TEST_CASE("hmm_forward_loglik: single state") {
  HmmSpec h;
  h.K = 1;
  h.V = 2;
  h.pi = {1.0};
  h.A = {{1.0}};
  h.B = {{0.25, 0.75}};
  h.obs = {0, 1, 1};
  double want = std::log(0.25) + 2 * std::log(0.75);
  CHECK(oracle::hmm_forward_loglik(h) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("hmm_forward_loglik: equals path enumeration") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    HmmSpec h = gen_hmm(seed, 3, 3, 4);
    CHECK(oracle::hmm_forward_loglik(h) ==
          doctest::Approx(std::log(oracle::hmm_path_enumeration(h))).epsilon(1e-9));
  }
}

TEST_CASE("hmm_viterbi: equals argmax over all paths") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    HmmSpec h = gen_hmm(seed, 2, 2, 3);
    oracle::ViterbiResult v = oracle::hmm_viterbi(h);
    // brute force over all 8 paths
    double best = -1e300;
    std::vector<int> best_path;
    int K = h.K, T = h.T();
    for (int code = 0; code < 8; ++code) {
      std::vector<int> path(T);
      int c = code;
      for (int t = 0; t < T; ++t) {
        path[t] = c % K;
        c /= K;
      }
      double lp = std::log(h.pi[path[0]]) + std::log(h.B[path[0]][h.obs[0]]);
      for (int t = 1; t < T; ++t)
        lp += std::log(h.A[path[t - 1]][path[t]]) + std::log(h.B[path[t]][h.obs[t]]);
      if (lp > best) {
        best = lp;
        best_path = path;
      }
    }
    CHECK(v.logprob == doctest::Approx(best).epsilon(1e-9));
    CHECK(v.path == best_path);
  }
}

TEST_CASE("hmm_path_posteriors: rows normalize") {
  HmmSpec h = gen_hmm(4, 3, 2, 4);
  oracle::PathPosteriors p = oracle::hmm_path_posteriors(h);
  for (const auto& row : p.gamma) {
    double s = 0;
    for (double x : row) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("reference_sat: trivial verdicts") {
  CnfFormula empty;
  empty.num_vars = 0;
  CHECK(oracle::reference_sat(empty).sat);
  CHECK(!oracle::reference_sat(parse_dimacs("p cnf 1 2\n1 0\n-1 0\n")).sat);
}

TEST_CASE("reference_sat: model satisfies the formula") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CnfFormula f = gen_cnf(seed, 12, 40, 3);
    oracle::SatOracleResult r = oracle::reference_sat(f);
    if (r.sat) CHECK(cnf_satisfied(f, r.model));
  }
}

TEST_CASE("reference_sat: agrees with exhaustive enumeration") {
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    CnfFormula f = gen_cnf(seed, 10, 43, 3);  // near ratio 4.26
    bool dpll = oracle::reference_sat(f).sat;
    bool exhaustive = !oracle::enumerate_models(f).empty();
    CHECK(dpll == exhaustive);
  }
}

TEST_CASE("enumerate_models: hand-checkable set") {
  CnfFormula f = parse_dimacs("p cnf 2 2\n1 2 0\n-1 2 0\n");
  // models: any assignment with x2 = 1
  auto models = oracle::enumerate_models(f);
  CHECK(models == std::vector<uint64_t>{0b10, 0b11});
}

TEST_CASE("dense_matmul: identity and random") {
  oracle::Matrix i2 = {{1, 0}, {0, 1}};
  oracle::Matrix a = {{1, 2}, {3, 4}};
  CHECK(oracle::dense_matmul(i2, a) == a);
  CHECK(oracle::dense_matmul(a, i2) == a);
  oracle::Matrix one = {{3}};
  CHECK(oracle::dense_matmul(one, one)[0][0] == 9);

  // reordered-loop accumulation must agree exactly
  Rng rng(77);
  oracle::Matrix x(16, std::vector<double>(16)), y = x;
  for (auto& row : x)
    for (double& v : row) v = rng.uniform();
  for (auto& row : y)
    for (double& v : row) v = rng.uniform();
  oracle::Matrix z = oracle::dense_matmul(x, y);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      double acc = 0;
      for (int k = 0; k < 16; ++k) acc += x[i][k] * y[k][j];
      CHECK(z[i][j] == acc);
    }
}
