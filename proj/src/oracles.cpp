#include "reason/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

namespace reason::oracle {

namespace {

double pc_eval_rec(const PcSpec& spec, uint32_t id, const Assignment& evidence,
                   bool marginalize, std::vector<double>& memo,
                   std::vector<char>& have) {
  if (have[id]) return memo[id];
  const PcNode& nd = spec.nodes[id];
  double v = 0;
  switch (nd.type) {
    case PcNode::Type::Leaf: {
      auto it = evidence.find(nd.var);
      if (it == evidence.end()) {
        if (!marginalize)
          throw OracleError("variable " + std::to_string(nd.var) + " unassigned");
        v = 1.0;
      } else {
        if (it->second < 0 || static_cast<size_t>(it->second) >= nd.table.size())
          throw OracleError("evidence value out of leaf domain");
        v = nd.table[it->second];
      }
      break;
    }
    case PcNode::Type::Sum:
      for (size_t i = 0; i < nd.children.size(); ++i)
        v += nd.weights[i] *
             pc_eval_rec(spec, nd.children[i], evidence, marginalize, memo, have);
      break;
    case PcNode::Type::Product:
      v = 1.0;
      for (uint32_t c : nd.children)
        v *= pc_eval_rec(spec, c, evidence, marginalize, memo, have);
      break;
  }
  memo[id] = v;
  have[id] = 1;
  return v;
}

}  // namespace

double exact_pc_eval(const PcSpec& spec, const Assignment& evidence, bool marginalize) {
  std::vector<double> memo(spec.nodes.size(), 0.0);
  std::vector<char> have(spec.nodes.size(), 0);
  return pc_eval_rec(spec, static_cast<uint32_t>(spec.nodes.size() - 1), evidence,
                     marginalize, memo, have);
}

double exhaustive_pc_marginal(const PcSpec& spec, const Assignment& evidence,
                              const std::vector<int>& domain_sizes) {
  std::vector<int> free_vars;
  for (int v = 0; v < spec.num_vars; ++v)
    if (!evidence.count(v)) free_vars.push_back(v);
  if (free_vars.size() > 20) throw OracleError("exhaustive marginal capped at 20 vars");
  double total = 0;
  Assignment a = evidence;
  std::function<void(size_t)> rec = [&](size_t i) {
    if (i == free_vars.size()) {
      total += exact_pc_eval(spec, a, false);
      return;
    }
    int v = free_vars[i];
    int dom = v < static_cast<int>(domain_sizes.size()) ? domain_sizes[v] : 2;
    for (int val = 0; val < dom; ++val) {
      a[v] = val;
      rec(i + 1);
    }
    a.erase(v);
  };
  rec(0);
  return total;
}

double hmm_forward_loglik(const HmmSpec& hmm) {
  hmm.check();
  const int K = hmm.K, T = hmm.T();
  std::vector<double> alpha(K);
  double loglik = 0;
  for (int k = 0; k < K; ++k) alpha[k] = hmm.pi[k] * hmm.B[k][hmm.obs[0]];
  for (int t = 0;; ++t) {
    double scale = 0;
    for (double a : alpha) scale += a;
    if (scale <= 0) throw ZeroLikelihoodSequence("sequence has zero likelihood");
    loglik += std::log(scale);
    for (double& a : alpha) a /= scale;
    if (t == T - 1) break;
    std::vector<double> next(K, 0.0);
    for (int k = 0; k < K; ++k) {
      double s = 0;
      for (int j = 0; j < K; ++j) s += alpha[j] * hmm.A[j][k];
      next[k] = s * hmm.B[k][hmm.obs[t + 1]];
    }
    alpha = std::move(next);
  }
  return loglik;
}

ViterbiResult hmm_viterbi(const HmmSpec& hmm) {
  hmm.check();
  const int K = hmm.K, T = hmm.T();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  auto lg = [](double p) { return p > 0 ? std::log(p) : -1e300; };
  std::vector<std::vector<double>> delta(T, std::vector<double>(K, kNegInf));
  std::vector<std::vector<int>> back(T, std::vector<int>(K, 0));
  for (int k = 0; k < K; ++k)
    delta[0][k] = lg(hmm.pi[k]) + lg(hmm.B[k][hmm.obs[0]]);
  for (int t = 1; t < T; ++t) {
    for (int k = 0; k < K; ++k) {
      double best = kNegInf;
      int arg = 0;
      for (int j = 0; j < K; ++j) {
        double cand = delta[t - 1][j] + lg(hmm.A[j][k]);
        if (cand > best) { best = cand; arg = j; }
      }
      delta[t][k] = best + lg(hmm.B[k][hmm.obs[t]]);
      back[t][k] = arg;
    }
  }
  ViterbiResult res;
  res.path.resize(T);
  double best = kNegInf;
  for (int k = 0; k < K; ++k)
    if (delta[T - 1][k] > best) { best = delta[T - 1][k]; res.path[T - 1] = k; }
  res.logprob = best;
  for (int t = T - 1; t > 0; --t) res.path[t - 1] = back[t][res.path[t]];
  return res;
}

namespace {

double path_prob(const HmmSpec& hmm, const std::vector<int>& z) {
  double p = hmm.pi[z[0]] * hmm.B[z[0]][hmm.obs[0]];
  for (size_t t = 1; t < z.size(); ++t)
    p *= hmm.A[z[t - 1]][z[t]] * hmm.B[z[t]][hmm.obs[t]];
  return p;
}

void enumerate_paths(const HmmSpec& hmm,
                     const std::function<void(const std::vector<int>&, double)>& fn) {
  const int K = hmm.K, T = hmm.T();
  double total_paths = std::pow(static_cast<double>(K), T);
  if (total_paths > 4096.0) throw OracleError("path enumeration capped at 4096 paths");
  std::vector<int> z(T, 0);
  while (true) {
    fn(z, path_prob(hmm, z));
    int t = T - 1;
    while (t >= 0 && ++z[t] == K) z[t--] = 0;
    if (t < 0) break;
  }
}

}  // namespace

double hmm_path_enumeration(const HmmSpec& hmm) {
  hmm.check();
  double total = 0;
  enumerate_paths(hmm, [&](const std::vector<int>&, double p) { total += p; });
  return total;
}

PathPosteriors hmm_path_posteriors(const HmmSpec& hmm) {
  hmm.check();
  const int K = hmm.K, T = hmm.T();
  PathPosteriors post;
  post.gamma.assign(T, std::vector<double>(K, 0.0));
  post.xi.assign(std::max(0, T - 1),
                 std::vector<std::vector<double>>(K, std::vector<double>(K, 0.0)));
  double total = 0;
  enumerate_paths(hmm, [&](const std::vector<int>& z, double p) {
    total += p;
    for (int t = 0; t < T; ++t) post.gamma[t][z[t]] += p;
    for (int t = 0; t + 1 < T; ++t) post.xi[t][z[t]][z[t + 1]] += p;
  });
  if (total <= 0) throw ZeroLikelihoodSequence("sequence has zero likelihood");
  for (auto& row : post.gamma)
    for (double& g : row) g /= total;
  for (auto& mat : post.xi)
    for (auto& row : mat)
      for (double& x : row) x /= total;
  return post;
}

namespace {

enum class LitState { Unset, True, False };

struct DpllState {
  std::vector<std::vector<Lit>> clauses;
  int num_vars;
};

// Returns nullopt on conflict; otherwise the simplified clause set.
std::optional<std::vector<std::vector<Lit>>> assign(
    const std::vector<std::vector<Lit>>& clauses, Lit l) {
  std::vector<std::vector<Lit>> out;
  out.reserve(clauses.size());
  for (const auto& c : clauses) {
    bool sat = false;
    std::vector<Lit> reduced;
    for (Lit x : c) {
      if (x == l) { sat = true; break; }
      if (x != -l) reduced.push_back(x);
    }
    if (sat) continue;
    if (reduced.empty()) return std::nullopt;
    out.push_back(std::move(reduced));
  }
  return out;
}

bool dpll(std::vector<std::vector<Lit>> clauses, std::vector<int>& model) {
  // Unit propagation.
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& c : clauses) {
      if (c.size() == 1) {
        Lit u = c[0];
        auto next = assign(clauses, u);
        if (!next) return false;
        model[std::abs(u)] = u > 0;
        clauses = std::move(*next);
        changed = true;
        break;
      }
    }
  }
  if (clauses.empty()) return true;
  // Pure literal elimination.
  {
    std::map<int, int> polarity;  // var -> bitmask (1 pos, 2 neg)
    for (const auto& c : clauses)
      for (Lit l : c) polarity[std::abs(l)] |= l > 0 ? 1 : 2;
    for (const auto& [v, pol] : polarity) {
      if (pol == 1 || pol == 2) {
        Lit u = pol == 1 ? v : -v;
        auto next = assign(clauses, u);
        if (!next) return false;  // cannot happen for a pure literal
        model[v] = u > 0;
        return dpll(std::move(*next), model);
      }
    }
  }
  // Branch on the lowest variable present.
  Lit branch = clauses[0][0];
  for (const auto& c : clauses)
    for (Lit l : c) if (std::abs(l) < std::abs(branch)) branch = l;
  int v = std::abs(branch);
  for (Lit u : {static_cast<Lit>(v), static_cast<Lit>(-v)}) {
    auto next = assign(clauses, u);
    if (next) {
      std::vector<int> saved = model;
      model[v] = u > 0;
      if (dpll(std::move(*next), model)) return true;
      model = std::move(saved);
    }
  }
  return false;
}

}  // namespace

SatOracleResult reference_sat(const CnfFormula& cnf) {
  SatOracleResult res;
  res.model.assign(cnf.num_vars + 1, 0);
  res.sat = dpll(cnf.clauses, res.model);
  if (!res.sat) res.model.clear();
  return res;
}

std::vector<uint64_t> enumerate_models(const CnfFormula& cnf) {
  if (cnf.num_vars > 24) throw OracleError("model enumeration capped at 24 vars");
  std::vector<uint64_t> models;
  const uint64_t limit = 1ull << cnf.num_vars;
  std::vector<int> model(cnf.num_vars + 1, 0);
  for (uint64_t m = 0; m < limit; ++m) {
    for (int v = 1; v <= cnf.num_vars; ++v) model[v] = (m >> (v - 1)) & 1;
    if (cnf_satisfied(cnf, model)) models.push_back(m);
  }
  return models;
}

Matrix dense_matmul(const Matrix& a, const Matrix& b) {
  if (a.empty() || b.empty() || a[0].size() != b.size())
    throw DimensionMismatch("matmul dimensions do not conform");
  const size_t m = a.size(), k = b.size(), n = b[0].size();
  Matrix c(m, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < m; ++i)
    for (size_t kk = 0; kk < k; ++kk)
      for (size_t j = 0; j < n; ++j) c[i][j] += a[i][kk] * b[kk][j];
  return c;
}

}  // namespace reason::oracle
