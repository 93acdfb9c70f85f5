#include "reason/prune.hpp"

#include <algorithm>
#include <cmath>

#include "reason/oracles.hpp"

#include <json.hpp>

namespace reason {

ImplicationGraph build_implication_graph(const CnfFormula& cnf) {
  ImplicationGraph g;
  g.num_vars = cnf.num_vars;
  g.adj.assign(2 * static_cast<size_t>(cnf.num_vars), {});
  for (const auto& c : cnf.clauses) {
    if (c.size() != 2) continue;
    // (l v l') induces !l -> l' and !l' -> l.
    g.adj[lit_index(-c[0])].push_back(lit_index(c[1]));
    g.adj[lit_index(-c[1])].push_back(lit_index(c[0]));
  }
  return g;
}

bool ImplicationGraph::implies(Lit from, Lit to) const {
  uint32_t src = lit_index(from), dst = lit_index(to);
  std::vector<char> seen(adj.size(), 0);
  std::vector<uint32_t> stack;
  for (uint32_t s : adj[src]) {
    if (s == dst) return true;
    if (!seen[s]) { seen[s] = 1; stack.push_back(s); }
  }
  while (!stack.empty()) {
    uint32_t u = stack.back();
    stack.pop_back();
    for (uint32_t v : adj[u]) {
      if (v == dst) return true;
      if (!seen[v]) { seen[v] = 1; stack.push_back(v); }
    }
  }
  return false;
}

namespace {

// Memoized forward reachability over literal vertices.
struct Reach {
  const ImplicationGraph& g;
  std::vector<std::vector<char>> memo;  // memo[src] = reachable set, lazily built
  std::vector<char> built;

  explicit Reach(const ImplicationGraph& graph)
      : g(graph), memo(graph.adj.size()), built(graph.adj.size(), 0) {}

  const std::vector<char>& from(uint32_t src) {
    if (built[src]) return memo[src];
    std::vector<char>& seen = memo[src];
    seen.assign(g.adj.size(), 0);
    std::vector<uint32_t> stack;
    for (uint32_t s : g.adj[src])
      if (!seen[s]) { seen[s] = 1; stack.push_back(s); }
    while (!stack.empty()) {
      uint32_t u = stack.back();
      stack.pop_back();
      for (uint32_t v : g.adj[u])
        if (!seen[v]) { seen[v] = 1; stack.push_back(v); }
    }
    built[src] = 1;
    return seen;
  }
};

}  // namespace

std::pair<CnfFormula, PruneLog> prune_hidden_literals(const CnfFormula& cnf) {
  CnfFormula out = cnf;
  PruneLog log;
  bool changed = true;
  while (changed) {
    changed = false;
    log.rounds++;
    ImplicationGraph g = build_implication_graph(out);
    Reach reach(g);
    for (size_t ci = 0; ci < out.clauses.size(); ++ci) {
      auto& clause = out.clauses[ci];
      bool local = true;
      while (local && clause.size() > 1) {
        local = false;
        for (size_t i = 0; i < clause.size() && !local; ++i) {
          const auto& r = reach.from(lit_index(clause[i]));
          for (size_t j = 0; j < clause.size(); ++j) {
            if (i == j) continue;
            if (r[lit_index(clause[j])]) {
              // clause[i] => clause[j]: the antecedent is redundant.
              log.drops.push_back({ci, clause[i], clause[j]});
              clause.erase(clause.begin() + static_cast<long>(i));
              local = true;
              changed = true;
              break;
            }
          }
        }
      }
    }
    // Shrinking a clause to width 2 adds implication edges; rerun.
  }
  return {std::move(out), std::move(log)};
}

FlowStats compute_flows(const Dag& dag, const std::vector<Assignment>& dataset) {
  if (dataset.empty()) throw EmptyDataset("flow computation needs samples");
  FlowStats stats;
  std::vector<std::vector<size_t>> edge_index(dag.nodes.size());
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    const DagNode& nd = dag.nodes[id];
    if (nd.kind != NodeKind::Sum) continue;
    edge_index[id].resize(nd.children.size());
    for (size_t i = 0; i < nd.children.size(); ++i) {
      edge_index[id][i] = stats.edges.size();
      stats.edges.push_back({id, i});
    }
  }
  stats.cumulative.assign(stats.edges.size(), 0.0);

  // Reverse topo order for the top-down pass.
  std::vector<NodeId> down(dag.topo.rbegin(), dag.topo.rend());
  std::vector<double> flow(dag.nodes.size(), 0.0);
  for (const Assignment& x : dataset) {
    EvalResult ev = evaluate(dag, x);
    bool nonzero = false;
    for (NodeId r : dag.roots)
      if (ev.node_values[r] > 0) nonzero = true;
    if (!nonzero) {
      stats.zero_probability_skipped++;
      continue;
    }
    stats.samples_used++;
    std::fill(flow.begin(), flow.end(), 0.0);
    for (NodeId r : dag.roots) flow[r] = 1.0;
    for (NodeId id : down) {
      const DagNode& nd = dag.nodes[id];
      double fn = flow[id];
      if (nd.kind == NodeKind::Sum) {
        double pn = ev.node_values[id];
        for (size_t i = 0; i < nd.children.size(); ++i) {
          double f = 0;
          if (pn > 0 && fn > 0)
            f = nd.weights[i] * ev.node_values[nd.children[i]] / pn * fn;
          flow[nd.children[i]] += f;
          stats.cumulative[edge_index[id][i]] += f;
        }
      } else if (nd.kind == NodeKind::Product) {
        for (NodeId c : nd.children) flow[c] += fn;
      }
    }
  }
  if (stats.samples_used == 0)
    throw EmptyDataset("all samples had zero probability");
  return stats;
}

namespace {

double avg_loglik(const Dag& dag, const std::vector<Assignment>& dataset) {
  double total = 0;
  size_t used = 0;
  for (const Assignment& x : dataset) {
    double p = evaluate(dag, x).value();
    if (p <= 0) {
      total += -1e300;  // pruned a live branch; sentinel keeps ordering honest
    } else {
      total += std::log(p);
    }
    used++;
  }
  return used ? total / static_cast<double>(used) : 0.0;
}

}  // namespace

std::string PruneReport::to_json() const {
  nlohmann::json j;
  auto edges = nlohmann::json::array();
  for (const auto& e : edges_removed)
    edges.push_back({{"parent", e.parent}, {"child_index", e.child_index}});
  j["edges_removed"] = edges;
  j["bound_delta_loglik"] = bound_delta_loglik;
  j["measured_delta_loglik"] = measured_delta_loglik;
  j["size_before"] = {{"nodes", nodes_before}, {"edges", edges_before}};
  j["size_after"] = {{"nodes", nodes_after}, {"edges", edges_after}};
  return j.dump(2);
}

FlowPruneResult prune_low_flow(const Dag& dag, const FlowStats& stats,
                               const PruneBudget& budget,
                               const std::vector<Assignment>& dataset) {
  if (dataset.empty()) throw EmptyDataset("prune needs the flow dataset");
  // Order edges by (cumulative flow, parent id, child index).
  std::vector<size_t> order(stats.edges.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (stats.cumulative[a] != stats.cumulative[b])
      return stats.cumulative[a] < stats.cumulative[b];
    if (stats.edges[a].parent != stats.edges[b].parent)
      return stats.edges[a].parent < stats.edges[b].parent;
    return stats.edges[a].child_index < stats.edges[b].child_index;
  });

  std::vector<size_t> selected;
  std::vector<size_t> live_children(dag.nodes.size(), 0);
  for (NodeId id = 0; id < dag.nodes.size(); ++id)
    if (dag.nodes[id].kind == NodeKind::Sum)
      live_children[id] = dag.nodes[id].children.size();
  size_t want = budget.edge_count >= 0 ? static_cast<size_t>(budget.edge_count)
                                       : stats.edges.size();
  for (size_t i : order) {
    if (selected.size() >= want) break;
    if (budget.edge_count < 0 && stats.cumulative[i] > budget.flow_threshold) break;
    const SumEdge& e = stats.edges[i];
    if (live_children[e.parent] <= 1) {
      // The last edge of a Sum node is unprunable.
      if (budget.edge_count >= 0)
        throw BudgetTooLarge("budget would empty Sum node " + std::to_string(e.parent));
      continue;
    }
    live_children[e.parent]--;
    selected.push_back(i);
  }

  FlowPruneResult res;
  res.report.nodes_before = dag.nodes.size();
  res.report.edges_before = dag.edge_count();
  double before = avg_loglik(dag, dataset);

  // Remove selected edges.
  std::vector<std::vector<char>> removed(dag.nodes.size());
  for (size_t i : selected) {
    const SumEdge& e = stats.edges[i];
    if (removed[e.parent].empty())
      removed[e.parent].assign(dag.nodes[e.parent].children.size(), 0);
    removed[e.parent][e.child_index] = 1;
    res.report.edges_removed.push_back(e);
    res.report.bound_delta_loglik +=
        stats.cumulative[i] / static_cast<double>(stats.samples_used);
  }
  Dag pruned;
  pruned.kernel = dag.kernel;
  pruned.nodes = dag.nodes;
  pruned.roots = dag.roots;
  for (NodeId id = 0; id < pruned.nodes.size(); ++id) {
    if (removed[id].empty()) continue;
    DagNode& nd = pruned.nodes[id];
    std::vector<NodeId> ch;
    std::vector<double> w;
    for (size_t i = 0; i < nd.children.size(); ++i) {
      if (removed[id][i]) continue;
      ch.push_back(nd.children[i]);
      w.push_back(nd.weights[i]);
    }
    nd.children = std::move(ch);
    nd.weights = std::move(w);  // weights are NOT renormalized
  }
  // Drop subgraphs orphaned by edge removal.
  std::vector<char> reach(pruned.nodes.size(), 0);
  std::vector<NodeId> stack(pruned.roots.begin(), pruned.roots.end());
  for (NodeId r : pruned.roots) reach[r] = 1;
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    for (NodeId c : pruned.nodes[id].children)
      if (!reach[c]) { reach[c] = 1; stack.push_back(c); }
  }
  res.remap.assign(dag.nodes.size(), kNoNode);
  Dag compact;
  compact.kernel = pruned.kernel;
  for (NodeId id = 0; id < pruned.nodes.size(); ++id) {
    if (!reach[id]) continue;
    res.remap[id] = static_cast<NodeId>(compact.nodes.size());
    compact.nodes.push_back(pruned.nodes[id]);
  }
  for (auto& nd : compact.nodes)
    for (NodeId& c : nd.children) c = res.remap[c];
  for (NodeId r : pruned.roots) compact.roots.push_back(res.remap[r]);
  for (const auto& [id, lbl] : dag.labels)
    if (res.remap[id] != kNoNode) compact.labels[res.remap[id]] = lbl;
  finalize(compact);

  res.report.measured_delta_loglik = before - avg_loglik(compact, dataset);
  res.report.nodes_after = compact.nodes.size();
  res.report.edges_after = compact.edge_count();
  res.dag = std::move(compact);
  return res;
}

ForwardBackwardResult forward_backward(const HmmSpec& hmm, const std::vector<int>& obs) {
  HmmSpec h = hmm;
  h.obs = obs;
  h.check();
  const int K = h.K, T = h.T();
  ForwardBackwardResult res;
  std::vector<std::vector<double>> alpha(T, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> beta(T, std::vector<double>(K, 0.0));
  std::vector<double> scale(T, 0.0);
  for (int k = 0; k < K; ++k) alpha[0][k] = h.pi[k] * h.B[k][obs[0]];
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      for (int k = 0; k < K; ++k) {
        double s = 0;
        for (int j = 0; j < K; ++j) s += alpha[t - 1][j] * h.A[j][k];
        alpha[t][k] = s * h.B[k][obs[t]];
      }
    }
    for (int k = 0; k < K; ++k) scale[t] += alpha[t][k];
    if (scale[t] <= 0)
      throw oracle::ZeroLikelihoodSequence("sequence has zero likelihood");
    for (int k = 0; k < K; ++k) alpha[t][k] /= scale[t];
    res.loglik += std::log(scale[t]);
  }
  for (int k = 0; k < K; ++k) beta[T - 1][k] = 1.0;
  for (int t = T - 2; t >= 0; --t) {
    for (int j = 0; j < K; ++j) {
      double s = 0;
      for (int k = 0; k < K; ++k)
        s += h.A[j][k] * h.B[k][obs[t + 1]] * beta[t + 1][k];
      beta[t][j] = s / scale[t + 1];
    }
  }
  res.gamma.assign(T, std::vector<double>(K, 0.0));
  for (int t = 0; t < T; ++t) {
    double norm = 0;
    for (int k = 0; k < K; ++k) {
      res.gamma[t][k] = alpha[t][k] * beta[t][k];
      norm += res.gamma[t][k];
    }
    for (int k = 0; k < K; ++k) res.gamma[t][k] /= norm;
  }
  res.xi.assign(std::max(0, T - 1),
                std::vector<std::vector<double>>(K, std::vector<double>(K, 0.0)));
  for (int t = 0; t + 1 < T; ++t) {
    double norm = 0;
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k) {
        double v = alpha[t][j] * h.A[j][k] * h.B[k][obs[t + 1]] * beta[t + 1][k];
        res.xi[t][j][k] = v;
        norm += v;
      }
    for (int j = 0; j < K; ++j)
      for (int k = 0; k < K; ++k) res.xi[t][j][k] /= norm;
  }
  return res;
}

std::string HmmPruneReport::to_json() const {
  nlohmann::json j;
  j["transitions_pruned"] = transitions_pruned;
  j["emissions_pruned"] = emissions_pruned;
  j["rows_left_untouched"] = rows_left_untouched;
  j["delta_avg_loglik"] = delta_avg_loglik;
  return j.dump(2);
}

std::pair<HmmSpec, HmmPruneReport> hmm_posterior_prune(
    const HmmSpec& hmm, const std::vector<std::vector<int>>& dataset, double eps) {
  if (dataset.empty()) throw EmptyDataset("hmm pruning needs sequences");
  const int K = hmm.K, V = hmm.V;
  std::vector<std::vector<double>> trans_usage(K, std::vector<double>(K, 0.0));
  std::vector<std::vector<double>> emit_usage(K, std::vector<double>(V, 0.0));
  double before = 0;
  for (const auto& obs : dataset) {
    ForwardBackwardResult fb = forward_backward(hmm, obs);
    before += fb.loglik;
    for (const auto& mat : fb.xi)
      for (int j = 0; j < K; ++j)
        for (int k = 0; k < K; ++k) trans_usage[j][k] += mat[j][k];
    for (size_t t = 0; t < obs.size(); ++t)
      for (int k = 0; k < K; ++k) emit_usage[k][obs[t]] += fb.gamma[t][k];
  }
  const double n = static_cast<double>(dataset.size());
  before /= n;

  HmmSpec out = hmm;
  HmmPruneReport rep;
  auto prune_rows = [&](std::vector<std::vector<double>>& m,
                        const std::vector<std::vector<double>>& usage, int cols,
                        int& count) {
    if (eps <= 0) return;
    for (int r = 0; r < K; ++r) {
      std::vector<char> kill(cols, 0);
      double surviving = 0;
      for (int c = 0; c < cols; ++c) {
        if (m[r][c] > 0 && usage[r][c] / n < eps) kill[c] = 1;
        else surviving += m[r][c];
      }
      if (surviving <= 0) {
        bool any = std::any_of(kill.begin(), kill.end(), [](char k) { return k; });
        if (any) rep.rows_left_untouched++;
        continue;
      }
      for (int c = 0; c < cols; ++c) {
        if (!kill[c]) continue;
        m[r][c] = 0;
        count++;
      }
      // Renormalize the affected row.
      double s = 0;
      for (int c = 0; c < cols; ++c) s += m[r][c];
      for (int c = 0; c < cols; ++c) m[r][c] /= s;
    }
  };
  prune_rows(out.A, trans_usage, K, rep.transitions_pruned);
  prune_rows(out.B, emit_usage, V, rep.emissions_pruned);

  double after = 0;
  for (const auto& obs : dataset) {
    HmmSpec h = out;
    h.obs = obs;
    after += oracle::hmm_forward_loglik(h);
  }
  after /= n;
  rep.delta_avg_loglik = before - after;
  return {std::move(out), rep};
}

}  // namespace reason
