#include "reason/gen.hpp"

#include <algorithm>
#include <set>

#include "reason/oracles.hpp"

namespace reason {

namespace {

uint32_t add_leaf(PcSpec& spec, int var, double p0) {
  PcNode n;
  n.type = PcNode::Type::Leaf;
  n.var = var;
  n.table = {p0, 1.0 - p0};
  spec.nodes.push_back(std::move(n));
  return static_cast<uint32_t>(spec.nodes.size() - 1);
}

uint32_t add_sum(PcSpec& spec, std::vector<uint32_t> children, std::vector<double> weights) {
  PcNode n;
  n.type = PcNode::Type::Sum;
  n.children = std::move(children);
  n.weights = std::move(weights);
  spec.nodes.push_back(std::move(n));
  return static_cast<uint32_t>(spec.nodes.size() - 1);
}

uint32_t add_product(PcSpec& spec, std::vector<uint32_t> children) {
  PcNode n;
  n.type = PcNode::Type::Product;
  n.children = std::move(children);
  spec.nodes.push_back(std::move(n));
  return static_cast<uint32_t>(spec.nodes.size() - 1);
}

std::vector<double> random_weights(Rng& rng, size_t k) {
  std::vector<double> w(k);
  double s = 0;
  for (double& x : w) {
    x = 0.1 + rng.uniform();
    s += x;
  }
  for (double& x : w) x /= s;
  return w;
}

// `components` mixture nodes over variables [lo, hi], children built first
std::vector<uint32_t> build_region(PcSpec& spec, Rng& rng, int lo, int hi,
                                   int components) {
  std::vector<uint32_t> out;
  if (lo == hi) {
    for (int c = 0; c < components; ++c)
      out.push_back(add_leaf(spec, lo, 0.05 + 0.9 * rng.uniform()));
    return out;
  }
  int mid = (lo + hi) / 2;
  auto left = build_region(spec, rng, lo, mid, components);
  auto right = build_region(spec, rng, mid + 1, hi, components);
  for (int c = 0; c < components; ++c) {
    std::vector<uint32_t> prods;
    size_t k = 2;
    for (size_t i = 0; i < k; ++i) {
      uint32_t l = left[rng.below(left.size())];
      uint32_t r = right[rng.below(right.size())];
      prods.push_back(add_product(spec, {l, r}));
    }
    out.push_back(add_sum(spec, prods, random_weights(rng, k)));
  }
  return out;
}

// Region building samples children, so some candidates end up
// unreferenced; drop everything unreachable from the root.
PcSpec compact_spec(const PcSpec& spec) {
  std::vector<char> reach(spec.nodes.size(), 0);
  std::vector<uint32_t> stack = {static_cast<uint32_t>(spec.nodes.size() - 1)};
  reach.back() = 1;
  while (!stack.empty()) {
    uint32_t id = stack.back();
    stack.pop_back();
    for (uint32_t c : spec.nodes[id].children)
      if (!reach[c]) { reach[c] = 1; stack.push_back(c); }
  }
  PcSpec out;
  out.num_vars = spec.num_vars;
  out.normalized = spec.normalized;
  std::vector<uint32_t> remap(spec.nodes.size(), 0);
  for (uint32_t id = 0; id < spec.nodes.size(); ++id) {
    if (!reach[id]) continue;
    remap[id] = static_cast<uint32_t>(out.nodes.size());
    PcNode n = spec.nodes[id];
    for (uint32_t& c : n.children) c = remap[c];
    out.nodes.push_back(std::move(n));
  }
  return out;
}

}  // namespace

PcSpec gen_pc(uint64_t seed, int num_vars, int components, bool dead_branch) {
  if (num_vars < 1) throw ProbError("gen_pc needs at least one variable");
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 1);
  PcSpec spec;
  spec.num_vars = num_vars;
  spec.normalized = false;

  if (!dead_branch || num_vars < 2) {
    auto comps = build_region(spec, rng, 0, num_vars - 1, components);
    if (comps.size() == 1) {
      // ensure a sum root so there is always at least one prunable edge set
      add_sum(spec, {comps[0]}, {1.0});
    } else {
      add_sum(spec, comps, random_weights(rng, comps.size()));
    }
    return compact_spec(spec);
  }

  // variable 0 gates the root; the gate-1 component is dead for datasets
  // that pin x0 = 0
  auto live = build_region(spec, rng, 1, num_vars - 1, components);
  uint32_t live_top = live.size() == 1
                          ? live[0]
                          : add_sum(spec, live, random_weights(rng, live.size()));
  // The dead side is one wide flat mixture (no inner sums) so that a
  // budget worth 20% of all sum edges fits inside this single node
  // without ever selecting a sum's last remaining edge.
  size_t live_edges = 0;
  for (const auto& nd : spec.nodes)
    if (nd.type == PcNode::Type::Sum) live_edges += nd.children.size();
  size_t width = live_edges + 4;
  std::vector<uint32_t> dead;
  if (num_vars == 2) {
    for (size_t j = 0; j < width; ++j)
      dead.push_back(add_leaf(spec, 1, 0.05 + 0.9 * rng.uniform()));
  } else {
    std::vector<std::vector<uint32_t>> pool(static_cast<size_t>(num_vars));
    for (int v = 1; v < num_vars; ++v)
      for (int c = 0; c < 2; ++c)
        pool[static_cast<size_t>(v)].push_back(
            add_leaf(spec, v, 0.05 + 0.9 * rng.uniform()));
    for (size_t j = 0; j < width; ++j) {
      std::vector<uint32_t> prod;
      for (int v = 1; v < num_vars; ++v)
        prod.push_back(pool[static_cast<size_t>(v)][rng.below(2)]);
      dead.push_back(add_product(spec, std::move(prod)));
    }
  }
  uint32_t dead_top = add_sum(spec, dead, random_weights(rng, width));
  uint32_t g0 = add_leaf(spec, 0, 1.0);  // x0 = 0 with certainty
  uint32_t g1 = add_leaf(spec, 0, 0.0);  // x0 = 1 with certainty
  uint32_t p0 = add_product(spec, {g0, live_top});
  uint32_t p1 = add_product(spec, {g1, dead_top});
  add_sum(spec, {p0, p1}, random_weights(rng, 2));
  return compact_spec(spec);
}

std::vector<Assignment> gen_pc_dataset(uint64_t seed, int num_vars, size_t count,
                                       bool pin_first) {
  Rng rng(seed * 0x2545f4914f6cdd1dull + 17);
  std::vector<Assignment> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    Assignment a;
    for (int v = 0; v < num_vars; ++v)
      a[v] = (pin_first && v == 0) ? 0 : static_cast<int>(rng.below(2));
    out.push_back(std::move(a));
  }
  return out;
}

HmmSpec gen_hmm(uint64_t seed, int K, int V, int T) {
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 1009);
  HmmSpec h;
  h.K = K;
  h.V = V;
  auto row = [&](int n) {
    std::vector<double> r(static_cast<size_t>(n));
    double s = 0;
    for (double& x : r) {
      x = 0.1 + rng.uniform();
      s += x;
    }
    for (double& x : r) x /= s;
    return r;
  };
  h.pi = row(K);
  for (int i = 0; i < K; ++i) h.A.push_back(row(K));
  for (int i = 0; i < K; ++i) h.B.push_back(row(V));
  for (int t = 0; t < T; ++t)
    h.obs.push_back(static_cast<int>(rng.below(static_cast<uint64_t>(V))));
  return h;
}

CnfFormula gen_cnf(uint64_t seed, int num_vars, int num_clauses, int k) {
  if (k > num_vars) throw LogicError("clause width exceeds variable count");
  Rng rng(seed * 0x6c62272e07bb0142ull + 31);
  CnfFormula f;
  f.num_vars = num_vars;
  for (int c = 0; c < num_clauses; ++c) {
    std::set<int> vars;
    while (static_cast<int>(vars.size()) < k)
      vars.insert(1 + static_cast<int>(rng.below(static_cast<uint64_t>(num_vars))));
    std::vector<Lit> clause;
    for (int v : vars) clause.push_back(rng.below(2) ? v : -v);
    f.clauses.push_back(std::move(clause));
  }
  return f;
}

CnfFormula gen_cnf_mixed(uint64_t seed, int num_vars, int num_clauses,
                         double binary_fraction) {
  Rng rng(seed * 0x6c62272e07bb0142ull + 97);
  int nb = static_cast<int>(binary_fraction * num_clauses + 0.999999);
  CnfFormula f;
  f.num_vars = num_vars;
  for (int c = 0; c < num_clauses; ++c) {
    int k = c < nb ? 2 : 3;
    std::set<int> vars;
    while (static_cast<int>(vars.size()) < k)
      vars.insert(1 + static_cast<int>(rng.below(static_cast<uint64_t>(num_vars))));
    std::vector<Lit> clause;
    for (int v : vars) clause.push_back(rng.below(2) ? v : -v);
    f.clauses.push_back(std::move(clause));
  }
  return f;
}

CnfFormula gen_uf20_style(uint64_t seed) {
  for (uint64_t attempt = 0;; ++attempt) {
    CnfFormula f = gen_cnf(seed * 1000003ull + attempt, 20, 91, 3);
    if (oracle::reference_sat(f).sat) return f;
  }
}

Dag gen_balanced_tree(uint64_t seed, int depth) {
  Rng rng(seed * 0x9e3779b97f4a7c15ull + 4099);
  Dag dag;
  dag.kernel = KernelKind::PC;
  std::vector<NodeId> layer;
  int leaves = 1 << depth;
  for (int i = 0; i < leaves; ++i) {
    DagNode n;
    n.kind = NodeKind::LeafDist;
    n.var = i;
    double p0 = 0.05 + 0.9 * rng.uniform();
    n.table = {p0, 1.0 - p0};
    dag.nodes.push_back(std::move(n));
    layer.push_back(static_cast<NodeId>(dag.nodes.size() - 1));
  }
  while (layer.size() > 1) {
    std::vector<NodeId> next;
    for (size_t i = 0; i + 1 < layer.size(); i += 2) {
      DagNode n;
      n.kind = NodeKind::Product;
      n.children = {layer[i], layer[i + 1]};
      dag.nodes.push_back(std::move(n));
      next.push_back(static_cast<NodeId>(dag.nodes.size() - 1));
    }
    layer = std::move(next);
  }
  dag.roots = {layer[0]};
  finalize(dag);
  return dag;
}

Dag gen_random_dag(uint64_t seed, int num_vars) {
  return lower_pc_to_dag(gen_pc(seed, num_vars));
}

}  // namespace reason
