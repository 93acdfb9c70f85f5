#include "reason/dag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>

namespace reason {

const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::LeafDist: return "LEAFDIST";
    case NodeKind::LeafLiteral: return "LEAFLIT";
    case NodeKind::Sum: return "SUM";
    case NodeKind::Product: return "PROD";
    case NodeKind::Or: return "OR";
    case NodeKind::And: return "AND";
  }
  return "?";
}

const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::SAT: return "SAT";
    case KernelKind::FOL_GROUNDED: return "FOL_GROUNDED";
    case KernelKind::PC: return "PC";
    case KernelKind::HMM: return "HMM";
    case KernelKind::SPMSPM: return "SPMSPM";
  }
  return "?";
}

std::optional<NodeKind> node_kind_from_string(const std::string& s) {
  if (s == "LEAFDIST") return NodeKind::LeafDist;
  if (s == "LEAFLIT") return NodeKind::LeafLiteral;
  if (s == "SUM") return NodeKind::Sum;
  if (s == "PROD") return NodeKind::Product;
  if (s == "OR") return NodeKind::Or;
  if (s == "AND") return NodeKind::And;
  return std::nullopt;
}

std::optional<KernelKind> kernel_kind_from_string(const std::string& s) {
  if (s == "SAT") return KernelKind::SAT;
  if (s == "FOL_GROUNDED") return KernelKind::FOL_GROUNDED;
  if (s == "PC") return KernelKind::PC;
  if (s == "HMM") return KernelKind::HMM;
  if (s == "SPMSPM") return KernelKind::SPMSPM;
  return std::nullopt;
}

size_t Dag::edge_count() const {
  size_t n = 0;
  for (const auto& nd : nodes) n += nd.children.size();
  return n;
}

std::string format_double(double v) {
  char buf[64];
  // Shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::stod(buf) == v) break;
  }
  return buf;
}

std::vector<NodeId> topo_sort(const Dag& dag) {
  const size_t n = dag.nodes.size();
  // Kahn's algorithm over child->parent direction: children first.
  std::vector<uint32_t> pending(n, 0);  // unfinished children
  std::vector<std::vector<NodeId>> parents(n);
  for (NodeId id = 0; id < n; ++id) {
    for (NodeId c : dag.nodes[id].children) {
      if (c >= n) throw DagError("child id out of range");
      pending[id]++;
      parents[c].push_back(id);
    }
  }
  // Min-id selection keeps the order deterministic.
  std::vector<NodeId> ready;
  for (NodeId id = 0; id < n; ++id)
    if (pending[id] == 0) ready.push_back(id);
  std::make_heap(ready.begin(), ready.end(), std::greater<>{});
  std::vector<NodeId> order;
  order.reserve(n);
  while (!ready.empty()) {
    std::pop_heap(ready.begin(), ready.end(), std::greater<>{});
    NodeId id = ready.back();
    ready.pop_back();
    order.push_back(id);
    for (NodeId p : parents[id]) {
      if (--pending[p] == 0) {
        ready.push_back(p);
        std::push_heap(ready.begin(), ready.end(), std::greater<>{});
      }
    }
  }
  if (order.size() != n) {
    std::string offenders;
    for (NodeId id = 0; id < n; ++id)
      if (pending[id] > 0) offenders += " " + std::to_string(id);
    throw CycleDetected("cycle through nodes:" + offenders);
  }
  return order;
}

void finalize(Dag& dag) {
  dag.topo = topo_sort(dag);
  for (NodeId id : dag.topo) {
    DagNode& nd = dag.nodes[id];
    if (nd.is_leaf()) {
      nd.scope.clear();
      if (nd.var >= 0) nd.scope.push_back(nd.var);
    } else {
      std::vector<int> sc;
      for (NodeId c : nd.children)
        sc.insert(sc.end(), dag.nodes[c].scope.begin(), dag.nodes[c].scope.end());
      std::sort(sc.begin(), sc.end());
      sc.erase(std::unique(sc.begin(), sc.end()), sc.end());
      nd.scope = std::move(sc);
    }
  }
}

ValidationReport validate(const Dag& dag) {
  ValidationReport rep;
  const size_t n = dag.nodes.size();
  auto add = [&](NodeId id, const char* rule, std::string detail) {
    rep.violations.push_back({id, rule, std::move(detail)});
  };

  for (NodeId r : dag.roots)
    if (r >= n) add(r, "root-range", "root id out of range");

  std::vector<int> pos(n, -1);
  bool topo_usable = dag.topo.size() == n;
  if (topo_usable) {
    for (size_t i = 0; i < dag.topo.size(); ++i) {
      if (dag.topo[i] >= n) { topo_usable = false; break; }
      pos[dag.topo[i]] = static_cast<int>(i);
    }
  }
  if (!topo_usable && n > 0)
    add(kNoNode, "topo-order", "topo order missing or not a permutation");

  for (NodeId id = 0; id < n; ++id) {
    const DagNode& nd = dag.nodes[id];
    for (NodeId c : nd.children) {
      if (c >= n) {
        add(id, "child-range", "child " + std::to_string(c) + " out of range");
        continue;
      }
      if (topo_usable && pos[c] >= pos[id])
        add(id, "acyclicity",
            "edge " + std::to_string(id) + "->" + std::to_string(c) +
                " violates topo order");
    }
    if (nd.kind == NodeKind::Sum) {
      if (nd.children.empty()) add(id, "sum-arity", "Sum node with no children");
      if (nd.weights.size() != nd.children.size())
        add(id, "sum-weights", "weight count differs from child count");
      for (double w : nd.weights)
        if (!(w >= 0.0)) add(id, "weight-sign", "negative or NaN weight");
    } else if (!nd.weights.empty()) {
      add(id, "weights-placement", "weights on non-Sum node");
    }
    if (nd.is_leaf() && !nd.children.empty())
      add(id, "leaf-children", "leaf node with children");
    if (nd.kind == NodeKind::LeafDist) {
      if (nd.var >= 0) {
        double s = 0;
        for (double p : nd.table) {
          s += p;
          if (!(p >= 0.0)) add(id, "table-sign", "negative table entry");
        }
        if (nd.table.empty() || std::fabs(s - 1.0) > 1e-9)
          add(id, "table-normalized", "leaf table does not sum to 1");
      } else if (nd.table.size() != 1) {
        add(id, "const-table", "constant leaf needs a single table entry");
      }
    }
    if (nd.kind == NodeKind::LeafLiteral && nd.var < 0)
      add(id, "literal-var", "literal leaf without a variable");
  }

  // Reachability from roots.
  if (n > 0) {
    std::vector<char> seen(n, 0);
    std::vector<NodeId> stack;
    for (NodeId r : dag.roots)
      if (r < n && !seen[r]) { seen[r] = 1; stack.push_back(r); }
    while (!stack.empty()) {
      NodeId id = stack.back();
      stack.pop_back();
      for (NodeId c : dag.nodes[id].children)
        if (c < n && !seen[c]) { seen[c] = 1; stack.push_back(c); }
    }
    for (NodeId id = 0; id < n; ++id)
      if (!seen[id]) add(id, "reachability", "node unreachable from any root");
  }
  return rep;
}

namespace {

double leaf_value(const DagNode& nd, const Assignment& a, const EvalOptions& opts) {
  if (nd.kind == NodeKind::LeafDist) {
    if (nd.is_const()) return nd.table[0];
    auto it = a.find(nd.var);
    if (it == a.end()) {
      if (opts.allow_marginalize) return 1.0;
      throw UnassignedVariable("variable " + std::to_string(nd.var) + " unassigned");
    }
    int v = it->second;
    if (v < 0 || static_cast<size_t>(v) >= nd.table.size())
      throw DagError("assignment value out of leaf domain");
    return nd.table[v];
  }
  // LeafLiteral: indicator.
  auto it = a.find(nd.var);
  if (it == a.end()) {
    if (opts.allow_marginalize) return 1.0;
    throw UnassignedVariable("variable " + std::to_string(nd.var) + " unassigned");
  }
  bool truth = it->second != 0;
  return (truth == nd.positive) ? 1.0 : 0.0;
}

}  // namespace

EvalResult evaluate(const Dag& dag, const Assignment& a, const EvalOptions& opts) {
  EvalResult res;
  const size_t n = dag.nodes.size();
  res.node_values.assign(n, 0.0);
  if (!opts.log_domain) {
    for (NodeId id : dag.topo) {
      const DagNode& nd = dag.nodes[id];
      double v = 0;
      switch (nd.kind) {
        case NodeKind::LeafDist:
        case NodeKind::LeafLiteral:
          v = leaf_value(nd, a, opts);
          break;
        case NodeKind::Sum: {
          v = 0;
          for (size_t i = 0; i < nd.children.size(); ++i)
            v += nd.weights[i] * res.node_values[nd.children[i]];
          break;
        }
        case NodeKind::Product: {
          v = 1;
          for (NodeId c : nd.children) v *= res.node_values[c];
          break;
        }
        case NodeKind::Or: {
          v = 0;
          for (NodeId c : nd.children) v = std::max(v, res.node_values[c]);
          break;
        }
        case NodeKind::And: {
          v = 1;
          for (NodeId c : nd.children) v = std::min(v, res.node_values[c]);
          break;
        }
      }
      res.node_values[id] = v;
    }
  } else {
    // Log-domain evaluation for underflow-prone circuits; logic nodes
    // keep max/min semantics on the exponentiated values (0/1 only).
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    std::vector<double> lv(n, kNegInf);
    for (NodeId id : dag.topo) {
      const DagNode& nd = dag.nodes[id];
      double v = kNegInf;
      switch (nd.kind) {
        case NodeKind::LeafDist:
        case NodeKind::LeafLiteral:
          v = std::log(leaf_value(nd, a, opts));
          break;
        case NodeKind::Sum: {
          double m = kNegInf;
          for (size_t i = 0; i < nd.children.size(); ++i) {
            if (nd.weights[i] == 0) continue;
            m = std::max(m, std::log(nd.weights[i]) + lv[nd.children[i]]);
          }
          if (m == kNegInf) { v = kNegInf; break; }
          double s = 0;
          for (size_t i = 0; i < nd.children.size(); ++i) {
            if (nd.weights[i] == 0) continue;
            s += std::exp(std::log(nd.weights[i]) + lv[nd.children[i]] - m);
          }
          v = m + std::log(s);
          break;
        }
        case NodeKind::Product: {
          v = 0;
          for (NodeId c : nd.children) v += lv[c];
          break;
        }
        case NodeKind::Or: {
          v = kNegInf;
          for (NodeId c : nd.children) v = std::max(v, lv[c]);
          break;
        }
        case NodeKind::And: {
          v = 0;
          for (NodeId c : nd.children) v = std::min(v, lv[c]);
          break;
        }
      }
      lv[id] = v;
      res.node_values[id] = std::exp(v);
    }
  }
  for (NodeId r : dag.roots) res.root_values.push_back(res.node_values[r]);
  return res;
}

namespace {

struct Builder {
  Dag out;
  NodeId add(DagNode nd) {
    out.nodes.push_back(std::move(nd));
    return static_cast<NodeId>(out.nodes.size() - 1);
  }

  // Balanced decomposition of children[lo, hi) of a Sum/Product/Or/And
  // node. Returns (node id, edge weight toward the parent).
  std::pair<NodeId, double> build(NodeKind kind, const std::vector<NodeId>& ch,
                                  const std::vector<double>& w, size_t lo, size_t hi) {
    if (hi - lo == 1) return {ch[lo], kind == NodeKind::Sum ? w[lo] : 1.0};
    size_t mid = lo + (hi - lo + 1) / 2;  // left half gets the extra child
    auto [l, lw] = build(kind, ch, w, lo, mid);
    auto [r, rw] = build(kind, ch, w, mid, hi);
    DagNode nd;
    nd.kind = kind;
    nd.children = {l, r};
    if (kind == NodeKind::Sum) nd.weights = {lw, rw};
    return {add(std::move(nd)), 1.0};
  }
};

}  // namespace

RegularizeResult regularize_two_input(const Dag& dag) {
  RegularizeResult rr;
  rr.dag.kernel = dag.kernel;
  rr.remap.assign(dag.nodes.size(), kNoNode);
  Builder b;
  b.out.kernel = dag.kernel;
  for (NodeId id : dag.topo) {
    const DagNode& nd = dag.nodes[id];
    if (nd.is_leaf() || nd.children.size() <= 2) {
      DagNode copy = nd;
      for (NodeId& c : copy.children) c = rr.remap[c];
      copy.scope.clear();
      rr.remap[id] = b.add(std::move(copy));
      continue;
    }
    std::vector<NodeId> ch;
    ch.reserve(nd.children.size());
    for (NodeId c : nd.children) ch.push_back(rr.remap[c]);
    std::vector<double> w = nd.weights;
    if (w.empty()) w.assign(ch.size(), 1.0);
    size_t mid = (ch.size() + 1) / 2;
    auto [l, lw] = b.build(nd.kind, ch, w, 0, mid);
    auto [r, rw] = b.build(nd.kind, ch, w, mid, ch.size());
    DagNode top;
    top.kind = nd.kind;
    top.children = {l, r};
    if (nd.kind == NodeKind::Sum) top.weights = {lw, rw};
    rr.remap[id] = b.add(std::move(top));
  }
  rr.dag = std::move(b.out);
  for (NodeId r : dag.roots) rr.dag.roots.push_back(rr.remap[r]);
  for (const auto& [id, lbl] : dag.labels) rr.dag.labels[rr.remap[id]] = lbl;
  finalize(rr.dag);
  return rr;
}

size_t dag_depth(const Dag& dag) {
  std::vector<size_t> d(dag.nodes.size(), 0);
  size_t best = 0;
  for (NodeId id : dag.topo) {
    const DagNode& nd = dag.nodes[id];
    size_t m = 0;
    for (NodeId c : nd.children) m = std::max(m, d[c]);
    d[id] = nd.is_leaf() ? 0 : m + 1;
    best = std::max(best, d[id]);
  }
  return best;
}

size_t max_fan_in(const Dag& dag) {
  size_t m = 0;
  for (const auto& nd : dag.nodes) m = std::max(m, nd.children.size());
  return m;
}

std::string serialize_dag(const Dag& dag) {
  std::ostringstream os;
  os << "dag v1 kernel=" << to_string(dag.kernel) << " roots=";
  for (size_t i = 0; i < dag.roots.size(); ++i)
    os << (i ? "," : "") << dag.roots[i];
  os << "\n";
  for (NodeId id = 0; id < dag.nodes.size(); ++id) {
    const DagNode& nd = dag.nodes[id];
    os << id << " " << to_string(nd.kind);
    for (size_t i = 0; i < nd.children.size(); ++i) {
      os << " ";
      if (nd.kind == NodeKind::Sum) os << "w=" << format_double(nd.weights[i]) << ":";
      os << nd.children[i];
    }
    if (nd.kind == NodeKind::LeafDist) {
      os << " @ var=" << nd.var;
      for (double p : nd.table) os << " " << format_double(p);
    } else if (nd.kind == NodeKind::LeafLiteral) {
      os << " @ var=" << nd.var << " " << (nd.positive ? "+" : "-");
    }
    os << "\n";
  }
  return os.str();
}

Dag parse_dag(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw DagError("empty dag text");
  Dag dag;
  {
    std::istringstream hs(line);
    std::string magic, ver, tok;
    hs >> magic >> ver;
    if (magic != "dag" || ver != "v1") throw DagError("bad dag header");
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw DagError("bad header token: " + tok);
      std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "kernel") {
        auto k = kernel_kind_from_string(val);
        if (!k) throw DagError("unknown kernel kind: " + val);
        dag.kernel = *k;
      } else if (key == "roots") {
        std::istringstream rs(val);
        std::string r;
        while (std::getline(rs, r, ','))
          if (!r.empty()) dag.roots.push_back(static_cast<NodeId>(std::stoul(r)));
      }
    }
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    uint64_t id;
    std::string kind_s;
    ls >> id >> kind_s;
    auto kind = node_kind_from_string(kind_s);
    if (!kind) throw DagError("unknown node kind: " + kind_s);
    if (id != dag.nodes.size()) throw DagError("node ids must be dense and in order");
    DagNode nd;
    nd.kind = *kind;
    std::string tok;
    bool payload = false;
    while (ls >> tok) {
      if (tok == "@") { payload = true; break; }
      double w = 1.0;
      std::string cs = tok;
      if (tok.rfind("w=", 0) == 0) {
        auto colon = tok.find(':');
        if (colon == std::string::npos) throw DagError("bad weighted child: " + tok);
        w = std::stod(tok.substr(2, colon - 2));
        cs = tok.substr(colon + 1);
      }
      nd.children.push_back(static_cast<NodeId>(std::stoul(cs)));
      if (nd.kind == NodeKind::Sum) nd.weights.push_back(w);
    }
    if (payload) {
      ls >> tok;
      if (tok.rfind("var=", 0) != 0) throw DagError("bad payload: " + tok);
      nd.var = std::stoi(tok.substr(4));
      if (nd.kind == NodeKind::LeafLiteral) {
        ls >> tok;
        nd.positive = (tok == "+");
      } else {
        while (ls >> tok) nd.table.push_back(std::stod(tok));
      }
    }
    dag.nodes.push_back(std::move(nd));
  }
  finalize(dag);
  return dag;
}

}  // namespace reason
