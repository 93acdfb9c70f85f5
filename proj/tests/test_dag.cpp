#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "reason/dag.hpp"
#include "reason/gen.hpp"

using namespace reason;

namespace {

NodeId add_const(Dag& d, double v) {
  DagNode n;
  n.kind = NodeKind::LeafDist;
  n.var = kConstVar;
  n.table = {v};
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

NodeId add_leaf(Dag& d, int var, std::vector<double> table) {
  DagNode n;
  n.kind = NodeKind::LeafDist;
  n.var = var;
  n.table = std::move(table);
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

NodeId add_node(Dag& d, NodeKind kind, std::vector<NodeId> children,
                std::vector<double> weights = {}) {
  DagNode n;
  n.kind = kind;
  n.children = std::move(children);
  n.weights = std::move(weights);
  d.nodes.push_back(std::move(n));
  return static_cast<NodeId>(d.nodes.size() - 1);
}

// Recursive evaluator independent of the topo-order pass in evaluate().
double naive_eval(const Dag& d, NodeId id, const Assignment& a) {
  const DagNode& n = d.nodes[id];
  switch (n.kind) {
    case NodeKind::LeafDist:
      if (n.is_const()) return n.table[0];
      return n.table[static_cast<size_t>(a.at(n.var))];
    case NodeKind::LeafLiteral:
      return ((a.at(n.var) != 0) == n.positive) ? 1.0 : 0.0;
    case NodeKind::Sum: {
      double s = 0;
      for (size_t i = 0; i < n.children.size(); ++i)
        s += n.weights[i] * naive_eval(d, n.children[i], a);
      return s;
    }
    case NodeKind::Product: {
      double p = 1;
      for (NodeId c : n.children) p *= naive_eval(d, c, a);
      return p;
    }
    case NodeKind::Or: {
      double m = 0;
      for (NodeId c : n.children) m = std::max(m, naive_eval(d, c, a));
      return m;
    }
    case NodeKind::And: {
      double m = 1;
      for (NodeId c : n.children) m = std::min(m, naive_eval(d, c, a));
      return m;
    }
  }
  return 0;
}

}  // namespace

TEST_CASE("validate: empty dag passes") {
  Dag d;
  CHECK(validate(d).ok());
}

TEST_CASE("validate: two-cycle reports acyclicity") {
  Dag d;
  add_node(d, NodeKind::Sum, {1}, {1.0});
  add_node(d, NodeKind::Sum, {0}, {1.0});
  d.roots = {0};
  d.topo = {0, 1};
  ValidationReport rep = validate(d);
  int acyclic = 0;
  for (const auto& v : rep.violations)
    if (v.rule == "acyclicity") ++acyclic;
  CHECK(acyclic == 1);
}

TEST_CASE("validate: constructed random dags pass") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Dag d = gen_random_dag(seed, 8);
    CHECK(d.size() >= 100 / 2);  // generator produces nontrivial graphs
    CHECK(validate(d).ok());
  }
}

TEST_CASE("evaluate: identity mixture") {
  Dag d;
  NodeId leaf = add_leaf(d, 0, {0.3, 0.7});
  add_node(d, NodeKind::Sum, {leaf}, {1.0});
  d.roots = {1};
  finalize(d);
  CHECK(evaluate(d, {{0, 1}}).value() == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("evaluate: product of constants") {
  Dag d;
  NodeId a = add_const(d, 0.5);
  NodeId b = add_const(d, 0.2);
  d.roots = {add_node(d, NodeKind::Product, {a, b})};
  finalize(d);
  CHECK(evaluate(d, {}).value() == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("evaluate: missing assignment raises unless marginalized") {
  Dag d;
  d.roots = {add_leaf(d, 3, {0.4, 0.6})};
  finalize(d);
  CHECK_THROWS_AS(evaluate(d, {}), UnassignedVariable);
  EvalOptions opts;
  opts.allow_marginalize = true;
  CHECK(evaluate(d, {}, opts).value() == doctest::Approx(1.0));
}

TEST_CASE("evaluate: agrees with recursive reference on random circuits") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Dag d = gen_random_dag(seed, 6);
    auto dataset = gen_pc_dataset(seed + 100, 6, 4);
    for (const auto& a : dataset) {
      double got = evaluate(d, a).value();
      double want = naive_eval(d, d.roots[0], a);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("evaluate: log domain matches linear") {
  Dag d = gen_random_dag(7, 8);
  Assignment a = gen_pc_dataset(8, 8, 1)[0];
  EvalOptions log_opts;
  log_opts.log_domain = true;
  CHECK(evaluate(d, a, log_opts).value() ==
        doctest::Approx(evaluate(d, a).value()).epsilon(1e-9));
}

TEST_CASE("topo_sort: chain is children first") {
  Dag d;
  add_node(d, NodeKind::Sum, {1}, {1.0});
  add_node(d, NodeKind::Sum, {2}, {1.0});
  add_const(d, 0.5);
  d.roots = {0};
  CHECK(topo_sort(d) == std::vector<NodeId>{2, 1, 0});
}

TEST_CASE("topo_sort: single node") {
  Dag d;
  add_const(d, 1.0);
  d.roots = {0};
  CHECK(topo_sort(d) == std::vector<NodeId>{0});
}

TEST_CASE("topo_sort: cycle raises") {
  Dag d;
  add_node(d, NodeKind::Sum, {1}, {1.0});
  add_node(d, NodeKind::Sum, {0}, {1.0});
  CHECK_THROWS_AS(topo_sort(d), CycleDetected);
}

TEST_CASE("topo_sort: random dags satisfy every edge") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Dag d = gen_random_dag(seed, 8);
    auto order = topo_sort(d);
    std::vector<int> pos(d.size());
    for (size_t i = 0; i < order.size(); ++i) pos[order[i]] = static_cast<int>(i);
    for (NodeId id = 0; id < d.size(); ++id)
      for (NodeId c : d.nodes[id].children) CHECK(pos[c] < pos[id]);
  }
}

TEST_CASE("regularize: fan-in-2 unchanged") {
  Dag d;
  NodeId a = add_const(d, 0.5);
  NodeId b = add_const(d, 0.25);
  d.roots = {add_node(d, NodeKind::Sum, {a, b}, {0.5, 0.5})};
  finalize(d);
  RegularizeResult r = regularize_two_input(d);
  CHECK(r.dag.size() == d.size());
  CHECK(max_fan_in(r.dag) <= 2);
}

TEST_CASE("regularize: fan-in-4 sum becomes 3 two-input sums, depth 2") {
  Dag d;
  std::vector<NodeId> leaves;
  for (int i = 0; i < 4; ++i) leaves.push_back(add_const(d, 0.1 * (i + 1)));
  d.roots = {add_node(d, NodeKind::Sum, leaves, {0.1, 0.2, 0.3, 0.4})};
  finalize(d);
  RegularizeResult r = regularize_two_input(d);
  int sums = 0;
  for (const auto& n : r.dag.nodes)
    if (n.kind == NodeKind::Sum) ++sums;
  CHECK(sums == 3);
  CHECK(max_fan_in(r.dag) == 2);
  CHECK(dag_depth(r.dag) == 2);
  double want = 0.1 * 0.1 + 0.2 * 0.2 + 0.3 * 0.3 + 0.4 * 0.4;
  CHECK(evaluate(r.dag, {}).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("regularize: fan-in-7 product preserves value") {
  Dag d;
  std::vector<NodeId> leaves;
  for (int i = 0; i < 7; ++i) leaves.push_back(add_const(d, 0.5 + 0.05 * i));
  d.roots = {add_node(d, NodeKind::Product, leaves)};
  finalize(d);
  RegularizeResult r = regularize_two_input(d);
  CHECK(max_fan_in(r.dag) <= 2);
  double want = evaluate(d, {}).value();
  CHECK(evaluate(r.dag, {}).value() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("regularize: semantics preserved on random circuits") {
  for (uint64_t seed = 1; seed <= 50; ++seed) {
    Dag d = gen_random_dag(seed, 6);
    RegularizeResult r = regularize_two_input(d);
    CHECK(max_fan_in(r.dag) <= 2);
    CHECK(validate(r.dag).ok());
    for (const auto& a : gen_pc_dataset(seed + 500, 6, 10)) {
      double before = evaluate(d, a).value();
      double after = evaluate(r.dag, a).value();
      CHECK(std::abs(after - before) <= 1e-12 * std::max(1.0, std::abs(before)));
    }
  }
}

TEST_CASE("regularize: idempotent") {
  Dag d = gen_random_dag(3, 8);
  Dag once = regularize_two_input(d).dag;
  Dag twice = regularize_two_input(once).dag;
  CHECK(serialize_dag(once) == serialize_dag(twice));
}

TEST_CASE("serialize: byte-stable round trip") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Dag d = gen_random_dag(seed, 8);
    std::string text = serialize_dag(d);
    Dag back = parse_dag(text);
    CHECK(serialize_dag(back) == text);
    CHECK(back.size() == d.size());
    Assignment a = gen_pc_dataset(seed, 8, 1)[0];
    CHECK(evaluate(back, a).value() == doctest::Approx(evaluate(d, a).value()));
  }
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
