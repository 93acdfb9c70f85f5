#include "reason/prob.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace reason {

PcSpec parse_pc(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ProbError("empty pc text");
  PcSpec spec;
  {
    std::istringstream hs(line);
    std::string magic, ver, tok;
    hs >> magic >> ver;
    if (magic != "pc" || ver != "v1") throw ProbError("bad pc header");
    while (hs >> tok) {
      if (tok.rfind("vars=", 0) == 0) spec.num_vars = std::stoi(tok.substr(5));
      else if (tok == "normalized") spec.normalized = true;
      else throw ProbError("bad pc header token: " + tok);
    }
    if (spec.num_vars <= 0) throw ProbError("pc header missing vars");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    uint64_t id;
    std::string type;
    ls >> id >> type;
    if (id != spec.nodes.size()) throw ProbError("pc node ids must be dense and in order");
    PcNode nd;
    if (type == "L") {
      nd.type = PcNode::Type::Leaf;
      ls >> nd.var;
      if (nd.var < 0 || nd.var >= spec.num_vars)
        throw ProbError("leaf variable out of range");
      double p;
      double sum = 0;
      while (ls >> p) {
        if (p < 0) throw BadLeafTable("negative leaf probability");
        nd.table.push_back(p);
        sum += p;
      }
      if (nd.table.size() < 2) throw BadLeafTable("leaf table needs >= 2 entries");
      if (std::fabs(sum - 1.0) > 1e-9) throw BadLeafTable("leaf table does not sum to 1");
    } else if (type == "S") {
      nd.type = PcNode::Type::Sum;
      std::string tok;
      double wsum = 0;
      while (ls >> tok) {
        auto colon = tok.find(':');
        if (colon == std::string::npos) throw ProbError("sum child needs child:weight");
        uint32_t c = static_cast<uint32_t>(std::stoul(tok.substr(0, colon)));
        double w = std::stod(tok.substr(colon + 1));
        if (c >= id) throw ForwardReference("child " + std::to_string(c) +
                                            " does not precede node " + std::to_string(id));
        if (w < 0) throw NegativeWeight("negative sum weight");
        nd.children.push_back(c);
        nd.weights.push_back(w);
        wsum += w;
      }
      if (nd.children.empty()) throw ProbError("sum node with no children");
      if (spec.normalized && std::fabs(wsum - 1.0) > 1e-9)
        throw ProbError("sum weights not normalized under normalized flag");
    } else if (type == "P") {
      nd.type = PcNode::Type::Product;
      uint64_t c;
      while (ls >> c) {
        if (c >= id) throw ForwardReference("child " + std::to_string(c) +
                                            " does not precede node " + std::to_string(id));
        nd.children.push_back(static_cast<uint32_t>(c));
      }
      if (nd.children.empty()) throw ProbError("product node with no children");
    } else {
      throw ProbError("unknown pc node type: " + type);
    }
    spec.nodes.push_back(std::move(nd));
  }
  if (spec.nodes.empty()) throw ProbError("pc file has no nodes");
  return spec;
}

std::string serialize_pc(const PcSpec& spec) {
  std::ostringstream os;
  os << "pc v1 vars=" << spec.num_vars;
  if (spec.normalized) os << " normalized";
  os << "\n";
  for (size_t id = 0; id < spec.nodes.size(); ++id) {
    const PcNode& nd = spec.nodes[id];
    os << id;
    switch (nd.type) {
      case PcNode::Type::Leaf:
        os << " L " << nd.var;
        for (double p : nd.table) os << " " << format_double(p);
        break;
      case PcNode::Type::Sum:
        os << " S";
        for (size_t i = 0; i < nd.children.size(); ++i)
          os << " " << nd.children[i] << ":" << format_double(nd.weights[i]);
        break;
      case PcNode::Type::Product:
        os << " P";
        for (uint32_t c : nd.children) os << " " << c;
        break;
    }
    os << "\n";
  }
  return os.str();
}

Dag lower_pc_to_dag(const PcSpec& spec) {
  Dag dag;
  dag.kernel = KernelKind::PC;
  for (const PcNode& pn : spec.nodes) {
    DagNode nd;
    switch (pn.type) {
      case PcNode::Type::Leaf:
        nd.kind = NodeKind::LeafDist;
        nd.var = pn.var;
        nd.table = pn.table;
        break;
      case PcNode::Type::Sum:
        nd.kind = NodeKind::Sum;
        nd.children.assign(pn.children.begin(), pn.children.end());
        nd.weights = pn.weights;
        break;
      case PcNode::Type::Product:
        nd.kind = NodeKind::Product;
        nd.children.assign(pn.children.begin(), pn.children.end());
        break;
    }
    dag.nodes.push_back(std::move(nd));
  }
  dag.roots.push_back(static_cast<NodeId>(dag.nodes.size() - 1));
  finalize(dag);
  return dag;
}

StructureReport check_structure(const Dag& dag) {
  StructureReport rep;
  for (NodeId id : dag.topo) {
    const DagNode& nd = dag.nodes[id];
    if (nd.kind == NodeKind::Sum && rep.smooth) {
      for (size_t i = 1; i < nd.children.size(); ++i) {
        if (dag.nodes[nd.children[i]].scope != dag.nodes[nd.children[0]].scope) {
          rep.smooth = false;
          rep.smooth_witness = id;
          break;
        }
      }
    }
    if (nd.kind == NodeKind::Product && rep.decomposable) {
      std::vector<int> seen;
      for (NodeId c : nd.children) {
        for (int v : dag.nodes[c].scope) {
          if (std::binary_search(seen.begin(), seen.end(), v)) {
            rep.decomposable = false;
            rep.decomposable_witness = id;
            break;
          }
        }
        if (!rep.decomposable) break;
        std::vector<int> merged;
        std::merge(seen.begin(), seen.end(), dag.nodes[c].scope.begin(),
                   dag.nodes[c].scope.end(), std::back_inserter(merged));
        seen = std::move(merged);
      }
    }
  }
  return rep;
}

void HmmSpec::check() const {
  if (K <= 0 || V <= 0) throw ProbError("hmm needs K > 0 and V > 0");
  auto row_ok = [](const std::vector<double>& row, size_t len) {
    if (row.size() != len) return false;
    double s = 0;
    for (double p : row) {
      if (p < 0) return false;
      s += p;
    }
    return std::fabs(s - 1.0) <= 1e-9;
  };
  if (!row_ok(pi, K)) throw ProbError("pi is not a length-K distribution");
  if (A.size() != static_cast<size_t>(K)) throw ProbError("A must be K x K");
  for (const auto& row : A)
    if (!row_ok(row, K)) throw ProbError("A row is not a distribution");
  if (B.size() != static_cast<size_t>(K)) throw ProbError("B must be K x V");
  for (const auto& row : B)
    if (!row_ok(row, V)) throw ProbError("B row is not a distribution");
  for (int o : obs)
    if (o < 0 || o >= V) throw ProbError("observation out of alphabet range");
  if (obs.empty()) throw ProbError("hmm needs T >= 1");
}

HmmSpec parse_hmm_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ProbError(std::string("bad hmm json: ") + e.what());
  }
  HmmSpec h;
  try {
    h.K = j.at("K").get<int>();
    h.V = j.at("V").get<int>();
    h.pi = j.at("pi").get<std::vector<double>>();
    h.A = j.at("A").get<std::vector<std::vector<double>>>();
    h.B = j.at("B").get<std::vector<std::vector<double>>>();
    h.obs = j.at("obs").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProbError(std::string("bad hmm json: ") + e.what());
  }
  h.check();
  return h;
}

std::string serialize_hmm_json(const HmmSpec& hmm) {
  nlohmann::json j;
  j["K"] = hmm.K;
  j["V"] = hmm.V;
  j["pi"] = hmm.pi;
  j["A"] = hmm.A;
  j["B"] = hmm.B;
  j["obs"] = hmm.obs;
  return j.dump(2);
}

Dag unroll_hmm_to_dag(const HmmSpec& hmm) {
  hmm.check();
  Dag dag;
  dag.kernel = KernelKind::HMM;
  auto constant = [&](double v, std::string label) {
    DagNode nd;
    nd.kind = NodeKind::LeafDist;
    nd.var = kConstVar;
    nd.table = {v};
    dag.nodes.push_back(std::move(nd));
    NodeId id = static_cast<NodeId>(dag.nodes.size() - 1);
    dag.labels[id] = std::move(label);
    return id;
  };
  auto add = [&](DagNode nd) {
    dag.nodes.push_back(std::move(nd));
    return static_cast<NodeId>(dag.nodes.size() - 1);
  };
  const int K = hmm.K, T = hmm.T();
  // alpha[k] after layer t: p(x_{1:t}, z_t = k).
  std::vector<NodeId> alpha(K);
  for (int k = 0; k < K; ++k) {
    DagNode prod;
    prod.kind = NodeKind::Product;
    prod.children = {constant(hmm.pi[k], "pi[" + std::to_string(k) + "]"),
                     constant(hmm.B[k][hmm.obs[0]],
                              "B[" + std::to_string(k) + "," + std::to_string(hmm.obs[0]) + "]")};
    alpha[k] = add(std::move(prod));
  }
  for (int t = 1; t < T; ++t) {
    std::vector<NodeId> next(K);
    for (int k = 0; k < K; ++k) {
      DagNode sum;
      sum.kind = NodeKind::Sum;
      for (int jj = 0; jj < K; ++jj) {
        DagNode prod;
        prod.kind = NodeKind::Product;
        prod.children = {alpha[jj],
                         constant(hmm.A[jj][k],
                                  "A[" + std::to_string(jj) + "," + std::to_string(k) + "]")};
        sum.children.push_back(add(std::move(prod)));
        sum.weights.push_back(1.0);
      }
      NodeId s = add(std::move(sum));
      DagNode scaled;
      scaled.kind = NodeKind::Product;
      scaled.children = {s, constant(hmm.B[k][hmm.obs[t]],
                                     "B[" + std::to_string(k) + "," +
                                         std::to_string(hmm.obs[t]) + "]")};
      next[k] = add(std::move(scaled));
    }
    alpha = std::move(next);
  }
  DagNode root;
  root.kind = NodeKind::Sum;
  root.children.assign(alpha.begin(), alpha.end());
  root.weights.assign(alpha.size(), 1.0);
  dag.roots.push_back(add(std::move(root)));
  finalize(dag);
  return dag;
}

}  // namespace reason
