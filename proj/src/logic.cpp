#include "reason/logic.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <unordered_set>

namespace reason {

CnfFormula parse_dimacs(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  CnfFormula cnf;
  bool header_seen = false;
  int declared_clauses = 0;
  std::vector<Lit> cur;
  auto flush_clause = [&]() {
    // Drop duplicate literals; drop tautological clauses entirely.
    std::sort(cur.begin(), cur.end(), [](Lit a, Lit b) {
      return std::abs(a) != std::abs(b) ? std::abs(a) < std::abs(b) : a > b;
    });
    bool taut = false;
    for (size_t i = 0; i + 1 < cur.size(); ++i)
      if (cur[i] == -cur[i + 1]) { taut = true; break; }
    cur.erase(std::unique(cur.begin(), cur.end()), cur.end());
    if (taut) {
      cnf.tautologies_dropped++;
    } else {
      cnf.clauses.push_back(cur);
    }
    cur.clear();
  };
  bool in_clause = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line[0] == 'c') continue;
    if (!line.empty() && line[0] == '%') break;  // SATLIB trailer
    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      if (tok == "p") {
        std::string fmt;
        ls >> fmt >> cnf.num_vars >> declared_clauses;
        if (fmt != "cnf" || cnf.num_vars <= 0 || ls.fail())
          throw MalformedHeader("bad DIMACS header: " + line);
        header_seen = true;
        continue;
      }
      if (!header_seen) throw MalformedHeader("clause before header");
      Lit l;
      try {
        l = std::stoi(tok);
      } catch (const std::exception&) {
        throw LogicError("bad literal token: " + tok);
      }
      if (l == 0) {
        flush_clause();
        in_clause = false;
      } else {
        if (std::abs(l) > cnf.num_vars)
          throw LiteralOutOfRange("literal " + tok + " exceeds declared variables");
        cur.push_back(l);
        in_clause = true;
      }
    }
  }
  if (!header_seen) throw MalformedHeader("missing DIMACS header");
  if (in_clause) throw UnterminatedClause("clause not terminated by 0");
  return cnf;
}

std::string serialize_dimacs(const CnfFormula& cnf) {
  std::ostringstream os;
  os << "p cnf " << cnf.num_vars << " " << cnf.clauses.size() << "\n";
  for (const auto& c : cnf.clauses) {
    for (Lit l : c) os << l << " ";
    os << "0\n";
  }
  return os.str();
}

bool clause_satisfied(const std::vector<Lit>& clause, const std::vector<int>& model) {
  for (Lit l : clause) {
    int v = std::abs(l);
    if (static_cast<size_t>(v) >= model.size()) continue;
    if ((l > 0) == (model[v] != 0)) return true;
  }
  return false;
}

bool cnf_satisfied(const CnfFormula& cnf, const std::vector<int>& model) {
  for (const auto& c : cnf.clauses)
    if (!clause_satisfied(c, model)) return false;
  return true;
}

namespace {

struct SexprParser {
  const std::string& s;
  size_t i = 0;
  explicit SexprParser(const std::string& str) : s(str) {}

  void skip_ws() { while (i < s.size() && std::isspace((unsigned char)s[i])) ++i; }

  std::string token() {
    skip_ws();
    size_t start = i;
    while (i < s.size() && !std::isspace((unsigned char)s[i]) && s[i] != '(' && s[i] != ')')
      ++i;
    return s.substr(start, i - start);
  }

  FormulaPtr parse() {
    skip_ws();
    if (i >= s.size()) throw LogicError("unexpected end of formula");
    if (s[i] != '(') {
      std::string a = token();
      if (a.empty()) throw LogicError("empty atom");
      if (a == "forall" || a == "exists")
        throw QuantifierPresent("quantifier in propositional formula");
      auto f = std::make_shared<Formula>();
      f->op = Formula::Op::Atom;
      f->atom = a;
      return f;
    }
    ++i;  // consume '('
    std::string op = token();
    auto f = std::make_shared<Formula>();
    if (op == "not") f->op = Formula::Op::Not;
    else if (op == "and") f->op = Formula::Op::And;
    else if (op == "or") f->op = Formula::Op::Or;
    else if (op == "imp" || op == "->") f->op = Formula::Op::Imp;
    else if (op == "iff" || op == "<->") f->op = Formula::Op::Iff;
    else if (op == "forall" || op == "exists")
      throw QuantifierPresent("quantifier in propositional formula");
    else throw LogicError("unknown operator: " + op);
    while (true) {
      skip_ws();
      if (i >= s.size()) throw LogicError("missing ')'");
      if (s[i] == ')') { ++i; break; }
      f->args.push_back(parse());
    }
    size_t want_min = f->op == Formula::Op::Not ? 1 : 2;
    if (f->args.size() < want_min ||
        (f->op == Formula::Op::Not && f->args.size() != 1) ||
        ((f->op == Formula::Op::Imp || f->op == Formula::Op::Iff) && f->args.size() != 2))
      throw LogicError("wrong operand count for operator");
    return f;
  }
};

}  // namespace

FormulaPtr parse_sexpr(const std::string& text) {
  SexprParser p(text);
  auto f = p.parse();
  p.skip_ws();
  if (p.i != text.size()) throw LogicError("trailing text after formula");
  return f;
}

size_t formula_size(const Formula& f) {
  size_t n = 1;
  for (const auto& a : f.args) n += formula_size(*a);
  return n;
}

static void collect_atoms(const Formula& f, std::vector<std::string>& out,
                          std::unordered_set<std::string>& seen) {
  if (f.op == Formula::Op::Atom) {
    if (seen.insert(f.atom).second) out.push_back(f.atom);
    return;
  }
  for (const auto& a : f.args) collect_atoms(*a, out, seen);
}

std::vector<std::string> formula_atoms(const Formula& f) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  collect_atoms(f, out, seen);
  return out;
}

namespace {

struct Tseitin {
  CnfFormula cnf;
  std::map<std::string, int> atom_var;
  std::vector<std::string> names;

  int fresh() { return ++cnf.num_vars; }

  void clause(std::initializer_list<Lit> ls) { cnf.clauses.push_back(ls); }

  // Returns a literal equivalent to the subformula.
  Lit encode(const Formula& f) {
    switch (f.op) {
      case Formula::Op::Atom: {
        auto it = atom_var.find(f.atom);
        if (it != atom_var.end()) return it->second;
        int v = fresh();
        atom_var[f.atom] = v;
        names.push_back(f.atom);
        return v;
      }
      case Formula::Op::Not:
        return -encode(*f.args[0]);
      case Formula::Op::And: {
        std::vector<Lit> ls;
        for (const auto& a : f.args) ls.push_back(encode(*a));
        int y = fresh();
        std::vector<Lit> big{y};
        for (Lit l : ls) {
          clause({-y, l});
          big.push_back(-l);
        }
        cnf.clauses.push_back(big);
        return y;
      }
      case Formula::Op::Or: {
        std::vector<Lit> ls;
        for (const auto& a : f.args) ls.push_back(encode(*a));
        int y = fresh();
        std::vector<Lit> big{-y};
        for (Lit l : ls) {
          clause({y, -l});
          big.push_back(l);
        }
        cnf.clauses.push_back(big);
        return y;
      }
      case Formula::Op::Imp: {
        Lit a = encode(*f.args[0]), b = encode(*f.args[1]);
        int y = fresh();
        clause({-y, -a, b});
        clause({y, a});
        clause({y, -b});
        return y;
      }
      case Formula::Op::Iff: {
        Lit a = encode(*f.args[0]), b = encode(*f.args[1]);
        int y = fresh();
        clause({-y, -a, b});
        clause({-y, a, -b});
        clause({y, a, b});
        clause({y, -a, -b});
        return y;
      }
    }
    throw LogicError("unreachable");
  }
};

}  // namespace

TseitinResult tseitin_cnf(const Formula& f) {
  Tseitin t;
  // Atoms get the lowest variable ids, fresh definition variables sit
  // above them.
  for (const auto& a : formula_atoms(f)) {
    int v = t.fresh();
    t.atom_var[a] = v;
    t.names.push_back(a);
  }
  Lit root = t.encode(f);
  t.cnf.clauses.push_back({root});
  return {std::move(t.cnf), std::move(t.names)};
}

Dag lower_cnf_to_dag(const CnfFormula& cnf) {
  Dag dag;
  dag.kernel = KernelKind::SAT;
  // One literal node per (variable, polarity) actually used, shared
  // across clauses.
  std::map<Lit, NodeId> lit_node;
  auto get_lit = [&](Lit l) {
    auto it = lit_node.find(l);
    if (it != lit_node.end()) return it->second;
    DagNode nd;
    nd.kind = NodeKind::LeafLiteral;
    nd.var = std::abs(l);
    nd.positive = l > 0;
    dag.nodes.push_back(std::move(nd));
    NodeId id = static_cast<NodeId>(dag.nodes.size() - 1);
    lit_node[l] = id;
    dag.labels[id] = (l > 0 ? "x" : "!x") + std::to_string(std::abs(l));
    return id;
  };
  std::vector<NodeId> clause_nodes;
  for (const auto& c : cnf.clauses) {
    DagNode nd;
    nd.kind = NodeKind::Or;
    for (Lit l : c) nd.children.push_back(get_lit(l));
    dag.nodes.push_back(std::move(nd));
    clause_nodes.push_back(static_cast<NodeId>(dag.nodes.size() - 1));
  }
  DagNode root;
  root.kind = NodeKind::And;
  root.children = clause_nodes;
  dag.nodes.push_back(std::move(root));
  dag.roots.push_back(static_cast<NodeId>(dag.nodes.size() - 1));
  finalize(dag);
  return dag;
}

std::vector<uint32_t> WatchIndex::traverse(Lit l) const {
  std::vector<uint32_t> out;
  uint32_t idx = lit_index(l);
  uint32_t c = idx < head.size() ? head[idx] : kNil;
  while (c != kNil) {
    out.push_back(c);
    const ClauseEntry& e = clauses[c];
    // Follow the pointer of whichever slot watches this literal.
    uint32_t nxt = kNil;
    for (int s = 0; s < 2; ++s)
      if (e.watch[s] >= 0 && e.watched_idx[s] == idx) nxt = e.next[s];
    c = nxt;
  }
  return out;
}

WatchIndex build_watch_index(const CnfFormula& cnf) {
  WatchIndex wi;
  wi.head.assign(2 * static_cast<size_t>(cnf.num_vars), kNil);
  wi.clauses.resize(cnf.clauses.size());
  uint32_t addr = 0;
  for (uint32_t ci = 0; ci < cnf.clauses.size(); ++ci) {
    const auto& c = cnf.clauses[ci];
    WatchIndex::ClauseEntry& e = wi.clauses[ci];
    e.base = addr;
    addr += static_cast<uint32_t>(c.size()) + 2;  // literals + 2 next-watch words
    int nwatch = c.size() >= 2 ? 2 : static_cast<int>(c.size());
    for (int s = 0; s < nwatch; ++s) {
      e.watch[s] = s;  // initial watches: first two literals by clause order
      uint32_t idx = lit_index(c[s]);
      e.watched_idx[s] = idx;
      e.next[s] = wi.head[idx];
      wi.head[idx] = ci;
    }
  }
  wi.total_words = addr;
  return wi;
}

}  // namespace reason
