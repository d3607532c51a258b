#include "presca/causal_model.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "presca/error.hpp"

namespace presca {

std::vector<ConceptId> StructuralEquation::literals() const {
  std::vector<ConceptId> out;
  for (const auto& clause : cnf) {
    for (ConceptId c : clause) {
      if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
  }
  return out;
}

bool StructuralEquation::mentions(ConceptId c) const {
  return std::any_of(cnf.begin(), cnf.end(),
                     [c](const auto& clause) { return std::find(clause.begin(), clause.end(), c) != clause.end(); });
}

bool evaluate(const StructuralEquation& equation, const ConceptAssignment& assignment) {
  bool result = true;
  for (const auto& clause : equation.cnf) {
    bool any = false;
    for (ConceptId c : clause) {
      const auto v = assignment.get(c);
      if (!v) {
        throw MissingLiteralError("assignment lacks '" + std::string(concept_name(c)) + "' needed by equation of '" +
                                  std::string(concept_name(equation.child)) + "'");
      }
      any = any || *v;
    }
    result = result && any;
  }
  return result;
}

CausalModel::CausalModel(std::set<ConceptId> nodes, std::set<std::pair<ConceptId, ConceptId>> edges,
                         std::vector<StructuralEquation> equations)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (const auto& [from, to] : edges_) {
    if (!contains(from) || !contains(to)) {
      throw Error("edge " + std::string(concept_name(from)) + " -> " + std::string(concept_name(to)) +
                  " references an undeclared concept");
    }
  }
  for (auto& eq : equations) {
    const std::string child(concept_name(eq.child));
    if (!contains(eq.child)) throw Error("equation for undeclared concept '" + child + "'");
    if (eq.cnf.empty()) throw Error("equation for '" + child + "' has no clauses");
    for (const auto& clause : eq.cnf) {
      if (clause.empty()) throw Error("equation for '" + child + "' has an empty clause");
      for (ConceptId p : clause) {
        if (!has_edge(p, eq.child)) {
          throw Error("literal '" + std::string(concept_name(p)) + "' in equation for '" + child +
                      "' has no matching edge");
        }
      }
    }
    if (!equations_.emplace(eq.child, eq).second) throw Error("duplicate equation for '" + child + "'");
  }
  for (const auto& [from, to] : edges_) {
    const auto* eq = equation(to);
    if (eq == nullptr || !eq->mentions(from)) {
      throw Error("edge " + std::string(concept_name(from)) + " -> " + std::string(concept_name(to)) +
                  " is not witnessed by an equation literal");
    }
  }
  // Acyclicity: iterative DFS colouring.
  std::map<ConceptId, int> colour;
  std::function<void(ConceptId)> visit = [&](ConceptId c) {
    colour[c] = 1;
    for (ConceptId next : children(c)) {
      if (colour[next] == 1) throw Error("causal graph has a cycle through '" + std::string(concept_name(next)) + "'");
      if (colour[next] == 0) visit(next);
    }
    colour[c] = 2;
  };
  for (ConceptId c : nodes_) {
    if (colour[c] == 0) visit(c);
  }
}

std::vector<ConceptId> CausalModel::children(ConceptId c) const {
  std::vector<ConceptId> out;
  for (const auto& [from, to] : edges_) {
    if (from == c) out.push_back(to);
  }
  return out;
}

std::vector<ConceptId> CausalModel::parents(ConceptId c) const {
  std::vector<ConceptId> out;
  for (const auto& [from, to] : edges_) {
    if (to == c) out.push_back(from);
  }
  return out;
}

const StructuralEquation* CausalModel::equation(ConceptId child) const {
  auto it = equations_.find(child);
  return it == equations_.end() ? nullptr : &it->second;
}

bool check_transition_grounding(const CausalModel& model, ConceptId child, const ConceptAssignment& before,
                                bool after_child) {
  const StructuralEquation* eq = model.equation(child);
  if (eq == nullptr) throw MissingEquationError("no equation for '" + std::string(concept_name(child)) + "'");
  const auto prev = before.get(child);
  if (!prev) throw MissingLiteralError("assignment lacks the child '" + std::string(concept_name(child)) + "'");
  if (*prev || !after_child) return true;
  return evaluate(*eq, before);
}

CausalPath find_path(const CausalModel& model, ConceptId target, const std::set<ConceptId>& known) {
  if (!model.contains(target)) throw NoPathError("target '" + std::string(concept_name(target)) + "' not in model");
  if (known.count(target)) throw AlreadyKnownError("'" + std::string(concept_name(target)) + "' is already known");

  // Distance from every node to the nearest known concept (reverse BFS).
  std::map<ConceptId, int> dist;
  std::vector<ConceptId> frontier;
  for (ConceptId k : known) {
    if (model.contains(k)) {
      dist[k] = 0;
      frontier.push_back(k);
    }
  }
  for (std::size_t i = 0; i < frontier.size(); ++i) {
    for (ConceptId p : model.parents(frontier[i])) {
      if (!dist.count(p)) {
        dist[p] = dist[frontier[i]] + 1;
        frontier.push_back(p);
      }
    }
  }
  if (!dist.count(target)) {
    throw NoPathError("no causal path from '" + std::string(concept_name(target)) + "' to a known concept");
  }

  // Walk down the distance gradient, choosing the lexicographically smallest
  // successor at every step; this yields the smallest shortest path by name.
  CausalPath path{{target}};
  ConceptId at = target;
  while (dist[at] > 0) {
    std::vector<ConceptId> next;
    for (ConceptId c : model.children(at)) {
      if (dist.count(c) && dist[c] == dist[at] - 1) next.push_back(c);
    }
    at = *std::min_element(next.begin(), next.end(),
                           [](ConceptId a, ConceptId b) { return concept_name(a) < concept_name(b); });
    path.concepts.push_back(at);
  }
  for (std::size_t i = 1; i < path.concepts.size(); ++i) {
    if (model.equation(path.concepts[i]) == nullptr) {
      throw MissingEquationError("path concept '" + std::string(concept_name(path.concepts[i])) +
                                 "' has no structural equation");
    }
  }
  return path;
}

bool is_necessary_cause(const CausalModel& model, ConceptId parent, ConceptId child) {
  const StructuralEquation* eq = model.equation(child);
  if (eq == nullptr || !eq->mentions(parent)) {
    throw NotInEquationError("'" + std::string(concept_name(parent)) + "' does not appear in the equation of '" +
                             std::string(concept_name(child)) + "'");
  }
  return std::any_of(eq->cnf.begin(), eq->cnf.end(),
                     [parent](const auto& clause) { return clause.size() == 1 && clause.front() == parent; });
}

CausalModel crafting_model() {
  using C = ConceptId;
  std::set<ConceptId> nodes(kAllConcepts.begin(), kAllConcepts.end());
  std::set<std::pair<ConceptId, ConceptId>> edges = {
      {C::in_storage_area, C::has_broken_ladder}, {C::has_stick, C::has_stick_and_plank},
      {C::has_plank, C::has_stick_and_plank},     {C::has_broken_ladder, C::has_ladder},
      {C::has_stick_and_plank, C::has_ladder},    {C::has_ladder, C::ladder_at_docker},
  };
  // Picking the second item happens while holding exactly one of the pair, so
  // the grounded equation is a disjunction over the predecessor state.
  std::vector<StructuralEquation> eqs = {
      {C::has_broken_ladder, {{C::in_storage_area}}},
      {C::has_stick_and_plank, {{C::has_stick, C::has_plank}}},
      {C::has_ladder, {{C::has_broken_ladder, C::has_stick_and_plank}}},
      {C::ladder_at_docker, {{C::has_ladder}}},
  };
  return CausalModel(std::move(nodes), std::move(edges), std::move(eqs));
}

// -- text format ---------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

ConceptId concept_at(const std::string& name, int line) {
  auto c = parse_concept(name);
  if (!c) throw ParseError(line, "unknown concept '" + name + "'");
  return *c;
}

}  // namespace

CausalModel parse_causal_model(const std::string& text) {
  std::set<ConceptId> nodes;
  std::set<std::pair<ConceptId, ConceptId>> edges;
  std::vector<StructuralEquation> eqs;
  std::map<ConceptId, int> edge_line;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  const auto declared = [&](const std::string& name, int ln) {
    const ConceptId c = concept_at(name, ln);
    if (!nodes.count(c)) throw ParseError(ln, "concept '" + name + "' used before declaration");
    return c;
  };
  while (std::getline(in, raw)) {
    ++line;
    std::string s = trim(raw.substr(0, raw.find('#')));
    if (s.empty()) continue;
    std::istringstream tok(s);
    std::string kw;
    tok >> kw;
    if (kw == "concept" || kw == "concepts:") {
      std::string name;
      bool any = false;
      while (tok >> name) {
        nodes.insert(concept_at(name, line));
        any = true;
      }
      if (!any) throw ParseError(line, "concept declaration without a name");
    } else if (kw == "edge") {
      std::string from, arrow, to, extra;
      if (!(tok >> from >> arrow >> to) || arrow != "->" || (tok >> extra)) {
        throw ParseError(line, "expected 'edge <parent> -> <child>'");
      }
      const auto p = declared(from, line);
      const auto c = declared(to, line);
      if (!edges.insert({p, c}).second) throw ParseError(line, "duplicate edge");
    } else if (kw == "equation") {
      std::string child, eq;
      if (!(tok >> child >> eq) || eq != "=") throw ParseError(line, "expected 'equation <child> = <cnf>'");
      StructuralEquation e{declared(child, line), {}};
      std::string rest;
      std::getline(tok, rest);
      rest = trim(rest);
      std::size_t pos = 0;
      while (pos < rest.size()) {
        if (rest[pos] == ' ' || rest[pos] == '&') {
          ++pos;
          continue;
        }
        if (rest[pos] != '(') throw ParseError(line, "expected '(' to open a clause");
        const auto close = rest.find(')', pos);
        if (close == std::string::npos) throw ParseError(line, "unterminated clause");
        std::vector<ConceptId> clause;
        std::istringstream lits(rest.substr(pos + 1, close - pos - 1));
        std::string lit;
        while (lits >> lit) {
          if (lit == "|") continue;
          if (lit.front() == '!' || lit.front() == '~') throw ParseError(line, "negative literals are not allowed");
          const ConceptId p = declared(lit, line);
          if (!edges.count({p, e.child})) {
            throw ParseError(line, "literal '" + lit + "' has no edge into '" + child + "'");
          }
          clause.push_back(p);
        }
        if (clause.empty()) throw ParseError(line, "empty clause");
        e.cnf.push_back(std::move(clause));
        pos = close + 1;
      }
      if (e.cnf.empty()) throw ParseError(line, "equation without clauses");
      eqs.push_back(std::move(e));
    } else {
      throw ParseError(line, "unknown directive '" + kw + "'");
    }
  }
  try {
    return CausalModel(std::move(nodes), std::move(edges), std::move(eqs));
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(line, e.what());
  }
}

CausalModel load_causal_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("causal model file not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_causal_model(ss.str());
}

std::string to_text(const CausalModel& model) {
  std::ostringstream os;
  for (ConceptId c : model.nodes()) os << "concept " << concept_name(c) << '\n';
  for (const auto& [from, to] : model.edges()) os << "edge " << concept_name(from) << " -> " << concept_name(to) << '\n';
  for (const auto& [child, eq] : model.equations()) {
    os << "equation " << concept_name(child) << " =";
    for (std::size_t i = 0; i < eq.cnf.size(); ++i) {
      os << (i ? " & (" : " (");
      for (std::size_t j = 0; j < eq.cnf[i].size(); ++j) os << (j ? " | " : "") << concept_name(eq.cnf[i][j]);
      os << ')';
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace presca
