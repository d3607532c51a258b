#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "presca/concepts.hpp"

namespace presca {

/// child = AND over clauses of (OR over parents). Positive literals only.
struct StructuralEquation {
  ConceptId child{};
  std::vector<std::vector<ConceptId>> cnf;

  /// Distinct literals in first-appearance order.
  std::vector<ConceptId> literals() const;
  bool mentions(ConceptId c) const;
};

/// CNF truth value. Throws MissingLiteralError if a literal is unassigned.
bool evaluate(const StructuralEquation& equation, const ConceptAssignment& assignment);

/// Directed concept graph plus structural equations. Immutable once built;
/// the constructor validates acyclicity and edge/literal agreement.
class CausalModel {
 public:
  CausalModel(std::set<ConceptId> nodes, std::set<std::pair<ConceptId, ConceptId>> edges,
              std::vector<StructuralEquation> equations);

  const std::set<ConceptId>& nodes() const { return nodes_; }
  const std::set<std::pair<ConceptId, ConceptId>>& edges() const { return edges_; }
  bool contains(ConceptId c) const { return nodes_.count(c) != 0; }
  bool has_edge(ConceptId parent, ConceptId child) const { return edges_.count({parent, child}) != 0; }
  std::vector<ConceptId> children(ConceptId c) const;
  std::vector<ConceptId> parents(ConceptId c) const;
  /// nullptr when the concept has no equation.
  const StructuralEquation* equation(ConceptId child) const;
  const std::map<ConceptId, StructuralEquation>& equations() const { return equations_; }

 private:
  std::set<ConceptId> nodes_;
  std::set<std::pair<ConceptId, ConceptId>> edges_;
  std::map<ConceptId, StructuralEquation> equations_;
};

/// Target first, known concept last.
struct CausalPath {
  std::vector<ConceptId> concepts;

  int length() const { return static_cast<int>(concepts.size()) - 1; }
  ConceptId target() const { return concepts.front(); }
  ConceptId known() const { return concepts.back(); }
};

/// Whether a transition respects the grounding of `child`'s equation: when the
/// child flips false -> true, the equation must hold on the predecessor.
/// `before` must cover the child and its parents.
bool check_transition_grounding(const CausalModel& model, ConceptId child, const ConceptAssignment& before,
                                bool after_child);

/// Shortest directed path from `target` to any known concept; ties broken by
/// lexicographic order of concept names. Throws AlreadyKnownError, NoPathError
/// or MissingEquationError.
CausalPath find_path(const CausalModel& model, ConceptId target, const std::set<ConceptId>& known);

/// True iff `parent` forms a unit clause in `child`'s equation, i.e. the child
/// can never hold while the parent is false.
bool is_necessary_cause(const CausalModel& model, ConceptId parent, ConceptId child);

/// Causal model of the crafting domain.
CausalModel crafting_model();

/// Text form: `concept <name>` / `edge <parent> -> <child>` /
/// `equation <child> = (a | b) & (c)`; `#` starts a comment.
CausalModel parse_causal_model(const std::string& text);
CausalModel load_causal_model(const std::string& path);
std::string to_text(const CausalModel& model);

}  // namespace presca
