#include "presca/concepts.hpp"

#include "presca/error.hpp"

namespace presca {

namespace {
constexpr std::array<std::string_view, kNumConcepts> kNames = {
    "in_storage_area",   "has_stick",  "has_plank",        "has_stick_and_plank",
    "has_broken_ladder", "has_ladder", "ladder_at_docker",
};
}  // namespace

std::string_view concept_name(ConceptId c) { return kNames[index_of(c)]; }

std::optional<ConceptId> parse_concept(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<ConceptId>(i);
  }
  if (name == "goal" || name == "C_G") return kGoalConcept;
  return std::nullopt;
}

ConceptId concept_from_name(std::string_view name) {
  auto c = parse_concept(name);
  if (!c) throw Error("unknown concept '" + std::string(name) + "'");
  return *c;
}

}  // namespace presca
