#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace presca {

/// Symbolic concepts of the crafting domain.
enum class ConceptId : std::uint8_t {
  in_storage_area = 0,
  has_stick,
  has_plank,
  has_stick_and_plank,
  has_broken_ladder,
  has_ladder,
  ladder_at_docker,
};

inline constexpr std::size_t kNumConcepts = 7;
inline constexpr ConceptId kGoalConcept = ConceptId::ladder_at_docker;

inline constexpr std::array<ConceptId, kNumConcepts> kAllConcepts = {
    ConceptId::in_storage_area,     ConceptId::has_stick,         ConceptId::has_plank,
    ConceptId::has_stick_and_plank, ConceptId::has_broken_ladder, ConceptId::has_ladder,
    ConceptId::ladder_at_docker,
};

std::string_view concept_name(ConceptId c);
std::optional<ConceptId> parse_concept(std::string_view name);
/// Like parse_concept but throws presca::Error on an unknown name.
ConceptId concept_from_name(std::string_view name);

inline std::size_t index_of(ConceptId c) { return static_cast<std::size_t>(c); }

/// Partial truth assignment over concepts.
class ConceptAssignment {
 public:
  ConceptAssignment() = default;

  void set(ConceptId c, bool value) { values_[index_of(c)] = value; }
  std::optional<bool> get(ConceptId c) const { return values_[index_of(c)]; }
  bool covers(ConceptId c) const { return values_[index_of(c)].has_value(); }

 private:
  std::array<std::optional<bool>, kNumConcepts> values_{};
};

}  // namespace presca
