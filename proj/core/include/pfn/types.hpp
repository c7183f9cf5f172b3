#pragma once

#include <compare>
#include <cstddef>
#include <string_view>

namespace pfn {

// Typed span with 0-based inclusive token bounds.
struct EntitySpan {
  std::size_t start = 0;
  std::size_t end = 0;
  int type = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

struct Triple {
  EntitySpan subject;
  int relation = 0;
  EntitySpan object;

  auto operator<=>(const Triple&) const = default;
};

// Start-token form of a triple, the unit the relation table scores.
struct HeadTriple {
  std::size_t subject_start = 0;
  int relation = 0;
  std::size_t object_start = 0;

  auto operator<=>(const HeadTriple&) const = default;
};

enum class OverlapPattern { normal, single_entity_overlap, entity_pair_overlap };

std::string_view to_string(OverlapPattern p) noexcept;

}  // namespace pfn
