#pragma once

#include <string>
#include <vector>

#include "pfn/types.hpp"

namespace pfn::test {

// Published In-triple / Out-of-triple NER rows and their Diff row, in percent.
struct PublishedGroupRow {
  std::string dataset;
  double in_p, in_r, in_f;
  double out_p, out_r, out_f;
  double diff_p, diff_r, diff_f;
};

inline const std::vector<PublishedGroupRow>& published_group_rows() {
  static const std::vector<PublishedGroupRow> rows = {
      {"ACE05", 95.9, 92.1, 94.0, 85.8, 86.9, 86.3, 10.1, 5.2, 7.7},
      {"SciERC", 78.0, 71.1, 74.4, 38.9, 61.7, 47.8, 39.1, 9.4, 26.6},
  };
  return rows;
}

// Two entity types. Type 0: 2 TP, 1 FP, 1 FN. Type 1: 1 TP, 2 FP, 0 FN.
struct ScoredFixture {
  std::vector<EntitySpan> predicted;
  std::vector<EntitySpan> gold;
  double micro_p, micro_r, micro_f;
  double macro_p, macro_r, macro_f;
};

inline ScoredFixture hand_scored_entities() {
  ScoredFixture f;
  f.gold = {{0, 0, 0}, {2, 3, 0}, {5, 5, 0}, {7, 8, 1}};
  f.predicted = {{0, 0, 0}, {2, 3, 0}, {4, 4, 0}, {7, 8, 1}, {9, 9, 1}, {5, 5, 1}};
  // Micro: 3 TP, 3 FP, 1 FN.
  f.micro_p = 3.0 / 6.0;
  f.micro_r = 3.0 / 4.0;
  f.micro_f = 2.0 * 0.5 * 0.75 / 1.25;
  // Per type: (2/3, 2/3, 2/3) and (1/3, 1, 1/2).
  f.macro_p = (2.0 / 3.0 + 1.0 / 3.0) / 2.0;
  f.macro_r = (2.0 / 3.0 + 1.0) / 2.0;
  f.macro_f = (2.0 / 3.0 + 0.5) / 2.0;
  return f;
}

}  // namespace pfn::test
