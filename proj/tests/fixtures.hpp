#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "conslab/resource.hpp"
#include "conslab/toy_mlm.hpp"

namespace conslab::fixtures {

struct Fixture {
  Relation relation;
  std::vector<KBTuple> tuples;
  ToyMlm model;
};

// d=4, V=12: ten words plus [UNK] and [MASK].
inline Fixture small_fixture(std::uint64_t seed = 3) {
  Relation rel;
  rel.id = "R";
  rel.patterns = {{"[X] is [Y] .", true, 0, 0, {}}, {"the [Y] of [X] at y", false, 1, 1, {}}};
  std::vector<KBTuple> tuples = {{"R", "s1", "o1"}, {"R", "s2", "o2"}};
  rel = build_candidates(rel, tuples);
  const std::vector<std::string> words = {"s1", "s2", "o1", "o2", "o3", "is", "of", "at", "the", "y"};
  auto model = ToyMlm::random(Vocabulary(words), ToyDims{4, 5, 8}, seed, 0.5);
  return {rel, tuples, model};
}

/// ||analytic - numeric|| / max(||analytic||, 1e-8) over one parameter block.
inline double block_rel_error(const Matrix& analytic, const Matrix& numeric) {
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < analytic.data.size(); ++i) {
    diff += (analytic.data[i] - numeric.data[i]) * (analytic.data[i] - numeric.data[i]);
    norm += analytic.data[i] * analytic.data[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(norm), 1e-8);
}

}  // namespace conslab::fixtures
