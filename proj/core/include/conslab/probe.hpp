#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conslab/metrics.hpp"
#include "conslab/resource.hpp"
#include "conslab/scorer.hpp"

namespace conslab {

/// Scores every (tuple, pattern) cloze of `relation` and records the argmax
/// candidate. `relation.candidates` must be filled.
PredictionTable predict_relation(const Scorer& scorer, const Relation& relation,
                                 std::span<const KBTuple> tuples);

struct ProbeResult {
  std::vector<PredictionTable> tables;
  std::vector<RelationReport> reports;
};

/// Probes every relation that has tuples, in relation-id order.
ProbeResult probe(const Scorer& scorer, std::span<const Relation> relations,
                  std::span<const KBTuple> tuples);

/// Number of cloze queries a probe would issue: sum of tuples * patterns.
std::size_t query_count(std::span<const Relation> relations, std::span<const KBTuple> tuples);

/// One JSON line per (relation, tuple): relation_id, cardinality, subject,
/// gold, predictions (one per pattern, pattern order).
std::string predictions_to_jsonl(std::span<const PredictionTable> tables);
/// Inverse of predictions_to_jsonl; pattern metadata is not recorded there,
/// so tables come back with default PatternMeta.
std::vector<PredictionTable> predictions_from_jsonl(std::string_view jsonl);

}  // namespace conslab
