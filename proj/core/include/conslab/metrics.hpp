#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "conslab/resource.hpp"

namespace conslab {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PatternMeta {
  bool is_base = false;
  int lex_group = 0;
  int syn_group = 0;
};

/// Top-1 predictions of one relation, one row per tuple, one column per pattern.
struct PredictionTable {
  std::string relation_id;
  Cardinality cardinality = Cardinality::kNToOne;
  std::vector<PatternMeta> patterns;
  std::vector<std::string> subjects;
  std::vector<std::string> gold;
  std::vector<std::vector<std::string>> predictions;

  std::size_t tuple_count() const { return gold.size(); }
  std::size_t pattern_count() const { return patterns.size(); }
  /// Throws MetricError if the matrix is ragged or metadata is missing.
  void validate() const;
};

/// Numerator/denominator pair. A zero denominator means "undefined".
struct Ratio {
  std::size_t hits = 0;
  std::size_t total = 0;

  std::optional<double> value() const {
    if (total == 0) return std::nullopt;
    return static_cast<double>(hits) / static_cast<double>(total);
  }
  Ratio& operator+=(const Ratio& o) {
    hits += o.hits;
    total += o.total;
    return *this;
  }
  friend bool operator==(const Ratio&, const Ratio&) = default;
};

/// Raw counts behind every per-relation metric. Micro aggregation pools these.
struct RelationCounts {
  Ratio agree_pairs;        // consistency (N-1) or determinism (N-M)
  Ratio base_correct;       // accuracy
  Ratio all_correct;        // consistent-acc
  Ratio patterns_success;   // succ-patt
  Ratio tuples_success;     // succ-objs
  Ratio known_pairs;        // know-const
  Ratio unknown_pairs;      // unk-const
  Ratio diff_syntax_pairs;
  Ratio no_change_pairs;

  RelationCounts& operator+=(const RelationCounts& o);
  friend bool operator==(const RelationCounts&, const RelationCounts&) = default;
};

struct RelationReport {
  std::string relation_id;
  Cardinality cardinality = Cardinality::kNToOne;
  std::optional<double> consistency;
  std::optional<double> accuracy;
  std::optional<double> consistent_acc;
  std::optional<double> succ_patt;
  std::optional<double> succ_objs;
  std::optional<double> know_const;
  std::optional<double> unk_const;
  std::optional<double> diff_syntax;
  std::optional<double> no_change;
  std::optional<double> determinism;
  std::size_t pair_count = 0;
  std::size_t tuple_count = 0;
  std::size_t pattern_count = 0;
  RelationCounts counts;
};

/// Pairwise agreement of (tuple, pattern, pattern) triples. Null when n < 2
/// or there are no tuples.
std::optional<double> consistency(const PredictionTable& table);
/// Base-pattern accuracy. Throws when the table lacks a single base pattern.
std::optional<double> accuracy(const PredictionTable& table);
/// Fraction of tuples predicted correctly by every pattern.
std::optional<double> consistent_acc(const PredictionTable& table);

struct Extractability {
  std::optional<double> succ_patt;
  std::optional<double> succ_objs;
  std::optional<double> know_const;
  std::optional<double> unk_const;
};
Extractability extractability(const PredictionTable& table);

/// Same arithmetic as consistency, for N-M relations only.
std::optional<double> determinism(const PredictionTable& table);

struct SyntaxSubsets {
  std::optional<double> diff_syntax;
  std::optional<double> no_change;
};
SyntaxSubsets syntax_subsets(const PredictionTable& table);

/// Counts for every metric in one pass.
RelationCounts count_relation(const PredictionTable& table);

/// Full report. N-1 relations get the consistency family; N-M relations
/// get determinism only.
RelationReport evaluate(const PredictionTable& table);

enum class AggregateMode { kMacro, kMicro };

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};

struct SuiteReport {
  AggregateMode mode = AggregateMode::kMacro;
  std::size_t relations = 0;
  std::optional<MeanStd> consistency;
  std::optional<MeanStd> accuracy;
  std::optional<MeanStd> consistent_acc;
  std::optional<MeanStd> succ_patt;
  std::optional<MeanStd> succ_objs;
  std::optional<MeanStd> know_const;
  std::optional<MeanStd> unk_const;
  std::optional<MeanStd> diff_syntax;
  std::optional<MeanStd> no_change;
  std::optional<MeanStd> determinism;
};

/// Macro: unweighted mean and population std over relations with a defined
/// value, in relation-id order. Micro: pooled counts (std is 0).
SuiteReport aggregate(std::span<const RelationReport> reports, AggregateMode mode);

}  // namespace conslab
