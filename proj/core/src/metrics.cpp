#include "conslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string_view>

namespace conslab {
namespace {

std::size_t choose2(std::size_t n) { return n * (n - (n > 0 ? 1 : 0)) / 2; }

// Agreeing pairs among the given columns of one row: sum over distinct
// predicted strings of C(count, 2).
std::size_t agreeing_pairs(const std::vector<std::string>& row,
                           std::span<const std::size_t> columns) {
  std::map<std::string_view, std::size_t> freq;
  for (const auto c : columns) ++freq[row[c]];
  std::size_t pairs = 0;
  for (const auto& [_, n] : freq) pairs += choose2(n);
  return pairs;
}

std::vector<std::size_t> all_columns(std::size_t n) {
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i < n; ++i) cols[i] = i;
  return cols;
}

std::size_t base_column(const PredictionTable& table) {
  std::optional<std::size_t> base;
  for (std::size_t p = 0; p < table.patterns.size(); ++p) {
    if (!table.patterns[p].is_base) continue;
    if (base) throw MetricError(table.relation_id + ": more than one base pattern");
    base = p;
  }
  if (!base) throw MetricError(table.relation_id + ": no base pattern");
  return *base;
}

// Column groups keyed by lex group, and by (lex, syn) within it.
struct GroupIndex {
  std::map<int, std::vector<std::size_t>> by_lex;
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_lex_syn;
};

GroupIndex group_columns(const PredictionTable& table) {
  GroupIndex g;
  for (std::size_t p = 0; p < table.patterns.size(); ++p) {
    const auto& m = table.patterns[p];
    g.by_lex[m.lex_group].push_back(p);
    g.by_lex_syn[{m.lex_group, m.syn_group}].push_back(p);
  }
  return g;
}

std::optional<MeanStd> macro_of(std::span<const RelationReport> reports,
                                std::optional<double> RelationReport::*field) {
  std::vector<double> values;
  for (const auto& r : reports) {
    if (const auto v = r.*field) values.push_back(*v);
  }
  if (values.empty()) return std::nullopt;
  MeanStd out;
  out.n = values.size();
  double sum = 0.0;
  for (const auto v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const auto v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

std::optional<MeanStd> micro_of(const Ratio& pooled, std::size_t relations) {
  const auto v = pooled.value();
  if (!v) return std::nullopt;
  return MeanStd{*v, 0.0, relations};
}

}  // namespace

void PredictionTable::validate() const {
  if (subjects.size() != gold.size() && !subjects.empty()) {
    throw MetricError(relation_id + ": subject and gold columns differ in length");
  }
  if (predictions.size() != gold.size()) {
    throw MetricError(relation_id + ": prediction rows do not match tuple count");
  }
  for (const auto& row : predictions) {
    if (row.size() != patterns.size()) {
      throw MetricError(relation_id + ": incomplete prediction row");
    }
  }
}

RelationCounts& RelationCounts::operator+=(const RelationCounts& o) {
  agree_pairs += o.agree_pairs;
  base_correct += o.base_correct;
  all_correct += o.all_correct;
  patterns_success += o.patterns_success;
  tuples_success += o.tuples_success;
  known_pairs += o.known_pairs;
  unknown_pairs += o.unknown_pairs;
  diff_syntax_pairs += o.diff_syntax_pairs;
  no_change_pairs += o.no_change_pairs;
  return *this;
}

RelationCounts count_relation(const PredictionTable& table) {
  table.validate();
  const auto n = table.pattern_count();
  const auto rows = table.tuple_count();
  const auto cols = all_columns(n);
  const auto pairs_per_row = choose2(n);
  const auto groups = group_columns(table);

  RelationCounts c;
  std::vector<bool> pattern_hit(n, false);
  for (std::size_t t = 0; t < rows; ++t) {
    const auto& row = table.predictions[t];
    const auto agree = agreeing_pairs(row, cols);
    c.agree_pairs.hits += agree;
    c.agree_pairs.total += pairs_per_row;

    std::size_t correct = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (row[p] == table.gold[t]) {
        ++correct;
        pattern_hit[p] = true;
      }
    }
    if (n >= 2) {
      c.all_correct.total += 1;
      if (correct == n) ++c.all_correct.hits;
    }
    c.tuples_success.total += 1;
    auto& subset = correct > 0 ? c.known_pairs : c.unknown_pairs;
    if (correct > 0) ++c.tuples_success.hits;
    subset.hits += agree;
    subset.total += pairs_per_row;

    for (const auto& [lex, members] : groups.by_lex) {
      std::size_t lex_agree = agreeing_pairs(row, members);
      std::size_t lex_pairs = choose2(members.size());
      for (const auto& [key, sub] : groups.by_lex_syn) {
        if (key.first != lex) continue;
        const auto sub_agree = agreeing_pairs(row, sub);
        c.no_change_pairs.hits += sub_agree;
        c.no_change_pairs.total += choose2(sub.size());
        lex_agree -= sub_agree;
        lex_pairs -= choose2(sub.size());
      }
      c.diff_syntax_pairs.hits += lex_agree;
      c.diff_syntax_pairs.total += lex_pairs;
    }
  }
  if (rows > 0) {
    c.patterns_success.total = n;
    c.patterns_success.hits =
        static_cast<std::size_t>(std::count(pattern_hit.begin(), pattern_hit.end(), true));
  }
  return c;
}

std::optional<double> consistency(const PredictionTable& table) {
  return count_relation(table).agree_pairs.value();
}

std::optional<double> accuracy(const PredictionTable& table) {
  table.validate();
  const auto base = base_column(table);
  Ratio r;
  for (std::size_t t = 0; t < table.tuple_count(); ++t) {
    ++r.total;
    if (table.predictions[t][base] == table.gold[t]) ++r.hits;
  }
  return r.value();
}

std::optional<double> consistent_acc(const PredictionTable& table) {
  return count_relation(table).all_correct.value();
}

Extractability extractability(const PredictionTable& table) {
  const auto c = count_relation(table);
  return {c.patterns_success.value(), c.tuples_success.value(), c.known_pairs.value(),
          c.unknown_pairs.value()};
}

std::optional<double> determinism(const PredictionTable& table) {
  if (table.cardinality != Cardinality::kNToMany) {
    throw MetricError(table.relation_id + ": determinism applies to N-M relations only");
  }
  return count_relation(table).agree_pairs.value();
}

SyntaxSubsets syntax_subsets(const PredictionTable& table) {
  const auto c = count_relation(table);
  return {c.diff_syntax_pairs.value(), c.no_change_pairs.value()};
}

RelationReport evaluate(const PredictionTable& table) {
  RelationReport r;
  r.relation_id = table.relation_id;
  r.cardinality = table.cardinality;
  r.tuple_count = table.tuple_count();
  r.pattern_count = table.pattern_count();
  r.pair_count = r.tuple_count * choose2(r.pattern_count);
  auto counts = count_relation(table);

  if (table.cardinality == Cardinality::kNToMany) {
    r.determinism = counts.agree_pairs.value();
    RelationCounts only_pairs;
    only_pairs.agree_pairs = counts.agree_pairs;
    r.counts = only_pairs;
    return r;
  }
  const auto base = base_column(table);
  for (std::size_t t = 0; t < table.tuple_count(); ++t) {
    ++counts.base_correct.total;
    if (table.predictions[t][base] == table.gold[t]) ++counts.base_correct.hits;
  }
  r.counts = counts;
  r.consistency = counts.agree_pairs.value();
  r.accuracy = counts.base_correct.value();
  r.consistent_acc = counts.all_correct.value();
  r.succ_patt = counts.patterns_success.value();
  r.succ_objs = counts.tuples_success.value();
  r.know_const = counts.known_pairs.value();
  r.unk_const = counts.unknown_pairs.value();
  r.diff_syntax = counts.diff_syntax_pairs.value();
  r.no_change = counts.no_change_pairs.value();
  return r;
}

SuiteReport aggregate(std::span<const RelationReport> reports, AggregateMode mode) {
  if (reports.empty()) throw MetricError("cannot aggregate an empty report set");
  std::vector<RelationReport> ordered(reports.begin(), reports.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.relation_id < b.relation_id; });

  SuiteReport s;
  s.mode = mode;
  s.relations = ordered.size();
  if (mode == AggregateMode::kMacro) {
    s.consistency = macro_of(ordered, &RelationReport::consistency);
    s.accuracy = macro_of(ordered, &RelationReport::accuracy);
    s.consistent_acc = macro_of(ordered, &RelationReport::consistent_acc);
    s.succ_patt = macro_of(ordered, &RelationReport::succ_patt);
    s.succ_objs = macro_of(ordered, &RelationReport::succ_objs);
    s.know_const = macro_of(ordered, &RelationReport::know_const);
    s.unk_const = macro_of(ordered, &RelationReport::unk_const);
    s.diff_syntax = macro_of(ordered, &RelationReport::diff_syntax);
    s.no_change = macro_of(ordered, &RelationReport::no_change);
    s.determinism = macro_of(ordered, &RelationReport::determinism);
    return s;
  }

  RelationCounts n1;
  Ratio nm_pairs;
  std::size_t n1_relations = 0;
  std::size_t nm_relations = 0;
  for (const auto& r : ordered) {
    if (r.cardinality == Cardinality::kNToMany) {
      nm_pairs += r.counts.agree_pairs;
      ++nm_relations;
    } else {
      n1 += r.counts;
      ++n1_relations;
    }
  }
  s.consistency = micro_of(n1.agree_pairs, n1_relations);
  s.accuracy = micro_of(n1.base_correct, n1_relations);
  s.consistent_acc = micro_of(n1.all_correct, n1_relations);
  s.succ_patt = micro_of(n1.patterns_success, n1_relations);
  s.succ_objs = micro_of(n1.tuples_success, n1_relations);
  s.know_const = micro_of(n1.known_pairs, n1_relations);
  s.unk_const = micro_of(n1.unknown_pairs, n1_relations);
  s.diff_syntax = micro_of(n1.diff_syntax_pairs, n1_relations);
  s.no_change = micro_of(n1.no_change_pairs, n1_relations);
  s.determinism = micro_of(nm_pairs, nm_relations);
  return s;
}

}  // namespace conslab
