#include "conslab/probe.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>

namespace conslab {

PredictionTable predict_relation(const Scorer& scorer, const Relation& relation,
                                 std::span<const KBTuple> tuples) {
  if (relation.candidates.empty()) {
    throw MetricError(relation.id + ": candidate set not built");
  }
  PredictionTable table;
  table.relation_id = relation.id;
  table.cardinality = relation.cardinality;
  for (const auto& p : relation.patterns) {
    table.patterns.push_back({p.is_base, p.lex_group, p.syn_group});
  }
  const auto mask = scorer.mask_token();
  for (const auto& t : tuples) {
    if (t.relation_id != relation.id) continue;
    std::vector<std::string> row;
    row.reserve(relation.patterns.size());
    for (std::size_t p = 0; p < relation.patterns.size(); ++p) {
      ScoreRequest request;
      request.text = populate(relation, p, t.subject, mask).text;
      request.candidates = relation.candidates;
      request.relation_id = relation.id;
      const auto response = scorer.score(request);
      if (response.log_scores.size() != relation.candidates.size()) {
        throw ScorerError(scorer.model_id() + ": score count does not match candidates");
      }
      row.push_back(relation.candidates[argmax(response.log_scores)]);
    }
    table.subjects.push_back(t.subject);
    table.gold.push_back(t.object);
    table.predictions.push_back(std::move(row));
  }
  return table;
}

ProbeResult probe(const Scorer& scorer, std::span<const Relation> relations,
                  std::span<const KBTuple> tuples) {
  std::vector<const Relation*> ordered;
  for (const auto& r : relations) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const Relation* a, const Relation* b) { return a->id < b->id; });
  ProbeResult result;
  for (const auto* rel : ordered) {
    const auto own = tuples_of(tuples, rel->id);
    if (own.empty()) continue;
    auto table = predict_relation(scorer, *rel, own);
    result.reports.push_back(evaluate(table));
    result.tables.push_back(std::move(table));
  }
  return result;
}

std::size_t query_count(std::span<const Relation> relations, std::span<const KBTuple> tuples) {
  std::map<std::string_view, std::size_t> patterns;
  for (const auto& r : relations) patterns[r.id] = r.patterns.size();
  std::size_t total = 0;
  for (const auto& t : tuples) {
    if (const auto it = patterns.find(t.relation_id); it != patterns.end()) total += it->second;
  }
  return total;
}

std::string predictions_to_jsonl(std::span<const PredictionTable> tables) {
  std::string out;
  for (const auto& table : tables) {
    for (std::size_t t = 0; t < table.tuple_count(); ++t) {
      nlohmann::json line;
      line["relation_id"] = table.relation_id;
      line["cardinality"] = std::string(to_string(table.cardinality));
      line["subject"] = table.subjects.at(t);
      line["gold"] = table.gold[t];
      line["predictions"] = table.predictions[t];
      out += line.dump() + "\n";
    }
  }
  return out;
}

std::vector<PredictionTable> predictions_from_jsonl(std::string_view jsonl) {
  std::vector<PredictionTable> tables;
  std::map<std::string, std::size_t, std::less<>> index;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    const auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      const auto id = doc.at("relation_id").get<std::string>();
      auto [it, inserted] = index.try_emplace(id, tables.size());
      if (inserted) {
        PredictionTable t;
        t.relation_id = id;
        const auto card = parse_cardinality(doc.value("cardinality", std::string("N1")));
        if (!card) throw MetricError("unknown cardinality");
        t.cardinality = *card;
        tables.push_back(std::move(t));
      }
      auto& table = tables[it->second];
      auto row = doc.at("predictions").get<std::vector<std::string>>();
      if (table.patterns.empty()) table.patterns.resize(row.size());
      table.subjects.push_back(doc.at("subject").get<std::string>());
      table.gold.push_back(doc.at("gold").get<std::string>());
      table.predictions.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw MetricError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (const auto& t : tables) t.validate();
  return tables;
}

}  // namespace conslab
