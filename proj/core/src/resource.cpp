#include "conslab/resource.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "conslab/rng.hpp"

namespace conslab {
namespace {

using nlohmann::json;

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++count;
  }
  return count;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ResourceError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void replace_once(std::string& text, std::string_view slot, std::string_view with) {
  const auto pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), with);
}

}  // namespace

std::string_view to_string(Cardinality c) {
  return c == Cardinality::kNToOne ? "N1" : "NM";
}

std::optional<Cardinality> parse_cardinality(std::string_view text) {
  if (text == "N1") return Cardinality::kNToOne;
  if (text == "NM") return Cardinality::kNToMany;
  return std::nullopt;
}

std::size_t Relation::base_index() const {
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    if (patterns[i].is_base) return i;
  }
  throw ResourceError("relation " + id + " has no base pattern");
}

std::optional<std::string> template_problem(std::string_view template_text) {
  const auto xs = count_occurrences(template_text, kSubjectSlot);
  const auto ys = count_occurrences(template_text, kObjectSlot);
  if (xs != 1) {
    return "expected exactly one [X] placeholder, found " + std::to_string(xs);
  }
  if (ys != 1) {
    return "expected exactly one [Y] placeholder, found " + std::to_string(ys);
  }
  return std::nullopt;
}

Relation parse_relation(std::string_view json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ResourceError(origin + ": invalid JSON: " + e.what());
  }
  Relation rel;
  try {
    rel.id = doc.at("relation_id").get<std::string>();
    rel.name = doc.value("name", rel.id);
    const auto card_text = doc.at("cardinality").get<std::string>();
    const auto card = parse_cardinality(card_text);
    if (!card) {
      throw ResourceError(origin + ": unknown cardinality \"" + card_text + "\"");
    }
    rel.cardinality = *card;

    std::size_t base_count = 0;
    for (const auto& p : doc.at("patterns")) {
      Pattern pattern;
      pattern.template_text = p.at("template").get<std::string>();
      pattern.is_base = p.value("is_base", false);
      pattern.lex_group = p.value("lex_group", 0);
      pattern.syn_group = p.value("syn_group", 0);
      if (p.contains("para_type") && !p["para_type"].is_null()) {
        pattern.para_type = p["para_type"].get<std::string>();
      }
      if (auto problem = template_problem(pattern.template_text)) {
        throw ResourceError(origin + ": pattern \"" + pattern.template_text +
                            "\": " + *problem);
      }
      if (pattern.is_base && ++base_count > 1) {
        throw ResourceError(origin + ": pattern \"" + pattern.template_text +
                            "\": duplicate is_base");
      }
      rel.patterns.push_back(std::move(pattern));
    }
    if (rel.patterns.empty()) throw ResourceError(origin + ": no patterns");
    if (base_count == 0) throw ResourceError(origin + ": no is_base pattern");
  } catch (const json::exception& e) {
    throw ResourceError(origin + ": schema error: " + e.what());
  }
  return rel;
}

std::vector<Relation> load_resource(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ResourceError(dir.string() + ": not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  std::vector<Relation> relations;
  std::set<std::string, std::less<>> seen;
  for (const auto& file : files) {
    auto rel = parse_relation(read_file(file), file.string());
    if (!seen.insert(rel.id).second) {
      throw ResourceError(file.string() + ": duplicate relation id " + rel.id);
    }
    relations.push_back(std::move(rel));
  }
  std::sort(relations.begin(), relations.end(),
            [](const Relation& a, const Relation& b) { return a.id < b.id; });
  return relations;
}

ResourceStats compute_stats(std::span<const Relation> relations) {
  ResourceStats stats;
  stats.relations = relations.size();
  if (relations.empty()) return stats;
  stats.min_patterns = relations.front().patterns.size();
  double syn_total = 0.0;
  double lex_total = 0.0;
  for (const auto& rel : relations) {
    const auto n = rel.patterns.size();
    stats.patterns += n;
    stats.min_patterns = std::min(stats.min_patterns, n);
    stats.max_patterns = std::max(stats.max_patterns, n);
    std::set<int> syn;
    std::set<int> lex;
    for (const auto& p : rel.patterns) {
      syn.insert(p.syn_group);
      lex.insert(p.lex_group);
    }
    syn_total += static_cast<double>(syn.size());
    lex_total += static_cast<double>(lex.size());
  }
  const auto count = static_cast<double>(relations.size());
  stats.avg_patterns = static_cast<double>(stats.patterns) / count;
  stats.avg_syn_groups = syn_total / count;
  stats.avg_lex_groups = lex_total / count;
  return stats;
}

TupleLoadResult parse_tuples(std::string_view jsonl,
                             std::span<const Relation> relations) {
  std::set<std::string, std::less<>> known;
  for (const auto& rel : relations) known.insert(rel.id);

  TupleLoadResult result;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < jsonl.size()) {
    auto end = jsonl.find('\n', start);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    KBTuple tuple;
    try {
      const auto doc = json::parse(line);
      tuple.relation_id = doc.at("relation_id").get<std::string>();
      tuple.subject = doc.at("subject").get<std::string>();
      tuple.object = doc.at("object").get<std::string>();
    } catch (const json::exception& e) {
      result.errors.push_back({line_no, e.what()});
      continue;
    }
    if (tuple.subject.empty() || tuple.object.empty()) {
      result.errors.push_back({line_no, "empty subject or object"});
      continue;
    }
    if (tuple.subject.find(kObjectSlot) != std::string::npos) {
      result.errors.push_back({line_no, "subject contains the [Y] placeholder"});
      continue;
    }
    if (!known.contains(tuple.relation_id)) {
      ++result.rejected_unknown_relation;
      continue;
    }
    result.tuples.push_back(std::move(tuple));
  }
  return result;
}

TupleLoadResult load_tuples(const std::filesystem::path& path,
                            std::span<const Relation> relations) {
  return parse_tuples(read_file(path), relations);
}

std::vector<KBTuple> tuples_of(std::span<const KBTuple> tuples,
                               std::string_view relation_id) {
  std::vector<KBTuple> out;
  for (const auto& t : tuples) {
    if (t.relation_id == relation_id) out.push_back(t);
  }
  return out;
}

Relation build_candidates(const Relation& relation,
                          std::span<const KBTuple> tuples) {
  std::set<std::string> objects;
  for (const auto& t : tuples) {
    if (t.relation_id != relation.id) {
      throw ResourceError("tuple for " + t.relation_id +
                          " passed to build_candidates for " + relation.id);
    }
    objects.insert(t.object);
  }
  if (objects.empty()) {
    throw ResourceError("relation " + relation.id + " has no tuples");
  }
  Relation out = relation;
  out.candidates.assign(objects.begin(), objects.end());
  return out;
}

std::vector<Relation> attach_candidates(std::span<const Relation> relations,
                                        std::span<const KBTuple> tuples) {
  std::vector<Relation> out;
  for (const auto& rel : relations) {
    const auto own = tuples_of(tuples, rel.id);
    if (!own.empty()) out.push_back(build_candidates(rel, own));
  }
  return out;
}

std::string populate_text(const Pattern& pattern, std::string_view subject,
                          std::string_view object_filler) {
  std::string text = pattern.template_text;
  replace_once(text, kObjectSlot, object_filler);
  const auto x = pattern.template_text.find(kSubjectSlot);
  const auto y = pattern.template_text.find(kObjectSlot);
  auto x_pos = x;
  if (y < x) x_pos = x - kObjectSlot.size() + object_filler.size();
  text.replace(x_pos, kSubjectSlot.size(), subject);
  return text;
}

PopulatedCloze populate(const Relation& relation, std::size_t pattern_index,
                        std::string_view subject, std::string_view mask_token) {
  if (pattern_index >= relation.patterns.size()) {
    throw ResourceError("pattern index out of range for " + relation.id);
  }
  if (subject.empty()) throw ResourceError("empty subject");
  if (subject.find(kObjectSlot) != std::string_view::npos) {
    throw ResourceError("subject contains the [Y] placeholder");
  }
  const auto& pattern = relation.patterns[pattern_index];
  return PopulatedCloze{populate_text(pattern, subject, mask_token), relation.id,
                        pattern_index, std::string(subject)};
}

FilterResult single_token_filter(std::span<const KBTuple> tuples,
                                 std::span<const TokenVerdicts> verdicts) {
  std::set<std::string> missing;
  for (const auto& t : tuples) {
    for (const auto& v : verdicts) {
      if (!v.contains(t.object)) missing.insert(t.object);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ResourceError("missing single-token verdict for: " + list);
  }

  FilterResult result;
  for (const auto& t : tuples) {
    const bool keep = std::all_of(verdicts.begin(), verdicts.end(), [&](const auto& v) {
      return v.find(t.object)->second;
    });
    if (keep) {
      result.tuples.push_back(t);
    }
  }
  result.retained = result.tuples.size();
  result.removed = tuples.size() - result.retained;
  return result;
}

RelationSplit split_relations(std::span<const Relation> relations,
                              std::span<const std::string> train_ids,
                              std::span<const std::string> val_ids) {
  std::set<std::string, std::less<>> known;
  for (const auto& r : relations) known.insert(r.id);
  std::set<std::string, std::less<>> train(train_ids.begin(), train_ids.end());
  std::set<std::string, std::less<>> val(val_ids.begin(), val_ids.end());
  for (const auto* ids : {&train, &val}) {
    for (const auto& id : *ids) {
      if (!known.contains(id)) throw ResourceError("unknown relation id " + id);
    }
  }
  for (const auto& id : train) {
    if (val.contains(id)) {
      throw ResourceError("relation " + id + " is in both train and val");
    }
  }
  RelationSplit split;
  for (const auto& r : relations) {
    if (train.contains(r.id)) {
      split.train.push_back(r);
    } else if (val.contains(r.id)) {
      split.val.push_back(r);
    } else {
      split.test.push_back(r);
    }
  }
  return split;
}

SynthKB generate_synth_kb(const SynthOptions& options) {
  // Word orders and function words are shared by every relation; {r} is the
  // relation keyword, with one synonym per lexical group.
  static constexpr std::string_view kSkeletons[] = {
      "[X] {f1} {r} {f2} [Y] .",
      "[Y] {f1} {r} {f2} [X] .",
      "{f1} [X] {r} {f2} [Y] .",
      "{f1} {r} [Y] {f2} [X] .",
  };
  static constexpr std::string_view kFillers[] = {"is", "of", "the", "was", "in", "has", "by", "at"};
  constexpr std::size_t kSkeletonCount = std::size(kSkeletons);
  constexpr std::size_t kFillerCount = std::size(kFillers);

  Rng rng(options.seed);
  SynthKB kb;
  std::set<std::string> vocab;

  const auto width = std::to_string(std::max<std::size_t>(options.n_entities, 1) - 1).size();
  std::vector<std::string> entities;
  for (std::size_t e = 0; e < options.n_entities; ++e) {
    auto digits = std::to_string(e);
    entities.push_back("e" + std::string(width - digits.size(), '0') + digits);
    vocab.insert(entities.back());
  }

  for (std::size_t r = 0; r < options.n_relations; ++r) {
    Relation rel;
    rel.id = "R" + std::to_string(r);
    rel.name = "synthetic-relation-" + std::to_string(r);
    rel.cardinality = Cardinality::kNToOne;

    for (std::size_t p = 0; p < options.n_patterns_per_relation; ++p) {
      const std::size_t lex = p / 2;
      const std::size_t syn = (p + lex) % kSkeletonCount;
      const auto keyword = "r" + std::to_string(r) + "k" + std::to_string(lex);
      const std::string f1(kFillers[(2 * p) % kFillerCount]);
      const std::string f2(kFillers[(2 * p + 1) % kFillerCount]);
      std::string text(kSkeletons[syn]);
      replace_once(text, "{r}", keyword);
      replace_once(text, "{f1}", f1);
      replace_once(text, "{f2}", f2);
      vocab.insert(keyword);
      vocab.insert(f1);
      vocab.insert(f2);

      Pattern pattern;
      pattern.template_text = std::move(text);
      pattern.is_base = p == 0;
      pattern.lex_group = static_cast<int>(lex);
      pattern.syn_group = static_cast<int>(syn);
      rel.patterns.push_back(std::move(pattern));
    }

    std::vector<std::string> objects;
    if (options.shared_object_pool > 0) {
      std::vector<std::size_t> pool(options.shared_object_pool);
      for (std::size_t o = 0; o < pool.size(); ++o) pool[o] = o;
      shuffle(std::span(pool), rng);
      const auto take = std::min(options.objects_per_relation, pool.size());
      for (std::size_t o = 0; o < take; ++o) objects.push_back("o" + std::to_string(pool[o]));
    } else {
      for (std::size_t o = 0; o < options.objects_per_relation; ++o) {
        objects.push_back("r" + std::to_string(r) + "o" + std::to_string(o));
      }
    }
    for (const auto& subject : entities) {
      const auto& object = objects[uniform_index(rng, objects.size())];
      vocab.insert(object);
      kb.tuples.push_back({rel.id, subject, object});
    }
    kb.relations.push_back(build_candidates(rel, tuples_of(kb.tuples, rel.id)));
  }
  kb.vocabulary.assign(vocab.begin(), vocab.end());
  return kb;
}

std::string relation_to_json(const Relation& relation) {
  json doc;
  doc["relation_id"] = relation.id;
  doc["name"] = relation.name;
  doc["cardinality"] = std::string(to_string(relation.cardinality));
  doc["patterns"] = json::array();
  for (const auto& p : relation.patterns) {
    json jp;
    jp["template"] = p.template_text;
    jp["is_base"] = p.is_base;
    jp["lex_group"] = p.lex_group;
    jp["syn_group"] = p.syn_group;
    jp["para_type"] = p.para_type ? json(*p.para_type) : json(nullptr);
    doc["patterns"].push_back(std::move(jp));
  }
  return doc.dump(2) + "\n";
}

std::string tuples_to_jsonl(std::span<const KBTuple> tuples) {
  std::string out;
  for (const auto& t : tuples) {
    json doc;
    doc["relation_id"] = t.relation_id;
    doc["subject"] = t.subject;
    doc["object"] = t.object;
    out += doc.dump() + "\n";
  }
  return out;
}

void write_synth_kb(const SynthKB& kb, const std::filesystem::path& dir) {
  const auto relation_dir = dir / "relations";
  std::filesystem::create_directories(relation_dir);
  for (const auto& rel : kb.relations) {
    std::ofstream(relation_dir / (rel.id + ".json"), std::ios::binary)
        << relation_to_json(rel);
  }
  std::ofstream(dir / "tuples.jsonl", std::ios::binary) << tuples_to_jsonl(kb.tuples);
  std::ofstream vocab(dir / "vocab.txt", std::ios::binary);
  for (const auto& token : kb.vocabulary) vocab << token << '\n';
}

}  // namespace conslab
