#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "conslab/report.hpp"
#include "conslab/resource.hpp"

using namespace conslab;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CONSLAB_TEST_DATA;

Relation two_pattern_relation() {
  Relation r;
  r.id = "P19";
  r.patterns = {{"[X] was born in [Y].", true, 0, 0, {}}, {"[X] is a native of [Y].", false, 1, 1, {}}};
  return r;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("conslab_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("template placeholders") {
  CHECK_FALSE(template_problem("[X] was born in [Y]."));
  CHECK(template_problem("[X] born in"));
  CHECK(template_problem("[X] and [X] in [Y]"));
  CHECK(template_problem("[Y] in [Y] of [X]"));
}

TEST_CASE("load_resource on the fixture directory") {
  const auto rels = load_resource(kData / "capital");
  REQUIRE(rels.size() == 2);
  CHECK(rels[0].id == "P36");
  CHECK(rels[0].cardinality == Cardinality::kNToOne);
  CHECK(rels[0].patterns.size() == 3);
  CHECK(rels[0].base_index() == 0);
  CHECK(rels[0].patterns[1].para_type == "possessive");
  CHECK_FALSE(rels[0].patterns[0].para_type);
  CHECK(rels[1].id == "P47");
  CHECK(rels[1].cardinality == Cardinality::kNToMany);

  const auto stats = compute_stats(rels);
  CHECK(stats.relations == 2);
  CHECK(stats.patterns == 5);
  CHECK(stats.min_patterns == 2);
  CHECK(stats.max_patterns == 3);
  CHECK(stats.avg_patterns == doctest::Approx(2.5));
  CHECK(stats.avg_syn_groups == doctest::Approx(2.5));
  CHECK(stats.avg_lex_groups == doctest::Approx(2.0));
}

TEST_CASE("single relation with two patterns") {
  const auto dir = scratch_dir("single");
  write_text(dir / "P19.json", relation_to_json(two_pattern_relation()));
  const auto rels = load_resource(dir);
  REQUIRE(rels.size() == 1);
  CHECK(rels[0].patterns.size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("load errors name the file and pattern") {
  try {
    load_resource(kData / "bad_missing_y");
    FAIL("expected ResourceError");
  } catch (const ResourceError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("P19.json") != std::string::npos);
    CHECK(msg.find("[X] born in") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(load_resource(kData / "bad_cardinality"),
                       doctest::Contains("unknown cardinality"), ResourceError);

  auto rel = two_pattern_relation();
  rel.patterns[1].is_base = true;
  CHECK_THROWS_WITH_AS(parse_relation(relation_to_json(rel), "dup.json"),
                       doctest::Contains("duplicate is_base"), ResourceError);
  rel.patterns[0].is_base = rel.patterns[1].is_base = false;
  CHECK_THROWS_AS(parse_relation(relation_to_json(rel), "nobase.json"), ResourceError);
  CHECK_THROWS_AS(parse_relation("{not json", "x.json"), ResourceError);
  CHECK_THROWS_AS(load_resource(kData / "does_not_exist"), ResourceError);
}

TEST_CASE("load_tuples counts unknown relations") {
  const auto rels = load_resource(kData / "capital");
  const auto loaded = load_tuples(kData / "capital" / "tuples.jsonl", rels);
  CHECK(loaded.tuples.size() == 8);
  CHECK(loaded.rejected_unknown_relation == 2);
  CHECK(loaded.errors.empty());
  CHECK(loaded.tuples[0] == KBTuple{"P36", "Wales", "Cardiff"});
}

TEST_CASE("parse_tuples edge cases") {
  const auto rels = load_resource(kData / "capital");
  CHECK(parse_tuples("", rels).tuples.empty());

  const auto one = parse_tuples(R"({"relation_id":"P36","subject":"Wales","object":"Cardiff"})", rels);
  REQUIRE(one.tuples.size() == 1);
  CHECK(one.tuples[0].object == "Cardiff");

  const auto bad = parse_tuples(
      "{\"relation_id\":\"P36\",\"subject\":\"\",\"object\":\"X\"}\n"
      "{\"relation_id\":\"P36\",\"object\":\"X\"}\n"
      "not json\n"
      "{\"relation_id\":\"P36\",\"subject\":\"a [Y] b\",\"object\":\"X\"}\n"
      "\n"
      "{\"relation_id\":\"P36\",\"subject\":\"Peru\",\"object\":\"Lima\"}\r\n",
      rels);
  CHECK(bad.tuples.size() == 1);
  REQUIRE(bad.errors.size() == 4);
  CHECK(bad.errors[0].line == 1);
  CHECK(bad.errors[3].line == 4);
}

TEST_CASE("build_candidates") {
  Relation rel = two_pattern_relation();
  rel.id = "P449";
  const std::vector<KBTuple> tuples = {
      {"P449", "Dexter", "Showtime"}, {"P449", "Friends", "NBC"}, {"P449", "Homeland", "Showtime"}};
  CHECK(build_candidates(rel, tuples).candidates == std::vector<std::string>{"NBC", "Showtime"});

  rel.id = "P19";
  const std::vector<KBTuple> born = {{"P19", "a", "Paris"}, {"P19", "b", "London"}, {"P19", "c", "Tokyo"}};
  CHECK(build_candidates(rel, born).candidates == std::vector<std::string>{"London", "Paris", "Tokyo"});

  std::vector<KBTuple> many;
  for (int i = 0; i < 1000; ++i) {
    many.push_back({"P19", "s" + std::to_string(i), "city" + std::to_string(i % 50)});
  }
  CHECK(build_candidates(rel, many).candidates.size() == 50);
  CHECK_THROWS_AS(build_candidates(rel, std::vector<KBTuple>{}), ResourceError);
  CHECK_THROWS_AS(build_candidates(rel, tuples), ResourceError);
}

TEST_CASE("populate") {
  Relation rel;
  rel.id = "P19";
  rel.patterns = {{"[X] was born in [Y].", true, 0, 0, {}}, {"[Y] borders with [X].", false, 1, 1, {}}};
  CHECK(populate(rel, 0, "Adriaan Pauw", "[MASK]").text == "Adriaan Pauw was born in [MASK].");
  CHECK(populate(rel, 1, "Albania", "[MASK]").text == "[MASK] borders with Albania.");
  CHECK(populate(rel, 1, "Albania", "<mask>").text == "<mask> borders with Albania.");

  const auto cloze = populate(rel, 0, "Wales", "[MASK]");
  CHECK(cloze.relation_id == "P19");
  CHECK(cloze.pattern_index == 0);
  CHECK(cloze.subject == "Wales");

  CHECK_THROWS_AS(populate(rel, 2, "Wales", "[MASK]"), ResourceError);
  CHECK_THROWS_AS(populate(rel, 0, "", "[MASK]"), ResourceError);
  CHECK_THROWS_AS(populate(rel, 0, "x [Y]", "[MASK]"), ResourceError);
}

TEST_CASE("populate recovers the subject exactly once") {
  Relation rel;
  rel.id = "T";
  rel.patterns = {{"The capital of [X] is [Y] .", true, 0, 0, {}},
                  {"[Y] , capital of [X] .", false, 0, 1, {}},
                  {"[X][Y]", false, 1, 1, {}}};
  for (const std::string subject : {"Wales", "Sierra Leone", "X", "[X]", "a.b"}) {
    for (std::size_t p = 0; p < rel.patterns.size(); ++p) {
      const auto text = populate(rel, p, subject, "[MASK]").text;
      const auto& tpl = rel.patterns[p].template_text;
      const auto prefix = tpl.substr(0, tpl.find("[X]"));
      std::string expected_prefix = prefix;
      if (const auto y = expected_prefix.find("[Y]"); y != std::string::npos) {
        expected_prefix.replace(y, 3, "[MASK]");
      }
      CHECK(text.substr(expected_prefix.size(), subject.size()) == subject);
      CHECK(text.find("[Y]") == std::string::npos);
      std::size_t masks = 0;
      for (auto pos = text.find("[MASK]"); pos != std::string::npos; pos = text.find("[MASK]", pos + 1)) ++masks;
      CHECK(masks == 1);
    }
  }
}

TEST_CASE("single_token_filter") {
  const std::vector<KBTuple> tuples = {{"P36", "Wales", "Cardiff"}, {"P36", "Luxembourg", "Luxembourg City"}};
  TokenVerdicts all_true = {{"Cardiff", true}, {"Luxembourg City", true}};
  TokenVerdicts a = {{"Cardiff", true}, {"Luxembourg City", false}};
  TokenVerdicts b = {{"Cardiff", false}, {"Luxembourg City", false}};

  const std::vector<TokenVerdicts> identity = {all_true};
  const auto same = single_token_filter(tuples, identity);
  CHECK(same.tuples == tuples);
  CHECK(same.removed == 0);

  const std::vector<TokenVerdicts> both = {a, b};
  const auto none = single_token_filter(tuples, both);
  CHECK(none.tuples.empty());
  CHECK(none.retained == 0);
  CHECK(none.removed == 2);

  const std::vector<TokenVerdicts> only_a = {a};
  const auto once = single_token_filter(tuples, only_a);
  CHECK(once.tuples.size() == 1);
  const auto twice = single_token_filter(once.tuples, only_a);
  CHECK(twice.tuples == once.tuples);

  const std::vector<TokenVerdicts> gap = {TokenVerdicts{{"Cardiff", true}}};
  CHECK_THROWS_WITH_AS(single_token_filter(tuples, gap), doctest::Contains("Luxembourg City"),
                       ResourceError);
}

TEST_CASE("split_relations") {
  std::vector<Relation> rels(10);
  for (std::size_t i = 0; i < rels.size(); ++i) rels[i].id = "R" + std::to_string(i);
  const std::vector<std::string> train = {"R0", "R1"};
  const std::vector<std::string> val = {"R2", "R3"};
  const auto split = split_relations(rels, train, val);
  CHECK(split.train.size() == 2);
  CHECK(split.val.size() == 2);
  CHECK(split.test.size() == 6);

  std::set<std::string> seen;
  for (const auto* part : {&split.train, &split.val, &split.test}) {
    for (const auto& r : *part) CHECK(seen.insert(r.id).second);
  }
  CHECK(seen.size() == rels.size());

  const auto everything = split_relations(rels, {}, {});
  CHECK(everything.test.size() == 10);

  const std::vector<std::string> overlap = {"R1"};
  CHECK_THROWS_AS(split_relations(rels, train, overlap), ResourceError);
  const std::vector<std::string> unknown = {"R99"};
  CHECK_THROWS_AS(split_relations(rels, unknown, {}), ResourceError);
}

TEST_CASE("synthetic KB contract by brute-force scan") {
  SynthOptions opt;
  opt.seed = 1;
  const auto kb = generate_synth_kb(opt);
  REQUIRE(kb.relations.size() == 5);
  for (const auto& rel : kb.relations) {
    CHECK(rel.patterns.size() == 4);
    CHECK(rel.eligible_for_consistency());
    CHECK(rel.cardinality == Cardinality::kNToOne);
    CHECK(std::count_if(rel.patterns.begin(), rel.patterns.end(),
                        [](const Pattern& p) { return p.is_base; }) == 1);
    for (const auto& p : rel.patterns) CHECK_FALSE(template_problem(p.template_text));

    std::map<std::string, std::set<std::string>> objects_of;
    for (const auto& t : kb.tuples) {
      if (t.relation_id == rel.id) objects_of[t.subject].insert(t.object);
    }
    CHECK(objects_of.size() == 50);
    for (const auto& [subject, objects] : objects_of) {
      CHECK(objects.size() == 1);
      CHECK(std::binary_search(rel.candidates.begin(), rel.candidates.end(), *objects.begin()));
    }
  }
  for (const auto& t : kb.tuples) {
    CHECK(std::binary_search(kb.vocabulary.begin(), kb.vocabulary.end(), t.subject));
    CHECK(std::binary_search(kb.vocabulary.begin(), kb.vocabulary.end(), t.object));
  }
}

TEST_CASE("synthetic KB is deterministic in the seed") {
  SynthOptions opt;
  const auto a = generate_synth_kb(opt);
  const auto b = generate_synth_kb(opt);
  CHECK(tuples_to_jsonl(a.tuples) == tuples_to_jsonl(b.tuples));

  const auto dir_a = scratch_dir("synth_a");
  const auto dir_b = scratch_dir("synth_b");
  write_synth_kb(a, dir_a);
  write_synth_kb(b, dir_b);
  CHECK(resource_fingerprint(dir_a / "relations", dir_a / "tuples.jsonl") ==
        resource_fingerprint(dir_b / "relations", dir_b / "tuples.jsonl"));
  CHECK(read_text(dir_a / "vocab.txt") == read_text(dir_b / "vocab.txt"));

  const auto reloaded = load_resource(dir_a / "relations");
  CHECK(reloaded.size() == 5);
  CHECK(load_tuples(dir_a / "tuples.jsonl", reloaded).tuples == a.tuples);
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  opt.seed = 2;
  CHECK(tuples_to_jsonl(generate_synth_kb(opt).tuples) != tuples_to_jsonl(a.tuples));
}

TEST_CASE("one-pattern synthetic relation is ineligible") {
  SynthOptions opt;
  opt.n_patterns_per_relation = 1;
  const auto kb = generate_synth_kb(opt);
  for (const auto& rel : kb.relations) CHECK_FALSE(rel.eligible_for_consistency());
}
