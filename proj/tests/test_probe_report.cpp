#include <doctest.h>

#include <filesystem>
#include <map>

#include "conslab/probe.hpp"
#include "conslab/report.hpp"

using namespace conslab;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CONSLAB_TEST_DATA;

struct Fixture {
  std::vector<Relation> relations;
  std::vector<KBTuple> tuples;
};

Fixture capital() {
  Fixture f;
  const auto loaded = load_resource(kData / "capital");
  f.tuples = load_tuples(kData / "capital" / "tuples.jsonl", loaded).tuples;
  f.relations = attach_candidates(loaded, f.tuples);
  return f;
}

}  // namespace

TEST_CASE("probe with the majority scorer on the fixture") {
  const auto f = capital();
  const MajorityScorer majority(f.relations, f.tuples);
  CHECK(query_count(f.relations, f.tuples) == 5 * 3 + 3 * 2);

  const auto result = probe(majority, f.relations, f.tuples);
  REQUIRE(result.tables.size() == 2);
  CHECK(result.tables[0].relation_id == "P36");
  CHECK(result.tables[1].relation_id == "P47");
  for (const auto& row : result.tables[0].predictions) {
    CHECK(row == std::vector<std::string>{"Cardiff", "Cardiff", "Cardiff"});
  }
  const auto& p36 = result.reports[0];
  CHECK(p36.consistency == 1.0);
  CHECK(*p36.accuracy == doctest::Approx(0.2));
  CHECK(result.tables[1].predictions[0] == std::vector<std::string>{"Greece", "Greece"});
  CHECK(result.reports[1].determinism == 1.0);
}

TEST_CASE("predict_relation needs candidates") {
  const auto loaded = load_resource(kData / "capital");
  const MajorityScorer majority(capital().relations, capital().tuples);
  CHECK_THROWS_AS(predict_relation(majority, loaded[0], capital().tuples), MetricError);
}

TEST_CASE("majority accuracy equals the modal object frequency") {
  SynthOptions options;
  options.seed = 11;
  const auto kb = generate_synth_kb(options);
  const auto relations = attach_candidates(kb.relations, kb.tuples);
  const MajorityScorer majority(relations, kb.tuples);
  const auto result = probe(majority, relations, kb.tuples);
  REQUIRE(result.reports.size() == relations.size());
  for (const auto& report : result.reports) {
    std::map<std::string, std::size_t> counts;
    const auto own = tuples_of(kb.tuples, report.relation_id);
    for (const auto& t : own) ++counts[t.object];
    std::size_t modal = 0;
    for (const auto& [object, n] : counts) modal = std::max(modal, n);
    CHECK(*report.accuracy == doctest::Approx(static_cast<double>(modal) / own.size()));
    CHECK(report.consistency == 1.0);
  }
}

TEST_CASE("predictions jsonl round trip") {
  const auto f = capital();
  const MajorityScorer majority(f.relations, f.tuples);
  const auto result = probe(majority, f.relations, f.tuples);
  const auto text = predictions_to_jsonl(result.tables);
  CHECK(std::count(text.begin(), text.end(), '\n') == 8);

  const auto back = predictions_from_jsonl(text);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].relation_id == result.tables[i].relation_id);
    CHECK(back[i].cardinality == result.tables[i].cardinality);
    CHECK(back[i].subjects == result.tables[i].subjects);
    CHECK(back[i].gold == result.tables[i].gold);
    CHECK(back[i].predictions == result.tables[i].predictions);
  }
  CHECK(predictions_to_jsonl(back) == text);

  CHECK_THROWS_WITH_AS(predictions_from_jsonl("{\"relation_id\":\"P1\"}\n"),
                       doctest::Contains("line 1"), MetricError);
  CHECK_THROWS_AS(predictions_from_jsonl("not json\n"), MetricError);
  CHECK(predictions_from_jsonl("\n  \n").empty());
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("resource fingerprint") {
  const auto dir = kData / "capital";
  const auto a = resource_fingerprint(dir, dir / "tuples.jsonl");
  CHECK(a.size() == 16);
  CHECK(a == resource_fingerprint(dir, dir / "tuples.jsonl"));
  CHECK(a != resource_fingerprint(dir));

  const auto copy = fs::temp_directory_path() / "conslab_test_fingerprint";
  fs::remove_all(copy);
  fs::create_directories(copy);
  for (const auto& name : {"P36.json", "P47.json", "tuples.jsonl"}) fs::copy_file(dir / name, copy / name);
  CHECK(resource_fingerprint(copy, copy / "tuples.jsonl") == a);
  write_text(copy / "P47.json", read_text(copy / "P47.json") + " ");
  CHECK(resource_fingerprint(copy, copy / "tuples.jsonl") != a);
  fs::remove_all(copy);
}

TEST_CASE("report serialization") {
  const auto f = capital();
  const MajorityScorer majority(f.relations, f.tuples);
  const auto result = probe(majority, f.relations, f.tuples);
  const auto doc = suite_to_json(result.reports, true, true);
  CHECK(doc["relations"].size() == 2);
  CHECK(doc["relations"][1]["consistency"].is_null());
  CHECK(doc["macro"]["std"] == "population");
  CHECK(doc["micro"]["consistency"]["mean"] == 1.0);
  CHECK_FALSE(suite_to_json(result.reports, false, true).contains("macro"));

  const auto text = dump_report(doc);
  CHECK(text.back() == '\n');
  CHECK(text == dump_report(nlohmann::json::parse(text)));
  CHECK(text.find("\"accuracy\"") < text.find("\"consistency\""));

  const auto ts = utc_timestamp();
  CHECK(ts.size() == 20);
  CHECK(ts.back() == 'Z');

  TrainConfig config;
  CHECK(to_json(config)["pair_reduction"] == "mean");
}
