#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <nlohmann/json.hpp>

#include "conslab/cli.hpp"
#include "conslab/probe.hpp"
#include "conslab/report.hpp"
#include "oracle.hpp"

using namespace conslab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = CONSLAB_TEST_DATA;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run conslab_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("conslab_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string without_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string kept;
  while (std::getline(in, line)) {
    if (line.find("\"timestamp\"") == std::string::npos) kept += line + "\n";
  }
  return kept;
}

const std::string kCapital = (kData / "capital").string();
const std::string kCapitalTuples = (kData / "capital" / "tuples.jsonl").string();

// Synthetic KB plus a briefly pretrained toy checkpoint, built once.
struct ToyWorld {
  fs::path dir;
  std::string relations;
  std::string tuples;
  std::string checkpoint;
};

const ToyWorld& toy_world() {
  static const ToyWorld world = [] {
    ToyWorld w;
    w.dir = scratch("toy_world");
    REQUIRE(conslab_cli({"synth", "--seed", "3", "--out", (w.dir / "kb").string()}).code == 0);
    w.relations = (w.dir / "kb" / "relations").string();
    w.tuples = (w.dir / "kb" / "tuples.jsonl").string();
    w.checkpoint = (w.dir / "toy.ckpt").string();
    const auto r = conslab_cli({"pretrain", "--resource", w.relations, "--tuples", w.tuples, "--epochs", "8",
                                "--exposure", "0.4", "--seed", "2", "--out", w.checkpoint});
    REQUIRE(r.code == 0);
    return w;
  }();
  return world;
}

void write_predictions(const fs::path& path, const std::vector<bool>& correct) {
  std::string text;
  for (std::size_t i = 0; i < correct.size(); ++i) {
    const std::string guess = correct[i] ? "G" : "X";
    text += json{{"relation_id", "P1"},
                 {"cardinality", "N1"},
                 {"subject", "s" + std::to_string(i)},
                 {"gold", "G"},
                 {"predictions", {guess, guess}}}
                .dump() +
            "\n";
  }
  write_text(path, text);
}

}  // namespace

TEST_CASE("validate reports resource statistics") {
  const auto r = conslab_cli({"validate", "--resource", kCapital});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  CHECK(doc["statistics"]["relations"] == 2);
  CHECK(doc["statistics"]["patterns"] == 5);
  CHECK(doc["statistics"]["min_patterns"] == 2);
  CHECK(doc["statistics"]["max_patterns"] == 3);
  CHECK(doc["relations"][0]["lex_groups"] == 2);
  CHECK(doc["command"] == "validate");
  CHECK(doc.contains("resource_fingerprint"));
  CHECK(doc.contains("timestamp"));
}

TEST_CASE("input errors exit with code 2 and name the file") {
  const auto missing_y = conslab_cli({"validate", "--resource", (kData / "bad_missing_y").string()});
  CHECK(missing_y.code == cli::kInputError);
  CHECK(missing_y.err.find("P19.json") != std::string::npos);
  const auto card = conslab_cli({"validate", "--resource", (kData / "bad_cardinality").string()});
  CHECK(card.code == cli::kInputError);
  CHECK(card.err.find("P19.json") != std::string::npos);

  const auto empty = scratch("empty");
  CHECK(conslab_cli({"validate", "--resource", empty.string()}).code == cli::kInputError);
  CHECK(conslab_cli({"probe", "--resource", kCapital}).code == cli::kInputError);
  CHECK(conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--scorer", "oracle"}).code ==
        cli::kInputError);
  CHECK(conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--scorer", "toy:/no/such"}).code ==
        cli::kInputError);
  CHECK(conslab_cli({"frobnicate"}).code == cli::kInputError);
  CHECK(conslab_cli({}).code == cli::kInputError);
  CHECK(conslab_cli({"--help"}).code == cli::kSuccess);
}

TEST_CASE("malformed tuple lines are a validation failure") {
  const auto dir = scratch("bad_tuples");
  write_text(dir / "tuples.jsonl", read_text(kCapitalTuples) + "{\"relation_id\": \"P36\"\n");
  const auto r = conslab_cli({"validate", "--resource", kCapital, "--tuples", (dir / "tuples.jsonl").string()});
  CHECK(r.code == cli::kFailure);
  CHECK(r.err.find("line 11") != std::string::npos);
  const auto doc = json::parse(r.out);
  CHECK(doc["tuples"]["loaded"] == 8);
  CHECK(doc["tuples"]["rejected_unknown_relation"] == 2);
}

TEST_CASE("probe with the majority scorer") {
  const auto dir = scratch("majority");
  const auto report = (dir / "report.json").string();
  const auto predictions = (dir / "predictions.jsonl").string();
  const auto r = conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--out", report,
                              "--predictions", predictions});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(read_text(report));
  CHECK(doc["relations"][0]["consistency"] == 1.0);
  CHECK(doc["relations"][1]["consistency"].is_null());
  CHECK(doc["relations"][1]["determinism"] == 1.0);
  CHECK(doc["macro"]["consistency"]["mean"] == 1.0);
  CHECK(doc["micro"]["accuracy"]["mean"] == doctest::Approx(0.2));
  CHECK(doc["scorer"] == "majority");
  CHECK(predictions_from_jsonl(read_text(predictions)).size() == 2);

  const auto macro_only = conslab_cli(
      {"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--aggregate", "macro"});
  CHECK_FALSE(json::parse(macro_only.out).contains("micro"));
}

TEST_CASE("dry run counts queries") {
  const auto r = conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--dry-run"});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  CHECK(doc["queries"]["P36"] == 15);
  CHECK(doc["queries"]["P47"] == 6);
  CHECK(doc["total_queries"] == 21);
}

TEST_CASE("toy probe matches an oracle rerun over the prediction dump") {
  const auto& w = toy_world();
  const auto dir = scratch("toy_probe");
  const auto predictions = (dir / "predictions.jsonl").string();
  const auto r = conslab_cli({"probe", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                              "toy:" + w.checkpoint, "--predictions", predictions});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  auto tables = predictions_from_jsonl(read_text(predictions));
  const auto relations = load_resource(w.relations);
  REQUIRE(tables.size() == doc["relations"].size());
  for (std::size_t i = 0; i < tables.size(); ++i) {
    auto& t = tables[i];
    const auto& rel = *std::find_if(relations.begin(), relations.end(),
                                    [&](const Relation& x) { return x.id == t.relation_id; });
    t.patterns.clear();
    for (const auto& p : rel.patterns) t.patterns.push_back({p.is_base, p.lex_group, p.syn_group});
    const auto naive = oracle::naive_metrics(t);
    const auto& got = doc["relations"][i];
    CHECK(got["relation_id"] == t.relation_id);
    CHECK(got["consistency"].get<double>() == *naive.consistency);
    CHECK(got["accuracy"].get<double>() == *naive.accuracy);
    CHECK(got["consistent_acc"].get<double>() == *naive.consistent_acc);
    CHECK(got["succ_patt"].get<double>() == *naive.succ_patt);
    CHECK(got["succ_objs"].get<double>() == *naive.succ_objs);
    CHECK(got["pair_count"].get<std::size_t>() == naive.pairs);
  }
}

TEST_CASE("reports are byte-identical apart from the timestamp") {
  const auto& w = toy_world();
  const std::vector<std::string> probe_args = {"probe",    "--resource", w.relations, "--tuples",
                                               w.tuples, "--scorer",   "toy:" + w.checkpoint};
  const auto a = conslab_cli(probe_args);
  const auto b = conslab_cli(probe_args);
  REQUIRE(a.code == cli::kSuccess);
  CHECK(without_timestamp(a.out) == without_timestamp(b.out));
  CHECK(without_timestamp(a.out).size() + 40 > a.out.size());

  const auto dir = scratch("repro");
  auto train_args = [&](const std::string& out) {
    return std::vector<std::string>{"train", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                                    "toy:" + w.checkpoint, "--train-relations", "R0,R1", "--val-relations", "R2",
                                    "--lambda-grid", "0,0.5", "--epochs", "1", "--seed", "9", "--out", out};
  };
  REQUIRE(conslab_cli(train_args((dir / "one").string())).code == cli::kSuccess);
  REQUIRE(conslab_cli(train_args((dir / "two").string())).code == cli::kSuccess);
  CHECK(without_timestamp(read_text(dir / "one" / "report.json")) ==
        without_timestamp(read_text(dir / "two" / "report.json")));
  CHECK(read_text(dir / "one" / "checkpoint.bin") == read_text(dir / "two" / "checkpoint.bin"));
  CHECK(read_text(dir / "one" / "log_lambda_0.5.json") == read_text(dir / "two" / "log_lambda_0.5.json"));
}

TEST_CASE("train runs the lambda grid and records the selection") {
  const auto& w = toy_world();
  const auto out = scratch("train_grid") / "run";
  const auto r = conslab_cli({"train", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                              "toy:" + w.checkpoint, "--train-relations", "R0,R1", "--val-relations", "R2",
                              "--epochs", "1", "--no-typed", "--out", out.string()});
  REQUIRE(r.code == cli::kSuccess);
  for (const auto* name : {"log_lambda_0.1.json", "log_lambda_0.5.json", "log_lambda_1.json", "checkpoint.bin",
                           "predictions_before.jsonl", "predictions_after.jsonl", "report.json"}) {
    CHECK(fs::exists(out / name));
  }
  const auto doc = json::parse(read_text(out / "report.json"));
  CHECK(doc["selection"]["grid"].size() == 3);
  CHECK(doc["selection"]["criterion"] == "val_consistent_acc");
  CHECK(doc["split"]["test"] == json{"R3", "R4"});
  CHECK(doc["config"]["train"]["restrict_to_candidates"] == false);
  CHECK(doc["config"]["train"]["use_mlm_loss"] == true);
  CHECK(doc["significance"]["tuples"] == 100);
  const auto chosen = doc["selection"]["chosen_lambda"].get<double>();
  double best = -1.0;
  for (const auto& g : doc["selection"]["grid"]) best = std::max(best, g["val_consistent_acc"].get<double>());
  for (const auto& g : doc["selection"]["grid"]) {
    if (g["lambda"].get<double>() == chosen) CHECK(g["val_consistent_acc"].get<double>() == best);
  }
  CHECK(ToyMlm::load(out / "checkpoint.bin").vocab().size() > 0);
}

TEST_CASE("zero learning rate leaves metrics unchanged") {
  const auto& w = toy_world();
  const auto out = scratch("train_zero") / "run";
  const auto r = conslab_cli({"train", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                              "toy:" + w.checkpoint, "--train-relations", "R0", "--lr", "0", "--epochs", "1",
                              "--lambda-grid", "1", "--out", out.string()});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  CHECK(doc["before"] == doc["after"]);
  CHECK(doc["significance"]["p_value"] == 1.0);
  CHECK(read_text(out / "predictions_before.jsonl") == read_text(out / "predictions_after.jsonl"));
}

TEST_CASE("ablation flags reach the training configuration") {
  const auto& w = toy_world();
  const auto dir = scratch("ablation");
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"--no-consistency-loss", "use_consistency_loss"}, {"--no-typed", "restrict_to_candidates"},
      {"--no-mlm", "use_mlm_loss"}};
  for (const auto& [flag, key] : flags) {
    const auto r = conslab_cli({"train", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                                "toy:" + w.checkpoint, "--train-relations", "R0", "--epochs", "1", "--lambda-grid",
                                "0.5", flag, "--out", (dir / key).string()});
    REQUIRE(r.code == cli::kSuccess);
    const auto config = json::parse(r.out)["config"]["train"];
    CHECK(config[key] == false);
    for (const auto& [other_flag, other_key] : flags) {
      if (other_key != key) CHECK(config[other_key] == true);
    }
  }
}

TEST_CASE("train failures") {
  const auto& w = toy_world();
  const auto dir = scratch("train_fail");
  const std::vector<std::string> base = {"train", "--resource", w.relations, "--tuples", w.tuples};
  auto with = [&](std::vector<std::string> extra) {
    auto args = base;
    args.insert(args.end(), extra.begin(), extra.end());
    return conslab_cli(args);
  };
  CHECK(with({"--scorer", "majority", "--out", (dir / "a").string()}).code == cli::kInputError);
  CHECK(with({"--scorer", "toy:" + w.checkpoint, "--out", (dir / "b").string()}).code == cli::kInputError);
  const auto diverged = with({"--scorer", "toy:" + w.checkpoint, "--train-relations", "R0", "--lr", "1e200",
                              "--lambda-grid", "1", "--out", (dir / "c").string()});
  CHECK(diverged.code == cli::kFailure);
  CHECK(diverged.err.find("diverged at step") != std::string::npos);
  CHECK(with({"--scorer", "toy:" + w.checkpoint, "--train-relations", "R0", "--batch-tuples", "0", "--out",
              (dir / "d").string()})
            .code == cli::kInputError);
}

TEST_CASE("compare runs McNemar on paired tuple correctness") {
  const auto dir = scratch("compare");
  std::vector<bool> a(30, true);
  std::vector<bool> b(30, true);
  for (std::size_t i = 0; i < 15; ++i) b[i] = false;
  for (std::size_t i = 15; i < 20; ++i) a[i] = false;
  write_predictions(dir / "a.jsonl", a);
  write_predictions(dir / "b.jsonl", b);
  const auto pa = (dir / "a.jsonl").string();
  const auto pb = (dir / "b.jsonl").string();

  const auto chi = conslab_cli({"compare", "--predictions-a", pa, "--predictions-b", pb, "--method", "chi2"});
  REQUIRE(chi.code == cli::kSuccess);
  const auto doc = json::parse(chi.out);
  CHECK(doc["b"] == 15);
  CHECK(doc["c"] == 5);
  CHECK(doc["statistic"].get<double>() == doctest::Approx(4.05));
  CHECK(doc["p_value"].get<double>() == doctest::Approx(0.0441).epsilon(0.01));

  const auto automatic = json::parse(conslab_cli({"compare", "--predictions-a", pa, "--predictions-b", pb}).out);
  CHECK(automatic["method"] == "exact");
  CHECK(automatic["p_value"].get<double>() == doctest::Approx(0.04139).epsilon(0.001));

  const auto self = json::parse(conslab_cli({"compare", "--predictions-a", pa, "--predictions-b", pa}).out);
  CHECK(self["p_value"] == 1.0);

  write_predictions(dir / "short.jsonl", std::vector<bool>(29, true));
  const auto misaligned =
      conslab_cli({"compare", "--predictions-a", pa, "--predictions-b", (dir / "short.jsonl").string()});
  CHECK(misaligned.code == cli::kInputError);
  CHECK(misaligned.err.find("s29") != std::string::npos);
}

TEST_CASE("analyze writes embeddings and v-measures") {
  const auto& w = toy_world();
  const auto out = scratch("analyze") / "run";
  const auto r = conslab_cli({"analyze", "--resource", w.relations, "--tuples", w.tuples, "--scorer",
                              "toy:" + w.checkpoint, "--relation", "R1", "--seed", "4", "--out", out.string()});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  CHECK(doc["points"] == 200);
  CHECK(doc["k_patterns"] == 4);
  CHECK(doc["k_subjects"] == 50);
  CHECK(doc["pattern_vmeasure"].get<double>() >= 0.0);
  CHECK(doc["pattern_vmeasure"].get<double>() <= 1.0);
  const auto tsv = read_text(out / "embeddings.tsv");
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 201);

  const auto majority = conslab_cli({"analyze", "--resource", w.relations, "--tuples", w.tuples, "--relation",
                                     "R1", "--out", out.string()});
  CHECK(majority.code == cli::kInputError);
  CHECK(majority.err.find("majority") != std::string::npos);
}

TEST_CASE("probe through the bridge") {
  const std::string fake = CONSLAB_FAKE_BRIDGE;
  const auto r = conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--scorer",
                              "bridge:" + fake});
  REQUIRE(r.code == cli::kSuccess);
  const auto doc = json::parse(r.out);
  CHECK(doc["scorer"] == "fake-mlm");
  CHECK(doc["relations"][0]["consistency"] == 1.0);

  ::setenv("CONSLAB_BRIDGE", fake.c_str(), 1);
  const auto env = conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--scorer",
                                "bridge:/does/not/exist"});
  ::unsetenv("CONSLAB_BRIDGE");
  CHECK(env.code == cli::kSuccess);

  const auto failing = conslab_cli({"probe", "--resource", kCapital, "--tuples", kCapitalTuples, "--scorer",
                                    "bridge:" + fake + " --fail-hello"});
  CHECK(failing.code == cli::kInputError);
  CHECK(failing.err.find("model failed to load") != std::string::npos);
}
