#include "conslab/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "conslab/analysis.hpp"
#include "conslab/bridge.hpp"
#include "conslab/probe.hpp"
#include "conslab/report.hpp"
#include "conslab/resource.hpp"
#include "conslab/scorer.hpp"
#include "conslab/trainer.hpp"

namespace conslab::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised for problems with the user's inputs; maps to kInputError.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a run completes but its outcome must be flagged; maps to kFailure.
class RunFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string resource;
  std::string tuples;
};

struct ScorerOptions {
  std::string scorer = "majority";
};

struct Loaded {
  std::vector<Relation> relations;
  std::vector<KBTuple> tuples;
  std::size_t rejected_unknown_relation = 0;
  std::vector<LineError> tuple_errors;
  std::string fingerprint;
};

Loaded load_inputs(const DataOptions& data) {
  Loaded in;
  in.relations = load_resource(data.resource);
  if (in.relations.empty()) throw InputError("no relation files in " + data.resource);
  if (!data.tuples.empty()) {
    auto result = load_tuples(data.tuples, in.relations);
    in.tuples = std::move(result.tuples);
    in.rejected_unknown_relation = result.rejected_unknown_relation;
    in.tuple_errors = std::move(result.errors);
  }
  in.fingerprint = resource_fingerprint(data.resource, data.tuples);
  return in;
}

std::unique_ptr<Scorer> make_scorer(const std::string& choice, std::span<const Relation> relations,
                                    std::span<const KBTuple> tuples) {
  if (choice == "majority") return std::make_unique<MajorityScorer>(relations, tuples);
  if (choice.starts_with("toy:")) {
    const auto path = choice.substr(4);
    return std::make_unique<ToyScorer>(ToyMlm::load(path), "toy:" + fs::path(path).filename().string());
  }
  if (choice == "bridge" || choice.starts_with("bridge:")) {
    std::string endpoint = choice == "bridge" ? "" : choice.substr(7);
    if (const char* env = std::getenv("CONSLAB_BRIDGE"); env != nullptr && *env != '\0') endpoint = env;
    if (endpoint.empty()) throw InputError("bridge scorer needs an endpoint or CONSLAB_BRIDGE");
    return BridgeScorer::connect(endpoint);
  }
  throw InputError("unknown scorer \"" + choice + "\" (expected majority, toy:<ckpt> or bridge:<endpoint>)");
}

/// Drops tuples whose object the scorer cannot produce as a single token,
/// then builds candidate sets from what remains.
struct Prepared {
  std::vector<Relation> relations;
  std::vector<KBTuple> tuples;
  FilterResult filter;
};

Prepared prepare(const Scorer& scorer, std::span<const Relation> relations, std::span<const KBTuple> tuples) {
  std::set<std::string> objects;
  for (const auto& t : tuples) objects.insert(t.object);
  const std::vector<std::string> words(objects.begin(), objects.end());
  const std::vector<TokenVerdicts> verdicts = {verdicts_for(scorer, words)};
  Prepared p;
  p.filter = single_token_filter(tuples, verdicts);
  p.tuples = p.filter.tuples;
  p.relations = attach_candidates(relations, p.tuples);
  return p;
}

json stamp(json report, const std::string& command, const json& config, const std::string& fingerprint,
           std::uint64_t seed) {
  report["command"] = command;
  report["config"] = config;
  report["resource_fingerprint"] = fingerprint;
  report["seed"] = seed;
  report["timestamp"] = utc_timestamp();
  return report;
}

void emit(const json& report, const std::string& out_path, std::ostream& out) {
  const auto text = dump_report(report);
  if (out_path.empty()) {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

json aggregates(std::span<const RelationReport> reports, const std::string& mode) {
  return suite_to_json(reports, mode != "micro", mode != "macro");
}

std::vector<std::string> ids_of(std::span<const Relation> relations) {
  std::vector<std::string> ids;
  for (const auto& r : relations) ids.push_back(r.id);
  return ids;
}

struct ValidateOptions {
  DataOptions data;
  std::string out;
};

int cmd_validate(const ValidateOptions& o, std::ostream& out) {
  const auto in = load_inputs(o.data);
  json report;
  report["statistics"] = to_json(compute_stats(in.relations));
  json per_relation = json::array();
  for (const auto& r : in.relations) {
    std::set<int> lex;
    std::set<int> syn;
    for (const auto& p : r.patterns) {
      lex.insert(p.lex_group);
      syn.insert(p.syn_group);
    }
    per_relation.push_back({{"relation_id", r.id},
                            {"cardinality", std::string(to_string(r.cardinality))},
                            {"patterns", r.patterns.size()},
                            {"lex_groups", lex.size()},
                            {"syn_groups", syn.size()}});
  }
  report["relations"] = per_relation;
  if (!o.data.tuples.empty()) {
    json errors = json::array();
    for (const auto& e : in.tuple_errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    report["tuples"] = {{"loaded", in.tuples.size()},
                        {"rejected_unknown_relation", in.rejected_unknown_relation},
                        {"errors", errors}};
  }
  const json config = {{"resource", o.data.resource}, {"tuples", o.data.tuples}};
  emit(stamp(report, "validate", config, in.fingerprint, 0), o.out, out);
  if (!in.tuple_errors.empty()) {
    throw RunFailure(std::to_string(in.tuple_errors.size()) + " malformed tuple line(s), first at line " +
                     std::to_string(in.tuple_errors.front().line) + ": " + in.tuple_errors.front().message);
  }
  return kSuccess;
}

struct ProbeOptions {
  DataOptions data;
  ScorerOptions scorer;
  std::string aggregate = "both";
  std::string predictions;
  bool dry_run = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_probe(const ProbeOptions& o, std::ostream& out) {
  const auto in = load_inputs(o.data);
  if (in.tuples.empty()) throw InputError("probe needs --tuples with at least one valid tuple");
  const json config = {{"resource", o.data.resource}, {"tuples", o.data.tuples}, {"scorer", o.scorer.scorer},
                       {"aggregate", o.aggregate},    {"predictions", o.predictions}, {"dry_run", o.dry_run}};
  if (o.dry_run) {
    json queries = json::object();
    for (const auto& r : in.relations) {
      const std::vector<Relation> one = {r};
      const auto n = query_count(one, in.tuples);
      if (n > 0) queries[r.id] = n;
    }
    json report = {{"queries", queries}, {"total_queries", query_count(in.relations, in.tuples)}};
    emit(stamp(report, "probe", config, in.fingerprint, o.seed), o.out, out);
    return kSuccess;
  }
  const auto scorer = make_scorer(o.scorer.scorer, in.relations, in.tuples);
  const auto prepared = prepare(*scorer, in.relations, in.tuples);
  if (prepared.tuples.empty()) throw RunFailure("no tuple survives single-token filtering");
  const auto result = probe(*scorer, prepared.relations, prepared.tuples);
  auto report = aggregates(result.reports, o.aggregate);
  report["scorer"] = scorer->model_id();
  report["filter"] = {{"retained", prepared.filter.retained}, {"removed", prepared.filter.removed}};
  if (!o.predictions.empty()) write_text(o.predictions, predictions_to_jsonl(result.tables));
  emit(stamp(report, "probe", config, in.fingerprint, o.seed), o.out, out);
  return kSuccess;
}

struct TrainOptions {
  DataOptions data;
  ScorerOptions scorer;
  std::vector<double> lambda_grid = {0.1, 0.5, 1.0};
  std::size_t epochs = 3;
  std::size_t batch_tuples = 8;
  double learning_rate = 0.05;
  double mask_rate = 0.15;
  std::string pair_reduction = "mean";
  bool no_consistency = false;
  bool no_typed = false;
  bool no_mlm = false;
  std::vector<std::string> train_relations;
  std::vector<std::string> val_relations;
  std::size_t train_count = 3;
  std::size_t val_count = 3;
  std::string aggregate = "both";
  std::uint64_t seed = 0;
  std::string out;
};

/// Explicit ids win; otherwise a seeded shuffle of all relation ids is cut
/// into train, validation and test.
RelationSplit choose_split(const TrainOptions& o, std::span<const Relation> relations) {
  if (!o.train_relations.empty()) return split_relations(relations, o.train_relations, o.val_relations);
  auto ids = ids_of(relations);
  if (ids.size() < o.train_count + o.val_count + 1) {
    throw InputError("need at least " + std::to_string(o.train_count + o.val_count + 1) +
                     " relations with tuples for the default split, found " + std::to_string(ids.size()));
  }
  Rng rng(o.seed);
  shuffle(std::span<std::string>(ids), rng);
  const std::vector<std::string> train(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(o.train_count));
  const std::vector<std::string> val(ids.begin() + static_cast<std::ptrdiff_t>(o.train_count),
                                     ids.begin() + static_cast<std::ptrdiff_t>(o.train_count + o.val_count));
  return split_relations(relations, train, val);
}

std::string lambda_tag(double lambda) {
  std::ostringstream s;
  s << lambda;
  return s.str();
}

json correctness_test(std::span<const PredictionTable> before, std::span<const PredictionTable> after,
                      const std::string& method = "auto");

int cmd_train(const TrainOptions& o, std::ostream& out) {
  if (!o.scorer.scorer.starts_with("toy:")) throw InputError("train needs --scorer toy:<checkpoint>");
  if (o.out.empty()) throw InputError("train needs --out <directory>");
  if (o.lambda_grid.empty()) throw InputError("empty --lambda-grid");
  if (o.pair_reduction != "mean" && o.pair_reduction != "sum") {
    throw InputError("--pair-reduction must be mean or sum");
  }
  const auto in = load_inputs(o.data);
  const auto initial = ToyMlm::load(o.scorer.scorer.substr(4));
  const ToyScorer initial_scorer(initial);
  const auto prepared = prepare(initial_scorer, in.relations, in.tuples);
  const auto split = choose_split(o, prepared.relations);
  if (split.test.empty()) throw InputError("the split leaves no test relation");

  TrainConfig base;
  base.epochs = o.epochs;
  base.tuples_per_batch = o.batch_tuples;
  base.learning_rate = o.learning_rate;
  base.mlm_mask_rate = o.mask_rate;
  base.seed = o.seed;
  base.use_consistency_loss = !o.no_consistency;
  base.restrict_to_candidates = !o.no_typed;
  base.use_mlm_loss = !o.no_mlm;
  base.pair_reduction = o.pair_reduction == "sum" ? PairReduction::kSum : PairReduction::kMean;
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }

  const fs::path dir = o.out;
  fs::create_directories(dir);
  std::vector<TrainResult> runs;
  std::vector<double> val_scores;
  json grid = json::array();
  for (const double lambda : o.lambda_grid) {
    auto config = base;
    config.lambda = lambda;
    auto run = train(initial, split.train, split.val, prepared.tuples, config);
    const auto best = run.best_epoch > 0 ? run.log.at(run.best_epoch - 1) : EpochLog{};
    val_scores.push_back(best.val_consistent_acc.value_or(0.0));
    json log = json::array();
    for (const auto& e : run.log) log.push_back(to_json(e));
    const json record = {{"lambda", lambda}, {"config", to_json(config)}, {"best_epoch", run.best_epoch},
                         {"steps", run.steps}, {"log", log}};
    const auto log_name = "log_lambda_" + lambda_tag(lambda) + ".json";
    write_text(dir / log_name, dump_report(record));
    grid.push_back({{"lambda", lambda},
                    {"log", log_name},
                    {"best_epoch", run.best_epoch},
                    {"val_consistent_acc", best.val_consistent_acc ? json(*best.val_consistent_acc) : json()}});
    runs.push_back(std::move(run));
  }
  const double chosen = select_lambda(o.lambda_grid, val_scores);
  const auto chosen_index = static_cast<std::size_t>(
      std::find(o.lambda_grid.begin(), o.lambda_grid.end(), chosen) - o.lambda_grid.begin());
  const auto& model = runs[chosen_index].model;
  model.save(dir / "checkpoint.bin");

  const auto before = probe(initial_scorer, split.test, prepared.tuples);
  const ToyScorer trained_scorer(model, "toy:trained");
  const auto after = probe(trained_scorer, split.test, prepared.tuples);
  write_text(dir / "predictions_before.jsonl", predictions_to_jsonl(before.tables));
  write_text(dir / "predictions_after.jsonl", predictions_to_jsonl(after.tables));

  json report;
  report["split"] = {{"train", ids_of(split.train)}, {"val", ids_of(split.val)}, {"test", ids_of(split.test)}};
  report["filter"] = {{"retained", prepared.filter.retained}, {"removed", prepared.filter.removed}};
  report["selection"] = {{"criterion", "val_consistent_acc"},
                         {"chosen_lambda", chosen},
                         {"has_validation", !split.val.empty()},
                         {"grid", grid}};
  report["before"] = aggregates(before.reports, o.aggregate);
  report["after"] = aggregates(after.reports, o.aggregate);
  report["significance"] = correctness_test(before.tables, after.tables);
  report["checkpoint"] = "checkpoint.bin";
  const json config = {{"resource", o.data.resource},
                       {"tuples", o.data.tuples},
                       {"scorer", o.scorer.scorer},
                       {"lambda_grid", o.lambda_grid},
                       {"train", to_json(base)},
                       {"train_relations", o.train_relations},
                       {"val_relations", o.val_relations},
                       {"train_count", o.train_count},
                       {"val_count", o.val_count},
                       {"aggregate", o.aggregate}};
  const auto stamped = stamp(report, "train", config, in.fingerprint, o.seed);
  write_text(dir / "report.json", dump_report(stamped));
  out << dump_report(stamped);
  return kSuccess;
}

using TupleKey = std::tuple<std::string, std::string, std::string>;

/// Tuple-level Consistent-Acc correctness of every N-1 tuple: all patterns
/// predict the gold object.
std::map<TupleKey, bool> correctness(std::span<const PredictionTable> tables) {
  std::map<TupleKey, bool> out;
  for (const auto& t : tables) {
    if (t.cardinality != Cardinality::kNToOne || t.pattern_count() < 2) continue;
    for (std::size_t i = 0; i < t.tuple_count(); ++i) {
      const bool all = std::all_of(t.predictions[i].begin(), t.predictions[i].end(),
                                   [&](const std::string& p) { return p == t.gold[i]; });
      if (!out.emplace(TupleKey{t.relation_id, t.subjects[i], t.gold[i]}, all).second) {
        throw InputError("duplicate tuple " + t.relation_id + "/" + t.subjects[i] + " in predictions");
      }
    }
  }
  return out;
}

json correctness_test(std::span<const PredictionTable> a_tables, std::span<const PredictionTable> b_tables,
                      const std::string& method) {
  const auto a = correctness(a_tables);
  const auto b = correctness(b_tables);
  for (const auto& [key, ok] : a) {
    if (!b.contains(key)) {
      throw InputError("tuple " + std::get<0>(key) + "/" + std::get<1>(key) + " appears only in the first set");
    }
  }
  for (const auto& [key, ok] : b) {
    if (!a.contains(key)) {
      throw InputError("tuple " + std::get<0>(key) + "/" + std::get<1>(key) + " appears only in the second set");
    }
  }
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t both = 0;
  for (const auto& [key, ok_a] : a) {
    const bool ok_b = b.at(key);
    if (ok_a && !ok_b) ++only_a;
    if (!ok_a && ok_b) ++only_b;
    if (ok_a && ok_b) ++both;
  }
  const auto t = method == "exact"  ? mcnemar_exact(only_a, only_b)
                 : method == "chi2" ? mcnemar_chi2(only_a, only_b)
                                    : mcnemar(only_a, only_b);
  return {{"tuples", a.size()},
          {"both_correct", both},
          {"b", only_a},
          {"c", only_b},
          {"statistic", t.statistic},
          {"p_value", t.p_value},
          {"method", t.method == McNemarMethod::kExact ? "exact" : "chi2"}};
}

struct CompareOptions {
  std::string predictions_a;
  std::string predictions_b;
  std::string method = "auto";
  std::string out;
};

int cmd_compare(const CompareOptions& o, std::ostream& out) {
  std::vector<PredictionTable> a;
  std::vector<PredictionTable> b;
  try {
    a = predictions_from_jsonl(read_text(o.predictions_a));
    b = predictions_from_jsonl(read_text(o.predictions_b));
  } catch (const MetricError& e) {
    throw InputError(e.what());
  }
  auto report = correctness_test(a, b, o.method);
  const json config = {{"predictions_a", o.predictions_a}, {"predictions_b", o.predictions_b}, {"method", o.method}};
  const auto fingerprint = resource_fingerprint({}, o.predictions_a) + resource_fingerprint({}, o.predictions_b);
  emit(stamp(report, "compare", config, fingerprint, 0), o.out, out);
  return kSuccess;
}

struct AnalyzeOptions {
  DataOptions data;
  ScorerOptions scorer;
  std::string relation;
  std::uint64_t seed = 0;
  std::string out;
};

json to_json_vm(const VMeasure& v) {
  return {{"homogeneity", v.homogeneity}, {"completeness", v.completeness}, {"v_measure", v.v_measure}};
}

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  if (o.out.empty()) throw InputError("analyze needs --out <directory>");
  const auto in = load_inputs(o.data);
  const auto scorer = make_scorer(o.scorer.scorer, in.relations, in.tuples);
  if (!scorer->supports_hidden()) throw InputError("scorer " + scorer->model_id() + " does not export hidden states");
  const auto prepared = prepare(*scorer, in.relations, in.tuples);
  const auto it = std::find_if(prepared.relations.begin(), prepared.relations.end(),
                               [&](const Relation& r) { return r.id == o.relation; });
  if (it == prepared.relations.end()) throw InputError("relation " + o.relation + " has no usable tuples");
  const auto own = tuples_of(prepared.tuples, o.relation);
  const auto study = representation_study(*scorer, *it, own, o.seed);

  const fs::path dir = o.out;
  write_text(dir / "embeddings.tsv", embeddings_to_tsv(study.embeddings));
  json report;
  report["relation_id"] = o.relation;
  report["scorer"] = scorer->model_id();
  report["points"] = study.embeddings.size();
  report["kmeans_init"] = "seeded sample of k distinct points";
  report["k_patterns"] = study.k_patterns;
  report["k_subjects"] = study.k_subjects;
  report["pattern_clusters"] = {{"vs_patterns", to_json_vm(study.pattern_clusters_vs_patterns)},
                                {"vs_subjects", to_json_vm(study.pattern_clusters_vs_subjects)}};
  report["subject_clusters"] = {{"vs_patterns", to_json_vm(study.subject_clusters_vs_patterns)},
                                {"vs_subjects", to_json_vm(study.subject_clusters_vs_subjects)}};
  report["pattern_vmeasure"] = study.pattern_vmeasure();
  report["subject_vmeasure"] = study.subject_vmeasure();
  report["embeddings"] = "embeddings.tsv";
  const json config = {{"resource", o.data.resource}, {"tuples", o.data.tuples}, {"scorer", o.scorer.scorer},
                       {"relation", o.relation}};
  const auto stamped = stamp(report, "analyze", config, in.fingerprint, o.seed);
  write_text(dir / "report.json", dump_report(stamped));
  out << dump_report(stamped);
  return kSuccess;
}

struct SynthCliOptions {
  SynthOptions synth;
  std::string out;
};

int cmd_synth(const SynthCliOptions& o, std::ostream& out) {
  const auto kb = generate_synth_kb(o.synth);
  write_synth_kb(kb, o.out);
  out << "wrote " << kb.relations.size() << " relations, " << kb.tuples.size() << " tuples to " << o.out << "\n";
  return kSuccess;
}

struct PretrainOptions {
  DataOptions data;
  PretrainConfig pretrain;
  std::vector<std::size_t> dims = {32, 64, 16};
  std::uint64_t init_seed = 0;
  double init_scale = 0.1;
  std::string out;
};

int cmd_pretrain(const PretrainOptions& o, std::ostream& out) {
  if (o.dims.size() != 3) throw InputError("--dims takes model,hidden,max_len");
  const auto in = load_inputs(o.data);
  if (in.tuples.empty()) throw InputError("pretrain needs --tuples with at least one valid tuple");
  const ToyDims dims{o.dims[0], o.dims[1], o.dims[2]};
  const auto vocab = vocabulary_for(in.relations, in.tuples);
  const auto initial = ToyMlm::random(vocab, dims, o.init_seed, o.init_scale);
  const auto model = pretrain(initial, in.relations, in.tuples, o.pretrain);
  model.save(o.out);
  out << "wrote " << o.out << " (vocabulary " << vocab.size() << ")\n";
  return kSuccess;
}

void add_data(CLI::App* cmd, DataOptions& d, bool tuples_required) {
  cmd->add_option("--resource", d.resource, "Directory of relation JSON files")->required();
  auto* t = cmd->add_option("--tuples", d.tuples, "Tuple JSONL file");
  if (tuples_required) t->required();
}

void add_scorer(CLI::App* cmd, ScorerOptions& s) {
  cmd->add_option("--scorer", s.scorer, "majority | toy:<checkpoint> | bridge:<endpoint>")->capture_default_str();
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Consistency probing harness for masked language models", "conslab"};
  app.require_subcommand(1);

  ValidateOptions validate;
  auto* v = app.add_subcommand("validate", "Load a resource and print its statistics");
  add_data(v, validate.data, false);
  v->add_option("--out", validate.out, "Report path (default stdout)");

  ProbeOptions probe_opts;
  auto* p = app.add_subcommand("probe", "Probe a scorer and report the metric suite");
  add_data(p, probe_opts.data, true);
  add_scorer(p, probe_opts.scorer);
  p->add_option("--aggregate", probe_opts.aggregate)->check(CLI::IsMember({"macro", "micro", "both"}))->capture_default_str();
  p->add_option("--predictions", probe_opts.predictions, "Write raw predictions as JSONL");
  p->add_flag("--dry-run", probe_opts.dry_run, "Only count the queries");
  p->add_option("--seed", probe_opts.seed)->capture_default_str();
  p->add_option("--out", probe_opts.out, "Report path (default stdout)");

  TrainOptions train_opts;
  auto* t = app.add_subcommand("train", "Fine-tune a toy model with the consistency loss");
  add_data(t, train_opts.data, true);
  add_scorer(t, train_opts.scorer);
  t->add_option("--lambda-grid", train_opts.lambda_grid)->delimiter(',')->capture_default_str();
  t->add_option("--epochs", train_opts.epochs)->capture_default_str();
  t->add_option("--batch-tuples", train_opts.batch_tuples)->capture_default_str();
  t->add_option("--lr", train_opts.learning_rate)->capture_default_str();
  t->add_option("--mask-rate", train_opts.mask_rate)->capture_default_str();
  t->add_option("--pair-reduction", train_opts.pair_reduction)->check(CLI::IsMember({"mean", "sum"}))->capture_default_str();
  t->add_flag("--no-consistency-loss", train_opts.no_consistency);
  t->add_flag("--no-typed", train_opts.no_typed);
  t->add_flag("--no-mlm", train_opts.no_mlm);
  t->add_option("--train-relations", train_opts.train_relations)->delimiter(',');
  t->add_option("--val-relations", train_opts.val_relations)->delimiter(',');
  t->add_option("--train-count", train_opts.train_count)->capture_default_str();
  t->add_option("--val-count", train_opts.val_count)->capture_default_str();
  t->add_option("--aggregate", train_opts.aggregate)->check(CLI::IsMember({"macro", "micro", "both"}))->capture_default_str();
  t->add_option("--seed", train_opts.seed)->capture_default_str();
  t->add_option("--out", train_opts.out, "Output directory")->required();

  CompareOptions compare_opts;
  auto* c = app.add_subcommand("compare", "McNemar test on paired tuple-level Consistent-Acc");
  c->add_option("--predictions-a", compare_opts.predictions_a)->required();
  c->add_option("--predictions-b", compare_opts.predictions_b)->required();
  c->add_option("--method", compare_opts.method, "auto (exact below 25 discordant pairs) | exact | chi2")
      ->check(CLI::IsMember({"auto", "exact", "chi2"}))
      ->capture_default_str();
  c->add_option("--out", compare_opts.out, "Report path (default stdout)");

  AnalyzeOptions analyze_opts;
  auto* a = app.add_subcommand("analyze", "Cluster mask-position representations of one relation");
  add_data(a, analyze_opts.data, true);
  add_scorer(a, analyze_opts.scorer);
  a->add_option("--relation", analyze_opts.relation)->required();
  a->add_option("--seed", analyze_opts.seed)->capture_default_str();
  a->add_option("--out", analyze_opts.out, "Output directory")->required();

  SynthCliOptions synth_opts;
  auto* s = app.add_subcommand("synth", "Write a seeded synthetic knowledge base");
  s->add_option("--seed", synth_opts.synth.seed)->capture_default_str();
  s->add_option("--relations", synth_opts.synth.n_relations)->capture_default_str();
  s->add_option("--entities", synth_opts.synth.n_entities)->capture_default_str();
  s->add_option("--patterns", synth_opts.synth.n_patterns_per_relation)->capture_default_str();
  s->add_option("--objects", synth_opts.synth.objects_per_relation)->capture_default_str();
  s->add_option("--object-pool", synth_opts.synth.shared_object_pool)->capture_default_str();
  s->add_option("--out", synth_opts.out, "Output directory")->required();

  PretrainOptions pre_opts;
  auto* pt = app.add_subcommand("pretrain", "Create a toy masked LM and pretrain it on populated patterns");
  add_data(pt, pre_opts.data, true);
  pt->add_option("--epochs", pre_opts.pretrain.epochs)->capture_default_str();
  pt->add_option("--batch", pre_opts.pretrain.batch_size)->capture_default_str();
  pt->add_option("--lr", pre_opts.pretrain.learning_rate)->capture_default_str();
  pt->add_option("--mask-rate", pre_opts.pretrain.mlm_mask_rate)->capture_default_str();
  pt->add_option("--exposure", pre_opts.pretrain.pattern_exposure)->capture_default_str();
  pt->add_option("--seed", pre_opts.pretrain.seed)->capture_default_str();
  pt->add_option("--init-seed", pre_opts.init_seed)->capture_default_str();
  pt->add_option("--init-scale", pre_opts.init_scale)->capture_default_str();
  pt->add_option("--dims", pre_opts.dims, "model,hidden,max_len")->delimiter(',')->capture_default_str();
  pt->add_option("--out", pre_opts.out, "Checkpoint path")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInputError;
  }

  try {
    if (*v) return cmd_validate(validate, out);
    if (*p) return cmd_probe(probe_opts, out);
    if (*t) return cmd_train(train_opts, out);
    if (*c) return cmd_compare(compare_opts, out);
    if (*a) return cmd_analyze(analyze_opts, out);
    if (*s) return cmd_synth(synth_opts, out);
    if (*pt) return cmd_pretrain(pre_opts, out);
  } catch (const RunFailure& e) {
    err << "conslab: " << e.what() << "\n";
    return kFailure;
  } catch (const TrainingError& e) {
    err << "conslab: " << e.what() << "\n";
    return kFailure;
  } catch (const MetricError& e) {
    err << "conslab: " << e.what() << "\n";
    return kFailure;
  } catch (const AnalysisError& e) {
    err << "conslab: " << e.what() << "\n";
    return kFailure;
  } catch (const std::exception& e) {
    err << "conslab: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace conslab::cli
