#include "conslab/report.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <vector>

namespace conslab {
namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json mean_std(const std::optional<MeanStd>& v) {
  if (!v) return nullptr;
  return json{{"mean", v->mean}, {"std", v->std}, {"n", v->n}};
}

json ratio(const Ratio& r) { return json{{"hits", r.hits}, {"total", r.total}}; }

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string resource_fingerprint(const std::filesystem::path& resource_dir,
                                 const std::filesystem::path& tuples_file) {
  std::vector<std::filesystem::path> files;
  if (!resource_dir.empty() && std::filesystem::is_directory(resource_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(resource_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") {
        files.push_back(entry.path());
      }
    }
  }
  std::sort(files.begin(), files.end());
  if (!tuples_file.empty()) files.push_back(tuples_file);
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    h = fnv1a64(f.filename().string(), h);
    h = fnv1a64(read_text(f), h);
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json to_json(const ResourceStats& s) {
  return json{{"relations", s.relations},         {"patterns", s.patterns},
              {"min_patterns", s.min_patterns},   {"max_patterns", s.max_patterns},
              {"avg_patterns", s.avg_patterns},   {"avg_syn_groups", s.avg_syn_groups},
              {"avg_lex_groups", s.avg_lex_groups}};
}

json to_json(const RelationReport& r) {
  const auto& c = r.counts;
  return json{
      {"relation_id", r.relation_id},
      {"cardinality", std::string(to_string(r.cardinality))},
      {"consistency", optional_number(r.consistency)},
      {"accuracy", optional_number(r.accuracy)},
      {"consistent_acc", optional_number(r.consistent_acc)},
      {"succ_patt", optional_number(r.succ_patt)},
      {"succ_objs", optional_number(r.succ_objs)},
      {"know_const", optional_number(r.know_const)},
      {"unk_const", optional_number(r.unk_const)},
      {"diff_syntax", optional_number(r.diff_syntax)},
      {"no_change", optional_number(r.no_change)},
      {"determinism", optional_number(r.determinism)},
      {"pair_count", r.pair_count},
      {"tuple_count", r.tuple_count},
      {"pattern_count", r.pattern_count},
      {"counts",
       {{"agree_pairs", ratio(c.agree_pairs)},
        {"base_correct", ratio(c.base_correct)},
        {"all_correct", ratio(c.all_correct)},
        {"patterns_success", ratio(c.patterns_success)},
        {"tuples_success", ratio(c.tuples_success)},
        {"known_pairs", ratio(c.known_pairs)},
        {"unknown_pairs", ratio(c.unknown_pairs)},
        {"diff_syntax_pairs", ratio(c.diff_syntax_pairs)},
        {"no_change_pairs", ratio(c.no_change_pairs)}}},
  };
}

json to_json(const SuiteReport& s) {
  return json{
      {"mode", s.mode == AggregateMode::kMacro ? "macro" : "micro"},
      {"std", s.mode == AggregateMode::kMacro ? "population" : "none"},
      {"relations", s.relations},
      {"consistency", mean_std(s.consistency)},
      {"accuracy", mean_std(s.accuracy)},
      {"consistent_acc", mean_std(s.consistent_acc)},
      {"succ_patt", mean_std(s.succ_patt)},
      {"succ_objs", mean_std(s.succ_objs)},
      {"know_const", mean_std(s.know_const)},
      {"unk_const", mean_std(s.unk_const)},
      {"diff_syntax", mean_std(s.diff_syntax)},
      {"no_change", mean_std(s.no_change)},
      {"determinism", mean_std(s.determinism)},
  };
}

json to_json(const EpochLog& e) {
  return json{{"epoch", e.epoch},
              {"step", e.step},
              {"loss", e.loss},
              {"l_c", e.l_c},
              {"l_mlm", e.l_mlm},
              {"val_consistency", optional_number(e.val_consistency)},
              {"val_accuracy", optional_number(e.val_accuracy)},
              {"val_consistent_acc", optional_number(e.val_consistent_acc)}};
}

json to_json(const TrainConfig& c) {
  return json{{"lambda", c.lambda},
              {"epochs", c.epochs},
              {"tuples_per_batch", c.tuples_per_batch},
              {"learning_rate", c.learning_rate},
              {"seed", c.seed},
              {"restrict_to_candidates", c.restrict_to_candidates},
              {"use_consistency_loss", c.use_consistency_loss},
              {"use_mlm_loss", c.use_mlm_loss},
              {"mlm_mask_rate", c.mlm_mask_rate},
              {"pair_reduction", c.pair_reduction == PairReduction::kMean ? "mean" : "sum"}};
}

json suite_to_json(std::span<const RelationReport> reports, bool macro, bool micro) {
  std::vector<RelationReport> ordered(reports.begin(), reports.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.relation_id < b.relation_id; });
  json out;
  out["relations"] = json::array();
  for (const auto& r : ordered) out["relations"].push_back(to_json(r));
  if (!ordered.empty()) {
    if (macro) out["macro"] = to_json(aggregate(ordered, AggregateMode::kMacro));
    if (micro) out["micro"] = to_json(aggregate(ordered, AggregateMode::kMicro));
  }
  return out;
}

std::string dump_report(const json& report) { return report.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace conslab
