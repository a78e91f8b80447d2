#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace conslab {

inline constexpr std::string_view kSubjectSlot = "[X]";
inline constexpr std::string_view kObjectSlot = "[Y]";

/// Raised for any malformed resource or tuple input. The message names the
/// offending file and, where applicable, the pattern or line.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Cardinality { kNToOne, kNToMany };

std::string_view to_string(Cardinality c);
/// Parses the on-disk spelling ("N1" / "NM").
std::optional<Cardinality> parse_cardinality(std::string_view text);

/// A cloze template with one subject slot and one object slot.
struct Pattern {
  std::string template_text;
  bool is_base = false;
  int lex_group = 0;
  int syn_group = 0;
  std::optional<std::string> para_type;
};

struct Relation {
  std::string id;
  std::string name;
  Cardinality cardinality = Cardinality::kNToOne;
  std::vector<Pattern> patterns;
  /// Sorted, deduplicated gold objects. Empty until build_candidates runs.
  std::vector<std::string> candidates;

  /// Index of the single base pattern.
  std::size_t base_index() const;
  /// Consistency needs at least one pattern pair.
  bool eligible_for_consistency() const { return patterns.size() >= 2; }
};

struct KBTuple {
  std::string relation_id;
  std::string subject;
  std::string object;

  friend bool operator==(const KBTuple&, const KBTuple&) = default;
};

struct PopulatedCloze {
  std::string text;
  std::string relation_id;
  std::size_t pattern_index = 0;
  std::string subject;
};

struct ResourceStats {
  std::size_t relations = 0;
  std::size_t patterns = 0;
  std::size_t min_patterns = 0;
  std::size_t max_patterns = 0;
  double avg_patterns = 0.0;
  double avg_syn_groups = 0.0;
  double avg_lex_groups = 0.0;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct TupleLoadResult {
  std::vector<KBTuple> tuples;
  std::size_t rejected_unknown_relation = 0;
  std::vector<LineError> errors;
};

struct FilterResult {
  std::vector<KBTuple> tuples;
  std::size_t retained = 0;
  std::size_t removed = 0;
};

struct RelationSplit {
  std::vector<Relation> train;
  std::vector<Relation> val;
  std::vector<Relation> test;
};

/// Per-scorer single-token verdicts keyed by surface string.
using TokenVerdicts = std::map<std::string, bool, std::less<>>;

/// Checks the [X]/[Y] invariant; returns a description of the violation.
std::optional<std::string> template_problem(std::string_view template_text);

/// Parses one relation document. `origin` is used in error messages.
Relation parse_relation(std::string_view json_text, const std::string& origin);

/// Loads every *.json file in `dir` as one relation, sorted by relation id.
std::vector<Relation> load_resource(const std::filesystem::path& dir);

ResourceStats compute_stats(std::span<const Relation> relations);

/// Parses a tuple JSONL stream. Bad lines are reported and skipped.
TupleLoadResult parse_tuples(std::string_view jsonl,
                             std::span<const Relation> relations);
TupleLoadResult load_tuples(const std::filesystem::path& path,
                            std::span<const Relation> relations);

std::vector<KBTuple> tuples_of(std::span<const KBTuple> tuples,
                               std::string_view relation_id);

/// Returns a copy of `relation` with candidates set to the sorted distinct
/// gold objects of `tuples`. Throws on an empty tuple set.
Relation build_candidates(const Relation& relation,
                          std::span<const KBTuple> tuples);

/// Fills candidates for every relation that has tuples; relations without
/// tuples are dropped.
std::vector<Relation> attach_candidates(std::span<const Relation> relations,
                                        std::span<const KBTuple> tuples);

PopulatedCloze populate(const Relation& relation, std::size_t pattern_index,
                        std::string_view subject, std::string_view mask_token);
std::string populate_text(const Pattern& pattern, std::string_view subject,
                          std::string_view object_filler);

/// Keeps a tuple iff every verdict map reports its object as single-token.
FilterResult single_token_filter(std::span<const KBTuple> tuples,
                                 std::span<const TokenVerdicts> verdicts);

RelationSplit split_relations(std::span<const Relation> relations,
                              std::span<const std::string> train_ids,
                              std::span<const std::string> val_ids);

struct SynthKB {
  std::vector<Relation> relations;
  std::vector<KBTuple> tuples;
  std::vector<std::string> vocabulary;
};

struct SynthOptions {
  std::uint64_t seed = 1;
  std::size_t n_relations = 5;
  std::size_t n_entities = 50;
  std::size_t n_patterns_per_relation = 4;
  std::size_t objects_per_relation = 5;
  /// Size of the object pool shared by all relations; each relation draws
  /// its objects from it. Zero gives every relation private object tokens.
  std::size_t shared_object_pool = 8;
};

/// Deterministic synthetic KB: every relation is a function from subject to
/// object, with paraphrase templates sharing one [X]/[Y] skeleton family.
SynthKB generate_synth_kb(const SynthOptions& options);

/// Writes one relation file per relation, tuples.jsonl and vocab.txt.
void write_synth_kb(const SynthKB& kb, const std::filesystem::path& dir);

std::string relation_to_json(const Relation& relation);
std::string tuples_to_jsonl(std::span<const KBTuple> tuples);

}  // namespace conslab
