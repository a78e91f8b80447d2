#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "conslab/resource.hpp"
#include "conslab/toy_mlm.hpp"

namespace conslab {

class ScorerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ScoreRequest {
  std::string text;
  std::vector<std::string> candidates;
  bool want_hidden = false;
  /// Routing hint for scorers that answer per relation (majority baseline).
  /// Text-only scorers ignore it.
  std::string relation_id;
};

struct ScoreResponse {
  std::vector<double> log_scores;
  std::optional<std::vector<double>> hidden;
  std::string model_id;
};

/// Index of the first maximal score; candidate order breaks ties.
std::size_t argmax(std::span<const double> scores);

/// Uniform interface over masked LMs restricted to a candidate set.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::string model_id() const = 0;
  virtual std::string mask_token() const = 0;
  virtual ScoreResponse score(const ScoreRequest& request) const = 0;
  virtual std::vector<bool> tokenize_check(std::span<const std::string> words) const = 0;
  virtual bool supports_hidden() const { return false; }
};

TokenVerdicts verdicts_for(const Scorer& scorer, std::span<const std::string> words);

/// Scores with the toy MLM: raw vocabulary logits restricted to candidates.
class ToyScorer final : public Scorer {
 public:
  explicit ToyScorer(ToyMlm model, std::string id = "toy");

  std::string model_id() const override { return id_; }
  std::string mask_token() const override { return std::string(kMaskToken); }
  ScoreResponse score(const ScoreRequest& request) const override;
  std::vector<bool> tokenize_check(std::span<const std::string> words) const override;
  bool supports_hidden() const override { return true; }

  const ToyMlm& model() const { return model_; }

 private:
  ToyMlm model_;
  std::string id_;
};

/// Token ids and mask position of a populated cloze under the toy tokenizer.
struct EncodedCloze {
  std::vector<std::size_t> ids;
  std::size_t mask_position = 0;
};
EncodedCloze encode_cloze(const Vocabulary& vocab, std::string_view text);

/// Always prefers the relation's most frequent gold object.
class MajorityScorer final : public Scorer {
 public:
  MajorityScorer(std::span<const Relation> relations, std::span<const KBTuple> tuples);

  std::string model_id() const override { return "majority"; }
  std::string mask_token() const override { return std::string(kMaskToken); }
  ScoreResponse score(const ScoreRequest& request) const override;
  std::vector<bool> tokenize_check(std::span<const std::string> words) const override;

  /// Modal object of a relation, ties resolved by candidate order.
  const std::string& modal_object(std::string_view relation_id) const;

 private:
  struct Counts {
    std::map<std::string, std::size_t, std::less<>> by_object;
    std::size_t total = 0;
    std::string modal;
  };
  std::map<std::string, Counts, std::less<>> relations_;
};

}  // namespace conslab
