#include "conslab/scorer.hpp"

#include <cmath>

namespace conslab {

std::size_t argmax(std::span<const double> scores) {
  if (scores.empty()) throw ScorerError("argmax of an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

TokenVerdicts verdicts_for(const Scorer& scorer, std::span<const std::string> words) {
  const auto flags = scorer.tokenize_check(words);
  if (flags.size() != words.size()) {
    throw ScorerError(scorer.model_id() + ": tokenize_check returned " +
                      std::to_string(flags.size()) + " verdicts for " +
                      std::to_string(words.size()) + " words");
  }
  TokenVerdicts out;
  for (std::size_t i = 0; i < words.size(); ++i) out[words[i]] = flags[i];
  return out;
}

EncodedCloze encode_cloze(const Vocabulary& vocab, std::string_view text) {
  EncodedCloze enc;
  enc.ids = vocab.encode(text);
  std::size_t masks = 0;
  for (std::size_t i = 0; i < enc.ids.size(); ++i) {
    if (enc.ids[i] == vocab.mask_id()) {
      enc.mask_position = i;
      ++masks;
    }
  }
  if (masks != 1) {
    throw ScorerError("expected exactly one mask token in \"" + std::string(text) +
                      "\", found " + std::to_string(masks));
  }
  return enc;
}

ToyScorer::ToyScorer(ToyMlm model, std::string id)
    : model_(std::move(model)), id_(std::move(id)) {}

ScoreResponse ToyScorer::score(const ScoreRequest& request) const {
  if (request.candidates.empty()) throw ScorerError("empty candidate set");
  const auto& vocab = model_.vocab();
  std::vector<std::size_t> candidate_ids;
  candidate_ids.reserve(request.candidates.size());
  for (const auto& c : request.candidates) {
    if (!vocab.is_single_token(c)) {
      throw ScorerError(id_ + ": candidate \"" + c + "\" is not a single vocabulary token");
    }
    candidate_ids.push_back(*vocab.find(c));
  }
  const auto enc = encode_cloze(vocab, request.text);
  auto out = model_.forward_at(enc.ids, enc.mask_position);

  ScoreResponse response;
  response.model_id = id_;
  response.log_scores.reserve(candidate_ids.size());
  for (const auto id : candidate_ids) response.log_scores.push_back(out.logits[id]);
  if (request.want_hidden) response.hidden = std::move(out.hidden);
  return response;
}

std::vector<bool> ToyScorer::tokenize_check(std::span<const std::string> words) const {
  std::vector<bool> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(model_.vocab().is_single_token(w));
  return out;
}

MajorityScorer::MajorityScorer(std::span<const Relation> relations,
                               std::span<const KBTuple> tuples) {
  for (const auto& rel : relations) relations_[rel.id];
  for (const auto& t : tuples) {
    auto it = relations_.find(t.relation_id);
    if (it == relations_.end()) continue;
    ++it->second.by_object[t.object];
    ++it->second.total;
  }
  for (auto& [id, counts] : relations_) {
    std::size_t best = 0;
    for (const auto& [object, n] : counts.by_object) {
      if (n > best) {
        best = n;
        counts.modal = object;
      }
    }
  }
}

const std::string& MajorityScorer::modal_object(std::string_view relation_id) const {
  const auto it = relations_.find(relation_id);
  if (it == relations_.end() || it->second.total == 0) {
    throw ScorerError("majority scorer has no tuples for relation " + std::string(relation_id));
  }
  return it->second.modal;
}

ScoreResponse MajorityScorer::score(const ScoreRequest& request) const {
  if (request.candidates.empty()) throw ScorerError("empty candidate set");
  const auto it = relations_.find(request.relation_id);
  if (it == relations_.end() || it->second.total == 0) {
    throw ScorerError("majority scorer has no tuples for relation \"" + request.relation_id + "\"");
  }
  const auto& counts = it->second;
  const auto total = static_cast<double>(counts.total);
  ScoreResponse response;
  response.model_id = model_id();
  for (const auto& c : request.candidates) {
    const auto found = counts.by_object.find(c);
    const double n = found == counts.by_object.end() ? 0.5 : static_cast<double>(found->second);
    response.log_scores.push_back(std::log(n / total));
  }
  // Nudge the modal object above any equally frequent candidate.
  for (std::size_t i = 0; i < request.candidates.size(); ++i) {
    if (request.candidates[i] == counts.modal) response.log_scores[i] = std::nextafter(
        response.log_scores[i], INFINITY);
  }
  return response;
}

std::vector<bool> MajorityScorer::tokenize_check(std::span<const std::string> words) const {
  std::vector<bool> out;
  for (const auto& w : words) out.push_back(!w.empty());
  return out;
}

}  // namespace conslab
