#include "conslab/tokenizer.hpp"

#include <cctype>

namespace conslab {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> toy_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const auto start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    auto chunk = text.substr(start, i - start);
    if (chunk.empty()) continue;
    if (chunk.find(kMaskToken) != std::string_view::npos) {
      tokens.emplace_back(kMaskToken);
      continue;
    }
    while (!chunk.empty() && is_punct(chunk.front())) chunk.remove_prefix(1);
    while (!chunk.empty() && is_punct(chunk.back())) chunk.remove_suffix(1);
    if (!chunk.empty()) tokens.emplace_back(chunk);
  }
  return tokens;
}

Vocabulary::Vocabulary() {
  add(std::string(kUnknownToken));
  add(std::string(kMaskToken));
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) {
    if (!ids_.contains(t)) add(t);
  }
}

void Vocabulary::add(std::string token) {
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(std::move(token));
}

std::optional<std::size_t> Vocabulary::find(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id_or_unknown(std::string_view token) const {
  return find(token).value_or(unknown_id());
}

bool Vocabulary::is_single_token(std::string_view word) const {
  const auto pieces = toy_tokenize(word);
  if (pieces.size() != 1 || pieces.front() != word) return false;
  const auto id = find(pieces.front());
  return id && *id != unknown_id() && *id != mask_id();
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& t : toy_tokenize(text)) ids.push_back(id_or_unknown(t));
  return ids;
}

}  // namespace conslab
