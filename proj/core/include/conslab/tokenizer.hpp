#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace conslab {

inline constexpr std::string_view kMaskToken = "[MASK]";
inline constexpr std::string_view kUnknownToken = "[UNK]";

/// Whitespace split, leading/trailing punctuation stripped, case preserved.
/// Any chunk containing "[MASK]" becomes exactly the mask token.
std::vector<std::string> toy_tokenize(std::string_view text);

/// Token <-> id table. Ids 0 and 1 are always [UNK] and [MASK].
class Vocabulary {
 public:
  Vocabulary();
  explicit Vocabulary(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::optional<std::size_t> find(std::string_view token) const;
  std::size_t id_or_unknown(std::string_view token) const;
  std::size_t mask_id() const { return 1; }
  std::size_t unknown_id() const { return 0; }

  /// True iff `word` tokenizes to one in-vocabulary token.
  bool is_single_token(std::string_view word) const;

  std::vector<std::size_t> encode(std::string_view text) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace conslab
