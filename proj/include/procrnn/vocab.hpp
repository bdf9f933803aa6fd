// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "procrnn/eventlog.hpp"
#include "procrnn/rnn.hpp"

namespace procrnn {

/// Frequency-ranked activity vocabulary. Id 0 is the unknown token; real
/// activities take ids 1..V−1 in order of decreasing training frequency, ties
/// broken by first occurrence.
class Vocabulary {
 public:
  static constexpr TokenId kUnknownId = 0;
  static constexpr std::string_view kUnknownToken = "<unk>";

  Vocabulary() : id_to_token_{std::string(kUnknownToken)} {}

  /// Counts activities over `training` and keeps the `max_size` most frequent
  /// (all of them when unset). max_size = 0 is a ConfigError.
  static Vocabulary build(std::span<const Trace> training, std::optional<std::size_t> max_size = {});

  /// Rebuilds from an ordered token list (position = id), as stored in model
  /// files. `tokens[0]` is the unknown placeholder.
  static Vocabulary from_tokens(std::vector<std::string> tokens,
                                std::optional<std::size_t> max_size = {});

  std::size_t size() const noexcept { return id_to_token_.size(); }
  std::optional<std::size_t> max_size() const noexcept { return max_size_; }
  TokenId id_of(std::string_view token) const;
  /// Unknown id maps to kUnknownToken.
  const std::string& token_of(TokenId id) const;
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.id_to_token_ == b.id_to_token_ && a.max_size_ == b.max_size_;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::optional<std::size_t> max_size_;
};

struct EncodedTrace {
  std::vector<TokenId> ids;
  int label = 0;
};

/// Maps tokens to ids; with `truncate_unknown_runs`, each maximal run of
/// unknown ids collapses to a single unknown id.
EncodedTrace encode(const Trace& trace, const Vocabulary& vocab, bool truncate_unknown_runs);
std::vector<EncodedTrace> encode_all(std::span<const Trace> traces, const Vocabulary& vocab,
                                     bool truncate_unknown_runs);
std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Unit basis vector of length `vocab_size`; throws std::out_of_range when
/// id ≥ vocab_size.
std::vector<double> one_hot(TokenId id, std::size_t vocab_size);

}  // namespace procrnn
