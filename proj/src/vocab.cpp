// SPDX-License-Identifier: Apache-2.0
#include "procrnn/vocab.hpp"

#include <algorithm>
#include <stdexcept>

#include "procrnn/errors.hpp"

namespace procrnn {

Vocabulary Vocabulary::build(std::span<const Trace> training, std::optional<std::size_t> max_size) {
  if (max_size && *max_size == 0) throw ConfigError("vocabulary size must be positive");

  struct Entry {
    std::string token;
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<Entry> entries;
  std::size_t position = 0;
  for (const auto& trace : training) {
    for (const auto& a : trace.activities) {
      auto [it, inserted] = slot.emplace(a, entries.size());
      if (inserted) entries.push_back(Entry{a, 0, position});
      ++entries[it->second].count;
      ++position;
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.first_seen < b.first_seen;
  });
  if (max_size && entries.size() > *max_size) entries.resize(*max_size);

  std::vector<std::string> tokens{std::string(kUnknownToken)};
  for (auto& e : entries) tokens.push_back(std::move(e.token));
  return from_tokens(std::move(tokens), max_size);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens,
                                   std::optional<std::size_t> max_size) {
  if (tokens.empty()) throw ConfigError("vocabulary token list is empty");
  if (max_size && tokens.size() > *max_size + 1)
    throw ConfigError("vocabulary has more tokens than its size limit");
  Vocabulary v;
  v.id_to_token_ = std::move(tokens);
  v.max_size_ = max_size;
  for (std::size_t i = 1; i < v.id_to_token_.size(); ++i) {
    if (!v.token_to_id_.emplace(v.id_to_token_[i], static_cast<TokenId>(i)).second)
      throw ConfigError("duplicate vocabulary token '" + v.id_to_token_[i] + "'");
  }
  return v;
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnknownId : it->second;
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id >= id_to_token_.size()) throw std::out_of_range("token id outside vocabulary");
  return id_to_token_[id];
}

EncodedTrace encode(const Trace& trace, const Vocabulary& vocab, bool truncate_unknown_runs) {
  if (trace.activities.empty()) throw ConfigError("cannot encode an empty trace");
  EncodedTrace out;
  out.label = trace.label ? 1 : 0;
  out.ids.reserve(trace.activities.size());
  for (const auto& a : trace.activities) {
    const TokenId id = vocab.id_of(a);
    if (truncate_unknown_runs && id == Vocabulary::kUnknownId && !out.ids.empty() &&
        out.ids.back() == Vocabulary::kUnknownId)
      continue;
    out.ids.push_back(id);
  }
  return out;
}

std::vector<EncodedTrace> encode_all(std::span<const Trace> traces, const Vocabulary& vocab,
                                     bool truncate_unknown_runs) {
  std::vector<EncodedTrace> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(encode(t, vocab, truncate_unknown_runs));
  return out;
}

std::vector<std::string> decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(vocab.token_of(id));
  return out;
}

std::vector<double> one_hot(TokenId id, std::size_t vocab_size) {
  if (id >= vocab_size)
    throw std::out_of_range("one_hot: id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(vocab_size));
  std::vector<double> v(vocab_size, 0.0);
  v[id] = 1.0;
  return v;
}

}  // namespace procrnn
