#include "focusmix/corpus/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "focusmix/error.hpp"

namespace focusmix::corpus {
namespace {

const std::vector<std::string>& reserved() {
  static const std::vector<std::string> r = {"<pad>", "<sos>", "<eos>", "<unk>"};
  return r;
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(reserved()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < static_cast<std::size_t>(kNumReserved) ||
      !std::equal(reserved().begin(), reserved().end(), tokens_.begin()))
    throw ConfigError("vocabulary must start with <pad> <sos> <eos> <unk>");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate vocabulary entry '" + tokens_[i] + "'");
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Vocabulary build_vocab(const std::vector<Record>& records, std::size_t max_size) {
  if (max_size <= static_cast<std::size_t>(kNumReserved))
    throw ConfigError("vocabulary max_size must exceed " + std::to_string(kNumReserved));
  std::map<std::string, std::size_t> counts;
  auto count = [&](const Tokens& ts) {
    for (const auto& t : ts) ++counts[t];
  };
  for (const auto& r : records) {
    count(r.source);
    for (const auto& y : r.targets) count(y);
  }
  for (const auto& r : reserved()) counts.erase(r);

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // std::map iteration is already lexicographic, so a stable sort on count keeps the tiebreak.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = reserved();
  for (const auto& [tok, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace focusmix::corpus
