#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "focusmix/corpus/record.hpp"

namespace focusmix::corpus {

inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kNumReserved = 4;

class Vocabulary {
 public:
  // Reserved entries only.
  Vocabulary();
  // `tokens` lists every entry in id order, reserved ones included.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.contains(token); }
  // kUnk for unknown tokens.
  int id(const std::string& token) const;
  // IndexError outside [0, size).
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(std::span<const int> ids) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Counts tokens over all sources and targets; keeps the most frequent
// (ties broken lexicographically) so the total, reserved ids included, is at
// most max_size. ConfigError when max_size <= 4.
Vocabulary build_vocab(const std::vector<Record>& records, std::size_t max_size);

}  // namespace focusmix::corpus
