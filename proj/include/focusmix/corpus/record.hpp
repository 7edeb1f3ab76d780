#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace focusmix::corpus {

using Tokens = std::vector<std::string>;

// Binary focus over source positions; bits[t] == 1 marks x_t as focused.
struct FocusGuide {
  std::vector<std::uint8_t> bits;

  std::size_t size() const { return bits.size(); }
  std::size_t count() const;
  friend bool operator==(const FocusGuide&, const FocusGuide&) = default;
};

// Inclusive [start, end] source indices.
struct AnswerSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  bool contains(std::size_t t) const { return t >= start && t <= end; }
  friend bool operator==(const AnswerSpan&, const AnswerSpan&) = default;
};

// One source with one or more valid targets.
struct Record {
  Tokens source;
  std::vector<Tokens> targets;
  std::optional<AnswerSpan> answer_span;
  // When present, one guide per target, each of length |source|.
  std::optional<std::vector<FocusGuide>> focus_guides;

  // Throws InputError describing the first violated invariant.
  void validate() const;
  friend bool operator==(const Record&, const Record&) = default;
};

}  // namespace focusmix::corpus
