#include "focusmix/corpus/tokenize.hpp"

#include <cctype>

namespace focusmix::corpus {
namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

void split_chunk(std::string_view chunk, Tokens& out) {
  std::size_t lo = 0, hi = chunk.size();
  while (lo < hi && is_punct(chunk[lo])) out.emplace_back(1, chunk[lo++]);
  std::size_t tail = hi;
  while (tail > lo && is_punct(chunk[tail - 1])) --tail;
  if (tail > lo) out.emplace_back(chunk.substr(lo, tail - lo));
  for (std::size_t i = tail; i < hi; ++i) out.emplace_back(1, chunk[i]);
}

}  // namespace

Tokens tokenize(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  Tokens out;
  std::size_t i = 0;
  while (i < lower.size()) {
    while (i < lower.size() && std::isspace(static_cast<unsigned char>(lower[i]))) ++i;
    std::size_t j = i;
    while (j < lower.size() && !std::isspace(static_cast<unsigned char>(lower[j]))) ++j;
    if (j > i) split_chunk(std::string_view(lower).substr(i, j - i), out);
    i = j;
  }
  return out;
}

}  // namespace focusmix::corpus
