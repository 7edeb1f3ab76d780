#include "focusmix/corpus/record.hpp"

#include <algorithm>

#include "focusmix/error.hpp"

namespace focusmix::corpus {

std::size_t FocusGuide::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

void Record::validate() const {
  const std::size_t S = source.size();
  if (S == 0) throw InputError("record has an empty source");
  if (targets.empty()) throw InputError("record has no targets");
  for (std::size_t k = 0; k < targets.size(); ++k)
    if (targets[k].empty()) throw InputError("target " + std::to_string(k) + " is empty");
  if (answer_span) {
    if (answer_span->start > answer_span->end || answer_span->end >= S)
      throw InputError("answer_span [" + std::to_string(answer_span->start) + "," +
                       std::to_string(answer_span->end) + "] outside source of length " +
                       std::to_string(S));
  }
  if (focus_guides) {
    if (focus_guides->size() != targets.size())
      throw InputError(std::to_string(focus_guides->size()) + " focus guides for " +
                       std::to_string(targets.size()) + " targets");
    for (std::size_t k = 0; k < focus_guides->size(); ++k) {
      const auto& bits = (*focus_guides)[k].bits;
      if (bits.size() != S)
        throw InputError("focus guide " + std::to_string(k) + " has length " +
                         std::to_string(bits.size()) + ", source has " + std::to_string(S));
      for (auto b : bits)
        if (b > 1) throw InputError("focus guide " + std::to_string(k) + " has a non-binary value");
    }
  }
}

}  // namespace focusmix::corpus
