#include "focusmix/corpus/focus_guide.hpp"

#include <unordered_set>

#include "focusmix/corpus/porter.hpp"

namespace focusmix::corpus {
namespace {

// Length of the longest prefix of source[i..] found contiguously in target.
std::size_t longest_match(const Tokens& source, std::size_t i, const Tokens& target) {
  std::size_t best = 0;
  for (std::size_t j = 0; j < target.size(); ++j) {
    std::size_t len = 0;
    while (i + len < source.size() && j + len < target.size() &&
           source[i + len] == target[j + len])
      ++len;
    best = std::max(best, len);
  }
  return best;
}

}  // namespace

FocusGuide make_focus_guide_qg(const Tokens& source, const Tokens& target,
                               const std::optional<AnswerSpan>& answer_span,
                               const StopWords& stopwords) {
  std::unordered_set<std::string> target_stems;
  for (const auto& y : target) target_stems.insert(porter_stem(y));
  FocusGuide g;
  g.bits.assign(source.size(), 0);
  for (std::size_t t = 0; t < source.size(); ++t) {
    if (stopwords.contains(source[t])) continue;
    if (answer_span && answer_span->contains(t)) continue;
    if (target_stems.contains(porter_stem(source[t]))) g.bits[t] = 1;
  }
  return g;
}

FocusGuide make_focus_guide_copy(const Tokens& source, const Tokens& target) {
  FocusGuide g;
  g.bits.assign(source.size(), 0);
  std::size_t i = 0;
  while (i < source.size()) {
    const std::size_t len = longest_match(source, i, target);
    if (len == 0) {
      ++i;
      continue;
    }
    for (std::size_t k = i; k < i + len; ++k) g.bits[k] = 1;
    i += len;
  }
  return g;
}

void ensure_focus_guides(Record& record, GuideRule rule, const StopWords& stopwords) {
  if (record.focus_guides) return;
  std::vector<FocusGuide> guides;
  guides.reserve(record.targets.size());
  for (const auto& y : record.targets) {
    guides.push_back(rule == GuideRule::kQg
                         ? make_focus_guide_qg(record.source, y, record.answer_span, stopwords)
                         : make_focus_guide_copy(record.source, y));
  }
  record.focus_guides = std::move(guides);
}

}  // namespace focusmix::corpus
