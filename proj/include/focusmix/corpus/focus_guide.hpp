#pragma once

#include <optional>

#include "focusmix/corpus/record.hpp"
#include "focusmix/corpus/stopwords.hpp"

namespace focusmix::corpus {

// Question-generation rule: x_t is focused when its Porter stem matches the
// stem of some target token, unless x_t is a stop word or sits inside the
// answer span.
FocusGuide make_focus_guide_qg(const Tokens& source, const Tokens& target,
                               const std::optional<AnswerSpan>& answer_span,
                               const StopWords& stopwords);

// Copy rule: scan the source left to right; at each position take the longest
// run that also appears contiguously in the target, mark it, and resume after
// it. Positions with no match stay 0.
FocusGuide make_focus_guide_copy(const Tokens& source, const Tokens& target);

enum class GuideRule { kQg, kCopy };

// Fills record.focus_guides (one per target) when absent.
void ensure_focus_guides(Record& record, GuideRule rule,
                         const StopWords& stopwords = default_stopwords());

}  // namespace focusmix::corpus
