#pragma once

#include <string_view>

#include "focusmix/corpus/record.hpp"

namespace focusmix::corpus {

// Lowercases, splits on whitespace, and peels leading/trailing ASCII
// punctuation off each chunk as one-character tokens. Interior punctuation
// ("don't", "u.s") stays inside the word.
Tokens tokenize(std::string_view text);

}  // namespace focusmix::corpus
