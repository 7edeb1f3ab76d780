#pragma once

#include <string>
#include <string_view>

namespace focusmix::corpus {

// Porter (1980) suffix stripping, steps 1a through 5b as published
// (ABLI -> ABLE in step 2, vowel test in step 1c). Input is a lowercase ASCII word.
std::string porter_stem(std::string_view word);

}  // namespace focusmix::corpus
