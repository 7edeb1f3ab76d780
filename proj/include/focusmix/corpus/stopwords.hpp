#pragma once

#include <filesystem>
#include <string>
#include <unordered_set>

namespace focusmix::corpus {

using StopWords = std::unordered_set<std::string>;

// The built-in 127-word English list (same content as data/stopwords_en.txt).
const StopWords& default_stopwords();

// One token per line; blank lines and surrounding whitespace ignored.
StopWords load_stopwords(const std::filesystem::path& path);

}  // namespace focusmix::corpus
