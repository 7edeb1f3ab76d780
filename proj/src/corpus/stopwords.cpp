#include "focusmix/corpus/stopwords.hpp"

#include <fstream>

#include "focusmix/error.hpp"

namespace focusmix::corpus {

const StopWords& default_stopwords() {
  static const StopWords words = {
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours",
    "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
    "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves",
    "what", "which", "who", "whom", "this", "that", "these", "those", "am", "is", "are",
    "was", "were", "be", "been", "being", "have", "has", "had", "having", "do", "does",
    "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as", "until",
    "while", "of", "at", "by", "for", "with", "about", "against", "between", "into",
    "through", "during", "before", "after", "above", "below", "to", "from", "up", "down",
    "in", "out", "on", "off", "over", "under", "again", "further", "then", "once", "here",
    "there", "when", "where", "why", "how", "all", "any", "both", "each", "few", "more",
    "most", "other", "some", "such", "no", "nor", "not", "only", "own", "same", "so",
    "than", "too", "very", "s", "t", "can", "will", "just", "don", "should", "now"
  };
  return words;
}

StopWords load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open stop-word list " + path.string());
  StopWords out;
  std::string line;
  while (std::getline(in, line)) {
    const auto lo = line.find_first_not_of(" \t\r");
    if (lo == std::string::npos) continue;
    const auto hi = line.find_last_not_of(" \t\r");
    out.insert(line.substr(lo, hi - lo + 1));
  }
  return out;
}

}  // namespace focusmix::corpus
