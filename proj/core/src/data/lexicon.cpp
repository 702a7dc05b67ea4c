#include "a3s/data/lexicon.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"

namespace a3s {

Lexicon::Lexicon(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.empty()) throw ValidationError("lexicon is empty");
  std::set<std::string> seen;
  for (const auto& w : words_) {
    if (w.empty() || w.size() > kMaxWordLength)
      throw ValidationError("lexicon word '" + w + "' must have 1-12 characters");
    if (!in_charset(w)) throw ValidationError("lexicon word '" + w + "' has characters outside [a-z0-9]");
    if (!seen.insert(w).second) throw ValidationError("duplicate lexicon word '" + w + "'");
  }
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    words.push_back(line.substr(first));
  }
  return Lexicon(std::move(words));
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write lexicon " + path.string());
  for (const auto& w : words_) out << w << '\n';
}

bool Lexicon::contains(const std::string& w) const {
  return std::find(words_.begin(), words_.end(), w) != words_.end();
}

}  // namespace a3s
