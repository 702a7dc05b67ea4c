#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace a3s {

/// Ordered unique lowercase words over the charset, each 1-12 characters.
class Lexicon {
 public:
  /// Throws ValidationError when the list is empty, has duplicates or
  /// contains invalid words.
  explicit Lexicon(std::vector<std::string> words);

  /// One word per line; blank lines ignored. Throws IoError / ValidationError.
  static Lexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  bool contains(const std::string& w) const;
  const std::string& operator[](std::size_t i) const { return words_[i]; }

 private:
  std::vector<std::string> words_;
};

}  // namespace a3s
