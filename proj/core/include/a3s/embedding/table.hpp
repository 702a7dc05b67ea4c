#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace a3s {

/// d-dimensional semantic feature of a piece of text.
struct SemanticVector {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
};

/// Fixed word -> vector map. There are no mutating members: once built or
/// loaded the table cannot change.
///
/// File format (UTF-8 text):
///   dim <d>
///   <word> <v1> ... <vd>
class EmbeddingTable {
 public:
  /// values holds words.size() * dim numbers, row per word. Throws
  /// ValidationError on non-lowercase or duplicate words.
  EmbeddingTable(std::size_t dim, std::vector<std::string> words, std::vector<double> values);

  /// Throws IoError when unreadable, ParseError (with line number) on
  /// malformed rows, dimension mismatches or duplicate words.
  static EmbeddingTable load(const std::filesystem::path& path);
  /// Writes with 17 significant digits so values round-trip exactly.
  void save(const std::filesystem::path& path) const;

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  bool contains(std::string_view word) const;
  /// Throws OutOfVocabularyError.
  std::span<const double> vector(std::string_view word) const;
  std::uint64_t checksum() const;

 private:
  std::size_t dim_;
  std::vector<std::string> words_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Lowercases, splits on whitespace and mean-pools the vectors of the
/// in-vocabulary words. Throws OutOfVocabularyError when none is found.
SemanticVector embed_text(const EmbeddingTable& table, std::string_view text);

/// Target for detections that match no ground truth.
SemanticVector zero_vector(std::size_t dim);

}  // namespace a3s
