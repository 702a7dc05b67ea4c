#include "a3s/embedding/table.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "a3s/data/charset.hpp"
#include "a3s/errors.hpp"

namespace a3s {

double SemanticVector::norm() const {
  double s = 0.0;
  for (double v : values) s += v * v;
  return std::sqrt(s);
}

EmbeddingTable::EmbeddingTable(std::size_t dim, std::vector<std::string> words, std::vector<double> values)
    : dim_(dim), words_(std::move(words)), values_(std::move(values)) {
  if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
  if (values_.size() != words_.size() * dim_)
    throw ValidationError("embedding table holds " + std::to_string(values_.size()) + " values for " +
                          std::to_string(words_.size()) + " words of dim " + std::to_string(dim_));
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].empty() || lowercase(words_[i]) != words_[i])
      throw ValidationError("embedding key '" + words_[i] + "' must be non-empty lowercase");
    if (!index_.emplace(words_[i], i).second) throw ValidationError("duplicate embedding key '" + words_[i] + "'");
  }
  for (double v : values_)
    if (!std::isfinite(v)) throw ValidationError("embedding table contains a non-finite value");
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file, expected 'dim <d>'", 1);
  std::size_t dim = 0;
  {
    std::istringstream head(line);
    std::string key;
    if (!(head >> key >> dim) || key != "dim" || dim == 0)
      throw ParseError(path.string() + ": header must be 'dim <d>'", 1);
  }
  std::vector<std::string> words;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    auto skip_ws = [&] {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
    };
    skip_ws();
    const char* word_start = p;
    while (p < end && *p != ' ' && *p != '\t') ++p;
    std::string word(word_start, p);
    if (lowercase(word) != word) throw ParseError(path.string() + ": key '" + word + "' is not lowercase", line_no);
    if (!seen.emplace(word, line_no).second)
      throw ParseError(path.string() + ": duplicate word '" + word + "'", line_no);
    std::size_t count = 0;
    for (;;) {
      skip_ws();
      if (p >= end) break;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && *next != ' ' && *next != '\t'))
        throw ParseError(path.string() + ": bad number in row '" + word + "'", line_no);
      values.push_back(v);
      ++count;
      p = next;
    }
    if (count != dim)
      throw ParseError(path.string() + ": row '" + word + "' has " + std::to_string(count) + " values, expected " +
                           std::to_string(dim),
                       line_no);
    words.push_back(std::move(word));
  }
  return EmbeddingTable(dim, std::move(words), std::move(values));
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding table " + path.string());
  out << "dim " << dim_ << '\n';
  char buf[32];
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i];
    for (std::size_t j = 0; j < dim_; ++j) {
      std::snprintf(buf, sizeof buf, " %.17g", values_[i * dim_ + j]);
      out << buf;
    }
    out << '\n';
  }
}

bool EmbeddingTable::contains(std::string_view word) const { return index_.count(std::string(word)) != 0; }

std::span<const double> EmbeddingTable::vector(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) throw OutOfVocabularyError("'" + std::string(word) + "' is not in the embedding table");
  return {values_.data() + it->second * dim_, dim_};
}

std::uint64_t EmbeddingTable::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const auto& w : words_) mix(w.data(), w.size());
  mix(values_.data(), values_.size() * sizeof(double));
  return h;
}

SemanticVector embed_text(const EmbeddingTable& table, std::string_view text) {
  const std::string lowered = lowercase(text);
  std::istringstream words(lowered);
  SemanticVector out{std::vector<double>(table.dim(), 0.0)};
  std::size_t found = 0;
  std::string w;
  while (words >> w) {
    if (!table.contains(w)) continue;
    const auto v = table.vector(w);
    for (std::size_t j = 0; j < v.size(); ++j) out.values[j] += v[j];
    ++found;
  }
  if (found == 0) throw OutOfVocabularyError("no word of '" + std::string(text) + "' is in the embedding table");
  if (found > 1)
    for (double& v : out.values) v /= static_cast<double>(found);
  return out;
}

SemanticVector zero_vector(std::size_t dim) {
  if (dim < 1) throw InputError("zero_vector: dim must be >= 1");
  return {std::vector<double>(dim, 0.0)};
}

}  // namespace a3s
