#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tnhg {

using Tokens = std::vector<std::string>;
using Ids = std::vector<int>;

/// Reserved vocabulary ids, fixed project-wide.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReservedCount = 4;

/// Raised on malformed input text or corpus files. `position()` is a byte
/// offset for encoding errors and a 1-based line number for corpus errors.
class CorpusError : public std::runtime_error {
 public:
  CorpusError(const std::string& what, std::size_t position)
      : std::runtime_error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// One text/headline record.
struct Document {
  Tokens text;
  Tokens headline;
  std::optional<int> score;  // 1..5
  std::optional<int> topic;  // 0..K-1
};

class Vocabulary {
 public:
  Vocabulary();

  /// Builds from an id-ordered token list whose first four entries are the
  /// reserved tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  /// Id of `token`, or kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// One token per line, line number = id. Tokens never contain newlines.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  /// SHA-256 of serialize().
  std::string hash() const;

  void add(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct DatasetSplit {
  std::vector<Document> train;
  std::vector<Document> dev;
  std::vector<Document> test;
};

/// Splits UTF-8 text into user-visible characters. Whitespace runs collapse to
/// a single " " token. Throws CorpusError with the byte offset of the first
/// invalid UTF-8 sequence.
Tokens tokenize_chars(std::string_view text);

/// Concatenates tokens back into a string.
std::string join_tokens(const Tokens& tokens);

/// Counts tokens over text and headline of every document. Ids are assigned by
/// descending frequency, ties by byte order of the token.
Vocabulary build_vocab(const std::vector<Document>& docs, int min_count);

Ids encode(const Vocabulary& vocab, const Tokens& tokens);
Tokens decode(const Vocabulary& vocab, const Ids& ids);

/// Keeps documents with a score present and >= min_score, in order.
std::vector<Document> filter_by_score(const std::vector<Document>& docs, int min_score);

/// Parses one JSONL record. `line_no` is only used in error messages.
Document parse_document(std::string_view line, std::size_t line_no);
std::string document_to_json(const Document& doc);

std::vector<Document> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<Document>& docs);

/// Deterministic shuffle-and-cut split. Fractions are of the whole corpus;
/// test gets the remainder.
DatasetSplit split_dataset(const std::vector<Document>& docs, double train_fraction,
                           double dev_fraction, std::uint64_t seed);

}  // namespace tnhg
