#include "tnhg/corpus.hpp"

#include <unicode/brkiter.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "tnhg/hash.hpp"
#include "tnhg/random.hpp"

namespace tnhg {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> kTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  return kTokens;
}

// Returns the byte offset of the first invalid sequence, or npos.
std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
      ++i;
      continue;
    }
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
      len = 2;
      cp = b0 & 0x1F;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
      len = 3;
      cp = b0 & 0x0F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (b & 0x3F);
    }
    // overlong, surrogate, or beyond U+10FFFF
    if ((len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return i;
    }
    i += len;
  }
  return std::string_view::npos;
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : reserved_tokens()) add(t);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedCount ||
      !std::equal(reserved_tokens().begin(), reserved_tokens().end(), tokens.begin())) {
    throw std::invalid_argument("vocabulary must start with the four reserved tokens");
  }
  Vocabulary v;
  for (std::size_t i = kReservedCount; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw std::invalid_argument("duplicate vocabulary token: " + tokens[i]);
    v.add(tokens[i]);
  }
  return v;
}

void Vocabulary::add(const std::string& token) {
  if (token.find('\n') != std::string::npos) {
    throw std::invalid_argument("vocabulary tokens cannot contain newlines");
  }
  if (index_.count(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    tokens.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

std::string Vocabulary::hash() const { return sha256_hex(serialize()); }

Tokens tokenize_chars(std::string_view text) {
  if (auto bad = find_invalid_utf8(text); bad != std::string_view::npos) {
    throw CorpusError("invalid UTF-8 at byte offset " + std::to_string(bad), bad);
  }
  Tokens out;
  if (text.empty()) return out;

  const icu::UnicodeString ustr = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  UErrorCode status = U_ZERO_ERROR;
  std::unique_ptr<icu::BreakIterator> it(
      icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
  if (U_FAILURE(status)) throw std::runtime_error("ICU character break iterator unavailable");
  it->setText(ustr);

  bool in_space = false;
  int32_t start = it->first();
  for (int32_t end = it->next(); end != icu::BreakIterator::DONE; start = end, end = it->next()) {
    if (u_isUWhiteSpace(ustr.char32At(start))) {
      if (!in_space) out.emplace_back(" ");
      in_space = true;
      continue;
    }
    in_space = false;
    std::string cluster;
    ustr.tempSubStringBetween(start, end).toUTF8String(cluster);
    out.push_back(std::move(cluster));
  }
  return out;
}

std::string join_tokens(const Tokens& tokens) {
  return std::accumulate(tokens.begin(), tokens.end(), std::string{});
}

Vocabulary build_vocab(const std::vector<Document>& docs, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  if (docs.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty corpus");
  std::map<std::string, long> counts;
  for (const auto& d : docs) {
    for (const auto& t : d.text) ++counts[t];
    for (const auto& t : d.headline) ++counts[t];
  }
  std::vector<std::pair<std::string, long>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && std::find(reserved_tokens().begin(), reserved_tokens().end(), tok) ==
                              reserved_tokens().end()) {
      ranked.emplace_back(tok, n);
    }
  }
  // counts is ordered by token, so a stable sort on frequency keeps the tie order
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : ranked) v.add(tok);
  return v;
}

Ids encode(const Vocabulary& vocab, const Tokens& tokens) {
  Ids ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(vocab.id(t));
  return ids;
}

Tokens decode(const Vocabulary& vocab, const Ids& ids) {
  Tokens out;
  out.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab.size()) {
      throw CorpusError("id " + std::to_string(ids[i]) + " out of range at position " + std::to_string(i), i);
    }
    out.push_back(vocab.token(ids[i]));
  }
  return out;
}

std::vector<Document> filter_by_score(const std::vector<Document>& docs, int min_score) {
  std::vector<Document> out;
  std::copy_if(docs.begin(), docs.end(), std::back_inserter(out),
               [&](const Document& d) { return d.score && *d.score >= min_score; });
  return out;
}

Document parse_document(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw CorpusError(where + "malformed JSON (" + e.what() + ")", line_no);
  }
  if (!j.is_object()) throw CorpusError(where + "record is not a JSON object", line_no);

  auto required_string = [&](const char* field) -> Tokens {
    auto it = j.find(field);
    if (it == j.end()) throw CorpusError(where + "missing required field '" + field + "'", line_no);
    if (!it->is_string()) throw CorpusError(where + "field '" + field + "' must be a string", line_no);
    Tokens toks;
    try {
      toks = tokenize_chars(it->get_ref<const std::string&>());
    } catch (const CorpusError& e) {
      throw CorpusError(where + "field '" + field + "': " + e.what(), line_no);
    }
    if (toks.empty()) throw CorpusError(where + "field '" + field + "' is empty", line_no);
    return toks;
  };

  Document d;
  d.text = required_string("text");
  d.headline = required_string("headline");
  if (auto it = j.find("score"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw CorpusError(where + "field 'score' must be an integer", line_no);
    const auto s = it->get<long long>();
    if (s < 1 || s > 5) throw CorpusError(where + "field 'score' out of range [1,5]", line_no);
    d.score = static_cast<int>(s);
  }
  if (auto it = j.find("topic"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw CorpusError(where + "field 'topic' must be an integer", line_no);
    const auto t = it->get<long long>();
    if (t < 0 || t > 1'000'000) throw CorpusError(where + "field 'topic' out of range", line_no);
    d.topic = static_cast<int>(t);
  }
  return d;
}

std::string document_to_json(const Document& doc) {
  nlohmann::ordered_json j;
  j["text"] = join_tokens(doc.text);
  j["headline"] = join_tokens(doc.headline);
  if (doc.score) j["score"] = *doc.score;
  if (doc.topic) j["topic"] = *doc.topic;
  return j.dump();
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    docs.push_back(parse_document(line, line_no));
  }
  return docs;
}

void save_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& d : docs) out << document_to_json(d) << '\n';
}

DatasetSplit split_dataset(const std::vector<Document>& docs, double train_fraction,
                           double dev_fraction, std::uint64_t seed) {
  if (train_fraction < 0 || dev_fraction < 0 || train_fraction + dev_fraction > 1.0) {
    throw std::invalid_argument("split fractions must be nonnegative and sum to at most 1");
  }
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  shuffle(std::span<std::size_t>(order), rng);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(docs.size()));
  const auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(docs.size()));
  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Document& d = docs[order[i]];
    if (i < n_train) {
      split.train.push_back(d);
    } else if (i < n_train + n_dev) {
      split.dev.push_back(d);
    } else {
      split.test.push_back(d);
    }
  }
  return split;
}

}  // namespace tnhg
