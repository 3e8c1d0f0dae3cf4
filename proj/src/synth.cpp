#include "tnhg/synth.hpp"

#include <stdexcept>

#include "tnhg/random.hpp"

namespace tnhg {

namespace {

std::string utf8(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

constexpr char32_t kFillers[] = {U'，', U'。', U'、', U'；', U'：', U'！',
                                 U'？', U'“', U'”', U'《'};

}  // namespace

Tokens apply_headline_pattern(int pattern, const Tokens& source) {
  Tokens out;
  switch (pattern % 3) {
    case 0:
      out.assign(source.begin(), source.begin() + static_cast<long>(std::min<std::size_t>(4, source.size())));
      break;
    case 1:
      out.assign(source.end() - static_cast<long>(std::min<std::size_t>(4, source.size())), source.end());
      break;
    default:
      for (std::size_t i = 0; i < source.size(); i += 2) out.push_back(source[i]);
      break;
  }
  return out;
}

SynthCorpus make_topic_pattern_corpus(const SynthOptions& opt) {
  if (opt.topics < 1 || opt.words_per_topic < 1 || opt.words_per_topic > 64 || opt.min_len < 4 || opt.max_len < opt.min_len) {
    throw std::invalid_argument("invalid synthetic corpus options");
  }
  if (opt.shared_words > static_cast<int>(std::size(kFillers))) {
    throw std::invalid_argument("at most 10 shared filler characters");
  }
  // topic k owns CJK code points starting at U+4E00 + 64k
  std::vector<Tokens> alphabets(static_cast<std::size_t>(opt.topics));
  for (int k = 0; k < opt.topics; ++k) {
    for (int i = 0; i < opt.words_per_topic; ++i) {
      alphabets[static_cast<std::size_t>(k)].push_back(utf8(static_cast<char32_t>(0x4E00 + 64 * k + i)));
    }
  }
  Tokens fillers;
  for (int i = 0; i < opt.shared_words; ++i) fillers.push_back(utf8(kFillers[i]));

  Rng rng(opt.seed);
  auto make_doc = [&](int topic) {
    Document d;
    const auto span = static_cast<std::size_t>(opt.max_len - opt.min_len + 1);
    const auto len = static_cast<std::size_t>(opt.min_len) + uniform_index(rng, span);
    const auto& alphabet = alphabets[static_cast<std::size_t>(topic)];
    for (std::size_t i = 0; i < len; ++i) {
      if (!fillers.empty() && uniform01(rng) < opt.shared_rate) {
        d.text.push_back(fillers[uniform_index(rng, fillers.size())]);
      } else {
        d.text.push_back(alphabet[uniform_index(rng, alphabet.size())]);
      }
    }
    d.headline = apply_headline_pattern(topic, d.text);
    return d;
  };

  SynthCorpus c;
  for (int i = 0; i < opt.train; ++i) {
    const int topic = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(opt.topics)));
    c.train.push_back(make_doc(topic));
    c.train_topics.push_back(topic);
  }
  const int low = opt.test / 4;
  int good_left = opt.test;
  int low_left = low;
  while (good_left + low_left > 0) {
    const bool is_low = uniform_index(rng, static_cast<std::size_t>(good_left + low_left)) <
                        static_cast<std::size_t>(low_left);
    const int topic = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(opt.topics)));
    Document d = make_doc(topic);
    if (is_low) {
      d.score = 1 + static_cast<int>(uniform_index(rng, 2));
      --low_left;
    } else {
      d.score = 3 + static_cast<int>(uniform_index(rng, 3));
      --good_left;
    }
    c.test.push_back(std::move(d));
    c.test_topics.push_back(topic);
  }
  return c;
}

}  // namespace tnhg
