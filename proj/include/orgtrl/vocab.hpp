#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl {

using WordId = std::int32_t;

constexpr WordId kPadId = 0;
constexpr WordId kBosId = 1;
constexpr WordId kEosId = 2;
constexpr WordId kUnkId = 3;
constexpr WordId kNumReserved = 4;

// lowercase, strip ASCII punctuation, split on whitespace
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  Vocabulary();

  // Words with corpus count >= min_count get ids; everything else maps to UNK.
  // Content words are ordered by descending count, ties lexicographic.
  static Vocabulary build(const std::vector<std::string>& captions, int min_count);

  WordId id(const std::string& word) const;  // UNK when absent
  const std::string& word(WordId id) const;  // throws IndexError when out of range
  bool contains(const std::string& word) const;
  WordId size() const { return static_cast<WordId>(words_.size()); }

  // One content word per line, line number = id - 4.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  const std::vector<std::string>& words() const { return words_; }

 private:
  void push_word(const std::string& w);

  std::vector<std::string> words_;
  std::map<std::string, WordId> index_;
};

struct TokenSequence {
  std::vector<WordId> ids;  // BOS ... EOS, no padding
  std::size_t length() const { return ids.size(); }
};

// BOS + ids of the first max_len tokens + EOS; unknown words become UNK.
TokenSequence encode_caption(const Vocabulary& vocab, const std::string& text, int max_len);

// ids -> space-joined words, reserved tokens skipped
std::string decode_tokens(const Vocabulary& vocab, const std::vector<WordId>& ids);

}  // namespace orgtrl
