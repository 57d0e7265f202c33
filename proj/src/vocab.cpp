#include "orgtrl/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace orgtrl {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c) || std::ispunct(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocabulary::Vocabulary() {
  push_word("<pad>");
  push_word("<bos>");
  push_word("<eos>");
  push_word("<unk>");
}

void Vocabulary::push_word(const std::string& w) {
  index_.emplace(w, static_cast<WordId>(words_.size()));
  words_.push_back(w);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& captions, int min_count) {
  std::map<std::string, std::int64_t> counts;
  std::size_t total = 0;
  for (const auto& caption : captions) {
    for (const auto& tok : tokenize(caption)) {
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("vocabulary: empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (const auto& [word, count] : counts) {
    if (count >= min_count) kept.emplace_back(word, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [word, count] : kept) v.push_word(word);
  return v;
}

WordId Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::word(WordId id) const {
  if (id < 0 || id >= size()) {
    throw IndexError("word id out of range: " + std::to_string(id));
  }
  return words_[static_cast<std::size_t>(id)];
}

bool Vocabulary::contains(const std::string& word) const { return index_.count(word) > 0; }

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LoadError("cannot write vocabulary: " + path.string());
  for (std::size_t i = kNumReserved; i < words_.size(); ++i) out << words_[i] << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open vocabulary: " + path.string());
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.push_word(line);
  }
  return v;
}

TokenSequence encode_caption(const Vocabulary& vocab, const std::string& text, int max_len) {
  if (max_len < 1) throw ConfigError("encode_caption: max_len must be >= 1");
  TokenSequence seq;
  seq.ids.push_back(kBosId);
  auto tokens = tokenize(text);
  if (tokens.size() > static_cast<std::size_t>(max_len)) {
    tokens.resize(static_cast<std::size_t>(max_len));
  }
  for (const auto& tok : tokens) seq.ids.push_back(vocab.id(tok));
  seq.ids.push_back(kEosId);
  return seq;
}

std::string decode_tokens(const Vocabulary& vocab, const std::vector<WordId>& ids) {
  std::string out;
  for (WordId id : ids) {
    if (id < kNumReserved) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.word(id);
  }
  return out;
}

}  // namespace orgtrl
