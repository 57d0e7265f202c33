#include "orgtrl/elm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace orgtrl {

NgramElm::NgramElm(int order, double alpha, WordId vocab_size)
    : order_(order), alpha_(alpha), vocab_size_(vocab_size) {
  if (order < 1) throw ConfigError("n-gram order must be >= 1");
  if (alpha <= 0) throw ConfigError("smoothing alpha must be > 0");
  if (vocab_size < kNumReserved) throw ConfigError("vocabulary too small");
  counts_.resize(static_cast<std::size_t>(order));
}

void NgramElm::observe(const std::vector<WordId>& context, WordId target) {
  auto& stats = counts_[context.size()][context];
  ++stats.word_counts[target];
  ++stats.total;
}

NgramElm NgramElm::train(const std::vector<TokenSequence>& corpus, int order, double alpha,
                         WordId vocab_size) {
  if (corpus.empty()) throw ValidationError("elm training corpus is empty");
  NgramElm elm(order, alpha, vocab_size);
  for (const auto& seq : corpus) {
    const auto& ids = seq.ids;
    // targets are every token after the leading BOS, EOS included
    for (std::size_t pos = 1; pos < ids.size(); ++pos) {
      for (int m = 0; m < order; ++m) {
        std::vector<WordId> context(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(pos) - m + j;
          context[static_cast<std::size_t>(j)] = src < 0 ? kBosId : ids[static_cast<std::size_t>(src)];
        }
        elm.observe(context, ids[pos]);
      }
    }
  }
  return elm;
}

std::vector<double> NgramElm::base_distribution(const std::vector<WordId>& prefix) const {
  const auto D = static_cast<std::size_t>(vocab_size_);
  const double beta = alpha_ * static_cast<double>(vocab_size_);

  std::vector<double> dist(D, 1.0 / static_cast<double>(D));
  for (int m = 0; m < order_; ++m) {
    std::vector<WordId> context(static_cast<std::size_t>(m));
    for (int j = 0; j < m; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(prefix.size()) - m + j;
      context[static_cast<std::size_t>(j)] = src < 0 ? kBosId : prefix[static_cast<std::size_t>(src)];
    }
    const auto& table = counts_[static_cast<std::size_t>(m)];
    auto it = table.find(context);
    std::vector<double> level(D);
    const double total = it == table.end() ? 0.0 : static_cast<double>(it->second.total);
    const double denom = total + beta;
    for (std::size_t w = 0; w < D; ++w) level[w] = beta * dist[w] / denom;
    if (it != table.end()) {
      for (const auto& [word, count] : it->second.word_counts) {
        level[static_cast<std::size_t>(word)] += static_cast<double>(count) / denom;
      }
    }
    dist = std::move(level);
  }
  return dist;
}

std::vector<double> NgramElm::query(const std::vector<WordId>& prefix, double temperature) const {
  return apply_temperature(base_distribution(prefix), temperature);
}

std::vector<double> apply_temperature(const std::vector<double>& q, double temperature) {
  if (!(temperature > 0)) throw ConfigError("temperature must be > 0");
  if (temperature == 1.0) return q;
  std::vector<double> out(q.size());
  const double inv = 1.0 / temperature;
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    out[i] = q[i] > 0 ? std::pow(q[i], inv) : 0.0;
    sum += out[i];
  }
  if (sum <= 0) throw ValidationError("temperature smoothing produced a zero distribution");
  for (auto& v : out) v /= sum;
  return out;
}

std::vector<SoftTarget> soft_targets(const std::vector<double>& distribution, int k) {
  const int D = static_cast<int>(distribution.size());
  if (k < 1 || k > D) throw ConfigError("soft target count k must be in [1, D]");
  std::vector<int> order(distribution.size());
  for (int i = 0; i < D; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return distribution[static_cast<std::size_t>(a)] > distribution[static_cast<std::size_t>(b)];
  });
  std::vector<SoftTarget> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const int w = order[static_cast<std::size_t>(i)];
    out.push_back(SoftTarget{w, distribution[static_cast<std::size_t>(w)]});
  }
  return out;
}

namespace {

template <typename T>
void put_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take_raw(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void NgramElm::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write elm file: " + path.string());
  out.write("ORGE", 4);
  put_raw<std::uint8_t>(out, 1);
  put_raw<std::uint8_t>(out, static_cast<std::uint8_t>(order_));
  put_raw<double>(out, alpha_);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_size_));
  for (const auto& table : counts_) {
    put_raw<std::uint64_t>(out, table.size());
    for (const auto& [context, stats] : table) {
      put_raw<std::uint16_t>(out, static_cast<std::uint16_t>(context.size()));
      for (WordId id : context) put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(id));
      put_raw<std::int64_t>(out, stats.total);
      put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(stats.word_counts.size()));
      for (const auto& [word, count] : stats.word_counts) {
        put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(word));
        put_raw<std::int64_t>(out, count);
      }
    }
  }
  if (!out) throw LoadError("elm write failed: " + path.string());
}

NgramElm NgramElm::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open elm file: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ORGE") throw FormatError("bad elm magic: " + path.string());
  const auto version = take_raw<std::uint8_t>(in);
  if (version != 1) throw FormatError("unsupported elm version");
  const auto order = take_raw<std::uint8_t>(in);
  const auto alpha = take_raw<double>(in);
  const auto vocab = take_raw<std::uint32_t>(in);
  NgramElm elm(order, alpha, static_cast<WordId>(vocab));
  for (int m = 0; m < order; ++m) {
    const auto n_contexts = take_raw<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < n_contexts; ++i) {
      const auto clen = take_raw<std::uint16_t>(in);
      std::vector<WordId> context(clen);
      for (auto& id : context) id = static_cast<WordId>(take_raw<std::uint32_t>(in));
      ContextStats stats;
      stats.total = take_raw<std::int64_t>(in);
      const auto n_words = take_raw<std::uint32_t>(in);
      for (std::uint32_t w = 0; w < n_words; ++w) {
        const auto word = static_cast<WordId>(take_raw<std::uint32_t>(in));
        stats.word_counts[word] = take_raw<std::int64_t>(in);
      }
      elm.counts_[static_cast<std::size_t>(m)][std::move(context)] = std::move(stats);
    }
  }
  if (!in) throw CorruptionError("truncated elm file: " + path.string());
  return elm;
}

void SoftTargetStore::put(std::uint32_t caption_id, std::uint16_t step,
                          std::vector<SoftTarget> targets) {
  if (pairs_per_entry_ == 0) pairs_per_entry_ = static_cast<int>(targets.size());
  if (static_cast<int>(targets.size()) != pairs_per_entry_) {
    throw ValidationError("soft target store entries must share one pair count");
  }
  entries_[{caption_id, step}] = std::move(targets);
}

const std::vector<SoftTarget>& SoftTargetStore::get(std::uint32_t caption_id,
                                                    std::uint16_t step) const {
  auto it = entries_.find({caption_id, step});
  if (it == entries_.end()) {
    throw ValidationError("missing soft targets for caption " + std::to_string(caption_id) +
                          " step " + std::to_string(step));
  }
  return it->second;
}

bool SoftTargetStore::has(std::uint32_t caption_id, std::uint16_t step) const {
  return entries_.count({caption_id, step}) > 0;
}

void SoftTargetStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write soft target store: " + path.string());
  out.write("ORGS", 4);
  put_raw<std::uint8_t>(out, 1);
  put_raw<std::uint16_t>(out, static_cast<std::uint16_t>(pairs_per_entry_));
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [key, targets] : entries_) {
    put_raw<std::uint32_t>(out, key.first);
    put_raw<std::uint16_t>(out, key.second);
    for (const auto& t : targets) {
      put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(t.word));
      put_raw<float>(out, static_cast<float>(t.prob));
    }
  }
  if (!out) throw LoadError("soft target store write failed: " + path.string());
}

SoftTargetStore SoftTargetStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open soft target store: " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ORGS") {
    throw FormatError("bad soft target store magic: " + path.string());
  }
  const auto version = take_raw<std::uint8_t>(in);
  if (version != 1) throw FormatError("unsupported soft target store version");
  const auto pairs = take_raw<std::uint16_t>(in);
  const auto n_entries = take_raw<std::uint32_t>(in);
  SoftTargetStore store(pairs);
  for (std::uint32_t i = 0; i < n_entries; ++i) {
    const auto caption_id = take_raw<std::uint32_t>(in);
    const auto step = take_raw<std::uint16_t>(in);
    std::vector<SoftTarget> targets(pairs);
    for (auto& t : targets) {
      t.word = static_cast<WordId>(take_raw<std::uint32_t>(in));
      t.prob = static_cast<double>(take_raw<float>(in));
    }
    if (!in) throw CorruptionError("truncated soft target store: " + path.string());
    store.put(caption_id, step, std::move(targets));
  }
  return store;
}

SoftTargetStore precompute_soft_targets(const std::vector<TokenSequence>& captions,
                                        const ExternalLanguageModel& elm, int k,
                                        double temperature) {
  if (k < 1) throw ConfigError("soft target count k must be >= 1");
  const int pairs = std::min<int>(k, elm.vocab_size());
  SoftTargetStore store(pairs);
  for (std::size_t cid = 0; cid < captions.size(); ++cid) {
    const auto& ids = captions[cid].ids;
    for (WordId id : ids) {
      if (id < 0 || id >= elm.vocab_size()) {
        throw ValidationError("caption vocabulary does not match the language model");
      }
    }
    for (std::size_t t = 1; t < ids.size(); ++t) {
      std::vector<WordId> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(t));
      auto q = elm.query(prefix, temperature);
      store.put(static_cast<std::uint32_t>(cid), static_cast<std::uint16_t>(t),
                soft_targets(q, pairs));
    }
  }
  return store;
}

}  // namespace orgtrl
