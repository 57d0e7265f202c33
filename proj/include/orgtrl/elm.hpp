#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <vector>

#include "orgtrl/common.hpp"
#include "orgtrl/vocab.hpp"

namespace orgtrl {

// Fixed external language model: given a ground-truth prefix, produce a full
// distribution over the task vocabulary, smoothed by a temperature.
class ExternalLanguageModel {
 public:
  virtual ~ExternalLanguageModel() = default;
  virtual std::vector<double> query(const std::vector<WordId>& prefix,
                                    double temperature) const = 0;
  virtual WordId vocab_size() const = 0;
};

// Interpolated add-alpha n-gram model. Each order's estimate is smoothed
// toward the next lower order:
//   P_m(w | ctx) = (count(ctx, w) + alpha*D * P_{m-1}(w | shorter ctx))
//                / (count(ctx) + alpha*D)
// with the unigram smoothed toward uniform. Contexts are BOS-padded on the
// left; EOS is predicted as a regular token. Every word keeps nonzero mass.
class NgramElm final : public ExternalLanguageModel {
 public:
  NgramElm(int order, double alpha, WordId vocab_size);

  static NgramElm train(const std::vector<TokenSequence>& corpus, int order, double alpha,
                        WordId vocab_size);

  std::vector<double> query(const std::vector<WordId>& prefix, double temperature) const override;
  // distribution before temperature smoothing
  std::vector<double> base_distribution(const std::vector<WordId>& prefix) const;

  WordId vocab_size() const override { return vocab_size_; }
  int order() const { return order_; }
  double alpha() const { return alpha_; }

  void save(const std::filesystem::path& path) const;
  static NgramElm load(const std::filesystem::path& path);

 private:
  struct ContextStats {
    std::map<WordId, std::int64_t> word_counts;
    std::int64_t total = 0;
  };

  void observe(const std::vector<WordId>& context, WordId target);

  int order_;
  double alpha_;
  WordId vocab_size_;
  // counts_[m] holds contexts of length m (m = 0 .. order-1)
  std::vector<std::map<std::vector<WordId>, ContextStats>> counts_;
};

// q^(1/T), renormalized. T=1 returns q unchanged.
std::vector<double> apply_temperature(const std::vector<double>& q, double temperature);

struct SoftTarget {
  WordId word = 0;
  double prob = 0.0;
};

// The k highest-probability (word, prob) pairs, descending, ties by lower
// word id. Probabilities are not renormalized.
std::vector<SoftTarget> soft_targets(const std::vector<double>& distribution, int k);

// Per-(caption, step) cache of soft targets. Binary layout: "ORGS", version
// byte, u16 pair count per entry, u32 entry count, then per entry: caption id
// (u32), step t (u16), pair-count pairs of (word id u32, probability f32),
// all little-endian.
class SoftTargetStore {
 public:
  SoftTargetStore() = default;
  explicit SoftTargetStore(int pairs_per_entry) : pairs_per_entry_(pairs_per_entry) {}

  void put(std::uint32_t caption_id, std::uint16_t step, std::vector<SoftTarget> targets);
  const std::vector<SoftTarget>& get(std::uint32_t caption_id, std::uint16_t step) const;
  bool has(std::uint32_t caption_id, std::uint16_t step) const;
  std::size_t entry_count() const { return entries_.size(); }
  int pairs_per_entry() const { return pairs_per_entry_; }

  void save(const std::filesystem::path& path) const;
  static SoftTargetStore load(const std::filesystem::path& path);

 private:
  int pairs_per_entry_ = 0;
  std::map<std::pair<std::uint32_t, std::uint16_t>, std::vector<SoftTarget>> entries_;
};

// Queries the ELM at every target position of every caption (ground-truth
// prefixes, teacher forcing) and collects min(k, D) soft targets per step.
// Caption ids run over (video, caption) pairs in dataset order.
SoftTargetStore precompute_soft_targets(const std::vector<TokenSequence>& captions,
                                        const ExternalLanguageModel& elm, int k,
                                        double temperature);

}  // namespace orgtrl
