#include "orgtrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>

namespace orgtrl {

namespace {

constexpr int kMaxOrder = 4;
constexpr double kPrecisionFloor = 1e-9;

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, std::int64_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
  NgramCounts counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i),
            tokens.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(n)));
    ++counts[g];
  }
  return counts;
}

void check_corpus(const std::vector<ScoredVideo>& corpus, const char* what) {
  if (corpus.empty()) throw ValidationError(std::string(what) + ": empty corpus");
  for (const auto& v : corpus) {
    if (v.references.empty()) {
      throw ValidationError(std::string(what) + ": every video needs at least one reference");
    }
  }
}

}  // namespace

double bleu4(const std::vector<ScoredVideo>& corpus) {
  check_corpus(corpus, "bleu4");

  double clipped[kMaxOrder] = {0, 0, 0, 0};
  double total[kMaxOrder] = {0, 0, 0, 0};
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  for (const auto& video : corpus) {
    hyp_len += static_cast<std::int64_t>(video.hypothesis.size());

    // closest reference length, ties toward the shorter
    std::int64_t best_ref = static_cast<std::int64_t>(video.references.front().size());
    for (const auto& ref : video.references) {
      const auto len = static_cast<std::int64_t>(ref.size());
      const auto cur_gap = std::llabs(len - static_cast<std::int64_t>(video.hypothesis.size()));
      const auto best_gap =
          std::llabs(best_ref - static_cast<std::int64_t>(video.hypothesis.size()));
      if (cur_gap < best_gap || (cur_gap == best_gap && len < best_ref)) best_ref = len;
    }
    ref_len += best_ref;

    for (int n = 0; n < kMaxOrder; ++n) {
      const auto hyp_counts = count_ngrams(video.hypothesis, n + 1);
      NgramCounts max_ref;
      for (const auto& ref : video.references) {
        for (const auto& [g, c] : count_ngrams(ref, n + 1)) {
          auto& slot = max_ref[g];
          slot = std::max(slot, c);
        }
      }
      for (const auto& [g, c] : hyp_counts) {
        total[n] += static_cast<double>(c);
        auto it = max_ref.find(g);
        if (it != max_ref.end()) clipped[n] += static_cast<double>(std::min(c, it->second));
      }
    }
  }

  double log_sum = 0.0;
  for (int n = 0; n < kMaxOrder; ++n) {
    const double p =
        (total[n] > 0 && clipped[n] > 0) ? clipped[n] / total[n] : kPrecisionFloor;
    log_sum += 0.25 * std::log(p);
  }
  if (hyp_len == 0) return 0.0;
  const double bp =
      hyp_len >= ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_sum);
}

namespace {

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double rouge_l_single(const std::vector<std::string>& hypothesis,
                      const std::vector<std::vector<std::string>>& references) {
  constexpr double beta = 1.2;
  double best = 0.0;
  for (const auto& ref : references) {
    if (hypothesis.empty() || ref.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(hypothesis, ref));
    if (lcs == 0.0) continue;
    const double prec = lcs / static_cast<double>(hypothesis.size());
    const double rec = lcs / static_cast<double>(ref.size());
    const double f = ((1.0 + beta * beta) * prec * rec) / (rec + beta * beta * prec);
    best = std::max(best, f);
  }
  return best;
}

double rouge_l(const std::vector<ScoredVideo>& corpus) {
  check_corpus(corpus, "rouge_l");
  double sum = 0.0;
  for (const auto& video : corpus) sum += rouge_l_single(video.hypothesis, video.references);
  return sum / static_cast<double>(corpus.size());
}

std::vector<double> cider_per_video(const std::vector<ScoredVideo>& corpus) {
  check_corpus(corpus, "cider");
  if (corpus.size() < 2) {
    throw ValidationError("cider: document frequencies need a corpus of at least 2 videos");
  }

  // document frequency of each n-gram over the reference sets
  std::map<Ngram, std::int64_t> df;
  for (const auto& video : corpus) {
    std::set<Ngram> seen;
    for (const auto& ref : video.references) {
      for (int n = 1; n <= kMaxOrder; ++n) {
        for (const auto& [g, c] : count_ngrams(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df[g];
  }
  const double log_videos = std::log(static_cast<double>(corpus.size()));

  struct TfIdf {
    std::map<Ngram, double> weights[kMaxOrder];
    double norm[kMaxOrder] = {0, 0, 0, 0};
  };
  auto vectorize = [&](const std::vector<std::string>& tokens) {
    TfIdf v;
    for (int n = 0; n < kMaxOrder; ++n) {
      for (const auto& [g, c] : count_ngrams(tokens, n + 1)) {
        auto it = df.find(g);
        const double log_df =
            it == df.end() ? 0.0 : std::log(std::max<double>(1.0, static_cast<double>(it->second)));
        const double w = static_cast<double>(c) * (log_videos - log_df);
        v.weights[n][g] = w;
        v.norm[n] += w * w;
      }
      v.norm[n] = std::sqrt(v.norm[n]);
    }
    return v;
  };

  std::vector<double> scores;
  scores.reserve(corpus.size());
  for (const auto& video : corpus) {
    const TfIdf hyp = vectorize(video.hypothesis);
    double video_score = 0.0;
    for (const auto& ref : video.references) {
      const TfIdf rv = vectorize(ref);
      double sim_sum = 0.0;
      for (int n = 0; n < kMaxOrder; ++n) {
        if (hyp.norm[n] == 0.0 || rv.norm[n] == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, w] : hyp.weights[n]) {
          auto it = rv.weights[n].find(g);
          if (it != rv.weights[n].end()) dot += w * it->second;
        }
        sim_sum += dot / (hyp.norm[n] * rv.norm[n]);
      }
      video_score += sim_sum / static_cast<double>(kMaxOrder);
    }
    video_score /= static_cast<double>(video.references.size());
    scores.push_back(video_score * 10.0);
  }
  return scores;
}

double cider(const std::vector<ScoredVideo>& corpus) {
  const auto scores = cider_per_video(corpus);
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

}  // namespace orgtrl
