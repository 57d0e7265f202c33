#pragma once

#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl {

struct ScoredVideo {
  std::vector<std::string> hypothesis;
  std::vector<std::vector<std::string>> references;  // at least one per video
};

// Corpus-level BLEU-4: geometric mean of clipped modified n-gram precisions
// (n = 1..4) with brevity penalty; per-video reference length is the one
// closest to the hypothesis length (ties to the shorter). A precision of
// zero is floored at 1e-9.
double bleu4(const std::vector<ScoredVideo>& corpus);

// LCS F-measure with beta = 1.2; per video the max over references, corpus
// score is the mean.
double rouge_l(const std::vector<ScoredVideo>& corpus);
double rouge_l_single(const std::vector<std::string>& hypothesis,
                      const std::vector<std::vector<std::string>>& references);

// TF-IDF weighted cosine similarity per n-gram order 1..4, averaged over
// orders and references, scaled by 10. Document frequencies come from the
// reference corpus; needs at least two videos.
double cider(const std::vector<ScoredVideo>& corpus);
std::vector<double> cider_per_video(const std::vector<ScoredVideo>& corpus);

}  // namespace orgtrl
