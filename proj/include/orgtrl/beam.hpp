#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "orgtrl/common.hpp"
#include "orgtrl/vocab.hpp"

namespace orgtrl::ad {

// Breadth-limited best-first decoding with length-normalized scores
// (score = logP / token count). Hypotheses ending in EOS are frozen and keep
// competing for beam slots; PAD/BOS/UNK are never emitted. Returns the best
// finished hypothesis (content tokens, EOS stripped), else the best
// unfinished one at max_len.
//
// Stepper contract:
//   using State = ...;
//   State init();
//   std::pair<Eigen::RowVectorXd, State> step(const State&, WordId prev);
template <typename Stepper>
std::vector<WordId> beam_search(Stepper& stepper, int beam_size, int max_len) {
  if (beam_size <= 0) throw ConfigError("beam_search: beam size must be positive");
  if (max_len < 1) throw ConfigError("beam_search: max_len must be >= 1");

  using State = typename Stepper::State;
  struct Hyp {
    std::vector<WordId> ids;
    double logp = 0.0;
    State state;
    bool finished = false;  // ends with EOS
    bool terminal = false;  // reached max_len without EOS
    double score() const {
      return logp / static_cast<double>(std::max<std::size_t>(std::size_t{1}, ids.size()));
    }
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    const double sa = a.score(), sb = b.score();
    if (sa != sb) return sa > sb;
    return a.ids < b.ids;
  };

  std::vector<Hyp> pool;
  pool.push_back(Hyp{{}, 0.0, stepper.init(), false, false});

  while (true) {
    std::vector<Hyp> candidates;
    bool expanded = false;
    for (const auto& h : pool) {
      if (h.finished || h.terminal) {
        candidates.push_back(h);
        continue;
      }
      expanded = true;
      const WordId prev = h.ids.empty() ? kBosId : h.ids.back();
      auto [probs, next_state] = stepper.step(h.state, prev);
      for (Eigen::Index id = 0; id < probs.cols(); ++id) {
        if (id == kPadId || id == kBosId || id == kUnkId) continue;
        const double p = probs(id);
        if (!(p > 0.0)) continue;
        Hyp nh;
        nh.ids = h.ids;
        nh.ids.push_back(static_cast<WordId>(id));
        nh.logp = h.logp + std::log(p);
        nh.state = next_state;
        nh.finished = (id == kEosId);
        const auto content = nh.ids.size() - (nh.finished ? 1 : 0);
        nh.terminal = !nh.finished && content >= static_cast<std::size_t>(max_len);
        candidates.push_back(std::move(nh));
      }
    }
    if (!expanded) break;
    std::sort(candidates.begin(), candidates.end(), better);
    if (candidates.size() > static_cast<std::size_t>(beam_size)) {
      candidates.resize(static_cast<std::size_t>(beam_size));
    }
    pool = std::move(candidates);
    if (pool.empty()) break;
  }

  const Hyp* best = nullptr;
  for (const auto& h : pool) {
    if (h.finished && (!best || better(h, *best))) best = &h;
  }
  if (!best) {
    for (const auto& h : pool) {
      if (!best || better(h, *best)) best = &h;
    }
  }
  if (!best) return {};
  std::vector<WordId> out = best->ids;
  if (!out.empty() && out.back() == kEosId) out.pop_back();
  return out;
}

}  // namespace orgtrl::ad
