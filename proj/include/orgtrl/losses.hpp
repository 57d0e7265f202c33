#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "orgtrl/common.hpp"
#include "orgtrl/elm.hpp"
#include "orgtrl/vocab.hpp"

namespace orgtrl {

// Cross-entropy against hard targets: -sum_t log P_t[target_t] over masked
// positions, divided by the masked token count. Rows of `probs` must be
// valid distributions.
inline double ce_loss(const Eigen::MatrixXd& probs, const std::vector<WordId>& targets,
                      const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::size_t>(probs.rows()) != targets.size() || targets.size() != mask.size()) {
    throw ShapeError("ce_loss: rows, targets and mask must agree");
  }
  double sum = 0.0;
  std::int64_t tokens = 0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (!mask[t]) continue;
    const WordId id = targets[t];
    if (id < 0 || id >= probs.cols()) throw IndexError("ce_loss: target id out of range");
    sum -= std::log(probs(static_cast<Eigen::Index>(t), id));
    ++tokens;
  }
  if (tokens == 0) throw ValidationError("ce_loss: no masked target positions");
  return sum / static_cast<double>(tokens);
}

// Truncated soft-target cross-entropy: -sum_t sum_{(w,q) in soft_t} q*log P_t[w]
// over masked positions, same per-token normalization as ce_loss.
inline double kl_soft_loss(const Eigen::MatrixXd& probs,
                           const std::vector<std::vector<SoftTarget>>& soft,
                           const std::vector<std::uint8_t>& mask) {
  if (static_cast<std::size_t>(probs.rows()) != soft.size() || soft.size() != mask.size()) {
    throw ShapeError("kl_soft_loss: rows, soft targets and mask must agree");
  }
  double sum = 0.0;
  std::int64_t tokens = 0;
  for (std::size_t t = 0; t < soft.size(); ++t) {
    if (!mask[t]) continue;
    if (soft[t].empty()) {
      throw ValidationError("kl_soft_loss: missing soft targets at masked step " +
                            std::to_string(t));
    }
    for (const auto& target : soft[t]) {
      if (target.word < 0 || target.word >= probs.cols()) {
        throw IndexError("kl_soft_loss: soft target id out of range");
      }
      sum -= target.prob * std::log(probs(static_cast<Eigen::Index>(t), target.word));
    }
    ++tokens;
  }
  if (tokens == 0) throw ValidationError("kl_soft_loss: no masked target positions");
  return sum / static_cast<double>(tokens);
}

inline double combined_loss(double ce, double kl, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("loss trade-off lambda must be in [0, 1]");
  }
  return lambda * kl + (1.0 - lambda) * ce;
}

}  // namespace orgtrl
