#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orgtrl/autodiff.hpp"
#include "orgtrl/lstm.hpp"
#include "orgtrl/tensor.hpp"
#include "orgtrl/vocab.hpp"

namespace orgtrl::ad {

// align[i][j] = index of the object in frame i matched to anchor slot j of
// frame 1; align[0] is the identity.
using AlignmentMap = std::vector<std::vector<Eigen::Index>>;

// Greedy one-to-one assignment by cosine similarity of raw detector features.
// Zero-norm vectors get similarity 0 to everything. objects: [L x N x d_o].
inline AlignmentMap align_objects(const FeatureTensor& objects) {
  if (objects.rank() != 3) throw ShapeError("align_objects: expected [L x N x d] tensor");
  const Eigen::Index L = objects.dim(0);
  const Eigen::Index N = objects.dim(1);
  const Eigen::Index d = objects.dim(2);

  auto vec = [&](Eigen::Index frame, Eigen::Index slot) {
    const float* base = objects.data.data() + (frame * N + slot) * d;
    Eigen::Map<const Eigen::VectorXf> m(base, d);
    return m.cast<double>().eval();
  };
  auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return a.dot(b) / (na * nb);
  };

  AlignmentMap align(static_cast<std::size_t>(L));
  for (Eigen::Index j = 0; j < N; ++j) align[0].push_back(j);

  std::vector<Eigen::VectorXd> anchors;
  for (Eigen::Index j = 0; j < N; ++j) anchors.push_back(vec(0, j));

  for (Eigen::Index i = 1; i < L; ++i) {
    Eigen::MatrixXd sim(N, N);
    for (Eigen::Index j = 0; j < N; ++j) {
      const auto cur = vec(i, j);
      for (Eigen::Index a = 0; a < N; ++a) sim(a, j) = cosine(anchors[a], cur);
    }
    std::vector<Eigen::Index> assignment(static_cast<std::size_t>(N), -1);
    std::vector<bool> anchor_used(static_cast<std::size_t>(N), false);
    std::vector<bool> slot_used(static_cast<std::size_t>(N), false);
    for (Eigen::Index pickn = 0; pickn < N; ++pickn) {
      double best = -std::numeric_limits<double>::infinity();
      Eigen::Index bj = -1, bs = -1;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (anchor_used[static_cast<std::size_t>(j)]) continue;
        for (Eigen::Index s = 0; s < N; ++s) {
          if (slot_used[static_cast<std::size_t>(s)]) continue;
          if (sim(j, s) > best) {
            best = sim(j, s);
            bj = j;
            bs = s;
          }
        }
      }
      assignment[static_cast<std::size_t>(bj)] = bs;
      anchor_used[static_cast<std::size_t>(bj)] = true;
      slot_used[static_cast<std::size_t>(bs)] = true;
    }
    align[static_cast<std::size_t>(i)] = std::move(assignment);
  }
  return align;
}

// Additive attention: weights = softmax(score_w^T tanh(feature_w f + state_w h)).
struct AttentionParamNames {
  std::string feature_w, state_w, score_w;
};

inline AttentionParamNames attention_param_names(const std::string& prefix) {
  return {prefix + ".feature_w", prefix + ".state_w", prefix + ".score_w"};
}

template <typename S>
void attention_init(ParameterStore<S>& store, const std::string& prefix, Eigen::Index d_feat,
                    Eigen::Index d_state, Eigen::Index d_att, Rng& rng) {
  const auto names = attention_param_names(prefix);
  store.add(names.feature_w, glorot_init<S>(d_feat, d_att, rng));
  store.add(names.state_w, glorot_init<S>(d_state, d_att, rng));
  store.add(names.score_w, glorot_init<S>(d_att, 1, rng));
}

struct AttentionVars {
  Var feature_w, state_w, score_w;
};

template <typename S>
AttentionVars attention_vars(Tape<S>& tape, ParameterStore<S>& store, const std::string& prefix) {
  const auto names = attention_param_names(prefix);
  return {tape.param(store, names.feature_w), tape.param(store, names.state_w),
          tape.param(store, names.score_w)};
}

// feats: [K x d_feat], state: [1 x d_state]. Returns (weights [1 x K],
// context [1 x d_feat]). `valid` masks rows of feats (padded frames).
template <typename S>
std::pair<Var, Var> attend(Tape<S>& tape, const AttentionVars& w, Var feats, Var state,
                           const std::vector<std::uint8_t>* valid = nullptr) {
  const Eigen::Index K = tape.val(feats).rows();
  if (K < 1) throw ShapeError("attend: no rows to attend over");
  Var scores = tape.matmul(
      tape.tanh(tape.add_rowvec(tape.matmul(feats, w.feature_w), tape.matmul(state, w.state_w))),
      w.score_w);                              // [K x 1]
  Var score_row = tape.transpose(scores);      // [1 x K]
  Var weights;
  if (valid) {
    if (static_cast<Eigen::Index>(valid->size()) != K) {
      throw ShapeError("attend: validity mask length mismatch");
    }
    BoolMask mask{1, K, *valid};
    weights = tape.softmax_rows(score_row, &mask);
  } else {
    weights = tape.softmax_rows(score_row);
  }
  return {weights, tape.matmul(weights, feats)};
}

// enhanced: [L*N x d] frame-major; weights: [1 x L] temporal attention of the
// current step. Output [N x d] with row j = sum_i alpha_i * enhanced[i, align_i(j)].
template <typename S>
Var merge_aligned(Tape<S>& tape, Var enhanced, const AlignmentMap& align, Var weights) {
  const Eigen::Index L = static_cast<Eigen::Index>(align.size());
  if (L < 1) throw ShapeError("merge_aligned: empty alignment");
  const Eigen::Index N = static_cast<Eigen::Index>(align[0].size());
  if (tape.val(enhanced).rows() != L * N) {
    throw ShapeError("merge_aligned: enhanced feature rows must be L*N");
  }
  if (tape.val(weights).cols() != L) throw ShapeError("merge_aligned: weights length mismatch");

  std::vector<Var> merged;
  merged.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index j = 0; j < N; ++j) {
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(L));
    for (Eigen::Index i = 0; i < L; ++i) {
      rows.push_back(i * N + align[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
    }
    merged.push_back(tape.matmul(weights, tape.gather_rows(enhanced, std::move(rows))));
  }
  return tape.concat_rows(std::span<const Var>(merged.data(), merged.size()));
}

}  // namespace orgtrl::ad
