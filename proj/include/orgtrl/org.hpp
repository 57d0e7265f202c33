#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>

#include "orgtrl/autodiff.hpp"

namespace orgtrl::ad {

enum class OrgMode { kPartial, kComplete };

struct OrgConfig {
  OrgMode mode = OrgMode::kComplete;
  std::optional<Eigen::Index> top_k = 5;  // nullopt = all
  Eigen::Index dim = 512;                 // node feature width d (= d')
};

inline OrgMode org_mode_from_string(const std::string& s) {
  if (s == "p_org") return OrgMode::kPartial;
  if (s == "c_org") return OrgMode::kComplete;
  throw ConfigError("org.mode must be p_org or c_org, got: " + s);
}

// A[p][q] = dot(query(R)[p], key(R)[q]) with affine query/key projections.
template <typename S>
Var relation_coefficients(Tape<S>& tape, Var nodes, Var query_w, Var query_b, Var key_w,
                          Var key_b) {
  Var q = tape.add_rowvec(tape.matmul(nodes, query_w), query_b);
  Var k = tape.add_rowvec(tape.matmul(nodes, key_w), key_b);
  return tape.matmul(q, tape.transpose(k));
}

// Per row, the k largest coefficients (ties -> lower column index). k=nullopt
// keeps everything.
template <typename S>
BoolMask topk_mask(const Mat<S>& coeffs, std::optional<Eigen::Index> k) {
  const Eigen::Index K = coeffs.rows();
  if (coeffs.cols() != K) throw ShapeError("topk_mask: matrix must be square");
  if (!k) return BoolMask::all_true(K, K);
  if (*k <= 0) throw ConfigError("topk_mask: k must be positive");
  if (*k > K) throw ConfigError("topk_mask: k exceeds node count");

  BoolMask mask{K, K, std::vector<std::uint8_t>(static_cast<std::size_t>(K * K), 0)};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(K));
  for (Eigen::Index r = 0; r < K; ++r) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return coeffs(r, a) > coeffs(r, b);
    });
    for (Eigen::Index i = 0; i < *k; ++i) mask.set(r, order[static_cast<std::size_t>(i)], true);
  }
  return mask;
}

// Top-k selection with the self-edge always spending one slot of the budget.
template <typename S>
BoolMask topk_mask_with_self(const Mat<S>& coeffs, std::optional<Eigen::Index> k) {
  if (!k) return topk_mask(coeffs, k);
  Mat<S> boosted = coeffs;
  const S big = std::numeric_limits<S>::max() / S(4);
  for (Eigen::Index i = 0; i < boosted.rows(); ++i) boosted(i, i) = big;
  return topk_mask(boosted, k);
}

// Row-wise masked softmax over the selected neighbors (Â).
template <typename S>
Var normalize_graph(Tape<S>& tape, Var coeffs, const BoolMask& mask) {
  return tape.softmax_rows(coeffs, &mask);
}

template <typename S>
Var gcn_update(Tape<S>& tape, Var normalized, Var nodes, Var update_w) {
  return tape.matmul(tape.matmul(normalized, nodes), update_w);
}

struct RelationalGraphVars {
  Var coeffs;      // A
  Var normalized;  // row-normalized over the neighbor mask
  BoolMask mask;
  Eigen::Index node_count = 0;
};

// Parameter names used by the object encoder.
struct OrgParamNames {
  std::string proj_w, proj_b;      // detector features -> width d
  std::string query_w, query_b;    // relation query projection
  std::string key_w, key_b;        // relation key projection
  std::string update_w;            // graph convolution weight
};

inline OrgParamNames org_param_names(const std::string& prefix = "org") {
  return {prefix + ".proj_w", prefix + ".proj_b",   prefix + ".query_w", prefix + ".query_b",
          prefix + ".key_w",  prefix + ".key_b",    prefix + ".update_w"};
}

template <typename S>
void org_init(ParameterStore<S>& store, Eigen::Index d_obj, Eigen::Index d, Rng& rng,
              const std::string& prefix = "org") {
  const auto names = org_param_names(prefix);
  store.add(names.proj_w, glorot_init<S>(d_obj, d, rng));
  store.add(names.proj_b, Mat<S>::Zero(1, d));
  store.add(names.query_w, glorot_init<S>(d, d, rng));
  store.add(names.query_b, Mat<S>::Zero(1, d));
  store.add(names.key_w, glorot_init<S>(d, d, rng));
  store.add(names.key_b, Mat<S>::Zero(1, d));
  store.add(names.update_w, glorot_init<S>(d, d, rng));
}

template <typename S>
RelationalGraphVars build_relational_graph(Tape<S>& tape, Var nodes, Var query_w, Var query_b,
                                           Var key_w, Var key_b,
                                           std::optional<Eigen::Index> top_k) {
  RelationalGraphVars g;
  g.node_count = tape.val(nodes).rows();
  g.coeffs = relation_coefficients(tape, nodes, query_w, query_b, key_w, key_b);
  g.mask = topk_mask_with_self(tape.val(g.coeffs), top_k);
  g.normalized = normalize_graph(tape, g.coeffs, g.mask);
  return g;
}

// objects: [L*N x d_obj] frame-major rows. Output: [L*N x d] enhanced features.
// Partial mode builds one N-node graph per frame with shared parameters and no
// top-k; complete mode builds a single (L*N)-node graph with top-k selection.
template <typename S>
Var encode_objects(Tape<S>& tape, ParameterStore<S>& store, Var objects, Eigen::Index frames,
                   Eigen::Index per_frame, const OrgConfig& cfg,
                   const std::string& prefix = "org") {
  const auto names = org_param_names(prefix);
  if (tape.val(objects).rows() != frames * per_frame) {
    throw ShapeError("encode_objects: row count must be L*N");
  }
  Var proj_w = tape.param(store, names.proj_w);
  Var proj_b = tape.param(store, names.proj_b);
  Var query_w = tape.param(store, names.query_w);
  Var query_b = tape.param(store, names.query_b);
  Var key_w = tape.param(store, names.key_w);
  Var key_b = tape.param(store, names.key_b);
  Var update_w = tape.param(store, names.update_w);

  Var nodes = tape.add_rowvec(tape.matmul(objects, proj_w), proj_b);

  if (cfg.mode == OrgMode::kPartial) {
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(frames));
    for (Eigen::Index f = 0; f < frames; ++f) {
      Var frame_nodes = tape.slice_rows(nodes, f * per_frame, per_frame);
      auto graph = build_relational_graph(tape, frame_nodes, query_w, query_b, key_w, key_b,
                                          std::nullopt);
      out.push_back(gcn_update(tape, graph.normalized, frame_nodes, update_w));
    }
    return tape.concat_rows(std::span<const Var>(out.data(), out.size()));
  }

  if (cfg.top_k && *cfg.top_k > frames * per_frame) {
    throw ConfigError("org.top_k exceeds the total object count");
  }
  auto graph = build_relational_graph(tape, nodes, query_w, query_b, key_w, key_b, cfg.top_k);
  return gcn_update(tape, graph.normalized, nodes, update_w);
}

}  // namespace orgtrl::ad
