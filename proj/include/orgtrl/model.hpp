#pragma once

#include <optional>
#include <string>
#include <vector>

#include "orgtrl/autodiff.hpp"
#include "orgtrl/dataset.hpp"
#include "orgtrl/decoder.hpp"
#include "orgtrl/lstm.hpp"
#include "orgtrl/org.hpp"

namespace orgtrl::ad {

struct ModelDims {
  Eigen::Index d_appearance = 32;
  Eigen::Index d_motion = 32;
  Eigen::Index d_object = 32;
  Eigen::Index org_dim = 512;
  Eigen::Index hidden = 512;
  Eigen::Index word_dim = 300;
  Eigen::Index vocab = 4;
  OrgMode org_mode = OrgMode::kComplete;
  std::optional<Eigen::Index> top_k = 5;
};

template <typename S>
Mat<S> tensor_to_mat(const FeatureTensor& t, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<std::size_t>(rows * cols) != t.data.size()) {
    throw ShapeError("tensor_to_mat: element count mismatch");
  }
  Mat<S> m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = static_cast<S>(t.data[static_cast<std::size_t>(r * cols + c)]);
    }
  }
  return m;
}

// Object-graph encoder plus hierarchical two-LSTM decoder with temporal and
// spatial attention.
template <typename S>
class CaptionModel {
 public:
  CaptionModel(const ModelDims& dims, std::uint64_t seed) : dims_(dims) {
    Rng rng(Rng::derive(seed, 101));
    org_init<S>(store_, dims.d_object, dims.org_dim, rng);
    store_.add("global_proj.w",
               glorot_init<S>(dims.d_appearance + dims.d_motion, dims.hidden, rng));
    store_.add("global_proj.b", Mat<S>::Zero(1, dims.hidden));
    store_.add("embed.w", glorot_init<S>(dims.vocab, dims.word_dim, rng));
    lstm_init<S>(store_, "attn_lstm", dims.hidden + dims.word_dim + dims.hidden, dims.hidden, rng);
    attention_init<S>(store_, "temporal_attn", dims.hidden, dims.hidden, dims.hidden, rng);
    attention_init<S>(store_, "spatial_attn", dims.org_dim, dims.hidden, dims.hidden, rng);
    lstm_init<S>(store_, "lang_lstm", dims.hidden + dims.org_dim + dims.hidden, dims.hidden, rng);
    store_.add("out_proj.w", glorot_init<S>(dims.hidden, dims.vocab, rng));
    store_.add("out_proj.b", Mat<S>::Zero(1, dims.vocab));
  }

  ParameterStore<S>& params() { return store_; }
  const ParameterStore<S>& params() const { return store_; }
  const ModelDims& dims() const { return dims_; }

  struct VideoContext {
    Var global;       // [L x hidden]
    Var global_mean;  // [1 x hidden]
    Var enhanced;     // [L*N x org_dim]
    AlignmentMap align;
    Eigen::Index frames = 0;
    Eigen::Index per_frame = 0;
    std::vector<std::uint8_t> frame_valid;  // empty = all frames valid
  };

  struct StepState {
    LstmStateVar attn;
    LstmStateVar lang;
    Var alpha;  // temporal weights of the step that produced this state
    Var beta;   // spatial weights
  };

  struct StepResult {
    Var probs;
    Var log_probs;
    StepState state;
  };

  VideoContext encode(Tape<S>& tape, const VideoRecord& video,
                      std::vector<std::uint8_t> frame_valid = {}) {
    const Eigen::Index L = video.frames();
    const Eigen::Index N = video.objects_per_frame();
    Mat<S> global_in(L, dims_.d_appearance + dims_.d_motion);
    global_in << tensor_to_mat<S>(video.appearance, L, dims_.d_appearance),
        tensor_to_mat<S>(video.motion, L, dims_.d_motion);
    Var raw_objects = tape.constant(tensor_to_mat<S>(video.objects, L * N, dims_.d_object));
    return encode_from(tape, tape.constant(std::move(global_in)), raw_objects,
                       align_objects(video.objects), L, N, std::move(frame_valid));
  }

  VideoContext encode_from(Tape<S>& tape, Var global_in, Var raw_objects, AlignmentMap align,
                           Eigen::Index frames, Eigen::Index per_frame,
                           std::vector<std::uint8_t> frame_valid = {}) {
    VideoContext ctx;
    ctx.frames = frames;
    ctx.per_frame = per_frame;
    ctx.align = std::move(align);
    ctx.frame_valid = std::move(frame_valid);
    ctx.global = tape.add_rowvec(tape.matmul(global_in, tape.param(store_, "global_proj.w")),
                                 tape.param(store_, "global_proj.b"));
    ctx.global_mean = tape.mean_rows(ctx.global);
    OrgConfig cfg{dims_.org_mode, dims_.top_k, dims_.org_dim};
    ctx.enhanced = encode_objects(tape, store_, raw_objects, frames, per_frame, cfg);
    return ctx;
  }

  StepState initial_state(Tape<S>& tape) {
    StepState s;
    s.attn = lstm_zero_state(tape, dims_.hidden);
    s.lang = lstm_zero_state(tape, dims_.hidden);
    return s;
  }

  StepResult step(Tape<S>& tape, const VideoContext& ctx, WordId prev_word,
                  const StepState& state) {
    if (prev_word < 0 || prev_word >= dims_.vocab) {
      throw IndexError("decoder: previous word id out of range");
    }
    Var embed = tape.row(tape.param(store_, "embed.w"), prev_word);
    Var attn_in = tape.concat_cols({ctx.global_mean, embed, state.lang.h});
    auto attn_lstm = lstm_vars(tape, store_, "attn_lstm");
    LstmStateVar attn_state = lstm_step(tape, attn_lstm, attn_in, state.attn);

    auto temporal = attention_vars(tape, store_, "temporal_attn");
    auto [alpha, global_ctx] =
        attend(tape, temporal, ctx.global, attn_state.h,
               ctx.frame_valid.empty() ? nullptr : &ctx.frame_valid);

    Var merged = merge_aligned(tape, ctx.enhanced, ctx.align, alpha);
    auto spatial = attention_vars(tape, store_, "spatial_attn");
    auto [beta, local_ctx] = attend(tape, spatial, merged, attn_state.h);

    Var lang_in = tape.concat_cols({global_ctx, local_ctx, attn_state.h});
    auto lang_lstm = lstm_vars(tape, store_, "lang_lstm");
    LstmStateVar lang_state = lstm_step(tape, lang_lstm, lang_in, state.lang);

    Var logits = tape.add(tape.matmul(lang_state.h, tape.param(store_, "out_proj.w")),
                          tape.param(store_, "out_proj.b"));
    StepResult result;
    result.probs = tape.softmax_rows(logits);
    result.log_probs = tape.log_softmax_rows(logits);
    result.state = StepState{attn_state, lang_state, alpha, beta};
    return result;
  }

 private:
  ModelDims dims_;
  ParameterStore<S> store_;
};

template <typename S>
struct ModelStepper {
  Tape<S>& tape;
  CaptionModel<S>& model;
  const typename CaptionModel<S>::VideoContext& ctx;

  using State = typename CaptionModel<S>::StepState;
  State init() { return model.initial_state(tape); }
  std::pair<Eigen::RowVectorXd, State> step(const State& state, WordId prev) {
    auto r = model.step(tape, ctx, prev, state);
    Eigen::RowVectorXd p = tape.val(r.probs).row(0).template cast<double>();
    return {std::move(p), r.state};
  }
};

}  // namespace orgtrl::ad
