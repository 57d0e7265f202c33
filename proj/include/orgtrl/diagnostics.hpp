#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "orgtrl/elm.hpp"
#include "orgtrl/model.hpp"
#include "orgtrl/trainer.hpp"

namespace orgtrl {

// Gradient verification on a toy instance at 64-bit precision: the object
// encoder alone, one full decode step, and the combined objective on a
// two-video batch, each against central differences.
struct GradCheckReport {
  double org_encoder = 0;
  double decode_step = 0;
  double combined_loss = 0;
  double worst() const { return std::max({org_encoder, decode_step, combined_loss}); }
};

namespace detail {

inline VideoRecord toy_record(Rng& rng, const std::string& id, int L, int N, int d_a, int d_m,
                              int d_o, std::string caption) {
  auto fill = [&](std::vector<std::uint32_t> shape) {
    FeatureTensor t;
    t.shape = std::move(shape);
    t.data.resize(t.count());
    for (auto& x : t.data) x = static_cast<float>(rng.normal());
    return t;
  };
  VideoRecord rec;
  rec.video_id = id;
  rec.appearance = fill({static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(d_a)});
  rec.motion = fill({static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(d_m)});
  rec.objects = fill({static_cast<std::uint32_t>(L), static_cast<std::uint32_t>(N),
                      static_cast<std::uint32_t>(d_o)});
  rec.captions = {std::move(caption)};
  return rec;
}

}  // namespace detail

inline GradCheckReport run_grad_checks(std::uint64_t seed, double eps = 1e-5,
                                       std::size_t sample = 160) {
  GradCheckReport report;
  const int L = 3, N = 2, d_a = 5, d_m = 4, d_o = 6;

  // (a) object encoder alone, scalar readout
  {
    Rng rng(Rng::derive(seed, 11));
    ad::ParameterStore<double> store;
    ad::org_init<double>(store, d_o, 6, rng);
    ad::Mat<double> objects = ad::glorot_init<double>(L * N, d_o, rng);
    ad::OrgConfig cfg{ad::OrgMode::kComplete, 3, 6};
    std::function<double(ad::ParameterStore<double>&)> loss_fn =
        [&](ad::ParameterStore<double>& params) {
          params.zero_grad();
          ad::Tape<double> tape;
          ad::Var obj = tape.constant(objects);
          ad::Var out = ad::encode_objects(tape, params, obj, L, N, cfg);
          ad::Var readout = tape.sum_all(tape.tanh(out));
          tape.backward(readout);
          return tape.val(readout)(0, 0);
        };
    report.org_encoder = ad::grad_check<double>(loss_fn, store, eps, sample, seed);
  }

  // (b) one full decode step (encoder included in the graph)
  {
    Rng rng(Rng::derive(seed, 22));
    ad::ModelDims dims;
    dims.d_appearance = d_a;
    dims.d_motion = d_m;
    dims.d_object = d_o;
    dims.org_dim = 6;
    dims.hidden = 7;
    dims.word_dim = 5;
    dims.vocab = 11;
    dims.org_mode = ad::OrgMode::kComplete;
    dims.top_k = 3;
    ad::CaptionModel<double> model(dims, seed);
    const VideoRecord rec = detail::toy_record(rng, "toy0", L, N, d_a, d_m, d_o, "a b");
    std::function<double(ad::ParameterStore<double>&)> loss_fn =
        [&](ad::ParameterStore<double>& params) {
          params.zero_grad();
          ad::Tape<double> tape;
          auto ctx = model.encode(tape, rec);
          auto state = model.initial_state(tape);
          auto res = model.step(tape, ctx, kBosId, state);
          ad::Var readout = tape.sum_all(res.log_probs);
          tape.backward(readout);
          return tape.val(readout)(0, 0);
        };
    report.decode_step = ad::grad_check<double>(loss_fn, model.params(), eps, sample, seed);
  }

  // (c) combined objective, two-video toy batch
  {
    Rng rng(Rng::derive(seed, 33));
    std::vector<VideoRecord> records;
    records.push_back(detail::toy_record(rng, "toy0", L, N, d_a, d_m, d_o, "a cat eats a ball"));
    records.push_back(detail::toy_record(rng, "toy1", L, N, d_a, d_m, d_o, "a dog holds a cup"));
    std::vector<std::string> captions;
    for (const auto& r : records) captions.push_back(r.captions[0]);
    const Vocabulary vocab = Vocabulary::build(captions, 1);

    std::vector<TokenSequence> sequences;
    for (const auto& c : captions) sequences.push_back(encode_caption(vocab, c, 24));
    const NgramElm elm = NgramElm::train(sequences, 2, 0.01, vocab.size());
    const SoftTargetStore store = precompute_soft_targets(sequences, elm, 4, 1.5);
    const double lambda = 0.3;

    ad::ModelDims dims;
    dims.d_appearance = d_a;
    dims.d_motion = d_m;
    dims.d_object = d_o;
    dims.org_dim = 6;
    dims.hidden = 7;
    dims.word_dim = 5;
    dims.vocab = vocab.size();
    dims.org_mode = ad::OrgMode::kComplete;
    dims.top_k = 3;
    ad::CaptionModel<double> model(dims, seed);

    std::function<double(ad::ParameterStore<double>&)> loss_fn =
        [&](ad::ParameterStore<double>& params) {
          params.zero_grad();
          ad::Tape<double> tape;
          ad::Var ce_acc{};
          ad::Var kl_acc{};
          std::int64_t tokens = 0;
          for (std::size_t v = 0; v < records.size(); ++v) {
            auto ctx = model.encode(tape, records[v]);
            auto state = model.initial_state(tape);
            const auto& ids = sequences[v].ids;
            for (std::size_t t = 1; t < ids.size(); ++t) {
              auto res = model.step(tape, ctx, ids[t - 1], state);
              ad::Var term = tape.pick(res.log_probs, 0, ids[t]);
              ce_acc = ce_acc.valid() ? tape.add(ce_acc, term) : term;
              const auto& soft =
                  store.get(static_cast<std::uint32_t>(v), static_cast<std::uint16_t>(t));
              std::vector<Eigen::Index> cols;
              ad::Mat<double> q(static_cast<Eigen::Index>(soft.size()), 1);
              for (std::size_t s = 0; s < soft.size(); ++s) {
                cols.push_back(soft[s].word);
                q(static_cast<Eigen::Index>(s), 0) = soft[s].prob;
              }
              ad::Var kl_term =
                  tape.matmul(tape.gather_cols(res.log_probs, std::move(cols)),
                              tape.constant(std::move(q)));
              kl_acc = kl_acc.valid() ? tape.add(kl_acc, kl_term) : kl_term;
              state = res.state;
              ++tokens;
            }
          }
          const double inv = -1.0 / static_cast<double>(tokens);
          ad::Var ce_mean = tape.scale(ce_acc, inv);
          ad::Var kl_mean = tape.scale(kl_acc, inv);
          ad::Var loss = tape.add_scaled(kl_mean, ce_mean, lambda, 1.0 - lambda);
          tape.backward(loss);
          return tape.val(loss)(0, 0);
        };
    report.combined_loss = ad::grad_check<double>(loss_fn, model.params(), eps, sample, seed);
  }

  return report;
}

}  // namespace orgtrl
