#include "orgtrl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"
#include "orgtrl/beam.hpp"
#include "orgtrl/losses.hpp"

namespace orgtrl {

void adam_step(ad::ParameterStore<float>& store, std::int64_t step, const AdamConfig& cfg) {
  if (step < 1) throw ConfigError("adam_step: step must be >= 1");
  const float b1 = static_cast<float>(cfg.beta1);
  const float b2 = static_cast<float>(cfg.beta2);
  const float lr = static_cast<float>(cfg.lr);
  const float eps = static_cast<float>(cfg.eps);
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step));
  for (auto& e : store.entries()) {
    if (!e.grad.allFinite()) {
      throw ValidationError("non-finite gradient for parameter " + e.name);
    }
    e.moment1 = b1 * e.moment1 + (1.0f - b1) * e.grad;
    e.moment2 = (b2 * e.moment2.array() + (1.0f - b2) * e.grad.array().square()).matrix();
    const auto m_hat = e.moment1.array() / bc1;
    const auto v_hat = e.moment2.array() / bc2;
    e.value.array() -= lr * m_hat / (v_hat.sqrt() + eps);
  }
}

double global_grad_norm(const ad::ParameterStore<float>& store) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    sq += e.grad.cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

void clip_gradients(ad::ParameterStore<float>& store, double max_norm) {
  if (max_norm <= 0) return;
  const double norm = global_grad_norm(store);
  if (norm <= max_norm) return;
  const float scale = static_cast<float>(max_norm / norm);
  for (auto& e : store.entries()) e.grad *= scale;
}

ad::ModelDims model_dims_from(const Config& config, const std::vector<VideoRecord>& records,
                              const Vocabulary& vocab) {
  if (records.empty()) throw ValidationError("empty dataset");
  ad::ModelDims dims;
  dims.d_appearance = records[0].appearance.dim(1);
  dims.d_motion = records[0].motion.dim(1);
  dims.d_object = records[0].objects.dim(2);
  dims.org_dim = config.get_int("org.dim");
  dims.hidden = config.get_int("decoder.hidden");
  dims.word_dim = config.get_int("decoder.word_dim");
  dims.vocab = vocab.size();
  dims.org_mode = ad::org_mode_from_string(config.get("org.mode"));
  const auto k = config.get_top_k("org.top_k");
  dims.top_k = k ? std::optional<Eigen::Index>(*k) : std::nullopt;
  return dims;
}

namespace {

struct TrainExample {
  std::size_t video = 0;
  std::uint32_t caption_id = 0;
  TokenSequence sequence;
};

std::vector<TrainExample> enumerate_examples(const std::vector<VideoRecord>& records,
                                             const Vocabulary& vocab, int max_len) {
  std::vector<TrainExample> examples;
  std::uint32_t caption_id = 0;
  for (std::size_t v = 0; v < records.size(); ++v) {
    for (const auto& caption : records[v].captions) {
      examples.push_back({v, caption_id++, encode_caption(vocab, caption, max_len)});
    }
  }
  return examples;
}

}  // namespace

TrainResult train(const Config& config, std::uint64_t seed,
                  const std::filesystem::path& out_dir) {
  const auto records = load_dataset(config.get("data.manifest"));
  const auto vocab = Vocabulary::load(config.get("data.vocab"));
  const double lambda = config.get_real("trl.lambda");
  if (lambda < 0 || lambda > 1) throw ConfigError("trl.lambda must be in [0, 1]");

  std::optional<SoftTargetStore> soft_store;
  if (config.has_value("trl.store") && std::filesystem::exists(config.get("trl.store"))) {
    soft_store = SoftTargetStore::load(config.get("trl.store"));
  }
  if (lambda > 0 && !soft_store) {
    throw ConfigError("trl.lambda > 0 requires a precomputed soft target store (trl.store)");
  }

  const auto dims = model_dims_from(config, records, vocab);
  ad::CaptionModel<float> model(dims, seed);

  if (config.has_value("embed.pretrained")) {
    const auto t = read_tensor_file(config.get("embed.pretrained"));
    auto& entry = model.params().at("embed.w");
    if (t.rank() != 2 || static_cast<Eigen::Index>(t.dim(0)) != entry.value.rows() ||
        static_cast<Eigen::Index>(t.dim(1)) != entry.value.cols()) {
      throw ShapeError("pretrained embedding shape does not match [vocab x word_dim]");
    }
    entry.value = ad::tensor_to_mat<float>(t, entry.value.rows(), entry.value.cols());
  }

  const int max_len = static_cast<int>(config.get_int("decoder.max_len"));
  const auto all_examples = enumerate_examples(records, vocab, max_len);
  const auto batch_size = static_cast<std::size_t>(config.get_int("train.batch"));
  const auto epochs = config.get_int("train.epochs");
  const double clip = config.get_real("train.clip");
  const auto patience = config.get_int("train.patience");
  const std::string pairing = config.get("train.pairing");
  if (pairing != "per_caption" && pairing != "sample_per_video") {
    throw ConfigError("train.pairing must be per_caption or sample_per_video");
  }
  AdamConfig adam;
  adam.lr = config.get_real("train.lr");

  TrainState state;
  if (config.has_value("train.resume")) {
    const std::filesystem::path resume = config.get("train.resume");
    load_parameters(model.params(), resume);
    if (has_train_state(resume)) state = load_train_state(model.params(), resume);
  }

  std::vector<VideoRecord> val_records;
  if (patience > 0 && config.has_value("data.val_manifest")) {
    val_records = load_dataset(config.get("data.val_manifest"));
  }

  std::filesystem::create_directories(out_dir / "checkpoints");
  std::ofstream log_file(out_dir / "train_log.jsonl",
                         state.next_epoch > 0 ? std::ios::app : std::ios::trunc);
  if (!log_file) throw LoadError("cannot open training log in " + out_dir.string());

  TrainResult result;
  const auto wall_start = std::chrono::steady_clock::now();
  double best_val_cider = -1.0;
  std::int64_t epochs_since_best = 0;
  const int beam = static_cast<int>(config.get_int("decoder.beam"));

  for (std::int64_t epoch = state.next_epoch; epoch < epochs; ++epoch) {
    // the schedule is a pure function of (seed, epoch) so resume replays it
    std::vector<std::size_t> order;
    if (pairing == "sample_per_video") {
      Rng pick_rng(Rng::derive(seed, 1000 + static_cast<std::uint64_t>(epoch)));
      std::map<std::size_t, std::vector<std::size_t>> by_video;
      for (std::size_t i = 0; i < all_examples.size(); ++i) {
        by_video[all_examples[i].video].push_back(i);
      }
      for (const auto& [video, ids] : by_video) {
        order.push_back(ids[static_cast<std::size_t>(pick_rng.below(ids.size()))]);
      }
    } else {
      order.resize(all_examples.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    }
    Rng shuffle_rng(Rng::derive(seed, 2000 + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<std::pair<const VideoRecord*, TokenSequence>> rows;
      std::vector<const TrainExample*> row_examples;
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = all_examples[order[i]];
        rows.emplace_back(&records[ex.video], ex.sequence);
        row_examples.push_back(&ex);
      }
      const Batch batch = make_batch(rows, kPadId);

      ad::Tape<float> tape;
      std::map<std::size_t, typename ad::CaptionModel<float>::VideoContext> ctx_cache;
      ad::Var ce_acc{};
      ad::Var kl_acc{};
      std::int64_t tokens = 0;
      // (log_probs, caption id, step) kept for kl reporting when lambda == 0
      std::vector<std::tuple<ad::Var, std::uint32_t, std::uint16_t>> logged_steps;

      for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& ex = *row_examples[r];
        auto found = ctx_cache.find(ex.video);
        if (found == ctx_cache.end()) {
          found = ctx_cache.emplace(ex.video, model.encode(tape, records[ex.video])).first;
        }
        auto state_var = model.initial_state(tape);
        const auto len = batch.lengths[r];
        for (std::size_t t = 1; t < len; ++t) {
          const WordId prev = batch.tokens[r][t - 1];
          const WordId target = batch.tokens[r][t];
          auto res = model.step(tape, found->second, prev, state_var);
          ad::Var term = tape.pick(res.log_probs, 0, target);
          ce_acc = ce_acc.valid() ? tape.add(ce_acc, term) : term;
          if (lambda > 0) {
            const auto& targets =
                soft_store->get(ex.caption_id, static_cast<std::uint16_t>(t));
            std::vector<Eigen::Index> ids;
            ad::Mat<float> q(static_cast<Eigen::Index>(targets.size()), 1);
            for (std::size_t s = 0; s < targets.size(); ++s) {
              ids.push_back(targets[s].word);
              q(static_cast<Eigen::Index>(s), 0) = static_cast<float>(targets[s].prob);
            }
            ad::Var kl_term = tape.matmul(tape.gather_cols(res.log_probs, std::move(ids)),
                                          tape.constant(std::move(q)));
            kl_acc = kl_acc.valid() ? tape.add(kl_acc, kl_term) : kl_term;
          } else if (soft_store) {
            logged_steps.emplace_back(res.log_probs, ex.caption_id,
                                      static_cast<std::uint16_t>(t));
          }
          state_var = res.state;
          ++tokens;
        }
      }
      if (tokens == 0) throw ValidationError("training batch contains no target tokens");

      const float inv_tokens = -1.0f / static_cast<float>(tokens);
      ad::Var ce_mean = tape.scale(ce_acc, inv_tokens);
      ad::Var loss = ce_mean;
      double kl_value = 0.0;
      if (lambda > 0) {
        ad::Var kl_mean = tape.scale(kl_acc, inv_tokens);
        loss = tape.add_scaled(kl_mean, ce_mean, static_cast<float>(lambda),
                               static_cast<float>(1.0 - lambda));
        kl_value = static_cast<double>(tape.val(kl_mean)(0, 0));
      } else if (soft_store) {
        double acc = 0.0;
        for (const auto& [lp_var, caption_id, t] : logged_steps) {
          const auto& lp = tape.val(lp_var);
          for (const auto& target : soft_store->get(caption_id, t)) {
            acc -= target.prob * static_cast<double>(lp(0, target.word));
          }
        }
        kl_value = acc / static_cast<double>(tokens);
      }

      if (!std::isfinite(static_cast<double>(tape.val(loss)(0, 0)))) {
        throw ValidationError("non-finite training loss at step " + std::to_string(state.step));
      }
      model.params().zero_grad();
      tape.backward(loss);

      const double grad_norm = global_grad_norm(model.params());
      if (!std::isfinite(grad_norm) || grad_norm > 1e4) {
        throw ValidationError("gradient norm explosion: " + std::to_string(grad_norm));
      }
      clip_gradients(model.params(), clip);
      adam_step(model.params(), ++state.step, adam);

      TrainLogEntry entry;
      entry.epoch = epoch;
      entry.step = state.step;
      entry.ce = static_cast<double>(tape.val(ce_mean)(0, 0));
      entry.kl = kl_value;
      entry.loss = combined_loss(entry.ce, entry.kl, lambda);
      entry.grad_norm = grad_norm;
      entry.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - wall_start)
                          .count();
      nlohmann::json j{{"epoch", entry.epoch}, {"step", entry.step},
                       {"ce", entry.ce},       {"kl", entry.kl},
                       {"loss", entry.loss},   {"grad_norm", entry.grad_norm},
                       {"wall_ms", entry.wall_ms}};
      log_file << j.dump() << '\n';
      result.log.push_back(entry);
    }

    char name[32];
    std::snprintf(name, sizeof(name), "epoch_%04lld", static_cast<long long>(epoch));
    const auto ckpt_dir = out_dir / "checkpoints" / name;
    save_parameters(model.params(), ckpt_dir);
    save_train_state(model.params(), ckpt_dir, TrainState{state.step, epoch + 1});
    result.final_checkpoint = ckpt_dir;
    result.epochs_run = epoch + 1;

    if (!val_records.empty()) {
      const auto report = evaluate_model(model, val_records, vocab, beam, max_len);
      if (report.cider > best_val_cider + 1e-9) {
        best_val_cider = report.cider;
        epochs_since_best = 0;
      } else if (++epochs_since_best >= patience) {
        break;
      }
    }
  }

  const auto latest = out_dir / "checkpoints" / "latest";
  std::filesystem::remove_all(latest);
  save_parameters(model.params(), latest);
  save_train_state(model.params(), latest, TrainState{state.step, result.epochs_run});
  return result;
}

std::vector<std::pair<std::string, std::string>> infer_captions(
    ad::CaptionModel<float>& model, const std::vector<VideoRecord>& records,
    const Vocabulary& vocab, int beam, int max_len) {
  if (records.empty()) throw ValidationError("empty dataset");
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(records.size());
  for (const auto& record : records) {
    ad::Tape<float> tape;
    auto ctx = model.encode(tape, record);
    ad::ModelStepper<float> stepper{tape, model, ctx};
    const auto ids = ad::beam_search(stepper, beam, max_len);
    out.emplace_back(record.video_id, decode_tokens(vocab, ids));
  }
  return out;
}

MetricReport evaluate_model(ad::CaptionModel<float>& model,
                            const std::vector<VideoRecord>& records, const Vocabulary& vocab,
                            int beam, int max_len) {
  const auto captions = infer_captions(model, records, vocab, beam, max_len);
  std::vector<ScoredVideo> corpus;
  corpus.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    ScoredVideo sv;
    sv.hypothesis = tokenize(captions[i].second);
    for (const auto& ref : records[i].captions) sv.references.push_back(tokenize(ref));
    corpus.push_back(std::move(sv));
  }

  MetricReport report;
  report.bleu4 = bleu4(corpus);
  report.rouge_l = rouge_l(corpus);
  const auto cider_scores = cider_per_video(corpus);
  double cider_sum = 0;
  for (double s : cider_scores) cider_sum += s;
  report.cider = cider_sum / static_cast<double>(cider_scores.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    report.per_video.push_back(PerVideoScore{
        records[i].video_id, captions[i].second,
        rouge_l_single(corpus[i].hypothesis, corpus[i].references), cider_scores[i]});
  }
  return report;
}

}  // namespace orgtrl
