#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "orgtrl/checkpoint.hpp"
#include "orgtrl/config.hpp"
#include "orgtrl/dataset.hpp"
#include "orgtrl/elm.hpp"
#include "orgtrl/metrics.hpp"
#include "orgtrl/model.hpp"

namespace orgtrl {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update from the gradients currently in the store;
// `step` is the 1-based update count including this one. Throws on non-finite
// gradients, naming the offending parameter.
void adam_step(ad::ParameterStore<float>& store, std::int64_t step, const AdamConfig& cfg);

double global_grad_norm(const ad::ParameterStore<float>& store);
void clip_gradients(ad::ParameterStore<float>& store, double max_norm);

ad::ModelDims model_dims_from(const Config& config, const std::vector<VideoRecord>& records,
                              const Vocabulary& vocab);

struct TrainLogEntry {
  std::int64_t epoch = 0;
  std::int64_t step = 0;
  double ce = 0;
  double kl = 0;
  double loss = 0;
  double grad_norm = 0;
  std::int64_t wall_ms = 0;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
  std::filesystem::path final_checkpoint;
  std::int64_t epochs_run = 0;
};

// Teacher-forced training of the caption model under the combined objective.
// All randomness (init, shuffling, caption sampling) derives from `seed`; the
// shuffle for epoch e is a pure function of (seed, e) so resumed runs replay
// the identical schedule.
TrainResult train(const Config& config, std::uint64_t seed, const std::filesystem::path& out_dir);

struct PerVideoScore {
  std::string video_id;
  std::string caption;
  double rouge_l = 0;
  double cider = 0;
};

struct MetricReport {
  double bleu4 = 0;
  double rouge_l = 0;
  double cider = 0;
  std::vector<PerVideoScore> per_video;
};

std::vector<std::pair<std::string, std::string>> infer_captions(
    ad::CaptionModel<float>& model, const std::vector<VideoRecord>& records,
    const Vocabulary& vocab, int beam, int max_len);

MetricReport evaluate_model(ad::CaptionModel<float>& model,
                            const std::vector<VideoRecord>& records, const Vocabulary& vocab,
                            int beam, int max_len);

}  // namespace orgtrl
