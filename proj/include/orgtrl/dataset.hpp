#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"
#include "orgtrl/tensor.hpp"
#include "orgtrl/vocab.hpp"

namespace orgtrl {

struct VideoRecord {
  std::string video_id;
  FeatureTensor appearance;  // [L x d_a]
  FeatureTensor motion;      // [L x d_m]
  FeatureTensor objects;     // [L x N x d_o]
  std::vector<std::string> captions;

  std::uint32_t frames() const { return appearance.dim(0); }
  std::uint32_t objects_per_frame() const { return objects.dim(1); }
  void validate() const;
};

// Manifest: JSON document {"videos": [{video_id, appearance, motion, objects,
// captions}, ...]}; tensor paths are relative to the manifest directory.
std::vector<VideoRecord> load_dataset(const std::filesystem::path& manifest_path);

struct Batch {
  // feature tensors stacked along a leading batch axis
  FeatureTensor appearance;  // [B, L, d_a]
  FeatureTensor motion;      // [B, L, d_m]
  FeatureTensor objects;     // [B, L, N, d_o]
  std::vector<std::vector<WordId>> tokens;  // [B][T_max], PAD-filled
  std::vector<std::size_t> lengths;         // unpadded lengths
  std::vector<std::vector<std::uint8_t>> mask;  // 1 exactly on non-PAD positions

  std::size_t size() const { return lengths.size(); }
};

Batch make_batch(const std::vector<std::pair<const VideoRecord*, TokenSequence>>& examples,
                 WordId pad_id);

struct FrequencyReport {
  std::vector<std::pair<std::string, std::int64_t>> counts;  // descending, ties lexicographic
  std::int64_t total_tokens = 0;
  double top50_fraction = 0.0;  // token mass covered by the 50 most frequent words
};

FrequencyReport corpus_stats(const std::vector<std::string>& captions);

}  // namespace orgtrl
