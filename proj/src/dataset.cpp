#include "orgtrl/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

namespace orgtrl {

void VideoRecord::validate() const {
  if (appearance.rank() != 2 || motion.rank() != 2 || objects.rank() != 3) {
    throw ShapeError(video_id + ": expected ranks 2/2/3 for appearance/motion/objects");
  }
  const auto L = appearance.dim(0);
  if (motion.dim(0) != L || objects.dim(0) != L) {
    throw ShapeError(video_id + ": feature streams disagree on frame count L");
  }
  if (captions.empty()) throw ValidationError(video_id + ": record has no captions");
  appearance.validate(video_id + ".appearance");
  motion.validate(video_id + ".motion");
  objects.validate(video_id + ".objects");
}

std::vector<VideoRecord> load_dataset(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw LoadError("cannot open manifest: " + manifest_path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest parse error: " + std::string(e.what()));
  }
  if (!doc.contains("videos") || !doc["videos"].is_array()) {
    throw FormatError("manifest must contain a 'videos' array");
  }

  const auto base = manifest_path.parent_path();
  std::vector<VideoRecord> records;
  records.reserve(doc["videos"].size());
  for (const auto& entry : doc["videos"]) {
    VideoRecord rec;
    if (!entry.contains("video_id") || !entry.at("video_id").is_string()) {
      throw FormatError("manifest entry missing video_id");
    }
    rec.video_id = entry.at("video_id").get<std::string>();
    auto tensor_of = [&](const char* field) {
      if (!entry.contains(field)) {
        throw FormatError(rec.video_id + ": manifest entry missing field " + field);
      }
      const auto rel = entry.at(field).get<std::string>();
      try {
        return read_tensor_file(base / rel);
      } catch (const FormatError&) {
        throw;
      } catch (const Error& e) {
        throw LoadError(rec.video_id + ": " + e.what());
      }
    };
    rec.appearance = tensor_of("appearance");
    rec.motion = tensor_of("motion");
    rec.objects = tensor_of("objects");
    if (entry.contains("captions")) {
      for (const auto& c : entry.at("captions")) rec.captions.push_back(c.get<std::string>());
    }
    rec.validate();
    records.push_back(std::move(rec));
  }
  return records;
}

Batch make_batch(const std::vector<std::pair<const VideoRecord*, TokenSequence>>& examples,
                 WordId pad_id) {
  if (examples.empty()) throw ValidationError("make_batch: empty example list");

  const auto* first = examples.front().first;
  const auto L = first->frames();
  const auto N = first->objects_per_frame();
  const auto d_a = first->appearance.dim(1);
  const auto d_m = first->motion.dim(1);
  const auto d_o = first->objects.dim(2);
  for (const auto& [rec, seq] : examples) {
    if (rec->frames() != L || rec->objects_per_frame() != N || rec->appearance.dim(1) != d_a ||
        rec->motion.dim(1) != d_m || rec->objects.dim(2) != d_o) {
      throw ShapeError("make_batch: heterogeneous feature shapes (video " + rec->video_id + ")");
    }
  }

  const auto B = static_cast<std::uint32_t>(examples.size());
  Batch batch;
  batch.appearance.shape = {B, L, d_a};
  batch.motion.shape = {B, L, d_m};
  batch.objects.shape = {B, L, N, d_o};
  batch.appearance.data.reserve(batch.appearance.count());
  batch.motion.data.reserve(batch.motion.count());
  batch.objects.data.reserve(batch.objects.count());

  std::size_t t_max = 0;
  for (const auto& [rec, seq] : examples) t_max = std::max(t_max, seq.length());

  for (const auto& [rec, seq] : examples) {
    auto append = [](std::vector<float>& dst, const std::vector<float>& src) {
      dst.insert(dst.end(), src.begin(), src.end());
    };
    append(batch.appearance.data, rec->appearance.data);
    append(batch.motion.data, rec->motion.data);
    append(batch.objects.data, rec->objects.data);

    std::vector<WordId> row(t_max, pad_id);
    std::vector<std::uint8_t> mrow(t_max, 0);
    for (std::size_t i = 0; i < seq.ids.size(); ++i) {
      row[i] = seq.ids[i];
      mrow[i] = 1;
    }
    batch.tokens.push_back(std::move(row));
    batch.mask.push_back(std::move(mrow));
    batch.lengths.push_back(seq.length());
  }
  return batch;
}

FrequencyReport corpus_stats(const std::vector<std::string>& captions) {
  std::map<std::string, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& caption : captions) {
    for (const auto& tok : tokenize(caption)) {
      ++counts[tok];
      ++total;
    }
  }
  if (total == 0) throw ValidationError("corpus_stats: empty corpus");

  FrequencyReport report;
  report.total_tokens = total;
  report.counts.assign(counts.begin(), counts.end());
  std::sort(report.counts.begin(), report.counts.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::int64_t head = 0;
  for (std::size_t i = 0; i < report.counts.size() && i < 50; ++i) head += report.counts[i].second;
  report.top50_fraction = static_cast<double>(head) / static_cast<double>(total);
  return report;
}

}  // namespace orgtrl
