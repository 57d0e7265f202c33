#include "orgtrl/synth.hpp"

#include <fstream>

#include "json.hpp"
#include "orgtrl/tensor.hpp"

namespace orgtrl {

const std::vector<std::string>& synth_subject_pool() {
  static const std::vector<std::string> pool = {
      "cat", "dog", "man", "woman", "bird", "horse", "child", "robot", "monkey", "chef"};
  return pool;
}

const std::vector<std::string>& synth_verb_pool() {
  static const std::vector<std::string> pool = {
      "eats", "holds", "throws", "watches", "pushes", "kicks", "carries", "chases", "paints",
      "drops"};
  return pool;
}

const std::vector<std::string>& synth_object_pool() {
  static const std::vector<std::string> pool = {
      "ball", "fish", "book", "cup", "phone", "box", "apple", "drum", "kite", "stick"};
  return pool;
}

namespace {

std::vector<float> embedding(Rng& rng, int dim) {
  std::vector<float> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

void add_into(std::vector<float>& dst, std::size_t offset, const std::vector<float>& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += src[i];
}

}  // namespace

void generate_synthetic(const SynthSpec& spec, std::uint64_t seed,
                        const std::filesystem::path& out_dir) {
  if (spec.noise < 0) throw ConfigError("synthetic noise level must be >= 0");
  if (spec.videos < 1 || spec.frames < 1 || spec.objects < 1) {
    throw ConfigError("synthetic counts must be positive");
  }
  const auto pool_check = [](int want, const std::vector<std::string>& pool, const char* what) {
    if (want < 1 || static_cast<std::size_t>(want) > pool.size()) {
      throw ConfigError(std::string("grammar size for ") + what + " must be in [1, " +
                        std::to_string(pool.size()) + "]");
    }
  };
  pool_check(spec.grammar_subjects, synth_subject_pool(), "subjects");
  pool_check(spec.grammar_verbs, synth_verb_pool(), "verbs");
  pool_check(spec.grammar_objects, synth_object_pool(), "objects");

  std::filesystem::create_directories(out_dir);

  // Token embeddings are drawn once, before any per-video randomness, so the
  // mapping word -> vector is a function of the seed alone.
  Rng embed_rng(Rng::derive(seed, 1));
  std::vector<std::vector<float>> subj_a, subj_o, verb_a, verb_m, obj_o;
  std::vector<std::vector<float>> slot_background;
  for (int i = 0; i < spec.grammar_subjects; ++i) {
    subj_a.push_back(embedding(embed_rng, spec.d_a));
    subj_o.push_back(embedding(embed_rng, spec.d_o));
  }
  for (int i = 0; i < spec.grammar_verbs; ++i) {
    verb_a.push_back(embedding(embed_rng, spec.d_a));
    verb_m.push_back(embedding(embed_rng, spec.d_m));
  }
  for (int i = 0; i < spec.grammar_objects; ++i) obj_o.push_back(embedding(embed_rng, spec.d_o));
  for (int i = 0; i < spec.objects; ++i) slot_background.push_back(embedding(embed_rng, spec.d_o));

  Rng video_rng(Rng::derive(seed, 2));
  nlohmann::json videos = nlohmann::json::array();

  for (int v = 0; v < spec.videos; ++v) {
    const int s = static_cast<int>(video_rng.below(static_cast<std::uint64_t>(spec.grammar_subjects)));
    const int w = static_cast<int>(video_rng.below(static_cast<std::uint64_t>(spec.grammar_verbs)));
    const int o = static_cast<int>(video_rng.below(static_cast<std::uint64_t>(spec.grammar_objects)));

    char idbuf[16];
    std::snprintf(idbuf, sizeof(idbuf), "vid%04d", v);
    const std::string video_id = idbuf;

    const auto L = static_cast<std::uint32_t>(spec.frames);
    const auto N = static_cast<std::uint32_t>(spec.objects);
    FeatureTensor appearance({L, static_cast<std::uint32_t>(spec.d_a)},
                             std::vector<float>(static_cast<std::size_t>(spec.frames * spec.d_a), 0.f));
    FeatureTensor motion({L, static_cast<std::uint32_t>(spec.d_m)},
                         std::vector<float>(static_cast<std::size_t>(spec.frames * spec.d_m), 0.f));
    FeatureTensor objects({L, N, static_cast<std::uint32_t>(spec.d_o)},
                          std::vector<float>(
                              static_cast<std::size_t>(spec.frames * spec.objects * spec.d_o), 0.f));

    for (int f = 0; f < spec.frames; ++f) {
      add_into(appearance.data, static_cast<std::size_t>(f * spec.d_a), subj_a[s]);
      add_into(appearance.data, static_cast<std::size_t>(f * spec.d_a), verb_a[w]);
      add_into(motion.data, static_cast<std::size_t>(f * spec.d_m), verb_m[w]);
      for (int k = 0; k < spec.objects; ++k) {
        const auto off = static_cast<std::size_t>((f * spec.objects + k) * spec.d_o);
        if (k == 0) {
          add_into(objects.data, off, subj_o[s]);
        } else if (k == 1 && spec.objects > 1) {
          add_into(objects.data, off, obj_o[o]);
        } else {
          add_into(objects.data, off, slot_background[k]);
        }
      }
    }
    if (spec.objects == 1) {
      // single slot carries both entities
      for (int f = 0; f < spec.frames; ++f) {
        add_into(objects.data, static_cast<std::size_t>(f * spec.d_o), obj_o[o]);
      }
    }

    if (spec.noise > 0) {
      auto jitter = [&](std::vector<float>& data) {
        for (auto& x : data) x += static_cast<float>(video_rng.normal() * spec.noise);
      };
      jitter(appearance.data);
      jitter(motion.data);
      jitter(objects.data);
    }

    write_tensor_file(out_dir / (video_id + ".appearance.orgt"), appearance);
    write_tensor_file(out_dir / (video_id + ".motion.orgt"), motion);
    write_tensor_file(out_dir / (video_id + ".objects.orgt"), objects);

    const std::string caption = "a " + synth_subject_pool()[static_cast<std::size_t>(s)] + " " +
                                synth_verb_pool()[static_cast<std::size_t>(w)] + " a " +
                                synth_object_pool()[static_cast<std::size_t>(o)];
    videos.push_back({{"video_id", video_id},
                      {"appearance", video_id + ".appearance.orgt"},
                      {"motion", video_id + ".motion.orgt"},
                      {"objects", video_id + ".objects.orgt"},
                      {"captions", {caption}}});
  }

  nlohmann::json doc;
  doc["videos"] = videos;
  std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
  if (!out) throw LoadError("cannot write manifest in " + out_dir.string());
  out << doc.dump(2) << '\n';
}

}  // namespace orgtrl
