#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "orgtrl/common.hpp"

namespace orgtrl {

struct SynthSpec {
  int videos = 20;
  int frames = 8;       // L
  int objects = 4;      // N
  int d_a = 32;
  int d_m = 32;
  int d_o = 32;
  int grammar_subjects = 5;
  int grammar_verbs = 5;
  int grammar_objects = 5;
  double noise = 0.1;
};

// Word pools for caption templates "a <subject> <verb> a <object>".
const std::vector<std::string>& synth_subject_pool();
const std::vector<std::string>& synth_verb_pool();
const std::vector<std::string>& synth_object_pool();

// Writes manifest.json plus one tensor file per stream per video into out_dir.
// Every video's latent (subject, verb, object) triple is embedded into its
// features via fixed seeded token embeddings plus additive noise, so identical
// (spec, seed) pairs produce byte-identical datasets.
void generate_synthetic(const SynthSpec& spec, std::uint64_t seed,
                        const std::filesystem::path& out_dir);

}  // namespace orgtrl
