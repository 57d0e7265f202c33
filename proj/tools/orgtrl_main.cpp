#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "orgtrl/config.hpp"
#include "orgtrl/dataset.hpp"
#include "orgtrl/diagnostics.hpp"
#include "orgtrl/elm.hpp"
#include "orgtrl/metrics.hpp"
#include "orgtrl/model.hpp"
#include "orgtrl/synth.hpp"
#include "orgtrl/trainer.hpp"
#include "orgtrl/vocab.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 13;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file with key=value lines");
  cmd->add_option("--set", args.overrides, "override a config key (KEY=VALUE, repeatable)");
  cmd->add_option("--seed", args.seed, "seed driving all randomness");
  cmd->add_option("--out", args.out, "output file or directory");
}

orgtrl::Config build_config(const CommonArgs& args) {
  orgtrl::Config cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& kv : args.overrides) cfg.set_kv(kv);
  return cfg;
}

std::string out_or(const CommonArgs& args, const std::string& fallback) {
  return args.out.empty() ? fallback : args.out;
}

std::vector<std::string> all_captions(const std::vector<orgtrl::VideoRecord>& records) {
  std::vector<std::string> captions;
  for (const auto& r : records) {
    captions.insert(captions.end(), r.captions.begin(), r.captions.end());
  }
  return captions;
}

std::vector<orgtrl::TokenSequence> encode_all(const std::vector<orgtrl::VideoRecord>& records,
                                              const orgtrl::Vocabulary& vocab, int max_len) {
  std::vector<orgtrl::TokenSequence> out;
  for (const auto& r : records) {
    for (const auto& c : r.captions) out.push_back(orgtrl::encode_caption(vocab, c, max_len));
  }
  return out;
}

int cmd_gen_synth(const CommonArgs& args) {
  const auto cfg = build_config(args);
  orgtrl::SynthSpec spec;
  spec.videos = static_cast<int>(cfg.get_int("synth.videos"));
  spec.frames = static_cast<int>(cfg.get_int("synth.frames"));
  spec.objects = static_cast<int>(cfg.get_int("synth.objects"));
  spec.d_a = static_cast<int>(cfg.get_int("synth.d_a"));
  spec.d_m = static_cast<int>(cfg.get_int("synth.d_m"));
  spec.d_o = static_cast<int>(cfg.get_int("synth.d_o"));
  spec.grammar_subjects = static_cast<int>(cfg.get_int("synth.grammar_subjects"));
  spec.grammar_verbs = static_cast<int>(cfg.get_int("synth.grammar_verbs"));
  spec.grammar_objects = static_cast<int>(cfg.get_int("synth.grammar_objects"));
  spec.noise = cfg.get_real("synth.noise");
  const auto out = out_or(args, "synth_data");
  orgtrl::generate_synthetic(spec, args.seed, out);
  std::cout << "wrote " << spec.videos << " synthetic videos to " << out << "\n";
  return 0;
}

int cmd_build_vocab(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto vocab = orgtrl::Vocabulary::build(
      all_captions(records), static_cast<int>(cfg.get_int("vocab.min_count")));
  const auto out = out_or(args, cfg.has_value("data.vocab") ? cfg.get("data.vocab") : "vocab.txt");
  vocab.save(out);
  std::cout << "vocabulary size " << vocab.size() << " written to " << out << "\n";
  return 0;
}

int cmd_stats(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto report = orgtrl::corpus_stats(all_captions(records));
  nlohmann::json top = nlohmann::json::array();
  for (std::size_t i = 0; i < report.counts.size() && i < 50; ++i) {
    top.push_back({report.counts[i].first, report.counts[i].second});
  }
  nlohmann::json j{{"total_tokens", report.total_tokens},
                   {"distinct_words", report.counts.size()},
                   {"top50_fraction", report.top50_fraction},
                   {"top", top}};
  std::cout << j.dump(2) << "\n";
  if (!args.out.empty()) {
    std::ofstream f(args.out, std::ios::trunc);
    nlohmann::json full = nlohmann::json::array();
    for (const auto& [w, c] : report.counts) full.push_back({w, c});
    j["counts"] = full;
    f << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_train_elm(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto vocab = orgtrl::Vocabulary::load(cfg.get("data.vocab"));
  const auto sequences =
      encode_all(records, vocab, static_cast<int>(cfg.get_int("decoder.max_len")));
  const auto elm =
      orgtrl::NgramElm::train(sequences, static_cast<int>(cfg.get_int("elm.order")),
                              cfg.get_real("elm.alpha"), vocab.size());
  const auto out = out_or(args, cfg.has_value("elm.path") ? cfg.get("elm.path") : "elm.orge");
  elm.save(out);
  std::cout << "order-" << elm.order() << " language model over " << vocab.size()
            << " words written to " << out << "\n";
  return 0;
}

int cmd_precompute_soft(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto vocab = orgtrl::Vocabulary::load(cfg.get("data.vocab"));
  const auto elm = orgtrl::NgramElm::load(cfg.get("elm.path"));
  if (elm.vocab_size() != vocab.size()) {
    throw orgtrl::ValidationError("language model vocabulary does not match the dataset");
  }
  const auto sequences =
      encode_all(records, vocab, static_cast<int>(cfg.get_int("decoder.max_len")));
  const auto store = orgtrl::precompute_soft_targets(
      sequences, elm, static_cast<int>(cfg.get_int("trl.k")), cfg.get_real("trl.temperature"));
  const auto out =
      out_or(args, cfg.has_value("trl.store") ? cfg.get("trl.store") : "soft_targets.orgs");
  store.save(out);
  std::cout << store.entry_count() << " soft target entries (" << store.pairs_per_entry()
            << " pairs each) written to " << out << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto out = out_or(args, "train_out");
  const auto result = orgtrl::train(cfg, args.seed, out);
  std::cout << "trained " << result.epochs_run << " epochs, " << result.log.size()
            << " steps; final checkpoint " << result.final_checkpoint.string() << "\n";
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "final ce=" << last.ce << " kl=" << last.kl << " loss=" << last.loss << "\n";
  }
  return 0;
}

orgtrl::ad::CaptionModel<float> load_model(const orgtrl::Config& cfg,
                                           const std::vector<orgtrl::VideoRecord>& records,
                                           const orgtrl::Vocabulary& vocab, std::uint64_t seed) {
  if (!cfg.has_value("model.checkpoint")) {
    throw orgtrl::ConfigError("model.checkpoint must point at a trained checkpoint directory");
  }
  orgtrl::ad::CaptionModel<float> model(orgtrl::model_dims_from(cfg, records, vocab), seed);
  orgtrl::load_parameters(model.params(), cfg.get("model.checkpoint"));
  return model;
}

int cmd_infer(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto vocab = orgtrl::Vocabulary::load(cfg.get("data.vocab"));
  auto model = load_model(cfg, records, vocab, args.seed);
  const auto captions =
      orgtrl::infer_captions(model, records, vocab, static_cast<int>(cfg.get_int("decoder.beam")),
                             static_cast<int>(cfg.get_int("decoder.max_len")));
  const auto out = out_or(args, "captions.tsv");
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw orgtrl::LoadError("cannot write captions to " + out);
  for (const auto& [id, text] : captions) f << id << '\t' << text << '\n';
  std::cout << captions.size() << " captions written to " << out << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const auto cfg = build_config(args);
  const auto records = orgtrl::load_dataset(cfg.get("data.manifest"));
  const auto vocab = orgtrl::Vocabulary::load(cfg.get("data.vocab"));
  auto model = load_model(cfg, records, vocab, args.seed);
  const auto report = orgtrl::evaluate_model(
      model, records, vocab, static_cast<int>(cfg.get_int("decoder.beam")),
      static_cast<int>(cfg.get_int("decoder.max_len")));

  const std::filesystem::path out = out_or(args, "eval_out");
  std::filesystem::create_directories(out);
  nlohmann::json j{{"bleu4", report.bleu4}, {"rouge_l", report.rouge_l}, {"cider", report.cider}};
  {
    std::ofstream f(out / "metrics.json", std::ios::trunc);
    f << j.dump(2) << "\n";
  }
  {
    std::ofstream f(out / "per_video.jsonl", std::ios::trunc);
    for (const auto& pv : report.per_video) {
      nlohmann::json line{{"video_id", pv.video_id},
                          {"caption", pv.caption},
                          {"rouge_l", pv.rouge_l},
                          {"cider", pv.cider}};
      f << line.dump() << '\n';
    }
  }
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_grad_check(const CommonArgs& args) {
  const auto report = orgtrl::run_grad_checks(args.seed);
  std::printf("org_encoder    max_rel_err=%.3e\n", report.org_encoder);
  std::printf("decode_step    max_rel_err=%.3e\n", report.decode_step);
  std::printf("combined_loss  max_rel_err=%.3e\n", report.combined_loss);
  if (report.worst() < 1e-4) {
    std::printf("PASS (all below 1e-4)\n");
    return 0;
  }
  std::printf("FAIL (threshold 1e-4)\n");
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"object-relational-graph video captioning pipeline"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const CommonArgs&);
  };
  const Entry entries[] = {
      {"gen-synth", "generate a synthetic dataset", cmd_gen_synth},
      {"build-vocab", "build a vocabulary from dataset captions", cmd_build_vocab},
      {"stats", "print corpus word-frequency statistics", cmd_stats},
      {"train-elm", "train the n-gram language model on dataset captions", cmd_train_elm},
      {"precompute-soft", "cache per-step soft targets from the language model",
       cmd_precompute_soft},
      {"train", "train the caption model", cmd_train},
      {"infer", "beam-decode captions for a dataset", cmd_infer},
      {"eval", "decode and score a dataset", cmd_eval},
      {"grad-check", "verify analytic gradients against central differences", cmd_grad_check},
  };

  std::vector<CommonArgs> arg_sets(std::size(entries));
  std::vector<std::pair<CLI::App*, const Entry*>> commands;
  for (std::size_t i = 0; i < std::size(entries); ++i) {
    CLI::App* cmd = app.add_subcommand(entries[i].name, entries[i].help);
    add_common(cmd, arg_sets[i]);
    commands.emplace_back(cmd, &entries[i]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    for (std::size_t i = 0; i < commands.size(); ++i) {
      if (commands[i].first->parsed()) return commands[i].second->run(arg_sets[i]);
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
