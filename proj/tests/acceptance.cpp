// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs against the library plus the command-line tool.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "orgtrl/beam.hpp"
#include "orgtrl/diagnostics.hpp"
#include "orgtrl/elm.hpp"
#include "orgtrl/losses.hpp"
#include "orgtrl/metrics.hpp"
#include "orgtrl/model.hpp"
#include "orgtrl/synth.hpp"
#include "orgtrl/trainer.hpp"

using namespace orgtrl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Harness {
  int failed = 0;
  void report(int criterion, const std::string& what, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", criterion, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b, std::string& why) {
  std::vector<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) fa.push_back(fs::relative(e.path(), a));
  }
  for (const auto& e : fs::recursive_directory_iterator(b)) {
    if (e.is_regular_file()) fb.push_back(fs::relative(e.path(), b));
  }
  std::sort(fa.begin(), fa.end());
  std::sort(fb.begin(), fb.end());
  if (fa != fb) {
    why = "file lists differ";
    return false;
  }
  for (const auto& rel : fa) {
    if (file_bytes(a / rel) != file_bytes(b / rel)) {
      why = "bytes differ: " + rel.string();
      return false;
    }
  }
  return true;
}

ad::Mat<double> rand_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  ad::Mat<double> m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

Eigen::MatrixXd random_distributions(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd p(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double sum = 0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      p(r, c) = rng.uniform(0.01, 1.0);
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  return p;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient suite
// ---------------------------------------------------------------------------
void criterion_gradients(Harness& h) {
  const auto start = Clock::now();
  const auto report = run_grad_checks(13);
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "org=" << report.org_encoder << " decode=" << report.decode_step
         << " combined=" << report.combined_loss << " in " << elapsed << "s";
  h.report(1, "gradient suite below 1e-4 at 64-bit within 60 s",
           report.worst() < 1e-4 && elapsed < 60.0, detail.str());
}

// ---------------------------------------------------------------------------
// criterion 2: normalization suite
// ---------------------------------------------------------------------------
void criterion_normalization(Harness& h) {
  const auto start = Clock::now();
  bool ok = true;
  std::string why = "all sums within 1e-6, masked entries exactly zero";
  Rng rng(2024);

  auto check_row = [&](const ad::Mat<double>& row, const ad::BoolMask* mask, const char* what) {
    double sum = 0;
    for (Eigen::Index c = 0; c < row.cols(); ++c) {
      if (mask && !mask->at(0, c)) {
        if (row(0, c) != 0.0) {
          ok = false;
          why = std::string(what) + ": masked entry not exactly zero";
        }
      }
      if (row(0, c) < 0) {
        ok = false;
        why = std::string(what) + ": negative weight";
      }
      sum += row(0, c);
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      ok = false;
      why = std::string(what) + ": row sum off by " + std::to_string(std::abs(sum - 1.0));
    }
  };

  // relational-graph rows under top-k masks
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const Eigen::Index K = 2 + static_cast<Eigen::Index>(rng.below(9));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(K)));
    ad::Mat<double> a = rand_mat(rng, K, K, 4.0);
    const auto mask = ad::topk_mask_with_self<double>(a, k);
    ad::Tape<double> t;
    const auto& norm = t.val(ad::normalize_graph(t, t.constant(a), mask));
    for (Eigen::Index r = 0; r < K && ok; ++r) {
      ad::Mat<double> row = norm.row(r);
      ad::BoolMask row_mask{1, K, std::vector<std::uint8_t>(
                                      mask.data.begin() + static_cast<std::ptrdiff_t>(r * K),
                                      mask.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * K))};
      check_row(row, &row_mask, "graph row");
    }
  }

  // temporal attention weights with padded-frame masks
  ad::ParameterStore<double> att_store;
  {
    Rng init(77);
    ad::attention_init<double>(att_store, "t", 6, 5, 4, init);
    ad::attention_init<double>(att_store, "s", 6, 5, 4, init);
  }
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const Eigen::Index L = 1 + static_cast<Eigen::Index>(rng.below(6));
    std::vector<std::uint8_t> valid(static_cast<std::size_t>(L), 0);
    valid[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(L)))] = 1;
    for (auto& v : valid) {
      if (rng.uniform() < 0.6) v = 1;
    }
    ad::Tape<double> t;
    auto vars = ad::attention_vars(t, att_store, "t");
    auto [alpha, cg] =
        ad::attend(t, vars, t.constant(rand_mat(rng, L, 6, 2.0)),
                   t.constant(rand_mat(rng, 1, 5, 2.0)), &valid);
    ad::BoolMask m{1, L, valid};
    check_row(t.val(alpha), &m, "temporal weights");
  }

  // spatial attention weights
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const Eigen::Index N = 1 + static_cast<Eigen::Index>(rng.below(6));
    ad::Tape<double> t;
    auto vars = ad::attention_vars(t, att_store, "s");
    auto [beta, cl] = ad::attend(t, vars, t.constant(rand_mat(rng, N, 6, 2.0)),
                                 t.constant(rand_mat(rng, 1, 5, 2.0)));
    check_row(t.val(beta), nullptr, "spatial weights");
  }

  // vocabulary distributions
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    const Eigen::Index D = 4 + static_cast<Eigen::Index>(rng.below(40));
    ad::Tape<double> t;
    const auto& p = t.val(t.softmax_rows(t.constant(rand_mat(rng, 1, D, 8.0))));
    check_row(p, nullptr, "vocabulary distribution");
  }

  // language-model distributions
  {
    const auto vocab = Vocabulary::build({"a cat eats a fish", "a dog holds a cup",
                                          "the bird flies high"},
                                         1);
    std::vector<TokenSequence> corpus;
    for (const auto& c : {"a cat eats a fish", "a dog holds a cup", "the bird flies high"}) {
      corpus.push_back(encode_caption(vocab, c, 24));
    }
    const auto elm = NgramElm::train(corpus, 3, 0.01, vocab.size());
    for (int trial = 0; trial < 1000 && ok; ++trial) {
      std::vector<WordId> prefix = {kBosId};
      const int len = static_cast<int>(rng.below(6));
      for (int i = 0; i < len; ++i) {
        prefix.push_back(static_cast<WordId>(rng.below(static_cast<std::uint64_t>(vocab.size()))));
      }
      const auto q = elm.query(prefix, 0.5 + rng.uniform() * 3.0);
      double sum = 0;
      for (double p : q) {
        if (p <= 0) {
          ok = false;
          why = "language-model distribution not strictly positive";
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        ok = false;
        why = "language-model distribution sum off";
      }
    }
  }

  const double elapsed = seconds_since(start);
  if (elapsed >= 30.0) {
    ok = false;
    why = "runtime " + std::to_string(elapsed) + "s";
  }
  h.report(2, "normalization suite (1000 instances each)", ok,
           why + " in " + std::to_string(elapsed).substr(0, 5) + "s");
}

// ---------------------------------------------------------------------------
// criterion 3: loss identities
// ---------------------------------------------------------------------------
Config pipeline_setup(const fs::path& dir, int videos, int soft_k) {
  SynthSpec spec;
  spec.videos = videos;
  generate_synthetic(spec, 13, dir / "data");
  const auto records = load_dataset(dir / "data" / "manifest.json");
  std::vector<std::string> captions;
  for (const auto& r : records) {
    captions.insert(captions.end(), r.captions.begin(), r.captions.end());
  }
  const auto vocab = Vocabulary::build(captions, 1);
  vocab.save(dir / "vocab.txt");
  std::vector<TokenSequence> sequences;
  for (const auto& c : captions) sequences.push_back(encode_caption(vocab, c, 24));
  const auto elm = NgramElm::train(sequences, 3, 0.01, vocab.size());
  elm.save(dir / "elm.orge");
  precompute_soft_targets(sequences, elm, soft_k, 1.5).save(dir / "soft.orgs");

  Config cfg;
  cfg.set("data.manifest", (dir / "data" / "manifest.json").string());
  cfg.set("data.vocab", (dir / "vocab.txt").string());
  cfg.set("elm.path", (dir / "elm.orge").string());
  cfg.set("trl.store", (dir / "soft.orgs").string());
  cfg.set("org.dim", "32");
  cfg.set("decoder.hidden", "64");
  cfg.set("decoder.word_dim", "32");
  cfg.set("train.batch", "8");
  cfg.set("train.lr", "2e-3");
  cfg.set("trl.k", std::to_string(soft_k));
  return cfg;
}

void criterion_loss_identities(Harness& h) {
  bool ok = true;
  std::string why = "all three identities hold";

  // (i) lambda = 0 is step-for-step bit-identical to the hard-target-only path
  const auto dir = fresh_dir("orgtrl_acc_loss");
  auto cfg = pipeline_setup(dir, 12, 8);
  cfg.set("train.epochs", "3");
  auto lam0 = cfg;
  lam0.set("trl.lambda", "0");
  const auto run_a = train(lam0, 13, dir / "lambda0");
  auto tel = cfg;
  tel.set("trl.lambda", "0");
  tel.set("trl.store", "");
  const auto run_b = train(tel, 13, dir / "tel");
  std::string diff;
  if (!dirs_byte_identical(dir / "lambda0" / "checkpoints" / "latest",
                           dir / "tel" / "checkpoints" / "latest", diff)) {
    ok = false;
    why = "(i) checkpoints differ: " + diff;
  }
  if (run_a.log.size() != run_b.log.size()) {
    ok = false;
    why = "(i) step counts differ";
  } else {
    for (std::size_t i = 0; i < run_a.log.size(); ++i) {
      if (run_a.log[i].ce != run_b.log[i].ce || run_a.log[i].loss != run_b.log[i].loss) {
        ok = false;
        why = "(i) logged losses differ at step " + std::to_string(i);
        break;
      }
    }
  }

  // (ii) k=1 unit-mass soft targets equal the cross entropy to 1e-9
  Rng rng(303);
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const int D = 5 + static_cast<int>(rng.below(20));
    const int T = 1 + static_cast<int>(rng.below(8));
    Eigen::MatrixXd p = random_distributions(rng, T, D);
    std::vector<WordId> targets;
    std::vector<std::vector<SoftTarget>> soft;
    for (int t = 0; t < T; ++t) {
      const WordId w = static_cast<WordId>(rng.below(static_cast<std::uint64_t>(D)));
      targets.push_back(w);
      soft.push_back({SoftTarget{w, 1.0}});
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 1);
    if (std::abs(kl_soft_loss(p, soft, mask) - ce_loss(p, targets, mask)) > 1e-9) {
      ok = false;
      why = "(ii) k=1 identity violated";
    }
  }

  // (iii) k=D equals the full cross entropy H(Q,P) against a direct oracle
  for (int trial = 0; trial < 50 && ok; ++trial) {
    const int D = 5 + static_cast<int>(rng.below(20));
    const int T = 1 + static_cast<int>(rng.below(8));
    Eigen::MatrixXd p = random_distributions(rng, T, D);
    Eigen::MatrixXd q = random_distributions(rng, T, D);
    std::vector<std::vector<SoftTarget>> soft;
    for (int t = 0; t < T; ++t) {
      std::vector<double> dist(static_cast<std::size_t>(D));
      for (int d = 0; d < D; ++d) dist[static_cast<std::size_t>(d)] = q(t, d);
      soft.push_back(soft_targets(dist, D));
    }
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(T), 1);
    double dkl = 0, hq = 0;
    for (int t = 0; t < T; ++t) {
      for (int d = 0; d < D; ++d) {
        dkl += q(t, d) * std::log(q(t, d) / p(t, d));
        hq -= q(t, d) * std::log(q(t, d));
      }
    }
    if (std::abs(kl_soft_loss(p, soft, mask) - (dkl + hq) / T) > 1e-9) {
      ok = false;
      why = "(iii) k=D identity violated";
    }
  }

  h.report(3, "loss identities (bit-equal lambda=0, k=1, k=D)", ok, why);
}

// ---------------------------------------------------------------------------
// criterion 4: graph oracles
// ---------------------------------------------------------------------------
void criterion_graph(Harness& h) {
  bool ok = true;
  std::string why = "masks match, k=K equals all, frame locality exact";
  Rng rng(404);

  // top-k masks against a full-sort oracle (self edge kept within budget)
  for (int trial = 0; trial < 100 && ok; ++trial) {
    ad::Mat<double> a = rand_mat(rng, 12, 12, 3.0);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(12));
    const auto mask = ad::topk_mask_with_self<double>(a, k);
    for (Eigen::Index r = 0; r < 12 && ok; ++r) {
      std::vector<std::pair<double, Eigen::Index>> order;
      for (Eigen::Index c = 0; c < 12; ++c) {
        order.push_back({c == r ? std::numeric_limits<double>::max() : a(r, c), c});
      }
      std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return x.second < y.second;
      });
      std::vector<bool> expect(12, false);
      for (Eigen::Index i = 0; i < k; ++i) expect[static_cast<std::size_t>(order[i].second)] = true;
      for (Eigen::Index c = 0; c < 12; ++c) {
        if (mask.at(r, c) != expect[static_cast<std::size_t>(c)]) {
          ok = false;
          why = "top-k mask disagrees with the sort oracle";
        }
      }
    }
  }

  // complete graph with k = K equals k = all, elementwise
  const Eigen::Index L = 3, N = 4;
  ad::ParameterStore<double> store;
  {
    Rng init(405);
    ad::org_init<double>(store, 6, 8, init);
  }
  ad::Mat<double> objects = rand_mat(rng, L * N, 6);
  {
    ad::Tape<double> ta, tb;
    ad::OrgConfig with_k{ad::OrgMode::kComplete, L * N, 8};
    ad::OrgConfig with_all{ad::OrgMode::kComplete, std::nullopt, 8};
    const auto va = ta.val(ad::encode_objects(ta, store, ta.constant(objects), L, N, with_k));
    const auto vb = tb.val(ad::encode_objects(tb, store, tb.constant(objects), L, N, with_all));
    if ((va - vb).cwiseAbs().maxCoeff() != 0.0) {
      ok = false;
      why = "k=K and k=all outputs differ";
    }
  }

  // partial graphs are frame-local: unperturbed frames change by exactly zero
  {
    ad::OrgConfig partial{ad::OrgMode::kPartial, std::nullopt, 8};
    ad::Tape<double> t0;
    const auto base = t0.val(ad::encode_objects(t0, store, t0.constant(objects), L, N, partial));
    for (Eigen::Index f = 0; f < L && ok; ++f) {
      ad::Mat<double> perturbed = objects;
      perturbed.middleRows(f * N, N).array() += 0.37;
      ad::Tape<double> t1;
      const auto out =
          t1.val(ad::encode_objects(t1, store, t1.constant(perturbed), L, N, partial));
      for (Eigen::Index g = 0; g < L; ++g) {
        const double delta =
            (out.middleRows(g * N, N) - base.middleRows(g * N, N)).cwiseAbs().maxCoeff();
        if (g == f && delta == 0.0) {
          ok = false;
          why = "perturbed frame did not change";
        }
        if (g != f && delta != 0.0) {
          ok = false;
          why = "cross-frame leakage in the partial graph";
        }
      }
    }
  }

  h.report(4, "graph oracles (top-k sort, k=K vs all, frame locality)", ok, why);
}

// ---------------------------------------------------------------------------
// criterion 5: alignment oracle
// ---------------------------------------------------------------------------
void criterion_alignment(Harness& h) {
  bool ok = true;
  std::string why = "inverse permutation recovered for every N! case, N <= 4";
  Rng rng(505);
  for (int N = 1; N <= 4 && ok; ++N) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(N));
    for (int i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = i;
    do {
      ad::Mat<double> anchors = rand_mat(rng, N, 6, 1.0);
      FeatureTensor objects;
      objects.shape = {2, static_cast<std::uint32_t>(N), 6};
      objects.data.resize(objects.count());
      for (int j = 0; j < N; ++j) {
        for (int c = 0; c < 6; ++c) {
          objects.data[static_cast<std::size_t>(j * 6 + c)] = static_cast<float>(anchors(j, c));
          // frame 2 slot j holds anchor perm[j]
          objects.data[static_cast<std::size_t>((N + j) * 6 + c)] =
              static_cast<float>(anchors(perm[static_cast<std::size_t>(j)], c));
        }
      }
      const auto align = ad::align_objects(objects);
      for (int j = 0; j < N; ++j) {
        // anchor j must map to the slot holding it
        if (perm[static_cast<std::size_t>(align[1][static_cast<std::size_t>(j)])] != j) {
          ok = false;
          why = "alignment failed for N=" + std::to_string(N);
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()) && ok);
  }
  h.report(5, "alignment recovers permuted copies (all N! up to N=4)", ok, why);
}

// ---------------------------------------------------------------------------
// criterion 6: decoding
// ---------------------------------------------------------------------------
struct TableStepper {
  using State = int;
  std::vector<ad::Mat<double>> cond;
  State init() { return 0; }
  std::pair<Eigen::RowVectorXd, State> step(const State& s, WordId prev) {
    const auto& table = cond[std::min<std::size_t>(static_cast<std::size_t>(s), cond.size() - 1)];
    Eigen::RowVectorXd p = table.row(prev);
    return {p, s + 1};
  }
};

struct PathBest {
  std::vector<WordId> ids;
  double score = -std::numeric_limits<double>::infinity();
  bool valid = false;
  void offer(const std::vector<WordId>& cand, double s) {
    if (!valid || s > score || (s == score && cand < ids)) {
      ids = cand;
      score = s;
      valid = true;
    }
  }
};

void enumerate_paths(TableStepper& stepper, int state, WordId prev, std::vector<WordId>& ids,
                     double logp, int max_len, PathBest& finished, PathBest& unfinished) {
  auto [probs, next] = stepper.step(state, prev);
  for (Eigen::Index id = 0; id < probs.cols(); ++id) {
    if (id == kPadId || id == kBosId || id == kUnkId) continue;
    const double p = probs(id);
    if (!(p > 0.0)) continue;
    ids.push_back(static_cast<WordId>(id));
    const double nl = logp + std::log(p);
    const double score = nl / static_cast<double>(ids.size());
    if (id == kEosId) {
      finished.offer(ids, score);
    } else if (static_cast<int>(ids.size()) >= max_len) {
      unfinished.offer(ids, score);
    } else {
      enumerate_paths(stepper, next, static_cast<WordId>(id), ids, nl, max_len, finished,
                      unfinished);
    }
    ids.pop_back();
  }
}

void criterion_decoding(Harness& h) {
  bool ok = true;
  std::string why = "beam=1 greedy on 100 models; beam=3 optimal on 20 tables";
  Rng rng(606);

  // beam = 1 equals greedy argmax on random models
  for (int trial = 0; trial < 100 && ok; ++trial) {
    ad::ModelDims dims;
    dims.d_appearance = 5;
    dims.d_motion = 4;
    dims.d_object = 6;
    dims.org_dim = 6;
    dims.hidden = 7;
    dims.word_dim = 5;
    dims.vocab = 6 + static_cast<WordId>(rng.below(8));
    dims.org_mode = ad::OrgMode::kComplete;
    dims.top_k = 3;
    ad::CaptionModel<float> model(dims, rng.next());

    VideoRecord rec;
    rec.video_id = "r";
    auto fill = [&](std::vector<std::uint32_t> shape) {
      FeatureTensor t;
      t.shape = std::move(shape);
      t.data.resize(t.count());
      for (auto& x : t.data) x = static_cast<float>(rng.normal());
      return t;
    };
    rec.appearance = fill({3, 5});
    rec.motion = fill({3, 4});
    rec.objects = fill({3, 2, 6});
    rec.captions = {"x"};

    ad::Tape<float> bt;
    auto bctx = model.encode(bt, rec);
    ad::ModelStepper<float> stepper{bt, model, bctx};
    const auto beam1 = ad::beam_search(stepper, 1, 6);

    ad::Tape<float> gt;
    auto gctx = model.encode(gt, rec);
    auto state = model.initial_state(gt);
    std::vector<WordId> greedy;
    WordId prev = kBosId;
    for (int step = 0; step < 6; ++step) {
      auto res = model.step(gt, gctx, prev, state);
      const auto& p = gt.val(res.probs);
      WordId best = -1;
      double best_p = -1;
      for (WordId id = 0; id < dims.vocab; ++id) {
        if (id == kPadId || id == kBosId || id == kUnkId) continue;
        if (static_cast<double>(p(0, id)) > best_p) {
          best_p = static_cast<double>(p(0, id));
          best = id;
        }
      }
      if (best == kEosId) break;
      greedy.push_back(best);
      prev = best;
      state = res.state;
    }
    if (beam1 != greedy) {
      ok = false;
      why = "beam=1 diverged from greedy at trial " + std::to_string(trial);
    }
  }

  // beam = 3 equals the exhaustive optimum on random 3-step tables, D = 5
  for (int trial = 0; trial < 20 && ok; ++trial) {
    const int D = 5;
    std::vector<ad::Mat<double>> tables;
    for (int step = 0; step < 3; ++step) {
      ad::Mat<double> t = ad::Mat<double>::Zero(D, D);
      for (int prev = 0; prev < D; ++prev) {
        double sum = 0;
        for (int w = 0; w < D; ++w) {
          if (w == kPadId || w == kBosId || w == kUnkId) continue;
          t(prev, w) = rng.uniform(0.05, 1.0);
          sum += t(prev, w);
        }
        t.row(prev) /= sum;
      }
      tables.push_back(std::move(t));
    }
    TableStepper run{tables};
    const auto got = ad::beam_search(run, 3, 3);
    TableStepper oracle{tables};
    PathBest finished, unfinished;
    std::vector<WordId> ids;
    enumerate_paths(oracle, 0, kBosId, ids, 0.0, 3, finished, unfinished);
    auto best = finished.valid ? finished : unfinished;
    if (!best.ids.empty() && best.ids.back() == kEosId) best.ids.pop_back();
    if (got != best.ids) {
      ok = false;
      why = "beam=3 missed the enumeration optimum at table " + std::to_string(trial);
    }
  }

  h.report(6, "decoding (beam=1 = greedy; beam=3 = exhaustive optimum)", ok, why);
}

// ---------------------------------------------------------------------------
// criterion 7: end-to-end overfit
// ---------------------------------------------------------------------------
void criterion_overfit(Harness& h) {
  const auto start = Clock::now();
  const auto dir = fresh_dir("orgtrl_acc_overfit");
  auto cfg = pipeline_setup(dir, 20, 10);  // 20 videos, 5x5x5 grammar, L=8, N=4
  cfg.set("trl.lambda", "0.3");
  cfg.set("train.epochs", "200");
  const auto result = train(cfg, 13, dir / "run");

  const auto records = load_dataset(dir / "data" / "manifest.json");
  const auto vocab = Vocabulary::load(dir / "vocab.txt");
  ad::CaptionModel<float> model(model_dims_from(cfg, records, vocab), 13);
  load_parameters(model.params(), result.final_checkpoint);
  const auto report = evaluate_model(model, records, vocab, 5, 24);

  int exact = 0;
  for (const auto& pv : report.per_video) {
    for (const auto& rec : records) {
      if (rec.video_id == pv.video_id) {
        std::string expect;
        for (const auto& tok : tokenize(rec.captions[0])) {
          expect += (expect.empty() ? "" : " ") + tok;
        }
        if (pv.caption == expect) ++exact;
      }
    }
  }
  const double elapsed = seconds_since(start);
  std::ostringstream detail;
  detail << "bleu4=" << report.bleu4 << " exact=" << exact << "/20 in " << elapsed << "s";
  h.report(7, "end-to-end overfit (bleu4 >= 0.95, >= 18/20 exact, < 600 s)",
           report.bleu4 >= 0.95 && exact >= 18 && elapsed < 600.0, detail.str());
}

// ---------------------------------------------------------------------------
// criterion 8: soft targets widen the per-step training signal
// ---------------------------------------------------------------------------
void criterion_long_tail(Harness& h) {
  // heavy-tailed corpus: zipf-distributed draws over several hundred words
  Rng rng(808);
  std::vector<std::string> words;
  for (int i = 0; i < 300; ++i) words.push_back("w" + std::to_string(i));
  std::vector<double> weights;
  for (int i = 1; i <= 300; ++i) weights.push_back(1.0 / static_cast<double>(i));
  const double weight_sum = [&] {
    double s = 0;
    for (double w : weights) s += w;
    return s;
  }();

  std::vector<std::string> captions;
  for (int c = 0; c < 400; ++c) {
    std::string caption;
    for (int t = 0; t < 8; ++t) {
      double mark = rng.uniform() * weight_sum;
      std::size_t pick = 0;
      while (pick + 1 < weights.size() && mark > weights[pick]) {
        mark -= weights[pick];
        ++pick;
      }
      caption += (caption.empty() ? "" : " ") + words[pick];
    }
    captions.push_back(caption);
  }

  const auto vocab = Vocabulary::build(captions, 1);
  std::vector<TokenSequence> sequences;
  for (const auto& c : captions) sequences.push_back(encode_caption(vocab, c, 24));
  const auto elm = NgramElm::train(sequences, 3, 0.01, vocab.size());

  const auto path = fresh_dir("orgtrl_acc_longtail") / "soft.orgs";
  precompute_soft_targets(sequences, elm, 50, 1.5).save(path);
  const auto store = SoftTargetStore::load(path);

  bool ok = vocab.size() > 50;
  std::size_t checked = 0;
  std::size_t min_distinct = std::numeric_limits<std::size_t>::max();
  for (std::size_t cid = 0; cid < sequences.size() && ok; ++cid) {
    for (std::size_t t = 1; t < sequences[cid].ids.size(); ++t) {
      const auto& targets =
          store.get(static_cast<std::uint32_t>(cid), static_cast<std::uint16_t>(t));
      std::set<WordId> distinct;
      for (const auto& st : targets) {
        if (st.prob > 0) distinct.insert(st.word);
      }
      min_distinct = std::min(min_distinct, distinct.size());
      ++checked;
      // hard-target training touches exactly one word per step
      if (distinct.size() < 10) ok = false;
    }
  }
  std::ostringstream detail;
  detail << checked << " store entries, min distinct words per step " << min_distinct
         << " (hard-target baseline: 1)";
  h.report(8, "soft targets give >= 10x the per-step word coverage of hard targets", ok,
           detail.str());
}

// ---------------------------------------------------------------------------
// criterion 9: metric oracles
// ---------------------------------------------------------------------------
std::vector<double> cider_oracle(const std::vector<ScoredVideo>& corpus) {
  auto grams = [](const std::vector<std::string>& toks, int n) {
    std::map<std::string, double> counts;
    for (int i = 0; i + n <= static_cast<int>(toks.size()); ++i) {
      std::string key;
      for (int j = 0; j < n; ++j) key += toks[static_cast<std::size_t>(i + j)] + "\x1f";
      counts[key] += 1.0;
    }
    return counts;
  };
  std::map<std::string, double> df;
  for (const auto& v : corpus) {
    std::set<std::string> seen;
    for (const auto& ref : v.references) {
      for (int n = 1; n <= 4; ++n) {
        for (const auto& [g, c] : grams(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double logI = std::log(static_cast<double>(corpus.size()));
  std::vector<double> scores;
  for (const auto& v : corpus) {
    double over_refs = 0;
    for (const auto& ref : v.references) {
      double over_orders = 0;
      for (int n = 1; n <= 4; ++n) {
        const auto hyp = grams(v.hypothesis, n);
        const auto rg = grams(ref, n);
        auto weight = [&](const std::string& g, double count) {
          const double d = df.count(g) ? std::max(1.0, df.at(g)) : 1.0;
          return count * (logI - std::log(d));
        };
        double dot = 0, nh = 0, nr = 0;
        for (const auto& [g, c] : hyp) {
          const double w = weight(g, c);
          nh += w * w;
          if (rg.count(g)) dot += w * weight(g, rg.at(g));
        }
        for (const auto& [g, c] : rg) nr += weight(g, c) * weight(g, c);
        if (nh > 0 && nr > 0) over_orders += dot / (std::sqrt(nh) * std::sqrt(nr));
      }
      over_refs += over_orders / 4.0;
    }
    scores.push_back(10.0 * over_refs / static_cast<double>(v.references.size()));
  }
  return scores;
}

void criterion_metrics(Harness& h) {
  bool ok = true;
  std::string why;

  auto video = [](const std::string& hyp, const std::vector<std::string>& refs) {
    ScoredVideo v;
    v.hypothesis = tokenize(hyp);
    for (const auto& r : refs) v.references.push_back(tokenize(r));
    return v;
  };

  const double bleu = bleu4({video("a b c d", {"a b c d e"})});
  if (std::abs(bleu - 0.7788) > 1e-4) {
    ok = false;
    why += "bleu4 hand case " + std::to_string(bleu) + "; ";
  }

  // exact value of the stated derivation: 2.44*(2/3)/(2/3+1.44) = 61/79
  const double rouge = rouge_l({video("a c", {"a b c"})});
  if (std::abs(rouge - 61.0 / 79.0) > 1e-4) {
    ok = false;
    why += "rouge_l hand case " + std::to_string(rouge) + "; ";
  }

  std::vector<ScoredVideo> corpus = {
      video("a cat sat on the mat", {"a cat sat on the mat", "the cat sat there quietly"}),
      video("a dog runs fast", {"the dog runs very fast"}),
      video("birds fly high in the sky", {"birds fly in the sky", "birds soar high above"}),
  };
  const auto got = cider_per_video(corpus);
  const auto expect = cider_oracle(corpus);
  for (std::size_t i = 0; i < got.size(); ++i) {
    if (std::abs(got[i] - expect[i]) > 1e-6) {
      ok = false;
      why += "cider oracle mismatch at video " + std::to_string(i) + "; ";
    }
  }

  // self-score maxima
  std::vector<ScoredVideo> self = {
      video("a cat sat on the mat", {"a cat sat on the mat"}),
      video("the dog runs very fast", {"the dog runs very fast"}),
      video("birds fly high in the sky", {"birds fly high in the sky"}),
  };
  const double self_bleu = bleu4(self);
  const double self_rouge = rouge_l(self);
  const double self_cider = cider(self);
  auto worse = self;
  worse[0].hypothesis = tokenize("a cat sat on a rug");
  if (!(std::abs(self_bleu - 1.0) < 1e-9 && std::abs(self_rouge - 1.0) < 1e-9)) {
    ok = false;
    why += "self-score not maximal; ";
  }
  if (!(bleu4(worse) < self_bleu && rouge_l(worse) < self_rouge && cider(worse) < self_cider)) {
    ok = false;
    why += "perturbed hypothesis not below the self-score; ";
  }

  if (ok) {
    std::ostringstream detail;
    detail << "bleu4=" << bleu << " rouge_l=" << rouge << " cider oracle matched to 1e-6";
    why = detail.str();
  }
  h.report(9, "metric oracles (hand cases, spreadsheet cider, self maxima)", ok, why);
}

// ---------------------------------------------------------------------------
// criterion 10: whole-pipeline determinism through the command line
// ---------------------------------------------------------------------------
int run_cli(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd " + cwd.string() + " && " + std::string(ORGTRL_CLI_PATH) + " " +
                          args + " >>cli_log.txt 2>&1";
  return WEXITSTATUS(std::system(cmd.c_str()));
}

void criterion_determinism(Harness& h) {
  bool ok = true;
  std::string why = "checkpoints, captions and metric reports byte-identical";

  auto pipeline = [&](const fs::path& dir) {
    std::ofstream cfg(dir / "desk.cfg");
    cfg << "synth.videos=12\norg.dim=24\ndecoder.hidden=32\ndecoder.word_dim=16\n"
           "vocab.min_count=1\ntrl.k=8\ntrl.lambda=0.3\ntrain.lr=2e-3\ntrain.batch=8\n"
           "train.epochs=3\ndata.manifest=data/manifest.json\ndata.vocab=vocab.txt\n"
           "elm.path=elm.orge\ntrl.store=soft.orgs\n";
    cfg.close();
    if (run_cli("gen-synth --config desk.cfg --seed 13 --out data", dir) != 0) return false;
    if (run_cli("build-vocab --config desk.cfg", dir) != 0) return false;
    if (run_cli("train-elm --config desk.cfg", dir) != 0) return false;
    if (run_cli("precompute-soft --config desk.cfg", dir) != 0) return false;
    if (run_cli("train --config desk.cfg --seed 13 --out run", dir) != 0) return false;
    if (run_cli("infer --config desk.cfg --set model.checkpoint=run/checkpoints/latest "
                "--seed 13 --out captions.tsv",
                dir) != 0) {
      return false;
    }
    if (run_cli("eval --config desk.cfg --set model.checkpoint=run/checkpoints/latest "
                "--seed 13 --out eval_out",
                dir) != 0) {
      return false;
    }
    return true;
  };

  const auto dir_a = fresh_dir("orgtrl_acc_det_a");
  const auto dir_b = fresh_dir("orgtrl_acc_det_b");
  if (!pipeline(dir_a) || !pipeline(dir_b)) {
    ok = false;
    why = "pipeline run failed (see cli_log.txt in the temp dirs)";
  } else {
    std::string diff;
    if (!dirs_byte_identical(dir_a / "run" / "checkpoints", dir_b / "run" / "checkpoints",
                             diff)) {
      ok = false;
      why = "checkpoints: " + diff;
    }
    if (ok && file_bytes(dir_a / "captions.tsv") != file_bytes(dir_b / "captions.tsv")) {
      ok = false;
      why = "captions differ";
    }
    std::string diff2;
    if (ok && !dirs_byte_identical(dir_a / "eval_out", dir_b / "eval_out", diff2)) {
      ok = false;
      why = "metric reports: " + diff2;
    }
  }
  h.report(10, "two seed-13 pipeline runs are byte-identical", ok, why);
}

}  // namespace

int main() {
  Harness h;
  criterion_gradients(h);
  criterion_normalization(h);
  criterion_loss_identities(h);
  criterion_graph(h);
  criterion_alignment(h);
  criterion_decoding(h);
  criterion_overfit(h);
  criterion_long_tail(h);
  criterion_metrics(h);
  criterion_determinism(h);
  if (h.failed == 0) {
    std::printf("all 10 acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d acceptance criteria FAILED\n", h.failed);
  return 1;
}
