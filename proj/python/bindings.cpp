#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "orgtrl/autodiff.hpp"
#include "orgtrl/dataset.hpp"
#include "orgtrl/elm.hpp"
#include "orgtrl/losses.hpp"
#include "orgtrl/metrics.hpp"
#include "orgtrl/org.hpp"
#include "orgtrl/synth.hpp"
#include "orgtrl/tensor.hpp"
#include "orgtrl/vocab.hpp"

namespace py = pybind11;

namespace {

using DenseMatrix = std::vector<std::vector<double>>;

orgtrl::ad::Mat<double> to_mat(const DenseMatrix& rows) {
  if (rows.empty()) throw orgtrl::ShapeError("matrix must have at least one row");
  const auto cols = rows[0].size();
  orgtrl::ad::Mat<double> m(static_cast<Eigen::Index>(rows.size()),
                            static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw orgtrl::ShapeError("ragged matrix");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

DenseMatrix from_mat(const orgtrl::ad::Mat<double>& m) {
  DenseMatrix out(static_cast<std::size_t>(m.rows()),
                  std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
    }
  }
  return out;
}

std::optional<Eigen::Index> parse_top_k(const py::object& k) {
  if (k.is_none()) return std::nullopt;
  return k.cast<Eigen::Index>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "graph-relational video captioning core operations";

  py::register_exception<orgtrl::Error>(m, "OrgtrlError");

  m.def("tokenize", &orgtrl::tokenize, py::arg("text"));

  py::class_<orgtrl::Vocabulary>(m, "Vocabulary")
      .def_static("build", &orgtrl::Vocabulary::build, py::arg("captions"), py::arg("min_count"))
      .def("id", &orgtrl::Vocabulary::id)
      .def("word", &orgtrl::Vocabulary::word)
      .def("size", &orgtrl::Vocabulary::size)
      .def("encode",
           [](const orgtrl::Vocabulary& v, const std::string& text, int max_len) {
             return orgtrl::encode_caption(v, text, max_len).ids;
           },
           py::arg("text"), py::arg("max_len") = 24);

  m.def("write_tensor",
        [](const std::string& path, const std::vector<std::uint32_t>& shape,
           const std::vector<float>& data) {
          orgtrl::write_tensor_file(path, orgtrl::FeatureTensor(shape, data));
        },
        py::arg("path"), py::arg("shape"), py::arg("data"));
  m.def("read_tensor", [](const std::string& path) {
    const auto t = orgtrl::read_tensor_file(path);
    return py::make_tuple(t.shape, t.data);
  });

  m.def("softmax",
        [](const std::vector<double>& logits,
           const std::optional<std::vector<std::uint8_t>>& mask) {
          return orgtrl::ad::softmax_stable<double>(logits, mask ? &*mask : nullptr);
        },
        py::arg("logits"), py::arg("mask") = std::nullopt);

  m.def("relation_coefficients",
        [](const DenseMatrix& nodes, const DenseMatrix& query_w,
           const std::vector<double>& query_b, const DenseMatrix& key_w,
           const std::vector<double>& key_b) {
          orgtrl::ad::Tape<double> tape;
          auto row = [&](const std::vector<double>& v) { return to_mat({v}); };
          auto a = orgtrl::ad::relation_coefficients(
              tape, tape.constant(to_mat(nodes)), tape.constant(to_mat(query_w)),
              tape.constant(row(query_b)), tape.constant(to_mat(key_w)),
              tape.constant(row(key_b)));
          return from_mat(tape.val(a));
        });

  m.def("topk_mask", [](const DenseMatrix& coeffs, const py::object& k) {
    const auto mask = orgtrl::ad::topk_mask<double>(to_mat(coeffs), parse_top_k(k));
    std::vector<std::vector<bool>> out(static_cast<std::size_t>(mask.rows));
    for (Eigen::Index r = 0; r < mask.rows; ++r) {
      for (Eigen::Index c = 0; c < mask.cols; ++c) {
        out[static_cast<std::size_t>(r)].push_back(mask.at(r, c));
      }
    }
    return out;
  });

  m.def("normalize_graph", [](const DenseMatrix& coeffs, const py::object& k) {
    orgtrl::ad::Tape<double> tape;
    auto a = tape.constant(to_mat(coeffs));
    const auto mask = orgtrl::ad::topk_mask_with_self<double>(tape.val(a), parse_top_k(k));
    return from_mat(tape.val(orgtrl::ad::normalize_graph(tape, a, mask)));
  });

  m.def("gcn_update",
        [](const DenseMatrix& normalized, const DenseMatrix& nodes, const DenseMatrix& w) {
          orgtrl::ad::Tape<double> tape;
          return from_mat(tape.val(orgtrl::ad::gcn_update(tape, tape.constant(to_mat(normalized)),
                                                          tape.constant(to_mat(nodes)),
                                                          tape.constant(to_mat(w)))));
        });

  py::class_<orgtrl::NgramElm>(m, "NgramElm")
      .def_static("train",
                  [](const std::vector<std::vector<orgtrl::WordId>>& corpus, int order,
                     double alpha, orgtrl::WordId vocab_size) {
                    std::vector<orgtrl::TokenSequence> seqs;
                    for (const auto& ids : corpus) seqs.push_back(orgtrl::TokenSequence{ids});
                    return orgtrl::NgramElm::train(seqs, order, alpha, vocab_size);
                  },
                  py::arg("corpus"), py::arg("order"), py::arg("alpha"), py::arg("vocab_size"))
      .def("query", &orgtrl::NgramElm::query, py::arg("prefix"), py::arg("temperature") = 1.0)
      .def("vocab_size", &orgtrl::NgramElm::vocab_size)
      .def("save", [](const orgtrl::NgramElm& e, const std::string& p) { e.save(p); })
      .def_static("load", [](const std::string& p) { return orgtrl::NgramElm::load(p); });

  m.def("apply_temperature", &orgtrl::apply_temperature, py::arg("q"), py::arg("temperature"));

  m.def("soft_targets", [](const std::vector<double>& q, int k) {
    std::vector<std::pair<orgtrl::WordId, double>> out;
    for (const auto& t : orgtrl::soft_targets(q, k)) out.emplace_back(t.word, t.prob);
    return out;
  });

  m.def("ce_loss",
        [](const DenseMatrix& probs, const std::vector<orgtrl::WordId>& targets) {
          std::vector<std::uint8_t> mask(targets.size(), 1);
          return orgtrl::ce_loss(to_mat(probs), targets, mask);
        },
        py::arg("probs"), py::arg("targets"));
  m.def("kl_soft_loss",
        [](const DenseMatrix& probs,
           const std::vector<std::vector<std::pair<orgtrl::WordId, double>>>& soft) {
          std::vector<std::vector<orgtrl::SoftTarget>> targets;
          for (const auto& step : soft) {
            std::vector<orgtrl::SoftTarget> s;
            for (const auto& [w, p] : step) s.push_back(orgtrl::SoftTarget{w, p});
            targets.push_back(std::move(s));
          }
          std::vector<std::uint8_t> mask(targets.size(), 1);
          return orgtrl::kl_soft_loss(to_mat(probs), targets, mask);
        },
        py::arg("probs"), py::arg("soft"));
  m.def("combined_loss", &orgtrl::combined_loss, py::arg("ce"), py::arg("kl"), py::arg("lam"));

  auto scored = [](const py::list& corpus) {
    std::vector<orgtrl::ScoredVideo> out;
    for (const auto& item : corpus) {
      auto pair = item.cast<py::tuple>();
      orgtrl::ScoredVideo sv;
      sv.hypothesis = pair[0].cast<std::vector<std::string>>();
      sv.references = pair[1].cast<std::vector<std::vector<std::string>>>();
      out.push_back(std::move(sv));
    }
    return out;
  };
  m.def("bleu4", [scored](const py::list& corpus) { return orgtrl::bleu4(scored(corpus)); });
  m.def("rouge_l", [scored](const py::list& corpus) { return orgtrl::rouge_l(scored(corpus)); });
  m.def("cider", [scored](const py::list& corpus) { return orgtrl::cider(scored(corpus)); });

  m.def("generate_synthetic",
        [](int videos, int frames, int objects, int d_a, int d_m, int d_o, double noise,
           std::uint64_t seed, const std::string& out_dir) {
          orgtrl::SynthSpec spec;
          spec.videos = videos;
          spec.frames = frames;
          spec.objects = objects;
          spec.d_a = d_a;
          spec.d_m = d_m;
          spec.d_o = d_o;
          spec.noise = noise;
          orgtrl::generate_synthetic(spec, seed, out_dir);
        },
        py::arg("videos"), py::arg("frames"), py::arg("objects"), py::arg("d_a"), py::arg("d_m"),
        py::arg("d_o"), py::arg("noise"), py::arg("seed"), py::arg("out_dir"));

  m.attr("PAD") = orgtrl::kPadId;
  m.attr("BOS") = orgtrl::kBosId;
  m.attr("EOS") = orgtrl::kEosId;
  m.attr("UNK") = orgtrl::kUnkId;
}
