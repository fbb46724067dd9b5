#include <filesystem>
#include <memory>

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "unea/alignment.hpp"
#include "unea/checkpoint.hpp"
#include "unea/embed_store.hpp"
#include "unea/relation_geometry.hpp"
#include "unea/synth.hpp"
#include "unea/trainer.hpp"
#include "unea/tree_sampler.hpp"

namespace py = pybind11;
using namespace unea;

namespace {

using Vector = Eigen::Matrix<double, Eigen::Dynamic, 1>;

std::span<const double> span_of(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Vector to_vector(std::span<const double> s) { return Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())); }

template <typename T>
void apply_overrides(T& target, const py::dict& overrides) {
  for (const auto& [key, value] : overrides) {
    std::string text = py::str(value);
    if (py::isinstance<py::bool_>(value)) text = value.template cast<bool>() ? "true" : "false";
    target.set(key.template cast<std::string>(), text);
  }
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["hits1"] = m.hits1;
  d["hits10"] = m.hits10;
  d["mrr"] = m.mrr;
  return d;
}

py::dict record_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["final"] = r.final;
  d["loss"] = py::dict(py::arg("total") = r.loss.total, py::arg("align") = r.loss.l_align,
                       py::arg("ent") = r.loss.l_ent, py::arg("rel") = r.loss.l_rel, py::arg("topo") = r.loss.l_topo,
                       py::arg("mi") = r.loss.l_mi);
  d["pseudo_labels"] = r.pseudo_labels;
  d["metrics"] = r.metrics ? py::object(metrics_dict(*r.metrics)) : py::object(py::none());
  return d;
}

SimilarityMatrix as_similarity(const MatrixF& values, bool csls) {
  return {values, csls ? SimilarityMatrix::Kind::kCsls : SimilarityMatrix::Kind::kRawCosine};
}

// Owns the graphs a Trainer points into.
class Session {
 public:
  Session(const std::filesystem::path& data_dir, const py::dict& overrides)
      : data_(load_kg_pair(data_dir)), data_dir_(data_dir) {
    TrainConfig config;
    apply_overrides(config, overrides);
    trainer_ = std::make_unique<Trainer>(data_, load_feature_set(data_dir), config, [](std::string_view) {});
  }

  Trainer& trainer() { return *trainer_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  KnowledgeGraphPair data_;
  std::filesystem::path data_dir_;
  std::unique_ptr<Trainer> trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Unsupervised entity alignment core";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def(
      "householder_apply",
      [](const Vector& r, const Vector& x) {
        Vector out(x.size());
        householder_apply(span_of(r), span_of(x), {out.data(), static_cast<std::size_t>(out.size())});
        return out;
      },
      py::arg("r"), py::arg("x"), "x - 2 r (r . x) for a unit vector r");
  m.def(
      "compose_relation",
      [](const Vector& r_l, const Vector& r_k) { return to_vector(compose_relation(span_of(r_l), span_of(r_k)).values()); },
      py::arg("r_l"), py::arg("r_k"));
  m.def(
      "sampling_logit",
      [](const Vector& root, const Vector& parent, const Vector& cand, const Vector& r_path, const Vector& r_edge,
         std::size_t degree, double slope) {
        return sampling_logit(span_of(root), span_of(parent), span_of(cand), UnitRelationVector::from(span_of(r_path)),
                              UnitRelationVector::from(span_of(r_edge)), degree, slope);
      },
      py::arg("e_root"), py::arg("e_parent"), py::arg("e_cand"), py::arg("r_path"), py::arg("r_edge"),
      py::arg("degree"), py::arg("slope") = 0.01);

  m.def(
      "similarity_matrix", [](const Matrix& e1, const Matrix& e2) { return similarity_matrix(e1, e2).values; },
      py::arg("e1"), py::arg("e2"), "Cosine similarities as float32");
  m.def(
      "csls_adjust", [](const MatrixF& s, std::size_t delta) { return csls_adjust(as_similarity(s, false), delta).values; },
      py::arg("s"), py::arg("delta"));
  m.def(
      "mutual_nearest_labels", [](const MatrixF& s) { return mutual_nearest_labels(as_similarity(s, true)).pairs; },
      py::arg("s"));
  m.def(
      "evaluate",
      [](const MatrixF& s, const std::vector<EntityPair>& refs) { return metrics_dict(evaluate(as_similarity(s, false), refs)); },
      py::arg("s"), py::arg("ref_pairs"));

  m.def(
      "read_emb", [](const std::filesystem::path& p) { return read_emb(p); }, py::arg("path"));
  m.def(
      "write_emb", [](const std::filesystem::path& p, const MatrixF& rows) { write_emb(p, rows); }, py::arg("path"),
      py::arg("rows"));

  m.def(
      "synth",
      [](const std::filesystem::path& out, const py::dict& overrides) {
        SynthSpec spec;
        apply_overrides(spec, overrides);
        const auto bench = generate(spec);
        write_benchmark(bench, out);
        return bench.truth;
      },
      py::arg("out"), py::arg("overrides") = py::dict(),
      "Writes a twin benchmark to out and returns the planted g1 -> g2 dense-id map");

  py::class_<Session>(m, "Trainer")
      .def(py::init<const std::filesystem::path&, const py::dict&>(), py::arg("data_dir"),
           py::arg("overrides") = py::dict())
      .def("refresh", [](Session& s) { s.trainer().refresh(); })
      .def("train_epoch", [](Session& s) {
        const auto r = s.trainer().train_epoch();
        return record_dict(EpochRecord{s.trainer().epoch(), r, s.trainer().pseudo_labels().size(), {}, false})["loss"];
      })
      .def(
          "run",
          [](Session& s, const std::function<void(py::dict)>& on_epoch) {
            py::list history;
            for (const auto& r : s.trainer().run([&](const EpochRecord& rec) {
                   if (on_epoch) on_epoch(record_dict(rec));
                 }))
              history.append(record_dict(r));
            return history;
          },
          py::arg("on_epoch") = nullptr)
      .def("evaluate", [](Session& s, bool csls) { return metrics_dict(s.trainer().evaluate(csls)); },
           py::arg("csls") = false)
      .def("outputs", [](Session& s, int side) { return s.trainer().outputs(side == 1 ? KgSide::kFirst : KgSide::kSecond); },
           py::arg("side"))
      .def("pseudo_labels", [](Session& s) { return s.trainer().pseudo_labels().pairs; })
      .def("save", [](Session& s, const std::filesystem::path& dir) {
        save_checkpoint(snapshot(s.trainer(), s.data_dir()), dir);
      })
      .def_property_readonly("epoch", [](Session& s) { return s.trainer().epoch(); })
      .def_property_readonly("config", [](Session& s) { return s.trainer().config().to_text(); });
}
