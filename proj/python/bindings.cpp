#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cotmr/error.hpp"
#include "cotmr/evaluation.hpp"
#include "cotmr/pipeline.hpp"
#include "cotmr/prompting.hpp"
#include "cotmr/reasoning.hpp"
#include "cotmr/scoring.hpp"
#include "cotmr/synthetic.hpp"

namespace py = pybind11;
using namespace cotmr;

namespace {

// Round-trips through text so Python sees plain dicts and lists.
py::object to_python(const Json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Json from_python(const py::object& o) {
  return Json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

Ranking make_ranking(const std::vector<std::string>& ids) {
  Ranking r;
  double s = 0.0;
  for (const auto& id : ids) r.items.push_back({id, s -= 1.0});
  return r;
}

RunConfig config_of(const py::object& config) {
  if (py::isinstance<py::str>(config) || py::hasattr(config, "__fspath__")) {
    return RunConfig::load(py::str(config).cast<std::string>());
  }
  return RunConfig::from_json(from_python(config));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Composed image retrieval with multi-scale reasoning and reward-penalty scoring";

  static py::handle error_type =
      PyErr_NewException("cotmr._core.CotmrError", PyExc_RuntimeError, nullptr);
  m.attr("CotmrError") = error_type;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("kind") = std::string(to_string(e.kind()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  m.def(
      "default_hyperparams",
      [](const std::string& benchmark) {
        const auto hp = default_hyperparams(parse_benchmark_kind(benchmark));
        return py::make_tuple(hp.lambda, hp.mu);
      },
      py::arg("benchmark"), "(lambda, mu) for fashioniq, cirr or circo");

  m.def(
      "fuse",
      [](std::vector<double> base, std::vector<double> pos, std::vector<double> neg, double lambda_, double mu,
         const std::string& components) {
        MgsConfig cfg;
        cfg.lambda = lambda_;
        cfg.mu = mu;
        cfg.set_components(components);
        return fuse("", std::move(base), std::move(pos), std::move(neg), cfg).fused;
      },
      py::arg("base"), py::arg("pos"), py::arg("neg"), py::arg("lambda_") = 1.0, py::arg("mu") = 0.5,
      py::arg("components") = "base,pos,neg", "S = base + lambda * pos - mu * neg over the enabled components");

  m.def(
      "rank",
      [](const std::vector<double>& scores, const std::vector<std::string>& ids) {
        std::vector<std::string> out;
        for (const auto& it : rank_scores("", scores, ids).items) out.push_back(it.image_id);
        return out;
      },
      py::arg("scores"), py::arg("ids"), "ids by descending score, ties by ascending id");

  m.def(
      "recall_at_k",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& targets, std::size_t k) {
        return recall_at_k(make_ranking(ranked), targets, k);
      },
      py::arg("ranked"), py::arg("targets"), py::arg("k"));
  m.def(
      "recall_subset_at_k",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& subset,
         const std::vector<std::string>& targets, std::size_t k) {
        return recall_subset_at_k(make_ranking(ranked), subset, targets, k);
      },
      py::arg("ranked"), py::arg("subset"), py::arg("targets"), py::arg("k"));
  m.def(
      "average_precision_at_k",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& targets, std::size_t k) {
        return average_precision_at_k(make_ranking(ranked), targets, k);
      },
      py::arg("ranked"), py::arg("targets"), py::arg("k"));

  m.def("parse_image_reply", [](const std::string& raw) { return parse_image_reply(raw); }, py::arg("raw"));
  m.def(
      "parse_object_reply",
      [](const std::string& raw) {
        const auto lists = parse_object_reply(raw);
        return py::make_tuple(lists.existent, lists.nonexistent);
      },
      py::arg("raw"), "(existent, nonexistent)");

  m.def(
      "render_prompt",
      [](const std::string& scale, const std::string& mode, const std::string& reference, const std::string& text) {
        if (scale == "merged") return render_text(build_merged_prompt(parse_prompt_mode(mode), reference, text));
        return render_text(build_prompt(parse_scale(scale), parse_prompt_mode(mode), reference, text));
      },
      py::arg("scale"), py::arg("mode"), py::arg("reference"), py::arg("text"));

  m.def(
      "write_synthetic",
      [](const std::filesystem::path& dir, std::uint64_t seed, std::size_t n_queries, std::size_t gallery_size,
         std::size_t dim) {
        write_synthetic_workspace(generate_synthetic_split(seed, n_queries, gallery_size, dim), seed, dir);
        return dir / "run.conf";
      },
      py::arg("dir"), py::arg("seed") = 7, py::arg("n_queries") = 200, py::arg("gallery_size") = 1000,
      py::arg("dim") = 32, "writes a planted synthetic workspace; returns its run.conf");

  m.def(
      "fingerprint", [](const py::object& config) { return to_python(fingerprint(config_of(config))); },
      py::arg("config"));

  m.def(
      "embed",
      [](const py::object& config) {
        const auto cfg = config_of(config);
        py::gil_scoped_release release;
        return run_embed(cfg).records;
      },
      py::arg("config"), "embeds the gallery; returns the record count");
  m.def(
      "retrieve",
      [](const py::object& config, bool force) {
        const auto cfg = config_of(config);
        RetrieveSummary s;
        {
          py::gil_scoped_release release;
          s = run_retrieve(cfg, force);
        }
        return py::make_tuple(s.ranked, s.failed);
      },
      py::arg("config"), py::arg("force") = false, "(ranked, failed)");
  m.def(
      "evaluate",
      [](const py::object& config, const std::vector<std::filesystem::path>& rankings, bool force) {
        const auto cfg = config_of(config);
        EvalReport report;
        {
          py::gil_scoped_release release;
          report = run_evaluate(cfg, rankings, force);
        }
        return to_python(report.to_json());
      },
      py::arg("config"), py::arg("rankings") = std::vector<std::filesystem::path>{}, py::arg("force") = false,
      "report as a dict");
}
