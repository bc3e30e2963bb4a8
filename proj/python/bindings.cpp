#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mteforge/agreement.hpp"
#include "mteforge/app.hpp"
#include "mteforge/bench.hpp"
#include "mteforge/estimator.hpp"
#include "mteforge/judge.hpp"
#include "mteforge/lexmetrics.hpp"
#include "mteforge/normalize.hpp"
#include "mteforge/qa.hpp"
#include "mteforge/split.hpp"

namespace py = pybind11;
using namespace mteforge;

namespace {

// Records cross the boundary as canonical JSON strings, one per record.
std::vector<corpus::AnnotationRecord> from_json_lines(const std::vector<std::string>& lines) {
  std::string joined;
  for (const auto& l : lines) joined += l + "\n";
  std::istringstream in(joined);
  return corpus::load_annotations(in, {}).records;
}

std::vector<std::string> to_json_lines(const std::vector<corpus::AnnotationRecord>& records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(corpus::to_canonical_json(r));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "mteforge core bindings";

  static py::exception<Error> base(m, "MteforgeError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("canonicalize", [](const std::vector<std::string>& lines) {
    return to_json_lines(from_json_lines(lines));
  }, py::arg("records"));

  m.def("chrf", [](const std::string& hyp, const std::string& ref, bool plus_plus) {
    return lex::chrf_sentence(hyp, ref,
                              plus_plus ? lex::ChrfConfig::chrf_plus_plus() : lex::ChrfConfig::chrf());
  }, py::arg("hyp"), py::arg("ref"), py::arg("plus_plus") = false);
  m.def("bleu", &lex::bleu_corpus, py::arg("hyps"), py::arg("refs"), py::arg("max_order") = 4);

  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
    return agreement::pearson(x, y);
  });
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    return agreement::spearman(x, y);
  });
  m.def("kendall_tau_b", [](const std::vector<double>& x, const std::vector<double>& y) {
    return agreement::kendall_tau_b(x, y);
  });
  m.def("icc3k", [](const std::vector<double>& a, const std::vector<double>& b) {
    return agreement::icc3k(agreement::RatingMatrix::from_columns(a, b));
  }, py::arg("rater_a"), py::arg("rater_b"));
  m.def("agreement_gate", [](double p, double s, double icc) {
    return agreement::agreement_gate(p, s, icc) == agreement::Gate::Pass;
  }, py::arg("pearson"), py::arg("spearman"), py::arg("icc"));

  m.def("zscore_per_evaluator", [](const std::vector<std::string>& lines) {
    return to_json_lines(normalize::zscore_per_evaluator(from_json_lines(lines)));
  });
  m.def("normalize_scores", [](const std::vector<std::string>& lines, std::size_t extremes) {
    const auto res = normalize::normalize_scores(from_json_lines(lines), extremes);
    return py::make_tuple(to_json_lines(res.records), res.bounds.z_min, res.bounds.z_max);
  }, py::arg("records"), py::arg("extremes") = normalize::kDefaultExtremes);

  m.def("cross_filter", [](const std::vector<std::string>& lines, double q) {
    const auto res = qa::cross_filter_per_lp(from_json_lines(lines), q);
    std::vector<std::string> removed;
    for (const auto& d : res.decisions) {
      if (d.removed) removed.push_back(d.record_id);
    }
    return py::make_tuple(to_json_lines(res.retained), removed);
  }, py::arg("records"), py::arg("quantile") = qa::kDefaultQuantile);

  m.def("document_split", [](const std::vector<std::string>& lines,
                             const std::set<std::string>& overlap, std::uint64_t seed,
                             std::size_t test_docs, std::size_t dev_docs) {
    split::SplitOptions opt;
    opt.seed = seed;
    opt.n_test_docs = test_docs;
    opt.n_dev_docs = dev_docs;
    std::map<std::string, std::string> out;
    for (const auto& [id, label] : split::document_split(from_json_lines(lines), overlap, opt)) {
      out[id] = std::string(corpus::to_string(label));
    }
    return out;
  }, py::arg("records"), py::arg("overlap") = std::set<std::string>{}, py::arg("seed") = 0,
     py::arg("test_docs") = 40, py::arg("dev_docs") = 10);

  m.def("pseudo_embed", &estimator::pseudo_embed, py::arg("text"), py::arg("dim"),
        py::arg("seed") = 0);

  m.def("parse_judge_score", [](const std::string& raw) {
    const auto p = judge::parse_score(raw);
    return py::make_tuple(p.value, p.fallback);
  });

  m.def("evaluate_run", [](const std::map<std::string, double>& scores,
                           const std::map<std::string, double>& human_z) {
    bench::MetricRun run{"run", "", scores, {}, {}};
    const auto c = bench::evaluate_run(run, human_z);
    return py::make_tuple(c.spearman, c.pearson);
  }, py::arg("scores"), py::arg("human_z"));

  m.def("run_pipeline", [](const std::filesystem::path& config,
                           std::optional<std::filesystem::path> out_dir,
                           std::optional<std::uint64_t> seed) {
    app::PipelineOptions opt;
    opt.out_dir = std::move(out_dir);
    opt.seed = seed;
    py::gil_scoped_release release;
    app::run_pipeline(config, opt);
  }, py::arg("config"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());
}
