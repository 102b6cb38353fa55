#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "solrepair/corpus.hpp"
#include "solrepair/error.hpp"
#include "solrepair/harness.hpp"
#include "solrepair/metrics.hpp"
#include "solrepair/retrieval.hpp"
#include "solrepair/serialize.hpp"

namespace py = pybind11;
using namespace solrepair;

namespace {

// Dicts cross the boundary as JSON text.
nlohmann::json to_json(const py::object& obj) {
  auto dumps = py::module_::import("json").attr("dumps");
  return nlohmann::json::parse(dumps(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& doc) {
  return py::module_::import("json").attr("loads")(doc.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "solrepair core bindings";
  m.attr("__version__") = harness::harness_version();

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<MalformedSource>(m, "MalformedSource", base.ptr());
  py::register_exception<MalformedRecord>(m, "MalformedRecord", base.ptr());
  py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UndefinedCorrelation>(m, "UndefinedCorrelation", base.ptr());

  m.def("pass_at_k_estimate", &metrics::pass_at_k_estimate, py::arg("n"), py::arg("c"), py::arg("k"));
  m.def(
      "pass_at_k",
      [](const std::vector<std::tuple<int, int>>& nc, int k) {
        std::vector<metrics::TaskOutcome> outs;
        for (std::size_t i = 0; i < nc.size(); ++i) {
          auto [n, c] = nc[i];
          outs.push_back({"task" + std::to_string(i), n, c, c});
        }
        return metrics::pass_at_k(outs, k);
      },
      py::arg("outcomes"), py::arg("k"), "Mean pass@k percentage over (n, c) pairs.");
  m.def("bleu", &metrics::bleu, py::arg("candidate"), py::arg("reference"));
  m.def(
      "trivially_shared_ngrams",
      [](const std::vector<std::string>& corpus, std::size_t k) {
        auto set = metrics::trivially_shared_ngrams(corpus, k);
        return std::vector<std::vector<std::string>>(set.begin(), set.end());
      },
      py::arg("corpus"), py::arg("k") = 500);
  m.def(
      "crystal_bleu",
      [](const std::string& cand, const std::string& ref, const std::vector<std::vector<std::string>>& trivial) {
        return metrics::crystal_bleu(cand, ref, metrics::NgramSet(trivial.begin(), trivial.end()));
      },
      py::arg("candidate"), py::arg("reference"), py::arg("trivial"));
  m.def("pearson", &metrics::pearson, py::arg("xs"), py::arg("ys"));
  m.def(
      "cost",
      [](std::int64_t prompt, std::int64_t completion, double price_prompt, double price_completion) {
        return metrics::cost({prompt, completion}, {price_prompt, price_completion});
      },
      py::arg("prompt_tokens"), py::arg("completion_tokens"), py::arg("price_per_1m_prompt") = 0.15,
      py::arg("price_per_1m_completion") = 0.6);

  m.def(
      "extract_functions",
      [](const std::string& text, const std::string& path) {
        py::list out;
        for (const auto& r : corpus::extract_functions(corpus::SourceFile::from_text(path, text))) {
          out.append(from_json(io::to_json(r)));
        }
        return out;
      },
      py::arg("text"), py::arg("path") = "<memory>");
  m.def(
      "inject_verification_statement",
      [](const std::string& body) {
        corpus::FunctionRecord r;
        r.body = body;
        return corpus::inject_verification_statement(r).body;
      },
      py::arg("body"));

  m.def(
      "retrieve",
      [](const std::string& query, const std::vector<std::string>& lines, const std::string& method,
         int max_snippets) {
        retrieval::RetrievalConfig cfg;
        cfg.method = retrieval::method_from_string(method);
        cfg.max_snippets = max_snippets;
        retrieval::HashingEmbeddingProvider hashing;
        py::list out;
        for (const auto& s : retrieval::retrieve(retrieval::Query::line(query), lines, cfg, &hashing)) {
          py::dict d;
          d["line_index"] = s.line_index;
          d["text"] = s.text;
          d["score"] = s.score;
          out.append(d);
        }
        return out;
      },
      py::arg("query"), py::arg("lines"), py::arg("method") = "lcs", py::arg("max_snippets") = 2);

  m.def(
      "build",
      [](const std::string& src_dir, const std::string& out) {
        harness::BuildOptions b;
        b.src_dir = src_dir;
        b.out_task_file = out;
        return from_json(io::to_json(harness::cmd_build(b)));
      },
      py::arg("src_dir"), py::arg("out"), "Builds a task file; returns the filter report.");
  m.def(
      "run",
      [](const py::object& config) {
        auto cfg = harness::RunConfig::from_json(to_json(config));
        harness::RunResult r;
        {
          py::gil_scoped_release release;
          r = harness::cmd_run(cfg);
        }
        py::dict d;
        d["exit_code"] = r.exit_code;
        d["sessions_run"] = r.sessions_run;
        d["manifest"] = from_json(r.manifest.to_json());
        return d;
      },
      py::arg("config"), "Runs (or resumes) a benchmark run described by a run-config dict.");
  m.def(
      "report",
      [](const std::vector<std::string>& inputs, const std::vector<int>& k_values, const std::string& out_dir) {
        harness::ReportOptions opt;
        opt.inputs = inputs;
        opt.k_values = k_values;
        opt.out_dir = out_dir;
        auto rep = harness::cmd_report(opt);
        py::dict d;
        d["table"] = rep.table;
        d["doc"] = from_json(rep.doc);
        return d;
      },
      py::arg("inputs"), py::arg("k_values") = std::vector<int>{1}, py::arg("out_dir") = "");
}
