// pybind11 surface over the library: config handling, full experiment runs,
// checkpoint evaluation/inspection, the self-check suites and the glyph
// generator. Heavy lifting stays in C++; python sees strings, dicts and lists.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "symmetria/checks.hpp"
#include "symmetria/config.hpp"
#include "symmetria/data.hpp"
#include "symmetria/experiment.hpp"

namespace py = pybind11;
using namespace symmetria;

namespace {

py::dict summary_dict(const RunSummary& s) {
    py::dict d;
    d["out_dir"] = s.out_dir;
    d["epochs_run"] = s.epochs_run;
    d["test_acc"] = s.test_acc;
    d["test_nll"] = s.test_nll;
    return d;
}

py::list rows_list(const std::vector<CheckRow>& rows) {
    py::list out;
    for (const auto& r : rows) {
        py::dict d;
        d["name"] = r.name;
        d["measured"] = r.measured;
        d["threshold"] = r.threshold;
        d["pass"] = r.pass;
        out.append(d);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_symmetria, m) {
    m.doc() = "relaxed layer-wise equivariance with Laplace model selection";

    m.def("version", [] { return std::string(kVersionString); });

    m.def(
        "canonical_config",
        [](const std::string& text) { return parse_config(text).canonical_json(); },
        py::arg("text"),
        "parse a JSON config, materialise defaults and return the canonical form");

    m.def(
        "run",
        [](const std::string& config_text, bool resume) {
            const ExperimentConfig cfg = parse_config(config_text);
            py::gil_scoped_release release;
            const RunSummary s = run_experiment(cfg, resume);
            py::gil_scoped_acquire acquire;
            return summary_dict(s);
        },
        py::arg("config_text"), py::arg("resume") = false,
        "train into the config's output_dir and return the run summary");

    m.def(
        "eval_checkpoint",
        [](const std::string& path, const std::string& split) {
            py::gil_scoped_release release;
            return eval_checkpoint(path, split);
        },
        py::arg("checkpoint"), py::arg("split") = "test",
        "JSON metrics of a stored checkpoint on one split");

    m.def(
        "inspect",
        [](const std::string& path, bool recompute_report) {
            py::gil_scoped_release release;
            const InspectResult r = inspect_checkpoint(path, recompute_report);
            py::gil_scoped_acquire acquire;
            return py::make_tuple(r.summary_text, r.report_json);
        },
        py::arg("checkpoint"), py::arg("recompute_report") = false,
        "(summary text, report JSON) for a checkpoint; the report needs a sweep");

    m.def(
        "check",
        [](const std::string& suite, uint64_t seed) {
            std::vector<CheckRow> rows;
            {
                py::gil_scoped_release release;
                rows = run_check_suite(suite, seed);
            }
            return rows_list(rows);
        },
        py::arg("suite"), py::arg("seed") = 0,
        "run a self-check suite (gradcheck|kfac|equivariance|marglik|all)");

    m.def(
        "generate_glyphs",
        [](int canvas, const std::string& label_mode, const std::string& transform,
           uint64_t seed, int n, const std::string& images_path, const std::string& labels_path) {
            TaskSpec spec;
            spec.canvas = canvas;
            spec.label_mode = label_mode_from(label_mode);
            spec.transform = transform_from(transform);
            spec.seed = seed;
            Dataset d = gen_glyph_quadrant(spec, n);
            if (spec.transform != TransformKind::None)
                d = apply_transform(d, spec.transform, spec.max_translate, spec.seed);
            write_idx(d, images_path, labels_path);
            return d.classes;
        },
        py::arg("canvas"), py::arg("label_mode"), py::arg("transform"), py::arg("seed"),
        py::arg("n"), py::arg("images_path"), py::arg("labels_path"),
        "write a glyph dataset as an IDX pair; returns the class count");

    m.def("glyph_count", &glyph_count);
    m.def(
        "glyph_bitmap",
        [](int g) {
            const Tensor t = glyph_bitmap(g);
            std::vector<std::vector<double>> rows(5, std::vector<double>(5));
            for (int r = 0; r < 5; ++r)
                for (int c = 0; c < 5; ++c) rows[r][c] = t.at({r, c});
            return rows;
        },
        py::arg("g"), "5x5 bitmap of one generator glyph as nested lists");
}
