#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "gradleak/baselines.hpp"
#include "gradleak/defense.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/linalg.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/rlg.hpp"
#include "gradleak/simulator.hpp"

namespace py = pybind11;
using namespace gradleak;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    std::vector<double> data(a.data(), a.data() + rows * cols);
    return Matrix(rows, cols, std::move(data));
}

Array to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    if (!m.empty()) std::memcpy(out.mutable_data(), m.data().data(), m.size() * sizeof(double));
    return out;
}

py::dict prediction_dict(const rlg::LabelSetPrediction& p) {
    py::dict d;
    d["inferred_S"] = p.inferred_S;
    d["rank_estimate"] = p.rank_estimate;
    d["labels"] = p.labels;
    d["singular"] = p.singular;
    return d;
}

}  // namespace

PYBIND11_MODULE(_gradleak, m) {
    m.doc() = "Label leakage from projection-layer gradient updates";

    py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<AssumptionViolated>(m, "AssumptionViolated");
    py::register_exception<DegenerateUpdate>(m, "DegenerateUpdate");
    py::register_exception<NotSingleSample>(m, "NotSingleSample");

    m.def(
        "simulate",
        [](std::size_t d, std::size_t classes, const std::string& mode, std::size_t n, std::size_t k,
           const std::string& latent, std::uint64_t seed, std::vector<double> learning_rates,
           std::optional<std::vector<std::size_t>> labels, std::size_t embed_dim) {
            sim::Scenario sc;
            sc.d = d;
            sc.classes = classes;
            sc.mode = sim::parse_mode(mode);
            sc.n = n;
            sc.k = k;
            sc.latent = sim::parse_latent(latent);
            sc.seed = seed;
            sc.learning_rates = std::move(learning_rates);
            sc.fixed_labels = std::move(labels);
            sc.embed_dim = embed_dim;
            const sim::GradientCase gc = sim::simulate_case(sc);
            py::dict out;
            out["delta_w"] = to_array(gc.delta_w);
            out["labels"] = gc.true_labels;
            out["label_set"] = gc.label_set();
            out["true_S"] = gc.true_S;
            return out;
        },
        py::arg("d") = 64, py::arg("classes") = 100, py::arg("mode") = "batch", py::arg("n") = 1,
        py::arg("k") = 1, py::arg("latent") = "tanh", py::arg("seed") = 0,
        py::arg("learning_rates") = std::vector<double>{}, py::arg("labels") = py::none(),
        py::arg("embed_dim") = 0);

    m.def(
        "rlg_attack",
        [](const Array& delta_w, std::optional<std::size_t> assume_s, bool screening, unsigned jobs) {
            rlg::RlgConfig cfg;
            cfg.assume_S = assume_s;
            cfg.screening = screening;
            cfg.jobs = jobs;
            const Matrix dw = to_matrix(delta_w);
            rlg::LabelSetPrediction pred;
            {
                py::gil_scoped_release release;
                pred = rlg::rlg_attack(dw, cfg);
            }
            return prediction_dict(pred);
        },
        py::arg("delta_w"), py::arg("assume_s") = py::none(), py::arg("screening") = true,
        py::arg("jobs") = 1);

    m.def("idlg", [](const Array& delta_w) { return baseline::idlg_single(to_matrix(delta_w)).label; },
          py::arg("delta_w"));
    m.def(
        "min_column",
        [](const Array& delta_w) { return baseline::min_column_attack(to_matrix(delta_w)).labels; },
        py::arg("delta_w"));

    m.def("sign_sgd", [](const Array& delta_w) { return to_array(defense::sign_sgd(to_matrix(delta_w))); },
          py::arg("delta_w"));
    m.def(
        "grad_drop",
        [](const Array& delta_w, double rate) { return to_array(defense::grad_drop(to_matrix(delta_w), rate)); },
        py::arg("delta_w"), py::arg("rate"));

    m.def(
        "singular_values", [](const Array& a) { return linalg::svd(to_matrix(a)).singular; }, py::arg("a"));

    m.def(
        "set_score",
        [](const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth) {
            const auto s = metrics::set_score(predicted, truth);
            py::dict d;
            d["precision"] = s.precision;
            d["recall"] = s.recall;
            d["f1"] = s.f1;
            d["exact_match"] = s.exact_match;
            return d;
        },
        py::arg("predicted"), py::arg("truth"));
    m.def("wer", [](const std::vector<std::size_t>& ref, const std::vector<std::size_t>& hyp) {
        return metrics::wer(ref, hyp);
    }, py::arg("reference"), py::arg("hypothesis"));
}
