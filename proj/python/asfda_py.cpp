#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>

#include "asfda/errors.hpp"
#include "asfda/io.hpp"
#include "asfda/kernels.hpp"
#include "asfda/query.hpp"
#include "asfda/reliability.hpp"

namespace py = pybind11;
using namespace asfda;

namespace {

// Python side passes plain containers: embeddings as {id: [floats]}, volumes
// as {id: (classes, (h, w, d), flat_probs)}, score columns as {id: value}.
using EmbeddingMap = std::map<std::string, std::vector<double>>;
using VolumeArg = std::tuple<std::size_t, std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<double>>;
using VolumeMap = std::map<std::string, VolumeArg>;

ProbVolume to_volume(const std::string& id, const VolumeArg& arg) {
    const auto& [c, shape, probs] = arg;
    const auto& [h, w, d] = shape;
    return ProbVolume(c, Extent{h, w, d}, probs, id);
}

std::vector<EmbeddingVec> to_embeddings(const EmbeddingMap& m, int round) {
    std::vector<EmbeddingVec> out;
    for (const auto& [id, v] : m) out.emplace_back(v, id, round);
    return out;
}

ScoreVector to_scores(const std::map<std::string, double>& m) {
    ScoreVector s;
    for (const auto& [id, v] : m) s.add(id, v);
    return s;
}

std::map<std::string, double> from_scores(const ScoreVector& s) {
    std::map<std::string, double> out;
    for (const auto& e : s) out[e.sample_id] = e.score;
    return out;
}

py::dict row_dict(const query::QueryRow& r) {
    py::dict d;
    d["sample_id"] = r.sample_id;
    d["pakd"] = r.pakd;
    d["pd"] = r.pd;
    d["dkd"] = r.dkd;
    d["asd"] = r.asd;
    d["dkd_qt"] = r.dkd_qt;
    d["asd_qt"] = r.asd_qt;
    d["q"] = r.q;
    d["round"] = r.round;
    return d;
}

}  // namespace

PYBIND11_MODULE(_asfda, m) {
    static py::exception<Error> error_type(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = to_string(e.kind());
            exc.attr("exit_code") = exit_code_for(e.kind());
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    m.def("temperature", &query::temperature, py::arg("r"), py::arg("max_round"));
    m.def("cosine_distance",
          [](const std::vector<double>& a, const std::vector<double>& b) { return cosine_distance(a, b); });
    m.def("minmax_normalize", [](const std::map<std::string, double>& s) {
        return from_scores(minmax_normalize(to_scores(s)));
    });
    m.def("quantile_transform", [](const std::map<std::string, double>& s) {
        return from_scores(quantile_transform(to_scores(s)));
    });

    m.def("asd", [](const VolumeArg& v, int r, int max_round) { return query::asd(to_volume("", v), r, max_round); },
          py::arg("volume"), py::arg("r"), py::arg("max_round"));
    m.def(
        "score_round",
        [](const EmbeddingMap& e0, const EmbeddingMap& current, const VolumeMap& probs, int r, int max_round) {
            std::vector<ProbVolume> vols;
            for (const auto& [id, arg] : probs) vols.push_back(to_volume(id, arg));
            py::list rows;
            for (const auto& row : query::score_round(to_embeddings(e0, 0), to_embeddings(current, r), vols, r,
                                                      max_round))
                rows.append(row_dict(row));
            return rows;
        },
        py::arg("e0"), py::arg("current"), py::arg("probs"), py::arg("r"), py::arg("max_round"));
    m.def(
        "select_top",
        [](const std::map<std::string, double>& scores, int n_b, const std::set<std::string>& excluded) {
            const auto sel = query::select_top(to_scores(scores), n_b, excluded);
            return py::make_tuple(sel.ids, sel.shortfall);
        },
        py::arg("scores"), py::arg("n_b"), py::arg("excluded") = std::set<std::string>{});

    m.def(
        "confidence",
        [](const VolumeArg& v, const std::string& variant) {
            return reliability::confidence(to_volume("", v), reliability::parse_confidence_variant(variant));
        },
        py::arg("volume"), py::arg("variant") = "mean");
    m.def(
        "select_reliable",
        [](const EmbeddingMap& embeddings, const VolumeMap& probs, const EmbeddingMap& anchors, int n_su, double tau_c,
           const std::string& variant) {
            const auto v = reliability::parse_confidence_variant(variant);
            std::vector<reliability::UnlabeledSample> pool;
            for (const auto& [id, arg] : probs)
                pool.push_back({id, reliability::confidence(to_volume(id, arg), v),
                                EmbeddingVec(embeddings.at(id), id)});
            const auto res = reliability::select_reliable(pool, {n_su, tau_c, v}, to_embeddings(anchors, 0));
            py::dict d;
            d["selected"] = res.selected;
            d["candidate_count"] = res.candidate_count;
            d["mean_confidence"] = res.mean_confidence;
            return d;
        },
        py::arg("embeddings"), py::arg("probs"), py::arg("anchors"), py::arg("n_su"), py::arg("tau_c") = 2.0,
        py::arg("variant") = "mean");

    m.def("read_tensor", [](const std::filesystem::path& p) {
        const auto t = read_tensor(p);
        return py::make_tuple(t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
    });
    m.def("write_tensor", [](const std::filesystem::path& p, const Shape& shape, std::vector<double> data) {
        write_tensor(Tensor(shape, std::move(data)), p);
    });
}
