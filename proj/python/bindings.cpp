#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nara/errors.hpp"
#include "nara/probes.hpp"
#include "nara/relation_oracle.hpp"
#include "nara/spatial_relations.hpp"
#include "nara/synthcity.hpp"
#include "nara/train.hpp"
#include "nara/verification.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace nara;

// Structured values cross the boundary as JSON text; the Python package
// decodes them with the json module.
namespace {

std::vector<std::string> dataset_lines(const Dataset& d) {
    std::vector<std::string> out;
    out.reserve(d.entities.size());
    for (const auto& e : d.entities) out.push_back(serialize_geoentity_record(e));
    return out;
}

Dataset dataset_from_lines(const std::vector<std::string>& lines) {
    std::vector<Geoentity> es;
    for (std::size_t k = 0; k < lines.size(); ++k) es.push_back(parse_geoentity_record(lines[k], k + 1));
    return make_dataset(std::move(es));
}

std::string labels_json(const LatentLabels& l) {
    json z = json::object(), s = json::object();
    for (const auto& [id, v] : l.zone) z[std::to_string(id)] = v;
    for (const auto& [id, v] : l.speed) s[std::to_string(id)] = v;
    return json{{"zone", z}, {"speed", s}}.dump();
}

}  // namespace

PYBIND11_MODULE(_nara, m) {
    m.doc() = "Relational geoentity representation learning (native core)";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("classify_relation", [](const std::string& a, const std::string& b) {
        return static_cast<int>(classify_relation(parse_geoentity_record(a).geometry, parse_geoentity_record(b).geometry));
    });
    m.def("min_distance", [](const std::string& a, const std::string& b) {
        return min_distance(parse_geoentity_record(a).geometry, parse_geoentity_record(b).geometry);
    });
    m.def("normalize_record", [](const std::string& line) {
        return serialize_geoentity_record(parse_geoentity_record(line));
    });

    m.def("default_city_params", [] { return json(CityParams{}).dump(); });
    m.def("generate_city", [](const std::string& params) {
        const City c = generate_city(json::parse(params).get<CityParams>());
        return py::make_tuple(dataset_lines(c.data), labels_json(c.labels));
    });

    m.def("default_train_config", [] { return json(TrainConfig{}).dump(); });
    m.def(
        "train",
        [](const std::vector<std::string>& records, const std::string& config, const std::string& out_dir) {
            const TrainConfig cfg = json::parse(config).get<TrainConfig>();
            cfg.validate();
            TrainResult r = [&] {
                py::gil_scoped_release release;
                return train(dataset_from_lines(records), cfg, {out_dir, {}});
            }();
            return py::make_tuple(r.model.checkpoint(checkpoint_extra(cfg, cfg.epochs)).dump(), r.epoch_mean_loss);
        },
        py::arg("records"), py::arg("config"), py::arg("out_dir") = "");

    m.def(
        "embed",
        [](const std::string& checkpoint, const std::vector<std::string>& records, const std::vector<std::int64_t>& ids,
           double radius, bool mask_target, bool random_context, std::uint64_t seed) {
            const json ck = json::parse(checkpoint);
            const Model model = Model::from_checkpoint(ck);
            std::uint64_t codebook_seed = 0;
            if (ck.contains("extra") && ck["extra"].contains("codebook_seed"))
                codebook_seed = ck["extra"]["codebook_seed"].get<std::uint64_t>();
            const SemanticEncoder enc(model.config().d_sem, codebook_seed);
            EmbedOptions o;
            o.radius = radius;
            o.mask_target = mask_target;
            o.random_context = random_context;
            o.context_seed = seed;
            const auto es = embed_entities(model, enc, dataset_from_lines(records), ids, o);
            ad::Matrix hf(static_cast<Eigen::Index>(es.size()), model.config().d);
            ad::Matrix hs(hf.rows(), hf.cols());
            for (std::size_t k = 0; k < es.size(); ++k) {
                hf.row(static_cast<Eigen::Index>(k)) = es[k].h_fused;
                hs.row(static_cast<Eigen::Index>(k)) = es[k].h_sem;
            }
            return py::make_tuple(hf, hs);
        },
        py::arg("checkpoint"), py::arg("records"), py::arg("ids"), py::arg("radius") = 100.0,
        py::arg("mask_target") = false, py::arg("random_context") = false, py::arg("seed") = 0);

    m.def(
        "probe_classify",
        [](const ad::Matrix& x, const std::vector<int>& y, std::uint64_t seed, int epochs, double lr) {
            ProbeOptions o;
            o.split_seed = seed;
            o.epochs = epochs;
            o.learning_rate = lr;
            return json(probe_classify(x, y, o)).dump();
        },
        py::arg("features"), py::arg("labels"), py::arg("seed") = 0, py::arg("epochs") = 200, py::arg("lr") = 1e-2);
    m.def("macro_f1", &macro_f1);
    m.def("weighted_f1", &weighted_f1);

    m.def(
        "relcheck",
        [](std::size_t pairs, std::uint64_t seed) {
            const auto r = oracle::run_agreement(pairs, seed);
            return json{{"pairs", r.pairs}, {"agreements", r.agreements}, {"symmetric", r.symmetric}, {"ok", r.all_ok()}}
                .dump();
        },
        py::arg("pairs") = 1000, py::arg("seed") = 0);
    m.def(
        "gradcheck",
        [](int windows, std::uint64_t seed) {
            GradcheckOptions o;
            o.windows = windows;
            o.seed = seed;
            py::gil_scoped_release release;
            return to_json(gradcheck(o)).dump();
        },
        py::arg("windows") = 20, py::arg("seed") = 0);
}
