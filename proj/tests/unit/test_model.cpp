#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "doctest.h"
#include "nara/errors.hpp"
#include "nara/model.hpp"

using namespace nara;
using ad::Index;
using ad::Matrix;
using ad::Tensor;

namespace {

ModelConfig small_config() {
    ModelConfig c;
    c.d = 8;
    c.d_ff = 12;
    c.layers = 2;
    c.heads = 2;
    c.dropout = 0.0;
    c.d_sem = 16;
    return c;
}

std::vector<Geoentity> random_entities(Rng& rng, int n) {
    static const char* vocab[] = {"cafe", "shop", "park", "school", "road", "bank", "house", "bar"};
    std::vector<Geoentity> out;
    for (int k = 0; k < n; ++k) {
        const double x = uniform(rng, 0, 400), y = uniform(rng, 0, 400);
        Geometry g = k % 3 == 0   ? Geometry::point({x, y})
                     : k % 3 == 1 ? Geometry::polyline({{x, y}, {x + uniform(rng, 5, 60), y + uniform(rng, -30, 30)}})
                                  : Geometry::rectangle(x, y, x + uniform(rng, 5, 30), y + uniform(rng, 5, 30));
        TokenBag t{vocab[uniform_index(rng, 8)], vocab[uniform_index(rng, 8)]};
        std::sort(t.begin(), t.end());
        out.push_back(Geoentity{k, std::nullopt, t, g});
    }
    return out;
}

const WindowFrame kFrame{{250, 250}, 500};

bool same(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

TEST_CASE("parameter inventory and initialization") {
    const Model m(ModelConfig{}, 1);
    const auto& p = m.params();
    CHECK(p.at("proj_sem.weight").rows() == 64);
    CHECK(p.at("proj_sem.weight").cols() == 32);
    CHECK(p.at("proj_geom.weight").rows() == 21);
    CHECK(p.at("gate.0.weight").rows() == 64);
    CHECK(p.at("gate.1.bias").item() == -2.0);
    CHECK(p.at("mask_token").value().isZero());
    CHECK(p.contains("layers.2.w_v_sem"));
    CHECK(!p.contains("layers.3.w_q"));
    CHECK(p.at("rec.1.weight").cols() == 64);
    CHECK(p.at("topo.1.weight").cols() == 4);
    CHECK(p.at("dist.0.weight").rows() == 64);
    const double bound = 1.0 / std::sqrt(32.0);
    CHECK(p.at("layers.0.w_q").value().cwiseAbs().maxCoeff() <= bound);
    CHECK(ParamStore::exempt_from_decay("layers.0.sem.ln1.gain"));
    CHECK(ParamStore::exempt_from_decay("mask_token"));
    CHECK(!ParamStore::exempt_from_decay("layers.0.w_q"));

    ModelConfig bad;
    bad.heads = 5;
    CHECK_THROWS_AS(Model(bad, 1), ValidationError);
}

TEST_CASE("gate examples") {
    Model m(small_config(), 2);
    Rng rng = make_rng(2, "gate");
    Matrix s(3, 8), g(3, 8);
    for (Index k = 0; k < s.size(); ++k) {
        s.data()[k] = uniform(rng, -1, 1);
        g.data()[k] = uniform(rng, -1, 1);
    }
    // zeroed weights: alpha = sigmoid(-2)
    m.params().at("gate.0.weight").node()->value.setZero();
    m.params().at("gate.1.weight").node()->value.setZero();
    auto r = m.fuse(Tensor::constant(s), Tensor::constant(g));
    const double a = 1.0 / (1.0 + std::exp(2.0));
    for (Index i = 0; i < 3; ++i) CHECK(r.alpha.value()(i, 0) == doctest::Approx(a).epsilon(1e-15));
    CHECK(a == doctest::Approx(0.11920292202211755));

    // pre-activation 0: elementwise mean
    m.params().at("gate.1.bias").node()->value.setZero();
    r = m.fuse(Tensor::constant(s), Tensor::constant(g));
    CHECK((r.fused.value() - 0.5 * (s + g)).cwiseAbs().maxCoeff() < 1e-15);

    // equal inputs pass through for any alpha
    Model fresh(small_config(), 3);
    r = fresh.fuse(Tensor::constant(s), Tensor::constant(s));
    CHECK((r.fused.value() - s).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("identical pair attends uniformly and rows sum to one") {
    const Model m(small_config(), 4);
    const SemanticEncoder enc(16, 1);
    const Geoentity e{1, std::nullopt, {"cafe"}, Geometry::point({10, 10})};
    const auto out = m.forward(encode_window({e, e}, kFrame, enc));
    for (int h = 0; h < 2; ++h) {
        const Matrix& a = out.attention[0][static_cast<std::size_t>(h)].value();
        CHECK((a.array() - 0.5).abs().maxCoeff() < 1e-15);
    }
    Rng rng = make_rng(4, "rows");
    const auto ins = encode_window(random_entities(rng, 11), kFrame, enc, {1, 4});
    const auto o2 = m.forward(ins);
    CHECK(o2.attention.size() == 2);
    for (const auto& layer : o2.attention)
        for (const auto& a : layer) CHECK((a.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(o2.h_sem.rows() == 11);
    CHECK(o2.h_fused.cols() == 8);
    CHECK_THROWS_AS(m.forward(encode_window({e}, kFrame, enc)), ValidationError);
}

TEST_CASE("masked tokens never reach the outputs") {
    const Model m(small_config(), 5);
    const SemanticEncoder enc(16, 2);
    Rng rng = make_rng(5, "leak");
    for (int trial = 0; trial < 100; ++trial) {
        auto es = random_entities(rng, 6 + static_cast<int>(uniform_index(rng, 7)));
        std::vector<int> masked{0, static_cast<int>(es.size()) - 1};
        const auto a = m.forward(encode_window(es, kFrame, enc, masked));
        for (int k : masked) es[static_cast<std::size_t>(k)].tokens = {"zzz" + std::to_string(trial), "other"};
        const auto b = m.forward(encode_window(es, kFrame, enc, masked));
        CHECK(same(a.h_sem.value(), b.h_sem.value()));
        CHECK(same(a.h_fused.value(), b.h_fused.value()));
    }
}

TEST_CASE("permutation equivariance") {
    const Model m(small_config(), 6);
    const SemanticEncoder enc(16, 3);
    Rng rng = make_rng(6, "perm");
    const auto es = random_entities(rng, 9);
    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Geoentity> shuffled;
    for (std::size_t p : perm) shuffled.push_back(es[p]);
    // masked entity 2 sits wherever perm moved it
    const int moved = static_cast<int>(std::find(perm.begin(), perm.end(), std::size_t{2}) - perm.begin());
    const auto a = m.forward(encode_window(es, kFrame, enc, {2}));
    const auto b = m.forward(encode_window(shuffled, kFrame, enc, {moved}));
    for (std::size_t r = 0; r < 9; ++r) {
        CHECK((a.h_sem.value().row(static_cast<Index>(perm[r])) - b.h_sem.value().row(static_cast<Index>(r)))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
        CHECK((a.h_fused.value().row(static_cast<Index>(perm[r])) - b.h_fused.value().row(static_cast<Index>(r)))
                  .cwiseAbs()
                  .maxCoeff() < 1e-12);
    }
}

TEST_CASE("perturbing the semantic value projection changes only the semantic stream") {
    Model m(small_config(), 7);
    const SemanticEncoder enc(16, 4);
    Rng rng = make_rng(7, "wv");
    const auto in = encode_window(random_entities(rng, 8), kFrame, enc, {3});
    const auto a = m.forward(in);
    m.params().at("layers.0.w_v_sem").node()->value.array() += 0.1;
    m.params().at("layers.1.w_v_sem").node()->value.array() -= 0.05;
    const auto b = m.forward(in);
    CHECK(!same(a.h_sem.value(), b.h_sem.value()));
    CHECK(same(a.h_fused.value(), b.h_fused.value()));
    for (std::size_t l = 0; l < a.attention.size(); ++l)
        for (std::size_t h = 0; h < a.attention[l].size(); ++h)
            CHECK(same(a.attention[l][h].value(), b.attention[l][h].value()));
}

TEST_CASE("heads") {
    Model m(small_config(), 8);
    Matrix h(3, 8);
    h.setRandom();
    CHECK(m.reconstruct(Tensor::constant(h)).cols() == 16);
    m.params().at("rec.0.weight").node()->value.setZero();
    m.params().at("rec.1.weight").node()->value.setZero();
    const Matrix rec = m.reconstruct(Tensor::constant(h)).value();
    for (Index r = 0; r < 3; ++r) CHECK(same(rec.row(r), m.params().at("rec.1.bias").value()));

    h.row(2) = h.row(0);
    const Index i[] = {0, 2}, j[] = {2, 0};
    const auto p = m.predict_pair(Tensor::constant(h), i, j);
    CHECK(p.distance.value()(0, 0) == p.distance.value()(1, 0));
    CHECK(same(p.logits.value().row(0), p.logits.value().row(1)));
    CHECK(p.logits.cols() == 4);
}

TEST_CASE("reconstruction cosine gradients match finite differences") {
    Model m(small_config(), 9);
    const SemanticEncoder enc(16, 5);
    Rng rng = make_rng(9, "rec");
    const auto in = encode_window(random_entities(rng, 7), kFrame, enc, {1, 5});
    const Index rows[] = {1, 5};
    const auto f = [&] {
        const auto out = m.forward(in);
        const Tensor pred = ad::normalize_rows(m.reconstruct(ad::gather_rows(out.h_sem, rows)));
        const Tensor tgt = ad::normalize_rows(ad::gather_rows(Tensor::constant(in.sem), rows));
        return ad::scale(ad::sum(ad::mul(pred, tgt)), -1.0);
    };
    std::vector<Tensor> rec;
    for (const char* p : {"rec.0.weight", "rec.0.bias", "rec.1.weight", "rec.1.bias"}) rec.push_back(m.params().at(p));
    const auto r = ad::check_param_gradients(f, rec);
    INFO("checked " << r.checked << " skipped " << r.skipped_nonsmooth);
    CHECK(r.max_rel_error < 1e-4);
    CHECK(r.max_abs_error < 1e-8);
    CHECK(r.checked > 100);

    std::vector<Tensor> all;
    for (std::size_t k = 0; k < m.params().size(); ++k) all.push_back(m.params().tensor(k));
    ad::ParamCheckOptions opt;
    opt.per_tensor = 6;
    const auto r2 = ad::check_param_gradients(f, all, opt);
    CHECK(r2.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip is exact") {
    Model m(small_config(), 10);
    m.params().at("mask_token").node()->value.setConstant(0.1 + 1e-17);
    m.params().at("layers.1.fused.ffn.0.weight").node()->value(0, 0) = 1.0 / 3.0;
    const std::string path = "test_model_ckpt.json";
    m.save(path, {{"seeds", {{"root", 10}}}});
    const Model back = Model::load(path);
    std::remove(path.c_str());
    REQUIRE(back.params().size() == m.params().size());
    for (std::size_t k = 0; k < m.params().size(); ++k) {
        CHECK(back.params().path(k) == m.params().path(k));
        CHECK(same(back.params().tensor(k).value(), m.params().tensor(k).value()));
    }
    CHECK(back.config().d == 8);

    nlohmann::json broken = m.checkpoint();
    broken["params"]["rec.0.bias"]["shape"] = {2, 2};
    CHECK_THROWS_AS(Model::from_checkpoint(broken), ShapeError);
    broken = m.checkpoint();
    broken["params"].erase("rec.0.bias");
    CHECK_THROWS_AS(Model::from_checkpoint(broken), ParseError);

    const Model c = m.clone();
    CHECK(c.params().tensor(0).node() != m.params().tensor(0).node());
    CHECK(same(c.params().tensor(0).value(), m.params().tensor(0).value()));
}

TEST_CASE("dropout only in training mode") {
    ModelConfig cfg = small_config();
    cfg.dropout = 0.3;
    const Model m(cfg, 11);
    const SemanticEncoder enc(16, 6);
    Rng rng = make_rng(11, "drop");
    const auto in = encode_window(random_entities(rng, 6), kFrame, enc, {0});
    CHECK(same(m.forward(in).h_sem.value(), m.forward(in).h_sem.value()));
    Rng r1 = make_rng(1, "d"), r2 = make_rng(1, "d");
    const auto a = m.forward(in, true, &r1);
    const auto b = m.forward(in, true, &r2);
    CHECK(same(a.h_sem.value(), b.h_sem.value()));
    CHECK(!same(a.h_sem.value(), m.forward(in).h_sem.value()));
    CHECK_THROWS_AS(m.forward(in, true, nullptr), ValidationError);
}
