#include <cmath>
#include <filesystem>
#include <fstream>

#include "../support/scenes.hpp"
#include "doctest.h"
#include "nara/errors.hpp"
#include "nara/train.hpp"

using namespace nara;
using ad::Matrix;

namespace {

ParamStore scalar_store(const std::string& path, double theta, double grad) {
    ParamStore s;
    s.add(path, Matrix::Constant(1, 1, theta));
    s.zero_grad();
    s.tensor(0).mutable_grad()(0, 0) = grad;
    return s;
}

Dataset scattered_scenes(std::uint64_t seed, int scenes) {
    Rng rng = make_rng(seed, "test-scenes");
    std::vector<Geoentity> all;
    std::int64_t next_id = 1;
    for (int s = 0; s < scenes; ++s) {
        const double ox = 300.0 * (s % 3), oy = 300.0 * (s / 3);
        for (auto e : testing::random_scene(rng, 10)) {
            e.id = next_id++;
            if (e.parent_id) e.parent_id = 10000 + s;
            for (auto& p : e.geometry.coords) p = {p.x + ox, p.y + oy};
            all.push_back(std::move(e));
        }
    }
    return make_dataset(std::move(all));
}

TrainConfig small_config() {
    TrainConfig c;
    c.model.d = 8;
    c.model.d_ff = 16;
    c.model.layers = 1;
    c.model.heads = 2;
    c.model.d_sem = 16;
    c.epochs = 3;
    c.batch_windows = 2;
    c.n_random = 8;
    c.n_hard = 4;
    c.n_global = 16;
    c.learning_rate = 1e-3;
    return c;
}

bool same_params(const Model& a, const Model& b) {
    for (std::size_t k = 0; k < a.params().size(); ++k) {
        if (a.params().tensor(k).value() != b.params().tensor(k).value()) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("adamw closed-form steps") {
    SUBCASE("first step moves by about lr") {
        auto s = scalar_store("w.weight", 1.0, 1.0);
        AdamW opt;
        opt.step(s, 2e-4, 0.0);
        CHECK(s.tensor(0).value()(0, 0) == doctest::Approx(1.0 - 2e-4 / (1.0 + 1e-8)).epsilon(1e-15));
    }
    SUBCASE("decoupled decay with zero gradient") {
        auto s = scalar_store("w.weight", 1.0, 0.0);
        AdamW opt;
        opt.step(s, 2e-4, 0.01);
        CHECK(s.tensor(0).value()(0, 0) == doctest::Approx(1.0 - 2e-6).epsilon(1e-15));
    }
    SUBCASE("zero gradient and no decay leaves parameters unchanged") {
        auto s = scalar_store("w.weight", 0.37, 0.0);
        AdamW opt;
        for (int k = 0; k < 5; ++k) opt.step(s, 1e-2, 0.0);
        CHECK(s.tensor(0).value()(0, 0) == 0.37);
    }
    SUBCASE("exempt parameters do not decay") {
        for (const char* path : {"a.bias", "layers.0.sem.ln1.gain", "mask_token"}) {
            auto s = scalar_store(path, 1.0, 0.0);
            AdamW opt;
            opt.step(s, 2e-4, 0.5);
            CHECK(s.tensor(0).value()(0, 0) == 1.0);
        }
    }
    SUBCASE("repeated unit gradient keeps the step near lr") {
        auto s = scalar_store("w.weight", 1.0, 1.0);
        AdamW opt;
        for (int k = 0; k < 10; ++k) {
            s.tensor(0).mutable_grad()(0, 0) = 1.0;
            opt.step(s, 1e-3, 0.0);
        }
        CHECK(s.tensor(0).value()(0, 0) == doctest::Approx(1.0 - 1e-2).epsilon(1e-9));
        CHECK(opt.steps() == 10);
    }
    SUBCASE("non-finite gradient names the parameter and leaves values alone") {
        ParamStore s;
        s.add("ok.weight", Matrix::Ones(1, 2));
        s.add("bad.weight", Matrix::Ones(2, 2));
        s.zero_grad();
        s.at("bad.weight").mutable_grad()(1, 0) = std::nan("");
        AdamW opt;
        try {
            opt.step(s, 1e-3, 0.0);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
        }
        CHECK(s.at("ok.weight").value() == Matrix::Ones(1, 2));
    }
}

TEST_CASE("cosine schedule") {
    CHECK(lr_schedule(0, 100, 2e-4) == 2e-4);
    CHECK(lr_schedule(50, 100, 2e-4) == doctest::Approx(1e-4).epsilon(1e-14));
    CHECK(lr_schedule(99, 100, 2e-4) == doctest::Approx(2e-4 * 0.5 * (1 + std::cos(M_PI * 0.99))).epsilon(1e-14));
    for (int e = 1; e < 100; ++e) CHECK(lr_schedule(e, 100, 1.0) < lr_schedule(e - 1, 100, 1.0));
}

TEST_CASE("global norm clipping bound") {
    Rng rng = make_rng(3, "clip");
    for (int trial = 0; trial < 50; ++trial) {
        ParamStore s;
        s.add("a.weight", Matrix::Zero(3, 4));
        s.add("b.bias", Matrix::Zero(1, 5));
        s.zero_grad();
        const double scale = std::pow(10.0, uniform(rng, -3, 3));
        double sq = 0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            auto& g = s.tensor(k).mutable_grad();
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                g.data()[i] = scale * standard_normal(rng);
                sq += g.data()[i] * g.data()[i];
            }
        }
        const double before = clip_gradients(s, 1.0);
        CHECK(before == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
        CHECK(gradient_norm(s) <= 1.0 + 1e-12);
        if (before <= 1.0) CHECK(gradient_norm(s) == before);
    }
}

TEST_CASE("config documents and overrides") {
    TrainConfig c;
    nlohmann::json doc = c;
    apply_override(doc, "loss.alpha_rsr=10");
    apply_override(doc, "epochs=7");
    apply_override(doc, "model.d=16");
    const auto parsed = doc.get<TrainConfig>();
    CHECK(parsed.loss.alpha_rsr == 10.0);
    CHECK(parsed.epochs == 7);
    CHECK(parsed.model.d == 16);
    CHECK(parsed.learning_rate == c.learning_rate);

    CHECK_THROWS_AS(apply_override(doc, "loss.alpha_nope=1"), ValidationError);
    CHECK_THROWS_AS(apply_override(doc, "no_equals"), ValidationError);
    CHECK_THROWS_AS(nlohmann::json({{"lerning_rate", 1.0}}).get<TrainConfig>(), ValidationError);

    TrainConfig bad;
    bad.mask_ratio = 1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = TrainConfig{};
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    const auto dir = std::filesystem::temp_directory_path() / "nara_test_config";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "c.json") << R"({"epochs": 4, "loss": {"delta": 0.3}})";
    const auto loaded = load_train_config((dir / "c.json").string(), {"seed=9"});
    CHECK(loaded.epochs == 4);
    CHECK(loaded.loss.delta == 0.3);
    CHECK(loaded.loss.alpha_rsr == 50.0);
    CHECK(loaded.seed == 9);
    std::ofstream(dir / "bad.json") << R"({"loss": {"dleta": 0.3}})";
    CHECK_THROWS_AS(load_train_config((dir / "bad.json").string(), {}), ValidationError);
}

TEST_CASE("training is deterministic and writes artifacts") {
    const Dataset data = scattered_scenes(1, 6);
    TrainConfig cfg = small_config();
    const auto dir = std::filesystem::temp_directory_path() / "nara_test_train";
    std::filesystem::remove_all(dir);
    cfg.eval_every = 1;
    const auto a = train(data, cfg, {dir.string(), {}});
    const auto b = train(data, cfg);
    REQUIRE(a.log.size() == b.log.size());
    REQUIRE(!a.log.empty());
    for (std::size_t k = 0; k < a.log.size(); ++k) CHECK(to_json(a.log[k]).dump() == to_json(b.log[k]).dump());
    CHECK(same_params(a.model, b.model));
    CHECK(a.epoch_mean_loss.size() == 3);

    for (const auto& s : a.log) CHECK(std::isfinite(s.losses.l_total));
    CHECK(std::filesystem::exists(dir / "checkpoint.json"));
    CHECK(std::filesystem::exists(dir / "checkpoint_epoch_1.json"));
    CHECK(std::filesystem::exists(dir / "config.json"));
    std::ifstream log(dir / "train_log.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(log, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"epoch", "batch", "l_mgsm", "l_geo", "l_acc", "l_rsr", "l_total", "lr", "grad_norm"})
            CHECK(j.contains(key));
        ++lines;
    }
    CHECK(lines == a.log.size());

    const Model loaded = Model::load((dir / "checkpoint.json").string());
    CHECK(same_params(loaded, a.model));
    const auto ckpt = nlohmann::json::parse(std::ifstream(dir / "checkpoint.json"));
    CHECK(ckpt.at("extra").at("config").at("epochs") == 3);

    TrainConfig other = cfg;
    other.seed = 1;
    const auto c = train(data, other);
    CHECK(to_json(c.log.front()).dump() != to_json(a.log.front()).dump());
}

TEST_CASE("degenerate runs leave the initialization in place") {
    const Dataset data = scattered_scenes(2, 4);
    TrainConfig cfg = small_config();
    const Model init(cfg.model, cfg.seed);

    SUBCASE("zero epochs") {
        cfg.epochs = 0;
        const auto r = train(data, cfg);
        CHECK(r.log.empty());
        CHECK(r.model.checkpoint() == init.checkpoint());
    }
    SUBCASE("all loss weights zero") {
        cfg.loss.alpha_mgsm = cfg.loss.alpha_geo = cfg.loss.alpha_acc = cfg.loss.alpha_rsr = 0.0;
        const auto r = train(data, cfg);
        CHECK(!r.log.empty());
        CHECK(same_params(r.model, init));
        for (const auto& s : r.log) CHECK(s.grad_norm == 0.0);
    }
}

TEST_CASE("clipped steps respect the bound and loss goes down on a small city") {
    const Dataset data = scattered_scenes(4, 6);
    TrainConfig cfg = small_config();
    cfg.epochs = 80;
    cfg.learning_rate = 1e-2;
    cfg.grad_clip_norm = 0.5;
    const auto r = train(data, cfg, {"", [&](const StepLog& s) { CHECK(std::isfinite(s.grad_norm)); }});
    // single epochs are noisy (masks and pairs are redrawn), so compare 20-epoch means
    const auto avg = [&](std::size_t from) {
        double t = 0;
        for (std::size_t k = from; k < from + 20; ++k) t += r.epoch_mean_loss[k];
        return t / 20;
    };
    CHECK(avg(60) < avg(0));
}

TEST_CASE("a dataset without usable windows is rejected") {
    std::vector<Geoentity> one{{1, std::nullopt, {"a"}, Geometry::point({0, 0})}};
    CHECK_THROWS_AS(train(make_dataset(std::move(one)), small_config()), ValidationError);
}
