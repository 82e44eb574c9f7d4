#include "nara/verification.hpp"

#include <algorithm>

namespace nara {

std::vector<Geoentity> random_scene(Rng& rng, int n) {
    static const char* vocab[] = {"cafe", "shop", "park", "school", "road", "bank", "house", "bar", "clinic"};
    const auto tokens = [&] {
        TokenBag t{vocab[uniform_index(rng, 9)], vocab[uniform_index(rng, 9)]};
        std::sort(t.begin(), t.end());
        return t;
    };
    std::vector<Geoentity> es;
    std::int64_t id = 1;
    const double bx = uniform(rng, 50, 150), by = uniform(rng, 50, 150);
    es.push_back({id++, std::nullopt, tokens(), Geometry::rectangle(bx, by, bx + 40, by + 30)});
    es.push_back({id++, 900, tokens(), Geometry::polyline({{bx - 40, by - 10}, {bx + 30, by - 10}})});
    es.push_back({id++, 900, tokens(), Geometry::polyline({{bx + 30, by - 10}, {bx + 120, by - 12}})});
    while (static_cast<int>(es.size()) < n) {
        const int k = static_cast<int>(es.size());
        if (k % 4 == 2 || k % 4 == 3) {
            es.push_back({id++, std::nullopt, tokens(),
                          Geometry::point({bx + uniform(rng, 2, 38), by + uniform(rng, 2, 28)})});
        } else if (k % 4 == 1) {
            const double x = bx + uniform(rng, -40, 100), y = by - uniform(rng, 25, 45);
            es.push_back({id++, std::nullopt, tokens(), Geometry::rectangle(x, y - 10, x + 12, y)});
        } else {
            es.push_back({id++, std::nullopt, tokens(),
                          Geometry::point({bx + uniform(rng, 50, 80), by + uniform(rng, 45, 75)})});
        }
    }
    return es;
}

SceneSample random_sample(Rng& rng, int n, const SemanticEncoder& enc, const LossConfig& cfg, double mask_ratio) {
    const Dataset data = make_dataset(random_scene(rng, n));
    SpatialWindow w;
    w.bounds = {data.extent.x_min, data.extent.y_min, data.extent.x_min + 500, data.extent.y_min + 500};
    for (std::size_t k = 0; k < data.entities.size(); ++k) w.members.push_back(k);
    SceneSample s;
    s.ctx = std::make_unique<WindowContext>(make_window_context(w, data));
    const WindowFrame frame{w.center(), w.size()};
    auto masked = select_masks(s.ctx->size(), mask_ratio, rng);
    auto geo = sample_geo_pairs(*s.ctx, 32, 16, rng);
    auto glob = sample_global_pairs(*s.ctx, 64, rng);
    s.sample = make_window_sample(*s.ctx, encode_window(s.ctx->entities, frame, enc, masked), geo, glob, cfg);
    return s;
}

std::vector<TermCheck> gradcheck(const GradcheckOptions& opts) {
    Model model(opts.model, opts.seed);
    const SemanticEncoder enc(opts.model.d_sem, opts.seed);
    Rng rng = make_rng(opts.seed, "gradcheck-scenes");
    std::vector<ad::Tensor> params;
    for (std::size_t k = 0; k < model.params().size(); ++k) params.push_back(model.params().tensor(k));

    std::vector<TermCheck> out;
    for (const char* name : kLossTerms) out.push_back({name});
    for (int w = 0; w < opts.windows; ++w) {
        const int span = opts.max_entities - opts.min_entities + 1;
        const int n = opts.min_entities + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(span)));
        SceneSample scene = random_sample(rng, n, enc, opts.loss);
        const std::vector<WindowSample> batch{std::move(scene.sample)};
        for (std::size_t term = 0; term < out.size(); ++term) {
            LossConfig c = opts.loss;
            if (term < 4) {
                c.alpha_mgsm = term == 0 ? opts.loss.alpha_mgsm : 0.0;
                c.alpha_geo = term == 1 ? opts.loss.alpha_geo : 0.0;
                c.alpha_acc = term == 2 ? opts.loss.alpha_acc : 0.0;
                c.alpha_rsr = term == 3 ? opts.loss.alpha_rsr : 0.0;
            }
            ad::ParamCheckOptions po;
            po.per_tensor = opts.per_tensor;
            po.seed = derive_seed(opts.seed, "gradcheck-coords", static_cast<std::uint64_t>(w), term);
            const auto r = ad::check_param_gradients([&] { return batch_loss(model, batch, c).total; }, params, po);
            TermCheck& t = out[term];
            t.max_rel_error = std::max(t.max_rel_error, r.max_rel_error);
            t.max_abs_error = std::max(t.max_abs_error, r.max_abs_error);
            t.checked += r.checked;
            t.skipped_nonsmooth += r.skipped_nonsmooth;
        }
    }
    return out;
}

nlohmann::json to_json(const std::vector<TermCheck>& checks) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& t : checks) {
        j.push_back({{"term", t.term},
                     {"max_rel_error", t.max_rel_error},
                     {"max_abs_error", t.max_abs_error},
                     {"checked", t.checked},
                     {"skipped_nonsmooth", t.skipped_nonsmooth}});
    }
    return j;
}

}  // namespace nara
