#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "nara/errors.hpp"
#include "nara/probes.hpp"
#include "nara/relation_oracle.hpp"
#include "nara/synthcity.hpp"
#include "nara/train.hpp"
#include "nara/verification.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nara;

namespace {

constexpr int kExitFailedCheck = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c, bool out_required) {
    app->add_option("--config", c.config, "JSON config document")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "root seed");
    auto* o = app->add_option("--out", c.out, "output directory");
    if (out_required) o->required();
    app->add_option("--set", c.sets, "override, key=value (repeatable)")->allow_extra_args(false);
}

void reject_unknown(const json& given, const json& known, const std::string& prefix) {
    for (const auto& [key, value] : given.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (!known.contains(key)) throw ValidationError("config: unknown key " + path);
        if (known.at(key).is_object() && value.is_object()) reject_unknown(value, known.at(key), path);
    }
}

/// defaults <- config file <- --seed <- --set overrides
json resolve_config(json doc, const Common& c, const char* seed_key = "seed") {
    if (!c.config.empty()) {
        std::ifstream f(c.config);
        const json given = json::parse(f, nullptr, false);
        if (given.is_discarded() || !given.is_object()) throw ValidationError("config is not a JSON object: " + c.config);
        reject_unknown(given, doc, "");
        doc.merge_patch(given);
    }
    if (c.seed && seed_key) doc[seed_key] = *c.seed;
    for (const auto& s : c.sets) apply_override(doc, s);
    return doc;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

void require_file(const std::string& path, const char* what) {
    if (path.empty() || !fs::is_regular_file(path)) throw ValidationError(std::string("missing ") + what + " file: " + path);
}

int run_synth(const Common& c) {
    const json cfg = resolve_config(CityParams{}, c);
    const CityParams params = cfg.get<CityParams>();
    const City city = generate_city(params);
    fs::create_directories(c.out);
    save_dataset(city.data, (fs::path(c.out) / "dataset.jsonl").string());
    save_labels(city.labels, (fs::path(c.out) / "labels.jsonl").string());
    write_json(fs::path(c.out) / "config.json", {{"verb", "synth"}, {"config", cfg}});
    std::cout << "wrote " << city.data.entities.size() << " entities, " << city.labels.zone.size() << " zone labels, "
              << city.labels.speed.size() << " speed labels to " << c.out << '\n';
    return 0;
}

int run_pretrain(const Common& c, const std::string& data_path) {
    require_file(data_path, "dataset");
    // the train config loader handles strict keys, overrides and validation
    std::vector<std::string> sets;
    if (c.seed) sets.push_back("seed=" + std::to_string(*c.seed));
    sets.insert(sets.end(), c.sets.begin(), c.sets.end());
    const TrainConfig cfg =
        load_train_config(c.config.empty() ? std::nullopt : std::optional<std::string>(c.config), sets);
    const Dataset data = load_dataset(data_path);
    const auto result = train(data, cfg, {c.out, {}});
    std::cout << "trained " << cfg.epochs << " epochs, " << result.log.size() << " steps";
    if (!result.epoch_mean_loss.empty())
        std::cout << ", joint loss " << result.epoch_mean_loss.front() << " -> " << result.epoch_mean_loss.back();
    std::cout << "\ncheckpoint: " << (fs::path(c.out) / "checkpoint.json").string() << '\n';
    return 0;
}

std::vector<std::int64_t> parse_ids(const std::string& text) {
    std::vector<std::int64_t> ids;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            ids.push_back(std::stoll(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("bad id in --ids: " + item);
        }
    }
    return ids;
}

int run_embed(const Common& c, const std::string& ckpt_path, const std::string& data_path, const std::string& ids_text) {
    require_file(ckpt_path, "checkpoint");
    require_file(data_path, "dataset");
    const EmbedOptions d;
    const json cfg = resolve_config({{"radius", d.radius},
                                     {"mask_target", d.mask_target},
                                     {"random_context", d.random_context},
                                     {"frame_size", d.frame_size},
                                     {"seed", d.context_seed}},
                                    c);
    EmbedOptions opts;
    opts.radius = cfg.at("radius").get<double>();
    opts.mask_target = cfg.at("mask_target").get<bool>();
    opts.random_context = cfg.at("random_context").get<bool>();
    opts.frame_size = cfg.at("frame_size").get<double>();
    opts.context_seed = cfg.at("seed").get<std::uint64_t>();

    std::ifstream f(ckpt_path);
    const json ckpt = json::parse(f, nullptr, false);
    if (ckpt.is_discarded()) throw ParseError("checkpoint is not valid JSON: " + ckpt_path);
    const Model model = Model::from_checkpoint(ckpt);
    std::uint64_t codebook_seed = 0;
    if (ckpt.contains("extra") && ckpt.at("extra").contains("codebook_seed"))
        codebook_seed = ckpt.at("extra").at("codebook_seed").get<std::uint64_t>();
    const SemanticEncoder encoder(model.config().d_sem, codebook_seed);

    const Dataset data = load_dataset(data_path);
    std::vector<std::int64_t> ids = parse_ids(ids_text);
    if (ids.empty())
        for (const auto& e : data.entities) ids.push_back(e.id);
    const std::string before = checkpoint_hash(model);
    const auto embeddings = embed_entities(model, encoder, data, ids, opts);
    if (checkpoint_hash(model) != before) throw NumericError("encoder parameters changed during embedding");

    fs::create_directories(c.out);
    save_embeddings(embeddings, (fs::path(c.out) / "embeddings.jsonl").string());
    write_json(fs::path(c.out) / "config.json",
               {{"verb", "embed"}, {"config", cfg}, {"checkpoint", ckpt_path}, {"checkpoint_hash", before},
                {"data", data_path}, {"count", embeddings.size()}});
    std::cout << "embedded " << embeddings.size() << " entities to " << (fs::path(c.out) / "embeddings.jsonl").string()
              << '\n';
    return 0;
}

json probe_defaults() {
    const ProbeOptions p;
    return {{"learning_rate", p.learning_rate}, {"epochs", p.epochs}, {"seed", p.split_seed}};
}

ProbeOptions probe_options(const json& cfg) {
    ProbeOptions p;
    p.learning_rate = cfg.at("learning_rate").get<double>();
    p.epochs = cfg.at("epochs").get<int>();
    p.split_seed = cfg.at("seed").get<std::uint64_t>();
    if (!(p.learning_rate > 0) || p.epochs < 1) throw ValidationError("probe learning_rate and epochs must be positive");
    return p;
}

void emit_metrics(const Common& c, const json& report) {
    std::cout << report.dump(2) << '\n';
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_json(fs::path(c.out) / "metrics.json", report);
    }
}

int run_probe_classify(const Common& c, const std::string& emb_path, const std::string& labels_path) {
    require_file(emb_path, "embeddings");
    require_file(labels_path, "labels");
    const json cfg = resolve_config(probe_defaults(), c);
    const auto embeddings = load_embeddings(emb_path);
    const LatentLabels labels = load_labels(labels_path);
    std::vector<const ContextualEmbedding*> rows;
    std::vector<int> y;
    for (const auto& e : embeddings) {
        if (auto it = labels.zone.find(e.id); it != labels.zone.end()) {
            rows.push_back(&e);
            y.push_back(it->second);
        }
    }
    if (rows.empty()) throw ValidationError("no embedded entity has a zone label");
    const auto d_f = rows.front()->h_fused.size(), d_s = rows.front()->h_sem.size();
    ad::Matrix x(static_cast<Eigen::Index>(rows.size()), d_f + d_s);
    for (std::size_t k = 0; k < rows.size(); ++k) x.row(static_cast<Eigen::Index>(k)) << rows[k]->h_fused, rows[k]->h_sem;
    const auto m = probe_classify(x, y, probe_options(cfg));
    emit_metrics(c, {{"verb", "probe-classify"}, {"config", cfg}, {"embeddings", emb_path}, {"metrics", m}});
    return 0;
}

int run_probe_regress(const Common& c, const std::string& emb_path, const std::string& labels_path,
                      const std::string& data_path) {
    require_file(emb_path, "embeddings");
    require_file(labels_path, "labels");
    require_file(data_path, "dataset");
    json defaults = probe_defaults();
    defaults["neighbor_mean_feature"] = false;
    defaults["neighbor_radius"] = 100.0;
    const json cfg = resolve_config(defaults, c);
    const auto embeddings = load_embeddings(emb_path);
    const LatentLabels labels = load_labels(labels_path);
    const Dataset data = load_dataset(data_path);
    const RoadTable roads = pool_roads(data, embeddings, labels.speed, cfg.at("neighbor_radius").get<double>());
    const bool nb = cfg.at("neighbor_mean_feature").get<bool>();
    const auto m = probe_regress(roads.pooled, roads.speed, nb ? &roads.neighbors : nullptr, probe_options(cfg));
    emit_metrics(c, {{"verb", "probe-regress"},
                     {"config", cfg},
                     {"embeddings", emb_path},
                     {"roads", roads.road_ids.size()},
                     {"metrics", m}});
    return 0;
}

int run_gradcheck(const Common& c) {
    const GradcheckOptions d;
    const json cfg = resolve_config({{"windows", d.windows},
                                     {"min_entities", d.min_entities},
                                     {"max_entities", d.max_entities},
                                     {"per_tensor", d.per_tensor},
                                     {"seed", d.seed},
                                     {"model", d.model},
                                     {"loss", d.loss}},
                                    c);
    GradcheckOptions o;
    o.windows = cfg.at("windows").get<int>();
    o.min_entities = cfg.at("min_entities").get<int>();
    o.max_entities = cfg.at("max_entities").get<int>();
    o.per_tensor = cfg.at("per_tensor").get<std::size_t>();
    o.seed = cfg.at("seed").get<std::uint64_t>();
    o.model = cfg.at("model").get<ModelConfig>();
    o.loss = cfg.at("loss").get<LossConfig>();
    o.model.validate();
    o.loss.validate();
    if (o.windows < 1 || o.min_entities < 2 || o.max_entities < o.min_entities)
        throw ValidationError("gradcheck needs windows >= 1 and 2 <= min_entities <= max_entities");

    const auto checks = gradcheck(o);
    bool ok = true;
    std::cout << std::left << std::setw(8) << "loss" << std::setw(16) << "max_rel_error" << std::setw(16)
              << "max_abs_error" << "checked\n";
    for (const auto& t : checks) {
        ok = ok && t.max_rel_error < 1e-4;
        std::cout << std::setw(8) << t.term << std::setw(16) << t.max_rel_error << std::setw(16) << t.max_abs_error
                  << t.checked << '\n';
    }
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_json(fs::path(c.out) / "gradcheck.json", {{"config", cfg}, {"terms", to_json(checks)}, {"ok", ok}});
    }
    return ok ? 0 : kExitFailedCheck;
}

int run_relcheck(const Common& c) {
    const json cfg = resolve_config({{"pairs", 1000}, {"seed", 0}, {"grid", 6}}, c);
    const auto pairs = cfg.at("pairs").get<std::size_t>();
    const int grid = cfg.at("grid").get<int>();
    if (pairs < 1 || grid < 2) throw ValidationError("relcheck needs pairs >= 1 and grid >= 2");
    const auto r = oracle::run_agreement(pairs, cfg.at("seed").get<std::uint64_t>(), grid);
    const json report{{"config", cfg},
                      {"pairs", r.pairs},
                      {"agreements", r.agreements},
                      {"symmetric", r.symmetric},
                      {"agreement_rate", r.agreement_rate()},
                      {"disagreements", r.disagreements}};
    std::cout << report.dump(2) << '\n';
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_json(fs::path(c.out) / "relcheck.json", report);
    }
    return r.all_ok() ? 0 : kExitFailedCheck;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nara: relational geoentity representation learning"};
    app.require_subcommand(1, 1);

    Common synth_c, pre_c, emb_c, cls_c, reg_c, grad_c, rel_c;
    std::string data_path, ckpt_path, ids_text, emb_path, labels_path;

    auto* synth = app.add_subcommand("synth", "generate a synthetic city and its labels");
    add_common(synth, synth_c, true);

    auto* pretrain = app.add_subcommand("pretrain", "pretrain the encoder on a dataset");
    add_common(pretrain, pre_c, true);
    pretrain->add_option("--data", data_path, "dataset (line-delimited JSON)")->required();

    auto* embed = app.add_subcommand("embed", "export contextual embeddings from a frozen checkpoint");
    add_common(embed, emb_c, true);
    embed->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    embed->add_option("--data", data_path, "dataset file")->required();
    embed->add_option("--ids", ids_text, "comma-separated entity ids (default: all)");

    auto* cls = app.add_subcommand("probe-classify", "zone probe on exported embeddings");
    add_common(cls, cls_c, false);
    cls->add_option("--embeddings", emb_path, "embeddings file")->required();
    cls->add_option("--labels", labels_path, "labels file")->required();

    auto* reg = app.add_subcommand("probe-regress", "road speed probe on exported embeddings");
    add_common(reg, reg_c, false);
    reg->add_option("--embeddings", emb_path, "embeddings file")->required();
    reg->add_option("--labels", labels_path, "labels file")->required();
    reg->add_option("--data", data_path, "dataset file (road grouping)")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
    add_common(grad, grad_c, false);
    auto* rel = app.add_subcommand("relcheck", "topology predicates against the rasterized oracle");
    add_common(rel, rel_c, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return run_synth(synth_c);
        if (pretrain->parsed()) return run_pretrain(pre_c, data_path);
        if (embed->parsed()) return run_embed(emb_c, ckpt_path, data_path, ids_text);
        if (cls->parsed()) return run_probe_classify(cls_c, emb_path, labels_path);
        if (reg->parsed()) return run_probe_regress(reg_c, emb_path, labels_path, data_path);
        if (grad->parsed()) return run_gradcheck(grad_c);
        if (rel->parsed()) return run_relcheck(rel_c);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
