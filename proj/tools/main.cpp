// bookrec: ingest, profile, split, train, evaluate, ablate, and query Top-N
// book recommenders over a heterogeneous book graph.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "bookrec/analytics.hpp"
#include "bookrec/classic.hpp"
#include "bookrec/eval.hpp"
#include "bookrec/io.hpp"
#include "bookrec/neural.hpp"

namespace fs = std::filesystem;
using namespace bookrec;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitLeakage = 3;

// Flat "model.*" / "split.*" / "eval.*" / "features.*" configuration namespace.
// File values first, then --set overrides.
class FlatConfig {
public:
    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        json j = json::parse(in);
        for (auto& [key, value] : j.items()) values_[key] = value;
    }

    void apply_overrides(const std::vector<std::string>& sets) {
        for (const auto& kv : sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("--set expects key=value, got: " + kv);
            const std::string key = kv.substr(0, eq);
            const std::string raw = kv.substr(eq + 1);
            json parsed = json::parse(raw, nullptr, false);
            values_[key] = parsed.is_discarded() ? json(raw) : parsed;
        }
    }

    template <typename T>
    T get(const std::string& key, T fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return it->get<T>();
    }

    const json& as_json() const { return values_; }

private:
    json values_ = json::object();
};

BookGraph load_data(const std::string& dir) {
    auto graph = io::load_graph(dir);
    auto report = validate_graph(graph);
    if (!report.ok()) {
        for (const auto& v : report.violations) std::cerr << "violation: " << v.detail << "\n";
        throw ValidationError("graph at " + dir + " has " +
                              std::to_string(report.violations.size()) + " violations");
    }
    return graph;
}

feat::FeatureOptions feature_options(const FlatConfig& cfg, bool relax) {
    feat::FeatureOptions opts;
    opts.tfidf_min_df = cfg.get("features.tfidf_min_df", opts.tfidf_min_df);
    opts.tfidf_max_df = cfg.get("features.tfidf_max_df", opts.tfidf_max_df);
    opts.tfidf_max_features = cfg.get("features.tfidf_max_features", opts.tfidf_max_features);
    opts.hash_dim = cfg.get("features.hash_dim", opts.hash_dim);
    opts.embedding_file = cfg.get("features.embedding_file", std::string{});
    opts.relax_df_bounds = relax || cfg.get("features.relax_df_bounds", false);
    return opts;
}

rec::AblationFlags flags_from_config(const FlatConfig& cfg) {
    rec::AblationFlags flags;
    flags.interaction = cfg.get("model.use_interaction", true);
    flags.side = cfg.get("model.use_side", true);
    flags.relations = cfg.get("model.use_relations", true);
    return flags;
}

rec::TowerConfig tower_config(const FlatConfig& cfg, uint64_t seed) {
    rec::TowerConfig c;
    c.id_emb_dim = cfg.get("model.id_emb_dim", c.id_emb_dim);
    c.text_proj_dim = cfg.get("model.text_proj_dim", c.text_proj_dim);
    c.out_dim = cfg.get("model.out_dim", c.out_dim);
    c.hidden_dim = cfg.get("model.hidden_dim", c.hidden_dim);
    c.mlp_layers = cfg.get("model.mlp_layers", c.mlp_layers);
    c.dropout = cfg.get("model.dropout", c.dropout);
    c.max_history = cfg.get("model.max_history", c.max_history);
    c.batch_size = cfg.get("model.batch_size", c.batch_size);
    c.max_epochs = cfg.get("model.max_epochs", c.max_epochs);
    c.lr = cfg.get("model.lr", c.lr);
    c.weight_decay = cfg.get("model.weight_decay", c.weight_decay);
    c.patience = cfg.get("model.patience", c.patience);
    c.temperature = cfg.get("model.temperature", c.temperature);
    c.layer_norm = cfg.get("model.layer_norm", c.layer_norm);
    c.seed = seed;
    return c;
}

rec::HgnnConfig hgnn_config(const FlatConfig& cfg, uint64_t seed) {
    rec::HgnnConfig c;
    c.dim = cfg.get("model.dim", c.dim);
    c.layers = cfg.get("model.layers", c.layers);
    c.dropout = cfg.get("model.dropout", c.dropout);
    c.lr = cfg.get("model.lr", c.lr);
    c.max_epochs = cfg.get("model.max_epochs", c.max_epochs);
    c.batch = cfg.get("model.batch", c.batch);
    c.patience = cfg.get("model.patience", c.patience);
    c.seed = seed;
    c.flags = flags_from_config(cfg);
    return c;
}

const std::vector<std::string> kModelNames = {
    "popularity", "category_pop", "user_cf",  "item_cf",  "als",      "explicit_mf",
    "content",    "hybrid_warp",  "lightgcn", "hgnn",     "two_tower"};

bool needs_features(const std::string& model) {
    return model == "content" || model == "hybrid_warp" || model == "two_tower";
}

std::unique_ptr<rec::Recommender> fit_by_name(const std::string& model, const BookGraph& graph,
                                              const ingest::InteractionSplit& split,
                                              const FlatConfig& cfg, uint64_t seed,
                                              const feat::BookFeatures* features) {
    const int32_t num_users = graph.num_users();
    const int32_t num_books = graph.num_books();
    const auto& train = split.train;

    if (model == "popularity") return rec::fit_popularity(train, num_users, num_books);
    if (model == "category_pop") return rec::fit_category_popularity(train, graph);
    if (model == "user_cf")
        return rec::fit_user_cf(train, num_users, num_books, cfg.get("model.k", 50));
    if (model == "item_cf")
        return rec::fit_item_cf(train, num_users, num_books, cfg.get("model.k", 50));
    if (model == "als") {
        rec::AlsConfig c;
        c.dim = cfg.get("model.dim", c.dim);
        c.epochs = cfg.get("model.epochs", c.epochs);
        c.reg = cfg.get("model.reg", c.reg);
        c.alpha = cfg.get("model.alpha", c.alpha);
        c.seed = seed;
        return rec::fit_als(train, num_users, num_books, c);
    }
    if (model == "explicit_mf") {
        rec::ExplicitMfConfig c;
        c.dim = cfg.get("model.dim", c.dim);
        c.epochs = cfg.get("model.epochs", c.epochs);
        c.reg = cfg.get("model.reg", c.reg);
        c.lr = cfg.get("model.lr", c.lr);
        c.seed = seed;
        return rec::fit_explicit_mf(train, num_users, num_books, c);
    }
    if (model == "content") return rec::fit_content_based(train, *features, num_users, num_books);
    if (model == "hybrid_warp") {
        rec::WarpConfig c;
        c.dim = cfg.get("model.dim", c.dim);
        c.epochs = cfg.get("model.epochs", c.epochs);
        c.max_trials = cfg.get("model.max_trials", c.max_trials);
        c.margin = cfg.get("model.margin", c.margin);
        c.lr = cfg.get("model.lr", c.lr);
        c.seed = seed;
        return rec::fit_hybrid_warp(train, *features, num_users, num_books, c);
    }
    if (model == "lightgcn") {
        rec::LightGcnConfig c;
        c.dim = cfg.get("model.dim", c.dim);
        c.layers = cfg.get("model.layers", c.layers);
        c.lr = cfg.get("model.lr", c.lr);
        c.epochs = cfg.get("model.epochs", c.epochs);
        c.batch = cfg.get("model.batch", c.batch);
        c.reg = cfg.get("model.reg", c.reg);
        c.seed = seed;
        return rec::fit_lightgcn(train, num_users, num_books, c);
    }
    if (model == "hgnn") return rec::fit_hgnn(graph, train, split.valid, hgnn_config(cfg, seed));
    if (model == "two_tower")
        return rec::fit_two_tower(train, split.valid, graph, *features,
                                  tower_config(cfg, seed), flags_from_config(cfg));
    throw std::runtime_error("unknown model: " + model);
}

ev::EvalProtocol protocol_from_config(const FlatConfig& cfg) {
    ev::EvalProtocol protocol;
    protocol.cutoffs = cfg.get("eval.cutoffs", std::vector<int32_t>{5, 10, 50});
    return protocol;
}

void write_manifest(const fs::path& artifact, const std::string& command,
                    const FlatConfig& cfg, const json& extra) {
    json manifest{{"command", command},
                  {"config", cfg.as_json()},
                  {"config_digest", ev::digest_json(cfg.as_json())}};
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    std::ofstream out(artifact.string() + ".manifest.json");
    out << manifest.dump(2) << "\n";
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
    std::vector<uint64_t> seeds;
    std::stringstream ss(csv);
    std::string cell;
    while (std::getline(ss, cell, ',')) seeds.push_back(std::stoull(cell));
    if (seeds.empty()) throw std::runtime_error("--seeds must name at least one seed");
    return seeds;
}

struct SplitInputs {
    std::vector<Interaction> interactions;
    ingest::InteractionSplit split;
};

SplitInputs load_split_inputs(const BookGraph& graph, const std::string& split_path) {
    SplitInputs in;
    in.interactions = build_interactions(graph).interactions;
    in.split = io::load_split(split_path, in.interactions);
    return in;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Top-N book recommendation benchmark over a heterogeneous book graph"};
    app.require_subcommand(1);

    std::string raw_dir, data_dir, out_path, split_path, checkpoint, model_name = "popularity";
    std::string config_file, user_id, seeds_csv = "42", flags_csv = "side,relations,interaction";
    std::vector<std::string> overrides;
    int64_t violation_threshold = 0;
    int32_t top_n = 10, affinity_n = 10, hash_dim = 256;
    uint64_t seed = 42;
    double train_frac = 0.70, valid_frac = 0.15, test_frac = 0.15;
    bool relax_df = false;
    std::string json_out;

    auto add_config_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_file, "JSON config file (flat model.*/split.* keys)");
        cmd->add_option("--set", overrides, "config override key=value (repeatable)");
    };

    auto* cmd_ingest = app.add_subcommand("ingest", "transform raw record files into a graph");
    cmd_ingest->add_option("--raw", raw_dir, "directory of raw *.jsonl record files")
        ->required();
    cmd_ingest->add_option("--out", out_path, "output dataset directory")->required();
    cmd_ingest->add_option("--violation-threshold", violation_threshold,
                           "max tolerated graph violations");

    auto* cmd_validate = app.add_subcommand("validate", "check referential integrity");
    cmd_validate->add_option("--data", data_dir, "dataset directory")->required();

    auto* cmd_stats = app.add_subcommand("stats", "dataset profile tables");
    cmd_stats->add_option("--data", data_dir)->required();
    cmd_stats->add_option("--json", json_out, "also write the profile as JSON");
    cmd_stats->add_option("--top-affinity", affinity_n, "publisher affinity rows");

    auto* cmd_split = app.add_subcommand("split", "seeded train/valid/test split");
    cmd_split->add_option("--data", data_dir)->required();
    cmd_split->add_option("--out", out_path, "split JSON path")->required();
    cmd_split->add_option("--train", train_frac);
    cmd_split->add_option("--valid", valid_frac);
    cmd_split->add_option("--test", test_frac);
    cmd_split->add_option("--seed", seed);

    auto* cmd_train = app.add_subcommand("train", "fit a model and write a checkpoint");
    cmd_train->add_option("--data", data_dir)->required();
    cmd_train->add_option("--split", split_path)->required();
    cmd_train->add_option("--model", model_name)
        ->check(CLI::IsMember(kModelNames))
        ->required();
    cmd_train->add_option("--out", out_path, "checkpoint path")->required();
    cmd_train->add_option("--seed", seed);
    cmd_train->add_flag("--relax-df", relax_df, "fall back to unbounded tf-idf df limits");
    add_config_opts(cmd_train);

    auto* cmd_eval = app.add_subcommand("evaluate", "masked ranking evaluation");
    cmd_eval->add_option("--data", data_dir)->required();
    cmd_eval->add_option("--split", split_path)->required();
    cmd_eval->add_option("--checkpoint", checkpoint, "evaluate an existing checkpoint");
    cmd_eval->add_option("--model", model_name, "train+evaluate per seed instead")
        ->check(CLI::IsMember(kModelNames));
    cmd_eval->add_option("--seeds", seeds_csv, "comma-separated seeds (multi-run mean/std)");
    cmd_eval->add_option("--out", json_out, "write the report JSON here");
    cmd_eval->add_flag("--relax-df", relax_df);
    add_config_opts(cmd_eval);

    auto* cmd_ablate = app.add_subcommand("ablate", "signal-removal study (warm + cold)");
    cmd_ablate->add_option("--data", data_dir)->required();
    cmd_ablate->add_option("--split", split_path)->required();
    cmd_ablate->add_option("--model", model_name, "two_tower or hgnn")
        ->check(CLI::IsMember(std::vector<std::string>{"two_tower", "hgnn"}));
    cmd_ablate->add_option("--flags", flags_csv, "signals to remove one at a time");
    cmd_ablate->add_option("--seed", seed);
    cmd_ablate->add_option("--out", json_out, "write the ablation table JSON here");
    cmd_ablate->add_flag("--relax-df", relax_df);
    add_config_opts(cmd_ablate);

    auto* cmd_rec = app.add_subcommand("recommend", "Top-N books for one user");
    cmd_rec->add_option("--checkpoint", checkpoint)->required();
    cmd_rec->add_option("--data", data_dir)->required();
    cmd_rec->add_option("--split", split_path)->required();
    cmd_rec->add_option("--user", user_id, "external user id (USER000001 style)")->required();
    cmd_rec->add_option("--n", top_n);

    auto* cmd_export = app.add_subcommand("export-embeddings",
                                          "write item embeddings in the exchange format");
    cmd_export->add_option("--data", data_dir)->required();
    cmd_export->add_option("--checkpoint", checkpoint,
                           "export a trained model's item embeddings");
    cmd_export->add_option("--out", out_path)->required();
    cmd_export->add_option("--hash-dim", hash_dim,
                           "without a checkpoint: hashing-featurizer dimension");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // help text, success
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        FlatConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        cfg.apply_overrides(overrides);

        if (cmd_ingest->parsed()) {
            io::IngestOptions opts;
            opts.violation_threshold = violation_threshold;
            auto report = io::ingest_directory(raw_dir, out_path, opts);
            std::cout << report.to_json().dump(2) << "\n";
            if (report.violations > violation_threshold) {
                std::cerr << "validation failures above threshold (" << report.violations
                          << " > " << violation_threshold << ")\n";
                return kExitValidation;
            }
            return kExitOk;
        }

        if (cmd_validate->parsed()) {
            auto graph = io::load_graph(data_dir);
            auto report = validate_graph(graph);
            for (const auto& v : report.violations) std::cout << v.detail << "\n";
            std::cout << (report.ok() ? "valid" : "invalid") << ": "
                      << report.violations.size() << " violations\n";
            return report.ok() ? kExitOk : kExitValidation;
        }

        if (cmd_stats->parsed()) {
            auto graph = load_data(data_dir);
            auto profile = stats::compute_profile(graph);
            std::cout << profile.to_tables();
            auto affinity = stats::jaccard_affinity(graph, affinity_n);
            std::cout << stats::affinity_table(graph, affinity);
            if (!json_out.empty()) {
                json j = profile.to_json();
                json rows = json::array();
                for (const auto& r : affinity)
                    rows.push_back({{"publisher_a", graph.publishers()[r.publisher_a].ext_id},
                                    {"publisher_b", graph.publishers()[r.publisher_b].ext_id},
                                    {"shared_authors", r.shared_authors},
                                    {"jaccard", r.jaccard}});
                j["publisher_affinity"] = rows;
                std::ofstream out(json_out);
                out << j.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (cmd_split->parsed()) {
            auto graph = load_data(data_dir);
            auto interactions = build_interactions(graph).interactions;
            ingest::SplitSpec spec{train_frac, valid_frac, test_frac, seed};
            auto split = ingest::split_interactions(interactions, spec);
            io::write_split(out_path, spec, split);
            std::cout << "split sizes: train=" << split.train.size()
                      << " valid=" << split.valid.size() << " test=" << split.test.size()
                      << "\n";
            return kExitOk;
        }

        if (cmd_train->parsed()) {
            auto graph = load_data(data_dir);
            auto inputs = load_split_inputs(graph, split_path);
            std::optional<feat::BookFeatures> features;
            if (needs_features(model_name))
                features = feat::build_book_features(graph, inputs.split.train,
                                                     feature_options(cfg, relax_df));
            auto model = fit_by_name(model_name, graph, inputs.split, cfg, seed,
                                     features ? &*features : nullptr);
            model->save(out_path);
            write_manifest(out_path, "train", cfg,
                           {{"model", model_name},
                            {"seed", seed},
                            {"model_config", model->config()}});
            std::cout << "trained " << model_name << " -> " << out_path << "\n";
            return kExitOk;
        }

        if (cmd_eval->parsed()) {
            auto graph = load_data(data_dir);
            auto inputs = load_split_inputs(graph, split_path);
            auto protocol = protocol_from_config(cfg);

            json out_report;
            if (!checkpoint.empty()) {
                auto model = rec::load_recommender(checkpoint);
                auto report =
                    ev::evaluate_model(*model, inputs.split.train, inputs.split.test, protocol);
                report.config_digest = ev::digest_json(cfg.as_json());
                std::cout << report.to_table() << "\n";
                out_report = report.to_json();
            } else {
                std::optional<feat::BookFeatures> features;
                if (needs_features(model_name))
                    features = feat::build_book_features(graph, inputs.split.train,
                                                         feature_options(cfg, relax_df));
                std::vector<ev::RankingReport> reports;
                for (uint64_t s : parse_seeds(seeds_csv)) {
                    auto model = fit_by_name(model_name, graph, inputs.split, cfg, s,
                                             features ? &*features : nullptr);
                    auto report = ev::evaluate_model(*model, inputs.split.train,
                                                     inputs.split.test, protocol);
                    report.seed = s;
                    report.config_digest = ev::digest_json(cfg.as_json());
                    std::cout << report.to_table() << "\n";
                    reports.push_back(std::move(report));
                }
                auto agg = ev::aggregate_reports(std::move(reports));
                if (agg.per_seed.size() > 1) std::cout << "mean:   " << agg.mean.to_table() << "\n";
                out_report = agg.to_json();
            }
            if (!json_out.empty()) {
                std::ofstream out(json_out);
                out << out_report.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (cmd_ablate->parsed()) {
            auto graph = load_data(data_dir);
            auto inputs = load_split_inputs(graph, split_path);
            auto protocol = protocol_from_config(cfg);

            std::vector<std::string> flag_list;
            {
                std::stringstream ss(flags_csv);
                std::string cell;
                while (std::getline(ss, cell, ','))
                    if (!cell.empty()) flag_list.push_back(cell);
            }

            std::optional<feat::BookFeatures> features;
            if (model_name == "two_tower")
                features = feat::build_book_features(graph, inputs.split.train,
                                                     feature_options(cfg, relax_df));

            ev::AblationFitFn fit = [&](const rec::AblationFlags& flags) {
                if (model_name == "two_tower")
                    return rec::fit_two_tower(inputs.split.train, inputs.split.valid, graph,
                                              *features, tower_config(cfg, seed), flags);
                auto hc = hgnn_config(cfg, seed);
                hc.flags = flags;
                return rec::fit_hgnn(graph, inputs.split.train, inputs.split.valid, hc);
            };
            auto rows = ev::run_ablation(fit, flag_list, inputs.split, protocol);
            std::cout << ev::ablation_table(rows);
            if (!json_out.empty()) {
                json j = json::array();
                for (const auto& row : rows)
                    j.push_back({{"setting", row.setting},
                                 {"interaction", row.flags.interaction},
                                 {"side", row.flags.side},
                                 {"relations", row.flags.relations},
                                 {"warm", row.warm.to_json()},
                                 {"cold", row.cold.to_json()}});
                std::ofstream out(json_out);
                out << j.dump(2) << "\n";
            }
            return kExitOk;
        }

        if (cmd_rec->parsed()) {
            auto graph = load_data(data_dir);
            auto inputs = load_split_inputs(graph, split_path);
            const int32_t user = graph.index_of(EntityKind::User, user_id);
            if (user < 0) {
                std::cerr << "unknown user id: " << user_id << "\n";
                return kExitUsage;
            }
            auto model = rec::load_recommender(checkpoint);
            if (model->num_books() != graph.num_books() ||
                model->num_users() != graph.num_users()) {
                std::cerr << "checkpoint does not match this dataset (" << model->num_users()
                          << "x" << model->num_books() << " vs " << graph.num_users() << "x"
                          << graph.num_books() << ")\n";
                return kExitUsage;
            }

            rec::BookMask mask(graph.num_books());
            for (const auto& it : inputs.split.train)
                if (it.user == user) mask.exclude(it.book);
            auto top = model->rank(user, mask, top_n);
            if (top.empty()) {
                std::cout << "no candidates: the user's training history covers the catalog\n";
                return kExitOk;
            }
            for (size_t r = 0; r < top.size(); ++r) {
                const auto& book = graph.books()[top[r].book];
                std::cout << (r + 1) << ". " << book.title << " [" << book.ext_id << "] ("
                          << top[r].score << ")\n";
            }
            return kExitOk;
        }

        if (cmd_export->parsed()) {
            auto graph = load_data(data_dir);
            if (!checkpoint.empty()) {
                auto ckpt = rec::read_checkpoint(checkpoint);
                auto it = ckpt.tensors.find("item_emb");
                if (it == ckpt.tensors.end()) it = ckpt.tensors.find("item_factors");
                if (it == ckpt.tensors.end())
                    throw std::runtime_error(
                        "checkpoint carries no item embedding tensor to export");
                const auto& tensor = it->second;
                const int32_t dim = static_cast<int32_t>(tensor.cols());
                std::vector<std::vector<float>> rows(tensor.rows());
                for (int64_t r = 0; r < tensor.rows(); ++r) {
                    rows[r].resize(dim);
                    for (int32_t c = 0; c < dim; ++c)
                        rows[r][c] = static_cast<float>(tensor.data[r * dim + c]);
                }
                feat::write_embeddings(out_path, graph, rows, dim);
            } else {
                auto table = feat::hashing_embeddings(graph, hash_dim);
                std::vector<std::vector<float>> rows(graph.num_books());
                for (int32_t b = 0; b < graph.num_books(); ++b) rows[b] = table.get(b);
                feat::write_embeddings(out_path, graph, rows, table.dim);
            }
            std::cout << "wrote " << out_path << "\n";
            return kExitOk;
        }
    } catch (const LeakageError& e) {
        std::cerr << "leakage guard: " << e.what() << "\n";
        return kExitLeakage;
    } catch (const ValidationError& e) {
        std::cerr << "data validation: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
