// Command-line front end: synth | train | eval | check | dump-correspondences.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "fewmatch/classifier.hpp"
#include "fewmatch/feature_io.hpp"
#include "fewmatch/hash.hpp"
#include "fewmatch/report.hpp"
#include "fewmatch/sampler.hpp"
#include "fewmatch/synthetic.hpp"
#include "fewmatch/trainer.hpp"
#include "verification.hpp"

namespace fs = std::filesystem;
using namespace fewmatch;

namespace {

struct CommonEpisodeFlags {
    int shot = 1;
    int queries = 1;
    std::uint64_t seed = 0;
    std::string split = "test";
};

std::uint64_t effective_seed(std::uint64_t configured) {
    if (const char* env = std::getenv("FEWMATCH_SEED")) {
        const auto forced = static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
        std::cerr << "note: FEWMATCH_SEED=" << forced << " overrides configured seed "
                  << configured << " (smoke-test hook)\n";
        return forced;
    }
    return configured;
}

// Hash of every setting that can change results (paths and worker counts are
// excluded on purpose: workers must not alter output bytes).
std::uint64_t hash_settings(const std::vector<std::pair<std::string, std::string>>& kv) {
    Fnv1a h;
    for (const auto& [k, v] : kv) {
        h.add(k);
        h.add(v);
    }
    return h.value;
}

MatcherSpec build_matcher_spec(const std::string& method, int tuple_len,
                               const std::string& tuple_mode, const std::string& aggregation,
                               double dtw_gamma) {
    MatcherSpec spec;
    spec.kind = matcher_kind_from_string(method);
    spec.tuple_len = tuple_len;
    if (tuple_mode == "ordered")
        spec.tuple_mode = TupleMode::ordered;
    else if (tuple_mode == "all")
        spec.tuple_mode = TupleMode::all;
    else
        throw UsageError("tuple mode must be 'ordered' or 'all'");
    if (aggregation == "single")
        spec.aggregation = Aggregation::single_average;
    else if (aggregation == "joint")
        spec.aggregation = Aggregation::joint;
    else
        throw UsageError("aggregation must be 'single' or 'joint'");
    spec.dtw_gamma = dtw_gamma;
    return spec;
}

int cmd_synth(const SyntheticSpec& spec, const std::string& out_dir) {
    const auto summary = generate_synthetic(spec, out_dir);
    std::cout << "dataset written to " << out_dir << "\n"
              << "classes: train=" << summary.train_classes << " val=" << summary.val_classes
              << " test=" << summary.test_classes << "\n"
              << "videos: " << summary.manifest.entries.size() << "\n"
              << "reversed pairs: " << summary.reversed_pairs.size() << "\n";
    for (const auto& [fwd, rev] : summary.reversed_pairs)
        std::cout << "  " << fwd << " <-> " << rev << " (reversed clip order)\n";
    return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& out_dir,
              const MatcherSpec& spec, const TrainConfig& config, bool identity_mode,
              bool allow_tau_only) {
    if (identity_mode && spec.kind != MatcherKind::linear && !allow_tau_only)
        throw UsageError(
            "no trainable parameters except temperature; pass --allow-tau-only to train "
            "tau alone");
    const Dataset ds = load_dataset(dataset_dir);
    if (!ds.has_split("val")) throw DataError("validation split required");

    const auto result = train(config, ds, spec,
                              identity_mode ? ProjectionMode::identity
                                            : ProjectionMode::learned);
    fs::create_directories(out_dir);
    save_train_checkpoint(fs::path(out_dir) / "checkpoint.fpp", result.best,
                          result.best.best_epoch);
    write_train_log(fs::path(out_dir) / "train_log.tsv", result.log);
    std::cout << "trained " << to_string(spec.kind) << " for " << result.log.size()
              << " epochs; best val accuracy " << format_double(result.best.best_val_accuracy)
              << " at epoch " << result.best.best_epoch << "\n"
              << "checkpoint: " << (fs::path(out_dir) / "checkpoint.fpp").string() << "\n";
    return 0;
}

fs::path with_way_suffix(const fs::path& base, int way, bool multi) {
    if (!multi) return base;
    fs::path p = base;
    const std::string stem = p.stem().string();
    const std::string ext = p.extension().string();
    p.replace_filename(stem + "_w" + std::to_string(way) + ext);
    return p;
}

int cmd_eval(const std::string& dataset_dir, const std::string& out_file,
             const std::string& method, MatcherSpec spec, const CommonEpisodeFlags& flags,
             const std::vector<int>& ways, int episode_count, int workers,
             const std::string& checkpoint, int clf_epochs, double clf_lr,
             std::uint64_t config_hash) {
    const Dataset ds = load_dataset(dataset_dir);

    ProjectionParams params;
    bool loaded = false;
    if (!checkpoint.empty()) {
        const auto ck = load_train_checkpoint(checkpoint);
        params = ck.params;
        if (spec.kind == MatcherKind::linear) spec.linear_weights = ck.linear_weights;
        loaded = true;
    }

    for (const int way : ways) {
        const auto episodes = build_fixed_test_episodes(ds, flags.split, way, flags.shot,
                                                        flags.queries, episode_count,
                                                        flags.seed);
        const std::size_t feature_dim = episodes.empty() ? 0 : episodes[0].feature_dim();
        const std::size_t input_dim = static_cast<std::size_t>(spec.tuple_len) * feature_dim;
        if (!loaded) params = identity_projection(input_dim);
        if (loaded && params.mode == ProjectionMode::learned && params.input_dim != input_dim)
            throw DataError("checkpoint input_dim " + std::to_string(params.input_dim) +
                            " does not match tuple_len*d = " + std::to_string(input_dim));
        if (spec.kind == MatcherKind::linear && spec.linear_weights.empty() &&
            !episodes.empty()) {
            const auto side = enumerate_tuples(static_cast<int>(episodes[0].clip_count()),
                                               spec.tuple_len, spec.tuple_mode)
                                  .size();
            spec.linear_weights.assign(side * side, 1.0 / static_cast<double>(side * side));
        }

        EvalOutcome outcome;
        if (method == "classifier") {
            outcome = evaluate_with(
                episodes,
                [&](const Episode& ep) {
                    const auto clf = fit_episode_classifier(ep, clf_epochs, clf_lr);
                    std::vector<ClassScores> scores;
                    scores.reserve(ep.queries.size());
                    for (const auto& q : ep.queries)
                        scores.push_back(classify_query(clf, q.features));
                    return scores;
                },
                workers);
        } else {
            outcome = evaluate(episodes, spec, params, workers);
        }

        RunHeader header;
        header.command = "eval";
        header.config_hash = config_hash;
        header.seed = flags.seed;
        header.episode_checksum = episode_list_checksum(episodes);
        header.extra = {"method=" + method,
                        "split=" + flags.split,
                        "way=" + std::to_string(way),
                        "shot=" + std::to_string(flags.shot),
                        "queries_per_class=" + std::to_string(flags.queries),
                        "episodes=" + std::to_string(episode_count)};
        const fs::path out_path = with_way_suffix(out_file, way, ways.size() > 1);
        write_results_tsv(out_path, header, outcome, way);
        std::cout << "method=" << method << " way=" << way << " shot=" << flags.shot
                  << " episodes=" << episode_count
                  << " accuracy=" << format_double(outcome.mean_accuracy)
                  << " ci95=" << format_double(outcome.ci95_halfwidth) << " -> "
                  << out_path.string() << "\n";
    }
    return 0;
}

int cmd_dump(const std::string& dataset_dir, const std::string& query_id,
             const std::vector<std::string>& support_ids, const std::string& checkpoint,
             const std::string& out_file) {
    const Dataset ds = load_dataset(dataset_dir);
    const FeatureSet& query = ds.feature(query_id);
    std::vector<FeatureSet> supports;
    for (const auto& id : support_ids) supports.push_back(ds.feature(id));
    ProjectionParams params = checkpoint.empty()
                                  ? identity_projection(query.d())
                                  : load_train_checkpoint(checkpoint).params;
    if (out_file.empty()) {
        write_correspondences_tsv(std::cout, query, supports, params);
    } else {
        std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open for writing: " + out_file);
        write_correspondences_tsv(out, query, supports, params);
    }
    return 0;
}

}  // namespace

// Flat key=value (or "key value") config file. Each line maps to --key value;
// flags given on the command line win. Returns the argument list with the
// config-derived options appended (program name excluded).
std::vector<std::string> args_with_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_file;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_file = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) config_file = args[i].substr(9);
    }
    if (config_file.empty()) return args;

    std::ifstream in(config_file);
    if (!in) throw UsageError("cannot open config file: " + config_file);
    std::string line;
    while (std::getline(in, line)) {
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        auto sep = line.find_first_of("= \t", first);
        if (sep == std::string::npos)
            throw UsageError("config line needs 'key=value': " + line);
        const std::string key = line.substr(first, sep - first);
        auto vstart = line.find_first_not_of("= \t", sep);
        std::string value = vstart == std::string::npos ? "" : line.substr(vstart);
        while (!value.empty() && (value.back() == '\r' || value.back() == ' ')) value.pop_back();

        const std::string flag = "--" + key;
        bool given = false;
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
        if (given) continue;
        if (value == "true") {
            args.push_back(flag);
        } else if (value == "false") {
            // omitted flag
        } else {
            args.push_back(flag);
            args.push_back(value);
        }
    }
    return args;
}

int main(int argc, char** argv) {
    CLI::App app{"matching-function engine and episodic evaluation harness"};
    app.require_subcommand(1);
    std::string config_path;  // consumed by args_with_config; option exists for --help

    // synth ------------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic feature dataset");
    SyntheticSpec synth_spec;
    std::string synth_out = "dataset";
    synth->add_option("--out", synth_out, "output directory")->capture_default_str();
    synth->add_option("--classes", synth_spec.num_classes)->capture_default_str();
    synth->add_option("--segments", synth_spec.segments)->capture_default_str();
    synth->add_option("--dim", synth_spec.d)->capture_default_str();
    synth->add_option("--noise", synth_spec.noise_sigma)->capture_default_str();
    synth->add_option("--order-pairs", synth_spec.order_pairs)->capture_default_str();
    synth->add_option("--videos-train", synth_spec.videos_per_class_train)
        ->capture_default_str();
    synth->add_option("--videos-val", synth_spec.videos_per_class_val)->capture_default_str();
    synth->add_option("--videos-test", synth_spec.videos_per_class_test)
        ->capture_default_str();
    synth->add_option("--seed", synth_spec.seed)->capture_default_str();
    synth->add_option("--config", config_path, "flat key=value config file");

    // train ------------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "episodic training of the projection head");
    std::string tr_dataset, tr_out = "run";
    std::string tr_method = "chamfer_qs", tr_tuple_mode = "ordered", tr_agg = "single";
    std::string tr_projection = "learned";
    int tr_tuple_len = 1;
    double tr_gamma = 0.1;
    bool allow_tau_only = false;
    TrainConfig tr_cfg;
    tr->add_option("--dataset", tr_dataset, "dataset directory")->required();
    tr->add_option("--out", tr_out, "output directory")->capture_default_str();
    tr->add_option("--method", tr_method,
                   "mean|max|diag|linear|chamfer_q|chamfer_s|chamfer_qs|dtw")
        ->capture_default_str();
    tr->add_option("--tuple-len", tr_tuple_len)->capture_default_str();
    tr->add_option("--tuple-mode", tr_tuple_mode, "ordered|all")->capture_default_str();
    tr->add_option("--aggregation", tr_agg, "single|joint")->capture_default_str();
    tr->add_option("--dtw-gamma", tr_gamma, "smoothing for dtw training")
        ->capture_default_str();
    tr->add_option("--projection", tr_projection, "learned|identity")->capture_default_str();
    tr->add_option("--proj-dim", tr_cfg.projection_dim, "projection output dimension D")
        ->capture_default_str();
    tr->add_option("--lr", tr_cfg.learning_rate)->capture_default_str();
    tr->add_option("--tau-init", tr_cfg.tau_init)->capture_default_str();
    tr->add_option("--episodes-per-epoch", tr_cfg.episodes_per_epoch)->capture_default_str();
    tr->add_option("--max-epochs", tr_cfg.max_epochs)->capture_default_str();
    tr->add_option("--patience", tr_cfg.patience)->capture_default_str();
    tr->add_option("--val-episodes", tr_cfg.val_episodes)->capture_default_str();
    tr->add_option("--way", tr_cfg.way)->capture_default_str();
    tr->add_option("--shot", tr_cfg.shot)->capture_default_str();
    tr->add_option("--queries", tr_cfg.queries_per_class)->capture_default_str();
    tr->add_option("--seed", tr_cfg.seed)->capture_default_str();
    tr->add_flag("--allow-tau-only", allow_tau_only,
                 "permit identity-projection training (tau is the only trainable)");
    tr->add_option("--config", config_path, "flat key=value config file");

    // eval -------------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a method on fixed test episodes");
    std::string ev_dataset, ev_out = "results.tsv", ev_method = "chamfer_qs";
    std::string ev_tuple_mode = "ordered", ev_agg = "single", ev_checkpoint;
    int ev_tuple_len = 1, ev_episodes = 1000, ev_workers = 1;
    double ev_gamma = 0.0, clf_lr = 0.01;
    int clf_epochs = 10;
    std::vector<int> ev_ways = {5};
    CommonEpisodeFlags ev_flags;
    ev->add_option("--dataset", ev_dataset, "dataset directory")->required();
    ev->add_option("--out", ev_out, "results TSV path")->capture_default_str();
    ev->add_option("--method", ev_method, "matcher kind or 'classifier'")
        ->capture_default_str();
    ev->add_option("--tuple-len", ev_tuple_len)->capture_default_str();
    ev->add_option("--tuple-mode", ev_tuple_mode)->capture_default_str();
    ev->add_option("--aggregation", ev_agg)->capture_default_str();
    ev->add_option("--dtw-gamma", ev_gamma)->capture_default_str();
    ev->add_option("--checkpoint", ev_checkpoint, "trained checkpoint (.fpp)");
    ev->add_option("--ways", ev_ways, "comma-separated way counts")
        ->delimiter(',')
        ->capture_default_str();
    ev->add_option("--shot", ev_flags.shot)->capture_default_str();
    ev->add_option("--queries", ev_flags.queries)->capture_default_str();
    ev->add_option("--episodes", ev_episodes)->capture_default_str();
    ev->add_option("--split", ev_flags.split)->capture_default_str();
    ev->add_option("--seed", ev_flags.seed)->capture_default_str();
    ev->add_option("--workers", ev_workers, "evaluation parallelism (results unchanged)")
        ->capture_default_str();
    ev->add_option("--clf-epochs", clf_epochs)->capture_default_str();
    ev->add_option("--clf-lr", clf_lr)->capture_default_str();
    ev->add_option("--config", config_path, "flat key=value config file");

    // check ------------------------------------------------------------------
    auto* ck = app.add_subcommand("check", "run the verification suite");
    std::string fault = "none";
    std::uint64_t check_seed = 0;
    ck->add_option("--inject-fault", fault, "none|chamfer-sign (self-test)")
        ->capture_default_str();
    ck->add_option("--seed", check_seed)->capture_default_str();
    ck->add_option("--config", config_path, "flat key=value config file");

    // dump-correspondences ----------------------------------------------------
    auto* dc = app.add_subcommand("dump-correspondences",
                                  "row-wise chamfer-Q argmax pairs for inspection");
    std::string dc_dataset, dc_query, dc_checkpoint, dc_out;
    std::vector<std::string> dc_supports;
    dc->add_option("--dataset", dc_dataset)->required();
    dc->add_option("--query", dc_query, "query video_id")->required();
    dc->add_option("--support", dc_supports, "support video_id (repeatable)")
        ->required()
        ->take_all();
    dc->add_option("--checkpoint", dc_checkpoint);
    dc->add_option("--out", dc_out, "output file (default stdout)");
    dc->add_option("--config", config_path, "flat key=value config file");

    try {
        auto args = args_with_config(argc, argv);
        std::reverse(args.begin(), args.end());  // CLI11 wants reversed args
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) {
            synth_spec.seed = effective_seed(synth_spec.seed);
            return cmd_synth(synth_spec, synth_out);
        }
        if (tr->parsed()) {
            tr_cfg.seed = effective_seed(tr_cfg.seed);
            if (tr_projection != "learned" && tr_projection != "identity")
                throw UsageError("--projection must be 'learned' or 'identity'");
            const auto spec =
                build_matcher_spec(tr_method, tr_tuple_len, tr_tuple_mode, tr_agg, tr_gamma);
            if (spec.kind == MatcherKind::dtw && spec.dtw_gamma <= 0)
                throw UsageError("dtw training needs --dtw-gamma > 0");
            return cmd_train(tr_dataset, tr_out, spec, tr_cfg,
                             tr_projection == "identity", allow_tau_only);
        }
        if (ev->parsed()) {
            ev_flags.seed = effective_seed(ev_flags.seed);
            MatcherSpec spec;
            if (ev_method != "classifier")
                spec = build_matcher_spec(ev_method, ev_tuple_len, ev_tuple_mode, ev_agg,
                                          ev_gamma);
            const std::uint64_t config_hash = hash_settings(
                {{"method", ev_method},
                 {"tuple_len", std::to_string(ev_tuple_len)},
                 {"tuple_mode", ev_tuple_mode},
                 {"aggregation", ev_agg},
                 {"dtw_gamma", format_double(ev_gamma)},
                 {"checkpoint", ev_checkpoint},
                 {"split", ev_flags.split},
                 {"shot", std::to_string(ev_flags.shot)},
                 {"queries", std::to_string(ev_flags.queries)},
                 {"episodes", std::to_string(ev_episodes)},
                 {"seed", std::to_string(ev_flags.seed)},
                 {"clf_epochs", std::to_string(clf_epochs)},
                 {"clf_lr", format_double(clf_lr)}});
            return cmd_eval(ev_dataset, ev_out, ev_method, spec, ev_flags, ev_ways,
                            ev_episodes, ev_workers, ev_checkpoint, clf_epochs, clf_lr,
                            config_hash);
        }
        if (ck->parsed()) return run_verification_suite(std::cout, fault, check_seed);
        if (dc->parsed())
            return cmd_dump(dc_dataset, dc_query, dc_supports, dc_checkpoint, dc_out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
