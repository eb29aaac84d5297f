#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fewmatch/synthetic.hpp"
#include "fewmatch/trainer.hpp"
#include "test_util.hpp"

using namespace fewmatch;

namespace {

MatcherSpec make_spec(MatcherKind kind, int clip_count, int tuple_len = 1) {
    MatcherSpec spec;
    spec.kind = kind;
    spec.tuple_len = tuple_len;
    if (kind == MatcherKind::dtw) spec.dtw_gamma = 0.5;
    if (kind == MatcherKind::linear) {
        // placeholder grid; episode_loss substitutes the trained weights
        const auto n = enumerate_tuples(clip_count, tuple_len, TupleMode::ordered).size();
        spec.linear_weights.assign(n * n, 1.0 / static_cast<double>(n * n));
    }
    return spec;
}

TrainConfig small_config(MatcherSpec& spec) {
    (void)spec;
    TrainConfig cfg;
    cfg.way = 3;
    cfg.shot = 2;
    cfg.queries_per_class = 1;
    cfg.projection_dim = 5;
    cfg.seed = 17;
    return cfg;
}

}  // namespace

TEST_CASE("uniform scores give loss ln(way) and zero tau gradient") {
    // all clips identical across classes -> every similarity equals 1
    FeatureSet same;
    same.clips = {{0.7, 0.7}};
    Episode ep;
    ep.way = 5;
    ep.shot = 1;
    ep.support.assign(5, {same});
    ep.queries.push_back({same, 2});

    MatcherSpec spec = make_spec(MatcherKind::mean, 1);
    TrainConfig cfg;
    cfg.projection_dim = 2;
    TrainState state = init_train_state(cfg, spec, ProjectionMode::identity, 2, 1);

    EpisodeGrads grads(state.params, 0);
    const double loss = episode_loss(ep, spec, state, &grads);
    CHECK(loss == doctest::Approx(std::log(5.0)));
    // equal scores: softmax deltas sum to zero and every score is equal, so
    // d loss / d tau = sum_c (p_c - y_c) * S = S * 0 = 0
    CHECK(grads.d_tau == doctest::Approx(0.0));
}

TEST_CASE("tau -> 0 drives the loss to ln(way)") {
    Rng rng(61);
    const auto ep = testutil::random_episode(rng, 4, 1, 1, 3, 4);
    MatcherSpec spec = make_spec(MatcherKind::chamfer_qs, 3);
    TrainConfig cfg;
    TrainState state = init_train_state(cfg, spec, ProjectionMode::identity, 4, 3);
    state.log_tau = std::log(1e-9);
    CHECK(episode_loss(ep, spec, state, nullptr) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("softmax probabilities are normalized: loss of certain episode is ~0") {
    // same-class clips identical, other classes orthogonal, huge tau
    FeatureSet a, b;
    a.clips = {{1, 0}};
    b.clips = {{0, 1}};
    Episode ep;
    ep.way = 2;
    ep.shot = 1;
    ep.support = {{a}, {b}};
    ep.queries.push_back({a, 0});
    MatcherSpec spec = make_spec(MatcherKind::mean, 1);
    TrainConfig cfg;
    cfg.tau_init = 60.0;
    TrainState state = init_train_state(cfg, spec, ProjectionMode::identity, 2, 1);
    const double loss = episode_loss(ep, spec, state, nullptr);
    CHECK(loss >= 0.0);
    CHECK(loss < 1e-12);
}

TEST_CASE("every trainable partial matches central finite differences") {
    Rng rng(67);
    const std::vector<MatcherKind> kinds = {
        MatcherKind::chamfer_qs, MatcherKind::chamfer_q, MatcherKind::chamfer_s,
        MatcherKind::mean,       MatcherKind::diag,      MatcherKind::max,
        MatcherKind::linear,     MatcherKind::dtw};
    int done = 0;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        MatcherSpec spec = make_spec(kinds[k], 3);
        TrainConfig cfg = small_config(spec);
        cfg.seed = 100 + k;
        TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
        Episode ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
        while (episode_has_matcher_ties(ep, spec, state, 1e-7))
            ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
        const auto report = finite_diff_check(state, ep, spec, 1e-6, 1e-5);
        for (const auto& block : report.blocks) {
            INFO(to_string(kinds[k]) << " block " << block.name << " rel err "
                                     << block.max_rel_err);
            CHECK(block.pass);
        }
        ++done;
    }
    CHECK(done == 8);
}

TEST_CASE("finite_diff_check self-test: a corrupted dW entry fails its block") {
    Rng rng(71);
    MatcherSpec spec = make_spec(MatcherKind::chamfer_qs, 3);
    TrainConfig cfg = small_config(spec);
    TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
    const auto ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
    const auto report = finite_diff_check(state, ep, spec, 1e-6, 1e-5,
                                          [](EpisodeGrads& g) { g.projection.d_weight[0] += 0.1; });
    bool w_failed = false;
    for (const auto& block : report.blocks)
        if (block.name == "W") w_failed = !block.pass;
    CHECK(w_failed);
    CHECK_FALSE(report.pass);
}

TEST_CASE("identity mode: report contains only the tau block") {
    Rng rng(73);
    MatcherSpec spec = make_spec(MatcherKind::chamfer_qs, 3);
    TrainConfig cfg = small_config(spec);
    TrainState state = init_train_state(cfg, spec, ProjectionMode::identity, 4, 3);
    CHECK(state.trainable_count() == 0);
    const auto ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
    const auto report = finite_diff_check(state, ep, spec, 1e-6, 1e-5);
    REQUIRE(report.blocks.size() == 1);
    CHECK(report.blocks[0].name == "tau");
    CHECK(report.blocks[0].pass);
}

TEST_CASE("train_step: lr=0 leaves the state bitwise unchanged") {
    Rng rng(79);
    MatcherSpec spec = make_spec(MatcherKind::chamfer_qs, 3);
    TrainConfig cfg = small_config(spec);
    cfg.learning_rate = 0.0;
    TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
    const auto before_w = state.params.weight;
    const double before_tau = state.log_tau;
    const auto ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
    train_step(state, ep, spec, cfg);
    CHECK(state.params.weight == before_w);
    CHECK(state.log_tau == before_tau);
}

TEST_CASE("a small step on a fixed episode decreases that episode's loss") {
    Rng rng(83);
    for (int trial = 0; trial < 10; ++trial) {
        MatcherSpec spec = make_spec(MatcherKind::chamfer_qs, 3);
        TrainConfig cfg = small_config(spec);
        cfg.seed = 200 + trial;
        cfg.learning_rate = 1e-4;
        TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
        const auto ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
        const double before = train_step(state, ep, spec, cfg);
        const double after = episode_loss(ep, spec, state, nullptr);
        CHECK(after < before);
    }
}

TEST_CASE("dtw with gamma=0 is rejected in the gradient path") {
    Rng rng(89);
    MatcherSpec spec = make_spec(MatcherKind::dtw, 3);
    spec.dtw_gamma = 0.0;
    TrainConfig cfg = small_config(spec);
    TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
    const auto ep = testutil::random_episode(rng, 3, 2, 1, 3, 4);
    CHECK(episode_loss(ep, spec, state, nullptr) == episode_loss(ep, spec, state, nullptr));
    EpisodeGrads grads(state.params, 0);
    CHECK_THROWS_AS(episode_loss(ep, spec, state, &grads), DataError);
}

TEST_CASE("training is deterministic and early stopping obeys patience") {
    const auto dir = std::filesystem::temp_directory_path() / "fewmatch_train_test";
    std::filesystem::remove_all(dir);
    SyntheticSpec sdata;
    sdata.num_classes = 18;
    sdata.segments = 3;
    sdata.d = 6;
    sdata.noise_sigma = 0.3;
    sdata.videos_per_class_train = 4;
    sdata.videos_per_class_val = 4;
    sdata.videos_per_class_test = 4;
    sdata.seed = 3;
    generate_synthetic(sdata, dir);
    const auto ds = load_dataset(dir);

    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_qs;
    TrainConfig cfg;
    cfg.way = 3;
    cfg.shot = 1;
    cfg.episodes_per_epoch = 10;
    cfg.max_epochs = 4;
    cfg.patience = 2;
    cfg.val_episodes = 20;
    cfg.projection_dim = 6;
    cfg.seed = 5;

    SUBCASE("two runs, identical checkpoints and logs") {
        const auto r1 = train(cfg, ds, spec, ProjectionMode::learned);
        const auto r2 = train(cfg, ds, spec, ProjectionMode::learned);
        REQUIRE(r1.log.size() == r2.log.size());
        for (std::size_t i = 0; i < r1.log.size(); ++i) {
            CHECK(r1.log[i].mean_train_loss == r2.log[i].mean_train_loss);
            CHECK(r1.log[i].val_accuracy == r2.log[i].val_accuracy);
            CHECK(r1.log[i].tau == r2.log[i].tau);
        }
        CHECK(r1.best.params.weight == r2.best.params.weight);
        CHECK(r1.best.log_tau == r2.best.log_tau);
    }

    SUBCASE("identity mode: validation accuracy is constant across epochs") {
        const auto r = train(cfg, ds, spec, ProjectionMode::identity);
        REQUIRE(!r.log.empty());
        for (const auto& row : r.log) CHECK(row.val_accuracy == r.log.front().val_accuracy);
        // constant metric never improves after epoch 1: patience=2 stops at epoch 3
        CHECK(r.log.size() == 3);
        CHECK(r.best.best_epoch == 1);
    }

    SUBCASE("patience=1 with a never-improving metric stops at epoch 2") {
        TrainConfig c1 = cfg;
        c1.patience = 1;
        const auto r = train(c1, ds, spec, ProjectionMode::identity);
        CHECK(r.log.size() == 2);
    }

    SUBCASE("checkpoint round trip") {
        const auto r = train(cfg, ds, spec, ProjectionMode::learned);
        save_train_checkpoint(dir / "ck.fpp", r.best, r.best.best_epoch);
        const auto ck = load_train_checkpoint(dir / "ck.fpp");
        CHECK(ck.params.weight == r.best.params.weight);
        CHECK(ck.epoch == static_cast<std::uint64_t>(r.best.best_epoch));
        CHECK(ck.tau == doctest::Approx(r.best.tau()).epsilon(1e-15));
        CHECK(ck.linear_weights.empty());
    }

    SUBCASE("missing val split is rejected") {
        Dataset no_val = ds;
        no_val.split_index.erase("val");
        CHECK_THROWS_WITH_AS(train(cfg, no_val, spec, ProjectionMode::learned),
                             doctest::Contains("validation split required"), DataError);
    }

    std::filesystem::remove_all(dir);
}

TEST_CASE("training chamfer is not materially worse than the frozen identity baseline") {
    const auto dir = std::filesystem::temp_directory_path() / "fewmatch_train_quality";
    std::filesystem::remove_all(dir);
    SyntheticSpec sdata;
    sdata.num_classes = 24;
    sdata.segments = 8;
    sdata.d = 16;
    sdata.noise_sigma = 0.5;
    sdata.seed = 6;
    generate_synthetic(sdata, dir);
    const auto ds = load_dataset(dir);

    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_qs;
    TrainConfig cfg;
    cfg.way = 5;
    cfg.shot = 1;
    cfg.max_epochs = 20;
    cfg.patience = 5;
    cfg.episodes_per_epoch = 200;
    cfg.val_episodes = 200;
    cfg.projection_dim = 16;
    cfg.seed = 3;

    const auto trained = train(cfg, ds, spec, ProjectionMode::learned);
    // identity mode leaves predictions frozen, so its best-val accuracy is
    // the no-training baseline on the same fixed validation episodes
    TrainConfig frozen = cfg;
    frozen.max_epochs = 1;
    frozen.episodes_per_epoch = 1;
    const auto identity = train(frozen, ds, spec, ProjectionMode::identity);

    CHECK(trained.log.size() <= 20);
    CHECK(trained.best.best_val_accuracy >= identity.best.best_val_accuracy - 0.01);
    std::filesystem::remove_all(dir);
}

TEST_CASE("linear matcher: weights train and checkpoint carries them") {
    const auto dir = std::filesystem::temp_directory_path() / "fewmatch_train_linear";
    std::filesystem::remove_all(dir);
    SyntheticSpec sdata;
    sdata.num_classes = 18;
    sdata.segments = 3;
    sdata.d = 6;
    sdata.noise_sigma = 0.3;
    sdata.videos_per_class_train = 4;
    sdata.videos_per_class_val = 4;
    sdata.videos_per_class_test = 4;
    sdata.seed = 3;
    generate_synthetic(sdata, dir);
    const auto ds = load_dataset(dir);

    MatcherSpec spec;
    spec.kind = MatcherKind::linear;
    TrainConfig cfg;
    cfg.way = 3;
    cfg.shot = 1;
    cfg.episodes_per_epoch = 10;
    cfg.max_epochs = 2;
    cfg.patience = 5;
    cfg.val_episodes = 10;
    cfg.projection_dim = 6;
    cfg.seed = 7;

    const auto r = train(cfg, ds, spec, ProjectionMode::learned);
    REQUIRE(r.best.linear_weights.size() == 9);  // n=3 clips, l=1
    // untrained init is the mean matcher; training moved it
    bool moved = false;
    for (double w : r.best.linear_weights) moved = moved || w != 1.0 / 9.0;
    CHECK(moved);

    save_train_checkpoint(dir / "ck.fpp", r.best, r.best.best_epoch);
    const auto ck = load_train_checkpoint(dir / "ck.fpp");
    CHECK(ck.linear_weights == r.best.linear_weights);
    std::filesystem::remove_all(dir);
}
