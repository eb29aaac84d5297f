#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "fewmatch/scorer.hpp"
#include "test_util.hpp"

using namespace fewmatch;

namespace {

// way-2 episode from orthogonal prototypes: class 0 in forward clip order,
// class 1 the exact reversal; the query duplicates the class-0 support.
Episode reversed_pair_episode() {
    FeatureSet forward;
    forward.video_id = "fwd";
    forward.clips = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}};
    FeatureSet reversed = forward;
    reversed.video_id = "rev";
    std::reverse(reversed.clips.begin(), reversed.clips.end());

    Episode ep;
    ep.way = 2;
    ep.shot = 1;
    ep.support = {{forward}, {reversed}};
    FeatureSet query = forward;
    query.video_id = "query";
    ep.queries.push_back({query, 0});
    return ep;
}

Episode shuffle_clips(const Episode& ep, Rng& rng, bool shuffle_query_only_reverse) {
    Episode out = ep;
    auto permute = [&](FeatureSet& fs, const std::vector<std::size_t>& perm) {
        auto clips = fs.clips;
        for (std::size_t i = 0; i < perm.size(); ++i) fs.clips[i] = clips[perm[i]];
    };
    auto random_perm = [&](std::size_t size) {
        std::vector<std::size_t> p(size);
        for (std::size_t i = 0; i < size; ++i) p[i] = i;
        for (std::size_t i = 0; i + 1 < size; ++i)
            std::swap(p[i], p[i + rng.below(size - i)]);
        return p;
    };
    if (shuffle_query_only_reverse) {
        for (auto& q : out.queries) {
            std::vector<std::size_t> rev(q.features.n());
            for (std::size_t i = 0; i < rev.size(); ++i) rev[i] = rev.size() - 1 - i;
            permute(q.features, rev);
        }
        return out;
    }
    const auto qp = random_perm(out.queries.front().features.n());
    for (auto& q : out.queries) permute(q.features, qp);
    for (auto& cls : out.support)
        for (auto& fs : cls) permute(fs, random_perm(fs.n()));
    return out;
}

}  // namespace

TEST_CASE("predict") {
    CHECK(predict({{0.1, 0.9, 0.3}}) == 1);
    CHECK(predict({{0.5, 0.5}}) == 0);  // ties toward the smallest index
    ClassScores s{{0.2, 0.7, 0.1}};
    ClassScores shifted{{1.2, 1.7, 1.1}};
    CHECK(predict(s) == predict(shifted));
    CHECK_THROWS_AS(predict(ClassScores{}), DataError);
}

TEST_CASE("k=1: joint and single_average agree for every kind") {
    Rng rng(41);
    const auto ep = testutil::random_episode(rng, 3, 1, 2, 4, 6);
    const auto params = identity_projection(6);
    for (auto kind : {MatcherKind::mean, MatcherKind::max, MatcherKind::diag,
                      MatcherKind::chamfer_q, MatcherKind::chamfer_s, MatcherKind::chamfer_qs,
                      MatcherKind::linear, MatcherKind::dtw}) {
        MatcherSpec spec;
        spec.kind = kind;
        spec.dtw_gamma = 0.0;
        if (kind == MatcherKind::linear) spec.linear_weights.assign(16, 1.0 / 16.0);
        spec.aggregation = Aggregation::single_average;
        const auto single = score_episode(ep, spec, params);
        spec.aggregation = Aggregation::joint;
        const auto joint = score_episode(ep, spec, params);
        for (std::size_t q = 0; q < single.size(); ++q)
            CHECK(single[q].scores == joint[q].scores);
    }
}

TEST_CASE("noise-free episode: same-class chamfer_qs score is 2 and wins") {
    FeatureSet a, b, c;
    a.clips = {{1, 0, 0, 0}, {0, 1, 0, 0}};
    b.clips = {{0, 0, 1, 0}, {0, 0, 0, 1}};
    c.clips = {{1, 0, 0, 1}, {0, 1, 1, 0}};
    Episode ep;
    ep.way = 3;
    ep.shot = 1;
    ep.support = {{a}, {b}, {c}};
    ep.queries.push_back({a, 0});

    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_qs;
    const auto scores = score_episode(ep, spec, identity_projection(4))[0];
    CHECK(scores.scores[0] == doctest::Approx(2.0));
    CHECK(scores.scores[0] > scores.scores[1]);
    CHECK(scores.scores[0] > scores.scores[2]);
    CHECK(predict(scores) == 0);
}

TEST_CASE("constant similarities give constant class scores") {
    // all clips equal: every m_ij is 1, so mean score is 1 for every class
    FeatureSet same;
    same.clips = {{0.5, 0.5}, {0.5, 0.5}};
    Episode ep;
    ep.way = 2;
    ep.shot = 2;
    ep.support = {{same, same}, {same, same}};
    ep.queries.push_back({same, 1});
    MatcherSpec spec;
    spec.kind = MatcherKind::mean;
    const auto scores = score_episode(ep, spec, identity_projection(2))[0];
    CHECK(scores.scores[0] == doctest::Approx(1.0));
    CHECK(scores.scores[1] == doctest::Approx(1.0));
    // tie rule sends the prediction to class 0, not the true class 1
    CHECK(predict(scores) == 0);

    // with class-independent scores, accuracy is exactly the fraction of
    // queries whose true class is 0
    ep.queries.push_back({same, 0});
    const auto outcome = evaluate_serial({ep}, spec, identity_projection(2));
    CHECK(outcome.mean_accuracy == 0.5);
}

TEST_CASE("score_query matches score_episode") {
    Rng rng(43);
    const auto ep = testutil::random_episode(rng, 4, 2, 2, 3, 5);
    const auto params = identity_projection(5);
    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_qs;
    const auto all = score_episode(ep, spec, params);
    for (std::size_t q = 0; q < ep.queries.size(); ++q) {
        const auto one = score_query(ep.queries[q].features, ep, spec, params);
        CHECK(one.scores == all[q].scores);
    }
}

TEST_CASE("non-temporal predictions are invariant to clip shuffling at l=1") {
    Rng rng(47);
    for (int trial = 0; trial < 20; ++trial) {
        const auto ep = testutil::random_episode(rng, 3, 2, 1, 5, 4);
        const auto shuffled = shuffle_clips(ep, rng, false);
        const auto params = identity_projection(4);
        for (auto kind : {MatcherKind::mean, MatcherKind::max, MatcherKind::chamfer_q,
                          MatcherKind::chamfer_s, MatcherKind::chamfer_qs}) {
            MatcherSpec spec;
            spec.kind = kind;
            const auto a = score_episode(ep, spec, params);
            const auto b = score_episode(shuffled, spec, params);
            for (std::size_t q = 0; q < a.size(); ++q)
                CHECK(a[q].scores == b[q].scores);  // bit-identical
        }
    }
}

TEST_CASE("temporal matchers have a shuffling counterexample episode") {
    const auto ep = reversed_pair_episode();
    Rng rng(0);
    const auto shuffled = shuffle_clips(ep, rng, true);  // reverse query clips
    const auto params = identity_projection(4);
    for (auto kind : {MatcherKind::diag, MatcherKind::dtw}) {
        MatcherSpec spec;
        spec.kind = kind;
        const auto a = score_episode(ep, spec, params)[0];
        const auto b = score_episode(shuffled, spec, params)[0];
        CHECK(a.scores != b.scores);
    }
}

TEST_CASE("ordered tuples break shuffle invariance: the l=2 witness") {
    const auto ep = reversed_pair_episode();
    Rng rng(0);
    const auto shuffled = shuffle_clips(ep, rng, true);
    const auto params = identity_projection(4);

    MatcherSpec l1;
    l1.kind = MatcherKind::chamfer_qs;
    const int before1 = predict(score_episode(ep, l1, params)[0]);
    const int after1 = predict(score_episode(shuffled, l1, params)[0]);
    CHECK(before1 == after1);  // l=1 chamfer unchanged

    MatcherSpec l2;
    l2.kind = MatcherKind::chamfer_qs;
    l2.tuple_len = 2;
    l2.tuple_mode = TupleMode::ordered;
    l2.aggregation = Aggregation::joint;
    const auto tuple_params = identity_projection(8);
    const int before2 = predict(score_episode(ep, l2, tuple_params)[0]);
    const int after2 = predict(score_episode(shuffled, l2, tuple_params)[0]);
    CHECK(before2 == 0);
    CHECK(after2 == 1);  // prediction flips to the reversed class
}

TEST_CASE("copying the query into the true class never lowers joint chamfer_q") {
    Rng rng(53);
    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_q;
    spec.aggregation = Aggregation::joint;
    const auto params = identity_projection(4);
    for (int trial = 0; trial < 30; ++trial) {
        auto ep = testutil::random_episode(rng, 3, 2, 1, 4, 4);
        const auto& query = ep.queries.front();
        const double before =
            score_episode(ep, spec, params)[0].scores[query.true_class];
        auto boosted = ep;
        boosted.support[query.true_class][0] = query.features;
        const double after =
            score_episode(boosted, spec, params)[0].scores[query.true_class];
        CHECK(after >= before);
    }
}

TEST_CASE("evaluate: serial and parallel are bitwise identical") {
    Rng rng(59);
    std::vector<Episode> episodes;
    for (int i = 0; i < 40; ++i) {
        episodes.push_back(testutil::random_episode(rng, 4, 2, 2, 4, 6));
        episodes.back().episode_id = i;
    }
    MatcherSpec spec;
    spec.kind = MatcherKind::chamfer_qs;
    const auto params = identity_projection(6);
    const auto serial = evaluate_serial(episodes, spec, params);
    for (int workers : {2, 4}) {
        const auto parallel = evaluate(episodes, spec, params, workers);
        CHECK(parallel.mean_accuracy == serial.mean_accuracy);
        CHECK(parallel.correct == serial.correct);
        REQUIRE(parallel.episodes.size() == serial.episodes.size());
        for (std::size_t i = 0; i < serial.episodes.size(); ++i)
            for (std::size_t q = 0; q < serial.episodes[i].queries.size(); ++q) {
                CHECK(parallel.episodes[i].queries[q].predicted ==
                      serial.episodes[i].queries[q].predicted);
                CHECK(parallel.episodes[i].queries[q].scores ==
                      serial.episodes[i].queries[q].scores);
            }
    }
}

TEST_CASE("evaluate accuracy accounting") {
    // every query's true class uniquely maximal -> accuracy 1
    FeatureSet a, b;
    a.clips = {{1, 0}};
    b.clips = {{0, 1}};
    Episode ep;
    ep.way = 2;
    ep.shot = 1;
    ep.support = {{a}, {b}};
    ep.queries.push_back({a, 0});
    ep.queries.push_back({b, 1});
    MatcherSpec spec;
    spec.kind = MatcherKind::mean;
    const auto out = evaluate_serial({ep, ep}, spec, identity_projection(2));
    CHECK(out.query_count == 4);
    CHECK(out.mean_accuracy == 1.0);
}
