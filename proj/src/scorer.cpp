#include "fewmatch/scorer.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fewmatch {

namespace {

std::vector<std::vector<double>> project_tuples(const FeatureSet& fs,
                                                const std::vector<std::vector<int>>& tuples,
                                                const ProjectionParams& params) {
    std::vector<std::vector<double>> out;
    out.reserve(tuples.size());
    for (const auto& t : tuples) out.push_back(project(params, concat_tuple(fs, t)));
    return out;
}

}  // namespace

int predict(const ClassScores& scores) {
    if (scores.scores.empty()) throw DataError("predict: empty scores");
    int best = 0;
    for (int c = 1; c < static_cast<int>(scores.scores.size()); ++c)
        if (scores.scores[c] > scores.scores[best]) best = c;
    return best;
}

std::vector<ClassScores> score_episode(const Episode& episode, const MatcherSpec& spec,
                                       const ProjectionParams& params) {
    episode.validate();
    spec.validate();
    const int n = static_cast<int>(episode.clip_count());
    const auto tuples = enumerate_tuples(n, spec.tuple_len, spec.tuple_mode);

    std::vector<std::vector<std::vector<std::vector<double>>>> support_proj(episode.way);
    for (int c = 0; c < episode.way; ++c)
        for (const auto& fs : episode.support[c])
            support_proj[c].push_back(project_tuples(fs, tuples, params));

    std::vector<ClassScores> all;
    all.reserve(episode.queries.size());
    for (const auto& query : episode.queries) {
        const auto q_proj = project_tuples(query.features, tuples, params);
        ClassScores cs;
        cs.scores.resize(episode.way);
        for (int c = 0; c < episode.way; ++c) {
            std::vector<SimilarityMatrix> mats;
            mats.reserve(episode.shot);
            for (int s = 0; s < episode.shot; ++s)
                mats.push_back(similarity_matrix(q_proj, support_proj[c][s]));
            if (spec.aggregation == Aggregation::joint) {
                cs.scores[c] = apply_matcher(spec, joint_matrix(mats));
            } else {
                double acc = 0.0;
                for (const auto& m : mats) acc += apply_matcher(spec, m);
                cs.scores[c] = acc / static_cast<double>(episode.shot);
            }
        }
        all.push_back(std::move(cs));
    }
    return all;
}

ClassScores score_query(const FeatureSet& query, const Episode& episode,
                        const MatcherSpec& spec, const ProjectionParams& params) {
    Episode single = episode;
    single.queries.clear();
    single.queries.push_back({query, 0});
    return score_episode(single, spec, params)[0];
}

namespace {

EpisodeResult run_episode(const Episode& ep, const EpisodeScoreFn& score_fn) {
    EpisodeResult r;
    r.episode_id = ep.episode_id;
    const auto scores = score_fn(ep);
    if (scores.size() != ep.queries.size())
        throw DataError("episode scorer returned wrong query count");
    r.queries.resize(ep.queries.size());
    for (std::size_t q = 0; q < ep.queries.size(); ++q) {
        auto& out = r.queries[q];
        out.query_index = static_cast<int>(q);
        out.true_class = ep.queries[q].true_class;
        out.predicted = predict(scores[q]);
        out.scores = scores[q].scores;
    }
    return r;
}

EvalOutcome reduce_in_order(std::vector<EpisodeResult> results) {
    EvalOutcome out;
    out.episodes = std::move(results);
    for (const auto& ep : out.episodes)
        for (const auto& q : ep.queries) {
            ++out.query_count;
            if (q.predicted == q.true_class) ++out.correct;
        }
    if (out.query_count > 0) {
        const double p = static_cast<double>(out.correct) / static_cast<double>(out.query_count);
        out.mean_accuracy = p;
        out.ci95_halfwidth =
            1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(out.query_count));
    }
    return out;
}

}  // namespace

EvalOutcome evaluate_with_serial(const std::vector<Episode>& episodes,
                                 const EpisodeScoreFn& score_fn) {
    std::vector<EpisodeResult> results(episodes.size());
    for (std::size_t i = 0; i < episodes.size(); ++i)
        results[i] = run_episode(episodes[i], score_fn);
    return reduce_in_order(std::move(results));
}

EvalOutcome evaluate_with(const std::vector<Episode>& episodes, const EpisodeScoreFn& score_fn,
                          int workers) {
    if (workers <= 1) return evaluate_with_serial(episodes, score_fn);
#ifdef _OPENMP
    std::vector<EpisodeResult> results(episodes.size());
    std::exception_ptr error;
    const auto count = static_cast<std::int64_t>(episodes.size());
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            results[i] = run_episode(episodes[i], score_fn);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return reduce_in_order(std::move(results));
#else
    return evaluate_with_serial(episodes, score_fn);
#endif
}

EvalOutcome evaluate(const std::vector<Episode>& episodes, const MatcherSpec& spec,
                     const ProjectionParams& params, int workers) {
    return evaluate_with(
        episodes,
        [&](const Episode& ep) { return score_episode(ep, spec, params); }, workers);
}

EvalOutcome evaluate_serial(const std::vector<Episode>& episodes, const MatcherSpec& spec,
                            const ProjectionParams& params) {
    return evaluate_with_serial(
        episodes, [&](const Episode& ep) { return score_episode(ep, spec, params); });
}

}  // namespace fewmatch
