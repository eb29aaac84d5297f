#pragma once

#include <functional>
#include <vector>

#include "fewmatch/matchers.hpp"
#include "fewmatch/projection.hpp"
#include "fewmatch/types.hpp"

namespace fewmatch {

struct ClassScores {
    std::vector<double> scores;  // one per episode-local class
};

// Argmax; ties go to the smallest class index.
int predict(const ClassScores& scores);

struct QueryOutcome {
    int query_index = 0;
    int true_class = 0;
    int predicted = 0;
    std::vector<double> scores;
};

struct EpisodeResult {
    std::int64_t episode_id = 0;
    std::vector<QueryOutcome> queries;
};

struct EvalOutcome {
    std::size_t query_count = 0;
    std::size_t correct = 0;
    double mean_accuracy = 0.0;
    double ci95_halfwidth = 0.0;  // normal approximation
    std::vector<EpisodeResult> episodes;
};

// Class scores for one query against every class of the episode.
// single_average: mean over the k per-shot matcher values; joint: one matcher
// value on the horizontally concatenated matrix. Tuple matrices when l > 1.
ClassScores score_query(const FeatureSet& query, const Episode& episode,
                        const MatcherSpec& spec, const ProjectionParams& params);

// Same scores for all queries of the episode, projecting each video once.
std::vector<ClassScores> score_episode(const Episode& episode, const MatcherSpec& spec,
                                       const ProjectionParams& params);

using EpisodeScoreFn = std::function<std::vector<ClassScores>(const Episode&)>;

// Serial reference implementation.
EvalOutcome evaluate_with_serial(const std::vector<Episode>& episodes,
                                 const EpisodeScoreFn& score_fn);

// OpenMP over episodes; per-episode results land in pre-assigned slots and
// the reduction runs in episode order, so the outcome is bitwise identical
// to the serial reference for any worker count.
EvalOutcome evaluate_with(const std::vector<Episode>& episodes, const EpisodeScoreFn& score_fn,
                          int workers);

EvalOutcome evaluate(const std::vector<Episode>& episodes, const MatcherSpec& spec,
                     const ProjectionParams& params, int workers);
EvalOutcome evaluate_serial(const std::vector<Episode>& episodes, const MatcherSpec& spec,
                            const ProjectionParams& params);

}  // namespace fewmatch
