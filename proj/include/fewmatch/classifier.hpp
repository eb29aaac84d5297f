#pragma once

#include "fewmatch/scorer.hpp"
#include "fewmatch/types.hpp"

namespace fewmatch {

// Per-episode linear classifier over raw clip features.
struct EpisodeClassifier {
    int way = 0;
    std::size_t d = 0;
    std::vector<double> weight;  // way x d, row-major
    std::vector<double> bias;    // way
};

// Zero-initialized, trained with Adam (beta1 0.9, beta2 0.999, eps 1e-8) on
// the mean per-clip cross-entropy over all support clips; one full-batch step
// per epoch, clip accumulation order fixed by an episode_id-seeded shuffle.
EpisodeClassifier fit_episode_classifier(const Episode& episode, int epochs = 10,
                                         double lr = 0.01);

// Sum over clips of softmax(W q_i + b); scores add up to n.
ClassScores classify_query(const EpisodeClassifier& clf, const FeatureSet& query);

}  // namespace fewmatch
