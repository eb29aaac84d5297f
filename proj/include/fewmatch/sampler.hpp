#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fewmatch/feature_io.hpp"
#include "fewmatch/rng.hpp"
#include "fewmatch/types.hpp"

namespace fewmatch {

// Draws one way x shot episode from a split: way classes without replacement
// (classes enumerated in sorted-label order), then shot supports plus
// queries_per_class queries per class, also without replacement.
Episode sample_episode(const Dataset& dataset, const std::string& split, int way, int shot,
                       int queries_per_class, Rng& rng, std::int64_t episode_id = 0);

// One seeded stream produces the whole list, so every method can be evaluated
// on the identical episodes.
std::vector<Episode> build_fixed_test_episodes(const Dataset& dataset, const std::string& split,
                                               int way, int shot, int queries_per_class,
                                               int count, std::uint64_t seed);

// Order-sensitive digest of ids and labels; goes into run headers.
std::uint64_t episode_list_checksum(const std::vector<Episode>& episodes);

}  // namespace fewmatch
