#include "fewmatch/sampler.hpp"

#include <algorithm>

#include "fewmatch/hash.hpp"

namespace fewmatch {

namespace {

// First `take` elements of a seeded partial Fisher-Yates over [0, size).
std::vector<std::size_t> draw_without_replacement(std::size_t size, std::size_t take, Rng& rng) {
    std::vector<std::size_t> idx(size);
    for (std::size_t i = 0; i < size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < take; ++i)
        std::swap(idx[i], idx[i + rng.below(size - i)]);
    idx.resize(take);
    return idx;
}

}  // namespace

Episode sample_episode(const Dataset& dataset, const std::string& split, int way, int shot,
                       int queries_per_class, Rng& rng, std::int64_t episode_id) {
    if (way < 1 || shot < 1 || queries_per_class < 1)
        throw DataError("episode sampling: way, shot and queries_per_class must be >= 1");
    auto it = dataset.split_index.find(split);
    if (it == dataset.split_index.end())
        throw DataError("insufficient classes: split '" + split + "' is empty");
    const auto& classes = it->second;
    if (classes.size() < static_cast<std::size_t>(way))
        throw DataError("insufficient classes: split '" + split + "' has " +
                        std::to_string(classes.size()) + ", need " + std::to_string(way));

    std::vector<const std::pair<const std::string, std::vector<std::string>>*> sorted;
    sorted.reserve(classes.size());
    for (const auto& entry : classes) sorted.push_back(&entry);  // std::map: label order

    Episode ep;
    ep.way = way;
    ep.shot = shot;
    ep.episode_id = episode_id;
    ep.support.resize(way);

    const auto chosen = draw_without_replacement(sorted.size(), way, rng);
    const std::size_t per_class = static_cast<std::size_t>(shot + queries_per_class);
    for (int c = 0; c < way; ++c) {
        const auto& videos = sorted[chosen[c]]->second;
        if (videos.size() < per_class)
            throw DataError("insufficient videos: class '" + sorted[chosen[c]]->first + "' has " +
                            std::to_string(videos.size()) + ", need " + std::to_string(per_class));
        const auto picks = draw_without_replacement(videos.size(), per_class, rng);
        for (int s = 0; s < shot; ++s)
            ep.support[c].push_back(dataset.feature(videos[picks[s]]));
        for (int q = 0; q < queries_per_class; ++q)
            ep.queries.push_back({dataset.feature(videos[picks[shot + q]]), c});
    }
    return ep;
}

std::vector<Episode> build_fixed_test_episodes(const Dataset& dataset, const std::string& split,
                                               int way, int shot, int queries_per_class,
                                               int count, std::uint64_t seed) {
    if (count < 0) throw DataError("episode count must be >= 0");
    Rng rng(seed);
    std::vector<Episode> episodes;
    episodes.reserve(count);
    for (int i = 0; i < count; ++i)
        episodes.push_back(
            sample_episode(dataset, split, way, shot, queries_per_class, rng, i));
    return episodes;
}

std::uint64_t episode_list_checksum(const std::vector<Episode>& episodes) {
    Fnv1a h;
    for (const auto& ep : episodes) {
        h.add(ep.episode_id);
        h.add(ep.way);
        h.add(ep.shot);
        for (const auto& cls : ep.support)
            for (const auto& fs : cls) h.add(fs.video_id);
        for (const auto& q : ep.queries) {
            h.add(q.features.video_id);
            h.add(q.true_class);
        }
    }
    return h.value;
}

}  // namespace fewmatch
