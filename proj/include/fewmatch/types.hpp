#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fewmatch {

// Thrown for malformed inputs: bad files, invariant violations, impossible
// sampling requests. The CLI maps this to exit code 2.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown for bad command-line / config usage. CLI exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One video: an ordered sequence of n clip-feature vectors of dimension d.
// Values are stored as binary32 to match the on-disk format exactly; all
// arithmetic downstream widens to double.
struct FeatureSet {
    std::string video_id;
    std::vector<std::vector<float>> clips;

    std::size_t n() const { return clips.size(); }
    std::size_t d() const { return clips.empty() ? 0 : clips.front().size(); }

    void validate() const {
        if (clips.empty())
            throw DataError("feature set '" + video_id + "': n must be >= 1");
        const std::size_t dim = clips.front().size();
        if (dim == 0)
            throw DataError("feature set '" + video_id + "': d must be >= 1");
        for (const auto& clip : clips) {
            if (clip.size() != dim)
                throw DataError("feature set '" + video_id + "': ragged clip dimensions");
            for (float v : clip)
                if (!std::isfinite(v))
                    throw DataError("feature set '" + video_id + "': non-finite feature");
        }
    }
};

struct ManifestEntry {
    std::string video_id;
    std::string class_label;
    std::string split;  // train | val | test
    std::string path;   // relative to the dataset root
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

struct Query {
    FeatureSet features;
    int true_class = -1;  // episode-local index, hidden from scoring
};

// A self-contained way x shot task. support[c] holds the k shots of
// episode-local class c; every query's true_class indexes into that range.
struct Episode {
    int way = 0;
    int shot = 0;
    std::vector<std::vector<FeatureSet>> support;  // [way][shot]
    std::vector<Query> queries;
    std::int64_t episode_id = 0;

    std::size_t clip_count() const {
        return support.empty() || support[0].empty() ? 0 : support[0][0].n();
    }
    std::size_t feature_dim() const {
        return support.empty() || support[0].empty() ? 0 : support[0][0].d();
    }

    void validate() const {
        if (way < 1 || static_cast<int>(support.size()) != way)
            throw DataError("episode: way/support mismatch");
        for (const auto& cls : support)
            if (static_cast<int>(cls.size()) != shot)
                throw DataError("episode: shot count mismatch");
        const std::size_t n = clip_count(), dim = feature_dim();
        for (const auto& cls : support)
            for (const auto& fs : cls)
                if (fs.n() != n || fs.d() != dim)
                    throw DataError("episode: feature sets must share n and d");
        for (const auto& q : queries) {
            if (q.true_class < 0 || q.true_class >= way)
                throw DataError("episode: query true class out of range");
            if (q.features.n() != n || q.features.d() != dim)
                throw DataError("episode: feature sets must share n and d");
        }
    }
};

}  // namespace fewmatch
