#pragma once

#include <string>
#include <vector>

#include "fewmatch/matchers.hpp"
#include "fewmatch/rng.hpp"
#include "fewmatch/types.hpp"

namespace testutil {

inline fewmatch::SimilarityMatrix random_matrix(fewmatch::Rng& rng, std::size_t rows,
                                                std::size_t cols) {
    fewmatch::SimilarityMatrix m(rows, cols);
    for (auto& v : m.values) v = 2.0 * rng.next_double() - 1.0;
    return m;
}

inline fewmatch::FeatureSet random_feature_set(fewmatch::Rng& rng, const std::string& id,
                                               int n, int d) {
    fewmatch::FeatureSet fs;
    fs.video_id = id;
    for (int i = 0; i < n; ++i) {
        std::vector<float> clip(d);
        for (auto& v : clip) v = static_cast<float>(2.0 * rng.next_double() - 1.0);
        fs.clips.push_back(std::move(clip));
    }
    return fs;
}

inline fewmatch::Episode random_episode(fewmatch::Rng& rng, int way, int shot,
                                        int queries_per_class, int n, int d) {
    fewmatch::Episode ep;
    ep.way = way;
    ep.shot = shot;
    ep.support.resize(way);
    for (int c = 0; c < way; ++c)
        for (int s = 0; s < shot; ++s)
            ep.support[c].push_back(random_feature_set(
                rng, "s" + std::to_string(c) + "_" + std::to_string(s), n, d));
    for (int c = 0; c < way; ++c)
        for (int q = 0; q < queries_per_class; ++q)
            ep.queries.push_back({random_feature_set(
                                      rng, "q" + std::to_string(c) + "_" + std::to_string(q),
                                      n, d),
                                  c});
    return ep;
}

// Independent oracle: naive double-loop chamfer.
inline double chamfer_oracle(fewmatch::MatcherKind variant, const fewmatch::SimilarityMatrix& m) {
    using fewmatch::MatcherKind;
    double q_side = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double best = m.at(i, 0);
        for (std::size_t j = 1; j < m.cols; ++j) best = std::max(best, m.at(i, j));
        q_side += best;
    }
    q_side /= static_cast<double>(m.rows);
    double s_side = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
        double best = m.at(0, j);
        for (std::size_t i = 1; i < m.rows; ++i) best = std::max(best, m.at(i, j));
        s_side += best;
    }
    s_side /= static_cast<double>(m.cols);
    if (variant == MatcherKind::chamfer_q) return q_side;
    if (variant == MatcherKind::chamfer_s) return s_side;
    return q_side + s_side;
}

// Independent oracle: exhaustive enumeration of every monotone path from
// (0,0) to (n-1,n-1); returns max of (sum / cells) and counts paths visited.
inline double dtw_enumeration_oracle(const fewmatch::SimilarityMatrix& m,
                                     std::size_t* paths_out = nullptr) {
    const std::size_t n = m.rows;
    double best = -1e300;
    std::size_t paths = 0;
    auto walk = [&](auto&& self, std::size_t i, std::size_t j, double sum,
                    std::size_t len) -> void {
        sum = sum + m.at(i, j);
        len += 1;
        if (i == n - 1 && j == n - 1) {
            ++paths;
            best = std::max(best, sum / static_cast<double>(len));
            return;
        }
        if (i + 1 < n) self(self, i + 1, j, sum, len);
        if (j + 1 < n) self(self, i, j + 1, sum, len);
        if (i + 1 < n && j + 1 < n) self(self, i + 1, j + 1, sum, len);
    };
    walk(walk, 0, 0, 0.0, 0);
    if (paths_out) *paths_out = paths;
    return best;
}

}  // namespace testutil
