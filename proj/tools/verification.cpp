#include "verification.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fewmatch/scorer.hpp"
#include "fewmatch/trainer.hpp"

using namespace fewmatch;

namespace {

SimilarityMatrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
    SimilarityMatrix m(rows, cols);
    for (auto& v : m.values) v = 2.0 * rng.next_double() - 1.0;
    return m;
}

FeatureSet random_feature_set(Rng& rng, const std::string& id, int n, int d) {
    FeatureSet fs;
    fs.video_id = id;
    for (int i = 0; i < n; ++i) {
        std::vector<float> clip(d);
        for (auto& v : clip) v = static_cast<float>(2.0 * rng.next_double() - 1.0);
        fs.clips.push_back(std::move(clip));
    }
    return fs;
}

Episode random_episode(Rng& rng, int way, int shot, int qpc, int n, int d) {
    Episode ep;
    ep.way = way;
    ep.shot = shot;
    ep.support.resize(way);
    for (int c = 0; c < way; ++c)
        for (int s = 0; s < shot; ++s)
            ep.support[c].push_back(
                random_feature_set(rng, "s" + std::to_string(c * shot + s), n, d));
    for (int c = 0; c < way; ++c)
        for (int q = 0; q < qpc; ++q)
            ep.queries.push_back({random_feature_set(rng, "q" + std::to_string(c), n, d), c});
    return ep;
}

double chamfer_bruteforce(MatcherKind variant, const SimilarityMatrix& m) {
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

double dtw_enumerate(const SimilarityMatrix& m, std::size_t& paths) {
    const std::size_t n = m.rows;
    double best = -1e300;
    auto walk = [&](auto&& self, std::size_t i, std::size_t j, double sum,
                    std::size_t len) -> void {
        sum += m.at(i, j);
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
    return best;
}

struct Suite {
    std::ostream& out;
    bool all_pass = true;

    void report(const std::string& name, bool pass, const std::string& detail) {
        out << (pass ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
        all_pass = all_pass && pass;
    }
};

void check_chamfer(Suite& suite, Rng& rng, bool inject_fault) {
    std::size_t matrices = 0;
    bool pass = true;
    std::string detail;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = random_matrix(rng, 1 + rng.below(8), 1 + rng.below(8));
        ++matrices;
        for (auto kind :
             {MatcherKind::chamfer_q, MatcherKind::chamfer_s, MatcherKind::chamfer_qs}) {
            double got = match_chamfer(kind, m);
            if (inject_fault && trial == 500 && kind == MatcherKind::chamfer_q) got = -got;
            const double want = chamfer_bruteforce(kind, m);
            if (std::abs(got - want) > 1e-12 && pass) {
                pass = false;
                detail = "mismatch on matrix " + std::to_string(trial) + " (" +
                         to_string(kind) + "): got " + std::to_string(got) + ", oracle " +
                         std::to_string(want);
            }
        }
    }
    if (pass) detail = std::to_string(matrices) + " matrices vs naive double-loop oracle";
    suite.report("chamfer-oracle", pass, detail);
}

void check_dtw(Suite& suite, Rng& rng) {
    std::size_t matrices = 0, paths = 0;
    bool pass = true;
    std::string detail;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const auto sq = random_matrix(rng, n, n);
        ++matrices;
        const double want = dtw_enumerate(sq, paths);
        const double got = match_dtw(sq, 0.0);
        if (got != want && pass) {
            pass = false;
            detail = "mismatch on matrix " + std::to_string(trial);
        }
    }
    if (pass)
        detail = std::to_string(matrices) + " matrices, " + std::to_string(paths) +
                 " monotone paths enumerated, exact equality";
    suite.report("dtw-path-enumeration", pass, detail);
}

void check_gradients(Suite& suite, Rng& rng) {
    const std::vector<MatcherKind> kinds = {
        MatcherKind::chamfer_qs, MatcherKind::chamfer_q, MatcherKind::chamfer_s,
        MatcherKind::mean,       MatcherKind::diag,      MatcherKind::max,
        MatcherKind::linear,     MatcherKind::dtw};
    std::size_t params_checked = 0;
    bool pass = true;
    std::string detail;
    for (std::size_t k = 0; k < kinds.size() && pass; ++k) {
        MatcherSpec spec;
        spec.kind = kinds[k];
        if (spec.kind == MatcherKind::dtw) spec.dtw_gamma = 0.5;
        TrainConfig cfg;
        cfg.way = 3;
        cfg.shot = 2;
        cfg.projection_dim = 5;
        cfg.seed = 1000 + k;
        TrainState state = init_train_state(cfg, spec, ProjectionMode::learned, 4, 3);
        Episode ep = random_episode(rng, 3, 2, 1, 3, 4);
        while (episode_has_matcher_ties(ep, spec, state, 1e-7))
            ep = random_episode(rng, 3, 2, 1, 3, 4);
        const auto report = finite_diff_check(state, ep, spec, 1e-6, 1e-5);
        for (const auto& block : report.blocks) {
            params_checked += block.count;
            if (!block.pass) {
                pass = false;
                detail = to_string(kinds[k]) + " block '" + block.name + "' max rel err " +
                         std::to_string(block.max_rel_err);
            }
        }
    }
    if (pass)
        detail = std::to_string(params_checked) +
                 " parameters vs central finite differences at 1e-5";
    suite.report("gradient-check", pass, detail);
}

void check_permutations(Suite& suite, Rng& rng) {
    bool pass = true;
    std::string detail;
    std::size_t episodes_checked = 0;
    const auto params = identity_projection(4);
    for (int trial = 0; trial < 100 && pass; ++trial) {
        const auto ep = random_episode(rng, 3, 2, 1, 5, 4);
        Episode shuffled = ep;
        auto perm_fs = [&](FeatureSet& fs) {
            for (std::size_t i = 0; i + 1 < fs.n(); ++i)
                std::swap(fs.clips[i], fs.clips[i + rng.below(fs.n() - i)]);
        };
        for (auto& q : shuffled.queries) perm_fs(q.features);
        for (auto& cls : shuffled.support)
            for (auto& fs : cls) perm_fs(fs);
        ++episodes_checked;
        for (auto kind : {MatcherKind::mean, MatcherKind::max, MatcherKind::chamfer_q,
                          MatcherKind::chamfer_s, MatcherKind::chamfer_qs}) {
            MatcherSpec spec;
            spec.kind = kind;
            const auto a = score_episode(ep, spec, params);
            const auto b = score_episode(shuffled, spec, params);
            for (std::size_t q = 0; q < a.size() && pass; ++q)
                if (a[q].scores != b[q].scores) {
                    pass = false;
                    detail = to_string(kind) + " not bit-identical under clip permutation";
                }
        }
    }

    // Temporal witnesses must move.
    const auto m_diag = [&] {
        SimilarityMatrix m(2, 2);
        m.at(0, 0) = 0.5;
        m.at(0, 1) = 0.2;
        m.at(1, 0) = 0.1;
        m.at(1, 1) = 0.3;
        return m;
    }();
    SimilarityMatrix swapped(2, 2);
    swapped.at(0, 0) = m_diag.at(1, 0);
    swapped.at(0, 1) = m_diag.at(1, 1);
    swapped.at(1, 0) = m_diag.at(0, 0);
    swapped.at(1, 1) = m_diag.at(0, 1);
    if (match_simple(MatcherKind::diag, m_diag) == match_simple(MatcherKind::diag, swapped)) {
        pass = false;
        detail = "diag witness did not change under row permutation";
    }
    SimilarityMatrix aligned(2, 2), crossed(2, 2);
    aligned.at(0, 0) = aligned.at(1, 1) = 1.0;
    crossed.at(0, 1) = crossed.at(1, 0) = 1.0;
    if (match_dtw(aligned, 0.0) == match_dtw(crossed, 0.0)) {
        pass = false;
        detail = "dtw witness did not change under row permutation";
    }
    if (pass)
        detail = std::to_string(episodes_checked) +
                 " episodes bit-identical for non-temporal kinds; diag/dtw witnesses moved";
    suite.report("permutation-invariance", pass, detail);
}

}  // namespace

int run_verification_suite(std::ostream& out, const std::string& fault, std::uint64_t seed) {
    if (fault != "none" && fault != "chamfer-sign") {
        out << "unknown fault mode: " << fault << "\n";
        return 1;
    }
    Suite suite{out};
    Rng rng = Rng::derive(seed, 0x6368656b6bull);
    check_chamfer(suite, rng, fault == "chamfer-sign");
    check_dtw(suite, rng);
    check_gradients(suite, rng);
    check_permutations(suite, rng);
    out << (suite.all_pass ? "verification suite: all checks passed\n"
                           : "verification suite: FAILURES\n");
    return suite.all_pass ? 0 : 3;
}
