#include "fewmatch/classifier.hpp"

#include <cmath>

#include "fewmatch/rng.hpp"

namespace fewmatch {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

}  // namespace

EpisodeClassifier fit_episode_classifier(const Episode& episode, int epochs, double lr) {
    if (episode.way < 1) throw DataError("classifier: invalid episode");
    const std::size_t d = episode.feature_dim();

    EpisodeClassifier clf;
    clf.way = episode.way;
    clf.d = d;
    clf.weight.assign(episode.way * d, 0.0);
    clf.bias.assign(episode.way, 0.0);

    // (clip feature, class) training samples in a fixed seeded order.
    std::vector<std::pair<const std::vector<float>*, int>> samples;
    for (int c = 0; c < episode.way; ++c)
        for (const auto& fs : episode.support[c])
            for (const auto& clip : fs.clips) samples.emplace_back(&clip, c);
    Rng rng = Rng::derive(static_cast<std::uint64_t>(episode.episode_id), 0x636c66ull);
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        std::swap(samples[i], samples[i + rng.below(samples.size() - i)]);

    const std::size_t params = clf.weight.size() + clf.bias.size();
    std::vector<double> m(params, 0.0), v(params, 0.0), grad(params, 0.0);

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& [clip, label] : samples) {
            std::vector<double> logits(clf.way);
            for (int c = 0; c < clf.way; ++c) {
                double acc = clf.bias[c];
                const double* row = clf.weight.data() + c * d;
                for (std::size_t j = 0; j < d; ++j) acc += row[j] * (*clip)[j];
                logits[c] = acc;
            }
            const auto p = softmax(logits);
            for (int c = 0; c < clf.way; ++c) {
                const double delta = p[c] - (c == label ? 1.0 : 0.0);
                double* g_row = grad.data() + c * d;
                for (std::size_t j = 0; j < d; ++j) g_row[j] += delta * (*clip)[j];
                grad[clf.weight.size() + c] += delta;
            }
        }
        const double inv_n = 1.0 / static_cast<double>(samples.size());
        for (auto& g : grad) g *= inv_n;

        const double bc1 = 1.0 - std::pow(kBeta1, epoch);
        const double bc2 = 1.0 - std::pow(kBeta2, epoch);
        for (std::size_t i = 0; i < params; ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * grad[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            const double step = lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
            if (i < clf.weight.size())
                clf.weight[i] -= step;
            else
                clf.bias[i - clf.weight.size()] -= step;
        }
    }
    return clf;
}

ClassScores classify_query(const EpisodeClassifier& clf, const FeatureSet& query) {
    if (query.d() != clf.d) throw DataError("classifier: feature dimension mismatch");
    ClassScores out;
    out.scores.assign(clf.way, 0.0);
    for (const auto& clip : query.clips) {
        std::vector<double> logits(clf.way);
        for (int c = 0; c < clf.way; ++c) {
            double acc = clf.bias[c];
            const double* row = clf.weight.data() + c * clf.d;
            for (std::size_t j = 0; j < clf.d; ++j) acc += row[j] * clip[j];
            logits[c] = acc;
        }
        const auto p = softmax(logits);
        for (int c = 0; c < clf.way; ++c) out.scores[c] += p[c];
    }
    return out;
}

}  // namespace fewmatch
