#include "fewmatch/matchers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fewmatch {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// gamma * log(sum exp(v/gamma)) over the finite entries; -inf entries are
// unreachable states and drop out. Exact max when gamma == 0.
double smooth_max(const double* vals, int count, double gamma) {
    double mx = kNegInf;
    for (int i = 0; i < count; ++i) mx = std::max(mx, vals[i]);
    if (mx == kNegInf || gamma == 0.0) return mx;
    double sum = 0.0;
    for (int i = 0; i < count; ++i)
        if (vals[i] != kNegInf) sum += std::exp((vals[i] - mx) / gamma);
    return mx + gamma * std::log(sum);
}

void softmax_weights(const double* vals, int count, double gamma, double* out) {
    double mx = kNegInf;
    for (int i = 0; i < count; ++i) mx = std::max(mx, vals[i]);
    double sum = 0.0;
    for (int i = 0; i < count; ++i) {
        out[i] = vals[i] == kNegInf ? 0.0 : std::exp((vals[i] - mx) / gamma);
        sum += out[i];
    }
    for (int i = 0; i < count; ++i) out[i] /= sum;
}

void require_nonempty(const SimilarityMatrix& m) {
    if (m.rows == 0 || m.cols == 0) throw DataError("empty similarity matrix");
}

void require_square(const SimilarityMatrix& m, const char* who) {
    if (m.rows != m.cols)
        throw DataError(std::string(who) + " requires a square matrix, got " +
                        std::to_string(m.rows) + "x" + std::to_string(m.cols));
}

}  // namespace

MatcherKind matcher_kind_from_string(const std::string& name) {
    if (name == "mean") return MatcherKind::mean;
    if (name == "max") return MatcherKind::max;
    if (name == "diag") return MatcherKind::diag;
    if (name == "linear") return MatcherKind::linear;
    if (name == "chamfer_q") return MatcherKind::chamfer_q;
    if (name == "chamfer_s") return MatcherKind::chamfer_s;
    if (name == "chamfer_qs") return MatcherKind::chamfer_qs;
    if (name == "dtw") return MatcherKind::dtw;
    throw UsageError("unknown matcher kind: " + name);
}

std::string to_string(MatcherKind kind) {
    switch (kind) {
        case MatcherKind::mean: return "mean";
        case MatcherKind::max: return "max";
        case MatcherKind::diag: return "diag";
        case MatcherKind::linear: return "linear";
        case MatcherKind::chamfer_q: return "chamfer_q";
        case MatcherKind::chamfer_s: return "chamfer_s";
        case MatcherKind::chamfer_qs: return "chamfer_qs";
        case MatcherKind::dtw: return "dtw";
    }
    return "?";
}

void MatcherSpec::validate() const {
    if (tuple_len < 1) throw DataError("tuple length must be >= 1");
    if (dtw_gamma < 0) throw DataError("dtw gamma must be >= 0");
}

double sum_canonical(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double acc = 0.0;
    for (double v : values) acc += v;
    return acc;
}

SimilarityMatrix similarity_matrix(const std::vector<std::vector<double>>& q_feats,
                                   const std::vector<std::vector<double>>& x_feats) {
    if (q_feats.empty() || x_feats.empty()) throw DataError("empty feature list");
    const std::size_t dim = q_feats.front().size();
    for (const auto& v : q_feats)
        if (v.size() != dim) throw DataError("similarity: dimension mismatch");
    for (const auto& v : x_feats)
        if (v.size() != dim) throw DataError("similarity: dimension mismatch");

    SimilarityMatrix m(q_feats.size(), x_feats.size());
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = 0; j < m.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dim; ++k) acc += q_feats[i][k] * x_feats[j][k];
            m.at(i, j) = acc;
        }
    return m;
}

double match_simple(MatcherKind kind, const SimilarityMatrix& m) {
    require_nonempty(m);
    switch (kind) {
        case MatcherKind::mean:
            return sum_canonical(m.values) / static_cast<double>(m.rows * m.cols);
        case MatcherKind::max:
            return *std::max_element(m.values.begin(), m.values.end());
        case MatcherKind::diag: {
            require_square(m, "diag");
            double acc = 0.0;
            for (std::size_t i = 0; i < m.rows; ++i) acc += m.at(i, i);
            return acc / static_cast<double>(m.rows);
        }
        default:
            throw DataError("match_simple handles mean/max/diag only");
    }
}

std::vector<std::size_t> chamfer_row_argmax(const SimilarityMatrix& m) {
    require_nonempty(m);
    std::vector<std::size_t> arg(m.rows, 0);
    for (std::size_t i = 0; i < m.rows; ++i) {
        double best = m.at(i, 0);
        for (std::size_t j = 1; j < m.cols; ++j)
            if (m.at(i, j) > best) {
                best = m.at(i, j);
                arg[i] = j;
            }
    }
    return arg;
}

double match_chamfer(MatcherKind variant, const SimilarityMatrix& m) {
    require_nonempty(m);
    auto query_side = [&] {
        std::vector<double> row_max(m.rows, kNegInf);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j)
                row_max[i] = std::max(row_max[i], m.at(i, j));
        return sum_canonical(std::move(row_max)) / static_cast<double>(m.rows);
    };
    auto support_side = [&] {
        std::vector<double> col_max(m.cols, kNegInf);
        for (std::size_t i = 0; i < m.rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j)
                col_max[j] = std::max(col_max[j], m.at(i, j));
        return sum_canonical(std::move(col_max)) / static_cast<double>(m.cols);
    };
    switch (variant) {
        case MatcherKind::chamfer_q: return query_side();
        case MatcherKind::chamfer_s: return support_side();
        case MatcherKind::chamfer_qs: return query_side() + support_side();
        default: throw DataError("match_chamfer handles chamfer_{q,s,qs} only");
    }
}

double match_linear(const std::vector<double>& weights, const SimilarityMatrix& m) {
    require_nonempty(m);
    require_square(m, "linear");
    if (weights.size() != m.values.size())
        throw DataError("linear weights shape mismatch: " + std::to_string(weights.size()) +
                        " vs " + std::to_string(m.values.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * m.values[i];
    return acc;
}

// --- DTW -------------------------------------------------------------------
//
// The score is max over monotone paths of (path sum) / (path length), which
// has no optimal substructure in (cell) alone: a prefix that loses on the
// running ratio can still win after normalization. The DP is therefore
// stratified by path length: dp[L][i][j] = best path sum among paths of
// exactly L cells ending at (i,j). A path of L cells reaches (i,j) iff
// max(i,j)+1 <= L <= i+j+1.

namespace {

struct DtwTable {
    std::size_t n = 0;
    std::size_t l_max = 0;
    std::vector<double> dp;  // [(L-1) * n + i] * n + j

    double& cell(std::size_t len, std::size_t i, std::size_t j) {
        return dp[((len - 1) * n + i) * n + j];
    }
    double cell(std::size_t len, std::size_t i, std::size_t j) const {
        return dp[((len - 1) * n + i) * n + j];
    }
    static bool reachable(std::size_t len, std::size_t i, std::size_t j) {
        return len >= std::max(i, j) + 1 && len <= i + j + 1;
    }
};

DtwTable dtw_forward(const SimilarityMatrix& m, double gamma) {
    DtwTable t;
    t.n = m.rows;
    t.l_max = 2 * t.n - 1;
    t.dp.assign(t.l_max * t.n * t.n, kNegInf);
    t.cell(1, 0, 0) = m.at(0, 0);
    for (std::size_t len = 2; len <= t.l_max; ++len)
        for (std::size_t i = 0; i < t.n; ++i)
            for (std::size_t j = 0; j < t.n; ++j) {
                if (i == 0 && j == 0) continue;
                if (!DtwTable::reachable(len, i, j)) continue;
                double cand[3] = {kNegInf, kNegInf, kNegInf};
                if (i > 0) cand[0] = t.cell(len - 1, i - 1, j);
                if (j > 0) cand[1] = t.cell(len - 1, i, j - 1);
                if (i > 0 && j > 0) cand[2] = t.cell(len - 1, i - 1, j - 1);
                const double best = smooth_max(cand, 3, gamma);
                if (best != kNegInf) t.cell(len, i, j) = m.at(i, j) + best;
            }
    return t;
}

}  // namespace

double match_dtw(const SimilarityMatrix& m, double gamma) {
    require_nonempty(m);
    require_square(m, "dtw");
    if (gamma < 0) throw DataError("dtw gamma must be >= 0");
    const DtwTable t = dtw_forward(m, gamma);
    std::vector<double> candidates;
    candidates.reserve(t.n);
    for (std::size_t len = t.n; len <= t.l_max; ++len)
        candidates.push_back(t.cell(len, t.n - 1, t.n - 1) / static_cast<double>(len));
    return smooth_max(candidates.data(), static_cast<int>(candidates.size()), gamma);
}

std::vector<std::vector<int>> enumerate_tuples(int n, int l, TupleMode mode) {
    if (l < 1) throw DataError("tuple length must be >= 1");
    if (l > n)
        throw DataError("tuple length " + std::to_string(l) + " exceeds clip count " +
                        std::to_string(n));
    std::vector<std::vector<int>> out;
    std::vector<int> current;
    current.reserve(l);
    if (mode == TupleMode::ordered) {
        auto rec = [&](auto&& self, int start) -> void {
            if (static_cast<int>(current.size()) == l) {
                out.push_back(current);
                return;
            }
            const int remaining = l - static_cast<int>(current.size());
            for (int i = start; i <= n - remaining; ++i) {
                current.push_back(i);
                self(self, i + 1);
                current.pop_back();
            }
        };
        rec(rec, 0);
    } else {
        std::vector<bool> used(n, false);
        auto rec = [&](auto&& self) -> void {
            if (static_cast<int>(current.size()) == l) {
                out.push_back(current);
                return;
            }
            for (int i = 0; i < n; ++i) {
                if (used[i]) continue;
                used[i] = true;
                current.push_back(i);
                self(self);
                current.pop_back();
                used[i] = false;
            }
        };
        rec(rec);
    }
    return out;
}

SimilarityMatrix joint_matrix(const std::vector<SimilarityMatrix>& mats) {
    if (mats.empty()) throw DataError("joint matrix needs at least one input");
    const std::size_t rows = mats.front().rows;
    std::size_t cols = 0;
    for (const auto& m : mats) {
        if (m.rows != rows) throw DataError("joint matrix row-count mismatch");
        cols += m.cols;
    }
    SimilarityMatrix joint(rows, cols);
    std::size_t offset = 0;
    for (const auto& m : mats) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < m.cols; ++j) joint.at(i, offset + j) = m.at(i, j);
        offset += m.cols;
    }
    return joint;
}

SimilarityMatrix tuple_similarity_matrix(const FeatureSet& q, const FeatureSet& x,
                                         const ProjectionParams& params, int l,
                                         TupleMode mode) {
    if (q.d() != x.d()) throw DataError("tuple similarity: feature dimension mismatch");
    const auto q_tuples = enumerate_tuples(static_cast<int>(q.n()), l, mode);
    const auto x_tuples = enumerate_tuples(static_cast<int>(x.n()), l, mode);
    std::vector<std::vector<double>> q_proj, x_proj;
    q_proj.reserve(q_tuples.size());
    x_proj.reserve(x_tuples.size());
    for (const auto& t : q_tuples) q_proj.push_back(project(params, concat_tuple(q, t)));
    for (const auto& t : x_tuples) x_proj.push_back(project(params, concat_tuple(x, t)));
    return similarity_matrix(q_proj, x_proj);
}

double apply_matcher(const MatcherSpec& spec, const SimilarityMatrix& m) {
    switch (spec.kind) {
        case MatcherKind::mean:
        case MatcherKind::max:
        case MatcherKind::diag:
            return match_simple(spec.kind, m);
        case MatcherKind::chamfer_q:
        case MatcherKind::chamfer_s:
        case MatcherKind::chamfer_qs:
            return match_chamfer(spec.kind, m);
        case MatcherKind::linear:
            return match_linear(spec.linear_weights, m);
        case MatcherKind::dtw:
            return match_dtw(m, spec.dtw_gamma);
    }
    throw DataError("unhandled matcher kind");
}

void matcher_backward(const MatcherSpec& spec, const SimilarityMatrix& m, double upstream,
                      SimilarityMatrix& d_m, std::vector<double>* d_linear_weights) {
    require_nonempty(m);
    if (d_m.rows != m.rows || d_m.cols != m.cols)
        throw DataError("matcher_backward: gradient shape mismatch");

    switch (spec.kind) {
        case MatcherKind::mean: {
            const double g = upstream / static_cast<double>(m.rows * m.cols);
            for (auto& v : d_m.values) v += g;
            return;
        }
        case MatcherKind::max: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < m.values.size(); ++i)
                if (m.values[i] > m.values[best]) best = i;
            d_m.values[best] += upstream;
            return;
        }
        case MatcherKind::diag: {
            require_square(m, "diag");
            const double g = upstream / static_cast<double>(m.rows);
            for (std::size_t i = 0; i < m.rows; ++i) d_m.at(i, i) += g;
            return;
        }
        case MatcherKind::linear: {
            require_square(m, "linear");
            if (spec.linear_weights.size() != m.values.size())
                throw DataError("linear weights shape mismatch");
            for (std::size_t i = 0; i < m.values.size(); ++i) {
                d_m.values[i] += upstream * spec.linear_weights[i];
                if (d_linear_weights) (*d_linear_weights)[i] += upstream * m.values[i];
            }
            return;
        }
        case MatcherKind::chamfer_q:
        case MatcherKind::chamfer_s:
        case MatcherKind::chamfer_qs: {
            if (spec.kind != MatcherKind::chamfer_s) {
                const auto arg = chamfer_row_argmax(m);
                const double g = upstream / static_cast<double>(m.rows);
                for (std::size_t i = 0; i < m.rows; ++i) d_m.at(i, arg[i]) += g;
            }
            if (spec.kind != MatcherKind::chamfer_q) {
                const double g = upstream / static_cast<double>(m.cols);
                for (std::size_t j = 0; j < m.cols; ++j) {
                    std::size_t best = 0;
                    for (std::size_t i = 1; i < m.rows; ++i)
                        if (m.at(i, j) > m.at(best, j)) best = i;
                    d_m.at(best, j) += g;
                }
            }
            return;
        }
        case MatcherKind::dtw: {
            require_square(m, "dtw");
            if (spec.dtw_gamma <= 0)
                throw DataError("dtw with gamma=0 has no gradient; use gamma > 0 for training");
            const double gamma = spec.dtw_gamma;
            const DtwTable t = dtw_forward(m, gamma);
            const std::size_t n = t.n;

            std::vector<double> grad(t.dp.size(), 0.0);
            auto g_cell = [&](std::size_t len, std::size_t i, std::size_t j) -> double& {
                return grad[((len - 1) * n + i) * n + j];
            };

            std::vector<double> candidates(t.l_max - n + 1);
            for (std::size_t len = n; len <= t.l_max; ++len)
                candidates[len - n] = t.cell(len, n - 1, n - 1) / static_cast<double>(len);
            std::vector<double> w(candidates.size());
            softmax_weights(candidates.data(), static_cast<int>(candidates.size()), gamma,
                            w.data());
            for (std::size_t len = n; len <= t.l_max; ++len)
                g_cell(len, n - 1, n - 1) += upstream * w[len - n] / static_cast<double>(len);

            for (std::size_t len = t.l_max; len >= 2; --len)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        if (i == 0 && j == 0) continue;
                        if (!DtwTable::reachable(len, i, j)) continue;
                        const double g = g_cell(len, i, j);
                        if (g == 0.0) continue;
                        d_m.at(i, j) += g;
                        double cand[3] = {kNegInf, kNegInf, kNegInf};
                        if (i > 0) cand[0] = t.cell(len - 1, i - 1, j);
                        if (j > 0) cand[1] = t.cell(len - 1, i, j - 1);
                        if (i > 0 && j > 0) cand[2] = t.cell(len - 1, i - 1, j - 1);
                        double pw[3];
                        softmax_weights(cand, 3, gamma, pw);
                        if (i > 0) g_cell(len - 1, i - 1, j) += g * pw[0];
                        if (j > 0) g_cell(len - 1, i, j - 1) += g * pw[1];
                        if (i > 0 && j > 0) g_cell(len - 1, i - 1, j - 1) += g * pw[2];
                    }
            d_m.at(0, 0) += g_cell(1, 0, 0);
            return;
        }
    }
    throw DataError("unhandled matcher kind");
}

}  // namespace fewmatch
