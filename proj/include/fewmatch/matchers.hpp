#pragma once

#include <string>
#include <vector>

#include "fewmatch/projection.hpp"
#include "fewmatch/types.hpp"

namespace fewmatch {

// Pairwise similarity grid. Rows index the query side, columns the support
// side; joint and tuple variants just change the shape.
struct SimilarityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;  // row-major

    SimilarityMatrix() = default;
    SimilarityMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

enum class MatcherKind { mean, max, diag, linear, chamfer_q, chamfer_s, chamfer_qs, dtw };
enum class TupleMode { ordered, all };
enum class Aggregation { single_average, joint };

MatcherKind matcher_kind_from_string(const std::string& name);
std::string to_string(MatcherKind kind);

// Tagged choice of matching function plus its hyperparameters.
struct MatcherSpec {
    MatcherKind kind = MatcherKind::chamfer_qs;
    int tuple_len = 1;
    TupleMode tuple_mode = TupleMode::ordered;
    Aggregation aggregation = Aggregation::single_average;
    double dtw_gamma = 0.0;                // 0 = hard path maximum
    std::vector<double> linear_weights;    // kind == linear, n' x n' row-major

    void validate() const;
    bool is_temporal() const {
        return kind == MatcherKind::diag || kind == MatcherKind::dtw ||
               kind == MatcherKind::linear;
    }
};

// m_ij = dot(q_i, x_j); inputs are expected unit-norm.
SimilarityMatrix similarity_matrix(const std::vector<std::vector<double>>& q_feats,
                                   const std::vector<std::vector<double>>& x_feats);

double match_simple(MatcherKind kind, const SimilarityMatrix& m);  // mean | max | diag
double match_chamfer(MatcherKind variant, const SimilarityMatrix& m);  // chamfer_{q,s,qs}
double match_linear(const std::vector<double>& weights, const SimilarityMatrix& m);

// Best monotone path from (0,0) to (n-1,n-1), steps right/down/diagonal,
// scored as (sum of entries on the path) / (cells visited). gamma = 0 gives
// the exact maximum over paths; gamma > 0 substitutes gamma*log-sum-exp for
// every max so the score is differentiable.
double match_dtw(const SimilarityMatrix& m, double gamma);

// ordered: strictly increasing index tuples, lexicographic, C(n,l) of them;
// all: every length-l sequence of distinct indices, lexicographic, n!/(n-l)!.
std::vector<std::vector<int>> enumerate_tuples(int n, int l, TupleMode mode);

// Horizontal concatenation in support order.
SimilarityMatrix joint_matrix(const std::vector<SimilarityMatrix>& mats);

SimilarityMatrix tuple_similarity_matrix(const FeatureSet& q, const FeatureSet& x,
                                         const ProjectionParams& params, int l, TupleMode mode);

double apply_matcher(const MatcherSpec& spec, const SimilarityMatrix& m);

// Row-wise argmax pairs (query clip -> support clip) of the chamfer-Q scan,
// smallest column on ties. Used by the correspondence dump.
std::vector<std::size_t> chamfer_row_argmax(const SimilarityMatrix& m);

// d(upstream * f(M)) / dM, accumulated into d_m. Subgradients at argmax cells
// for max/chamfer (smallest-index tie rule); dtw requires gamma > 0 here.
// d_linear_weights may be null unless kind == linear.
void matcher_backward(const MatcherSpec& spec, const SimilarityMatrix& m, double upstream,
                      SimilarityMatrix& d_m, std::vector<double>* d_linear_weights);

// Sum in a value-sorted order so permutation-invariant reductions are
// bit-identical under input permutations.
double sum_canonical(std::vector<double> values);

}  // namespace fewmatch
