#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fewmatch/types.hpp"

namespace fewmatch {

enum class ProjectionMode : std::uint8_t { identity = 0, learned = 1 };

// The feature map applied to every clip (or clip-tuple) vector before
// similarities are taken. Learned mode: x -> l2_normalize(LN(W x)) with
// LN(z) = gain * (z - mean) / sqrt(var + eps) + bias, population variance,
// eps = 1e-5. Identity mode is plain l2 normalization.
struct ProjectionParams {
    ProjectionMode mode = ProjectionMode::identity;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<double> weight;  // row-major output_dim x input_dim, learned mode only
    std::vector<double> gain;    // output_dim
    std::vector<double> bias;    // output_dim

    std::size_t trainable_count() const {
        return mode == ProjectionMode::learned ? weight.size() + gain.size() + bias.size() : 0;
    }
};

struct ProjectionGrads {
    std::vector<double> d_weight;
    std::vector<double> d_gain;
    std::vector<double> d_bias;

    explicit ProjectionGrads(const ProjectionParams& params)
        : d_weight(params.weight.size(), 0.0),
          d_gain(params.gain.size(), 0.0),
          d_bias(params.bias.size(), 0.0) {}
};

inline constexpr double kLayerNormEps = 1e-5;

ProjectionParams identity_projection(std::size_t dim);

// W ~ U[-a, a], a = sqrt(6 / (input_dim + output_dim)); gain = 1, bias = 0.
ProjectionParams init_projection(std::size_t input_dim, std::size_t output_dim,
                                 std::uint64_t seed);

// Unit-norm output. Throws DataError on dimension mismatch or a zero vector
// at the l2 step.
std::vector<double> project(const ProjectionParams& params, std::span<const double> x);

// Accumulates parameter gradients into `grads` and returns d loss / d x.
std::vector<double> project_backward(const ProjectionParams& params, std::span<const double> x,
                                     std::span<const double> upstream, ProjectionGrads& grads);

// The l clip vectors indexed by `tuple`, concatenated (widened to double).
std::vector<double> concat_tuple(const FeatureSet& fs, std::span<const int> tuple);

// Checkpoint: "FPP1", u32 input_dim, u32 output_dim, u8 mode, then (learned
// mode only) W row-major, gain, bias as binary64 little-endian.
void save_projection(const ProjectionParams& params, const std::filesystem::path& destination);
ProjectionParams load_projection(const std::filesystem::path& source);

// Raw codec, shared with the trainer checkpoint which appends a trailer.
std::string encode_projection(const ProjectionParams& params);
std::size_t decode_projection(const std::string& raw, ProjectionParams& params);

}  // namespace fewmatch
