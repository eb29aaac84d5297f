#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fewmatch/feature_io.hpp"
#include "fewmatch/matchers.hpp"
#include "fewmatch/projection.hpp"
#include "fewmatch/rng.hpp"
#include "fewmatch/scorer.hpp"
#include "fewmatch/types.hpp"

namespace fewmatch {

struct TrainConfig {
    double learning_rate = 1e-3;
    double tau_init = 10.0;
    int episodes_per_epoch = 200;
    int max_epochs = 20;
    int patience = 3;
    std::uint64_t seed = 0;
    int way = 5;
    int shot = 1;
    int queries_per_class = 1;
    int val_episodes = 200;
    std::size_t projection_dim = 1152;  // ignored in identity mode

    void validate() const;
};

// Everything the optimizer owns. tau is kept as log_tau so it stays positive
// under unconstrained steps.
struct TrainState {
    ProjectionParams params;
    double log_tau = 0.0;
    std::vector<double> linear_weights;  // kind == linear only
    double best_val_accuracy = -1.0;
    int best_epoch = 0;
    Rng rng{0};

    double tau() const;
    std::size_t trainable_count() const;  // excludes tau
};

TrainState init_train_state(const TrainConfig& config, const MatcherSpec& spec,
                            ProjectionMode mode, std::size_t feature_dim, std::size_t clip_count);

struct EpisodeGrads {
    ProjectionGrads projection;
    double d_tau = 0.0;
    std::vector<double> d_linear;

    EpisodeGrads(const ProjectionParams& params, std::size_t linear_count)
        : projection(params), d_linear(linear_count, 0.0) {}
};

// Mean over queries of -log softmax(tau * S)[true class]. When `grads` is
// non-null, fills exact reverse-mode gradients for W, gain, bias, tau and the
// linear weights; max/chamfer contribute argmax subgradients, dtw requires
// gamma > 0.
double episode_loss(const Episode& episode, const MatcherSpec& spec, const TrainState& state,
                    EpisodeGrads* grads);

// One SGD step over every trainable; returns the pre-step loss.
double train_step(TrainState& state, const Episode& episode, const MatcherSpec& spec,
                  const TrainConfig& config);

struct EpochLog {
    int epoch = 0;
    double mean_train_loss = 0.0;
    double val_accuracy = 0.0;
    double tau = 0.0;
};

struct TrainResult {
    TrainState best;
    std::vector<EpochLog> log;
};

// Episodic training with early stopping on a fixed seeded validation episode
// set. Strictly sequential for reproducibility.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const MatcherSpec& spec,
                  ProjectionMode mode);

// The matcher spec with the state's trained linear weights substituted in.
MatcherSpec spec_with_state(const MatcherSpec& spec, const TrainState& state);

struct FiniteDiffBlock {
    std::string name;
    std::size_t count = 0;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct FiniteDiffReport {
    std::vector<FiniteDiffBlock> blocks;
    bool pass = true;
};

// Central differences against the analytic gradients, per parameter block.
// Relative error uses denominator max(1, |a|, |b|): central differences at
// step 1e-6 carry ~1e-10 absolute noise, so a pure ratio is meaningless for
// near-zero partials. `tamper` lets self-tests corrupt the analytic gradients
// before comparison.
FiniteDiffReport finite_diff_check(const TrainState& state, const Episode& episode,
                                   const MatcherSpec& spec, double step, double tolerance,
                                   const std::function<void(EpisodeGrads&)>& tamper = nullptr);

// True if any max/chamfer selection in the episode has a runner-up within
// `tol` of the winner; such points sit on a subgradient boundary and are
// excluded from finite-difference comparisons.
bool episode_has_matcher_ties(const Episode& episode, const MatcherSpec& spec,
                              const TrainState& state, double tol);

// Checkpoint: the projection codec's bytes, then u64 epoch and binary64 tau;
// a linear-weights section (u32 side length, then the grid) follows only when
// the trained matcher has one.
void save_train_checkpoint(const std::filesystem::path& destination, const TrainState& state,
                           int epoch);
struct TrainCheckpoint {
    ProjectionParams params;
    std::uint64_t epoch = 0;
    double tau = 0.0;
    std::vector<double> linear_weights;
};
TrainCheckpoint load_train_checkpoint(const std::filesystem::path& source);

void write_train_log(const std::filesystem::path& destination, const std::vector<EpochLog>& log);

}  // namespace fewmatch
