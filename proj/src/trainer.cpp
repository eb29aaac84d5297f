#include "fewmatch/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "fewmatch/sampler.hpp"

namespace fewmatch {

void TrainConfig::validate() const {
    if (learning_rate < 0) throw DataError("train config: learning rate must be >= 0");
    if (tau_init <= 0) throw DataError("train config: tau init must be > 0");
    if (patience < 1) throw DataError("train config: patience must be >= 1");
    if (episodes_per_epoch < 1 || max_epochs < 1)
        throw DataError("train config: epoch sizes must be >= 1");
}

double TrainState::tau() const { return std::exp(log_tau); }

std::size_t TrainState::trainable_count() const {
    return params.trainable_count() + linear_weights.size();
}

TrainState init_train_state(const TrainConfig& config, const MatcherSpec& spec,
                            ProjectionMode mode, std::size_t feature_dim,
                            std::size_t clip_count) {
    config.validate();
    spec.validate();
    TrainState state;
    const std::size_t input_dim = static_cast<std::size_t>(spec.tuple_len) * feature_dim;
    state.params = mode == ProjectionMode::learned
                       ? init_projection(input_dim, config.projection_dim,
                                         splitmix64_once(config.seed, 0x70726f6aull))
                       : identity_projection(input_dim);
    state.log_tau = std::log(config.tau_init);
    if (spec.kind == MatcherKind::linear) {
        const auto tuples =
            enumerate_tuples(static_cast<int>(clip_count), spec.tuple_len, spec.tuple_mode);
        const std::size_t side = tuples.size();
        // Start at the mean matcher: every entry 1/side^2.
        state.linear_weights.assign(side * side,
                                    1.0 / static_cast<double>(side * side));
    }
    state.rng = Rng::derive(config.seed, 0x657069ull);
    return state;
}

MatcherSpec spec_with_state(const MatcherSpec& spec, const TrainState& state) {
    MatcherSpec out = spec;
    if (spec.kind == MatcherKind::linear) out.linear_weights = state.linear_weights;
    return out;
}

namespace {

struct ProjectedVideo {
    std::vector<std::vector<double>> inputs;   // concatenated tuple vectors
    std::vector<std::vector<double>> outputs;  // unit-norm projections
    std::vector<std::vector<double>> d_outputs;
};

ProjectedVideo project_video(const FeatureSet& fs, const std::vector<std::vector<int>>& tuples,
                             const ProjectionParams& params) {
    ProjectedVideo pv;
    pv.inputs.reserve(tuples.size());
    pv.outputs.reserve(tuples.size());
    for (const auto& t : tuples) {
        pv.inputs.push_back(concat_tuple(fs, t));
        pv.outputs.push_back(project(params, pv.inputs.back()));
    }
    pv.d_outputs.assign(tuples.size(), std::vector<double>(params.output_dim, 0.0));
    return pv;
}

// dM flows to both sides of m_tu = u_t . v_u.
void similarity_backward(const SimilarityMatrix& d_m, ProjectedVideo& q, ProjectedVideo& x) {
    for (std::size_t i = 0; i < d_m.rows; ++i)
        for (std::size_t j = 0; j < d_m.cols; ++j) {
            const double g = d_m.at(i, j);
            if (g == 0.0) continue;
            const auto& u = q.outputs[i];
            const auto& v = x.outputs[j];
            auto& du = q.d_outputs[i];
            auto& dv = x.d_outputs[j];
            for (std::size_t k = 0; k < u.size(); ++k) {
                du[k] += g * v[k];
                dv[k] += g * u[k];
            }
        }
}

void flush_video_grads(const ProjectedVideo& pv, const ProjectionParams& params,
                       ProjectionGrads& grads) {
    if (params.mode != ProjectionMode::learned) return;
    for (std::size_t t = 0; t < pv.inputs.size(); ++t) {
        bool any = false;
        for (double g : pv.d_outputs[t])
            if (g != 0.0) {
                any = true;
                break;
            }
        if (any) project_backward(params, pv.inputs[t], pv.d_outputs[t], grads);
    }
}

}  // namespace

double episode_loss(const Episode& episode, const MatcherSpec& spec, const TrainState& state,
                    EpisodeGrads* grads) {
    episode.validate();
    spec.validate();
    if (grads && spec.kind == MatcherKind::dtw && spec.dtw_gamma <= 0)
        throw DataError("dtw with gamma=0 has no gradient; use gamma > 0 for training");
    if (episode.queries.empty()) throw DataError("episode has no queries");

    const MatcherSpec eff = spec_with_state(spec, state);
    const int n = static_cast<int>(episode.clip_count());
    const auto tuples = enumerate_tuples(n, spec.tuple_len, spec.tuple_mode);
    const double tau = state.tau();
    const double query_weight = 1.0 / static_cast<double>(episode.queries.size());

    std::vector<std::vector<ProjectedVideo>> supports(episode.way);
    for (int c = 0; c < episode.way; ++c)
        for (const auto& fs : episode.support[c])
            supports[c].push_back(project_video(fs, tuples, state.params));

    double loss = 0.0;
    for (const auto& query : episode.queries) {
        ProjectedVideo q = project_video(query.features, tuples, state.params);

        std::vector<std::vector<SimilarityMatrix>> mats(episode.way);
        std::vector<double> scores(episode.way);
        for (int c = 0; c < episode.way; ++c) {
            mats[c].reserve(episode.shot);
            for (int s = 0; s < episode.shot; ++s)
                mats[c].push_back(similarity_matrix(q.outputs, supports[c][s].outputs));
            if (spec.aggregation == Aggregation::joint) {
                scores[c] = apply_matcher(eff, joint_matrix(mats[c]));
            } else {
                double acc = 0.0;
                for (const auto& m : mats[c]) acc += apply_matcher(eff, m);
                scores[c] = acc / static_cast<double>(episode.shot);
            }
        }

        // Stable softmax over tau * S.
        double mx = -std::numeric_limits<double>::infinity();
        for (double s : scores) mx = std::max(mx, tau * s);
        std::vector<double> p(episode.way);
        double z = 0.0;
        for (int c = 0; c < episode.way; ++c) {
            p[c] = std::exp(tau * scores[c] - mx);
            z += p[c];
        }
        for (auto& v : p) v /= z;
        loss += -std::log(p[query.true_class]) * query_weight;

        if (!grads) continue;

        for (int c = 0; c < episode.way; ++c) {
            const double delta = p[c] - (c == query.true_class ? 1.0 : 0.0);
            grads->d_tau += delta * scores[c] * query_weight;
            const double d_score = tau * delta * query_weight;
            if (d_score == 0.0) continue;

            if (spec.aggregation == Aggregation::joint) {
                const SimilarityMatrix joint = joint_matrix(mats[c]);
                SimilarityMatrix d_joint(joint.rows, joint.cols);
                matcher_backward(eff, joint, d_score, d_joint,
                                 grads->d_linear.empty() ? nullptr : &grads->d_linear);
                std::size_t offset = 0;
                for (int s = 0; s < episode.shot; ++s) {
                    SimilarityMatrix d_m(mats[c][s].rows, mats[c][s].cols);
                    for (std::size_t i = 0; i < d_m.rows; ++i)
                        for (std::size_t j = 0; j < d_m.cols; ++j)
                            d_m.at(i, j) = d_joint.at(i, offset + j);
                    offset += d_m.cols;
                    similarity_backward(d_m, q, supports[c][s]);
                }
            } else {
                const double per_shot = d_score / static_cast<double>(episode.shot);
                for (int s = 0; s < episode.shot; ++s) {
                    SimilarityMatrix d_m(mats[c][s].rows, mats[c][s].cols);
                    matcher_backward(eff, mats[c][s], per_shot, d_m,
                                     grads->d_linear.empty() ? nullptr : &grads->d_linear);
                    similarity_backward(d_m, q, supports[c][s]);
                }
            }
        }
        flush_video_grads(q, state.params, grads->projection);
    }

    if (grads)
        for (int c = 0; c < episode.way; ++c)
            for (auto& pv : supports[c]) flush_video_grads(pv, state.params, grads->projection);
    return loss;
}

double train_step(TrainState& state, const Episode& episode, const MatcherSpec& spec,
                  const TrainConfig& config) {
    EpisodeGrads grads(state.params, state.linear_weights.size());
    const double loss = episode_loss(episode, spec, state, &grads);
    const double lr = config.learning_rate;
    if (lr != 0.0) {
        for (std::size_t i = 0; i < state.params.weight.size(); ++i)
            state.params.weight[i] -= lr * grads.projection.d_weight[i];
        for (std::size_t i = 0; i < state.params.gain.size(); ++i)
            state.params.gain[i] -= lr * grads.projection.d_gain[i];
        for (std::size_t i = 0; i < state.params.bias.size(); ++i)
            state.params.bias[i] -= lr * grads.projection.d_bias[i];
        // d loss / d log_tau = tau * d loss / d tau.
        state.log_tau -= lr * state.tau() * grads.d_tau;
        for (std::size_t i = 0; i < state.linear_weights.size(); ++i)
            state.linear_weights[i] -= lr * grads.d_linear[i];
    }
    return loss;
}

TrainResult train(const TrainConfig& config, const Dataset& dataset, const MatcherSpec& spec,
                  ProjectionMode mode) {
    config.validate();
    if (!dataset.has_split("train")) throw DataError("train split required");
    if (!dataset.has_split("val")) throw DataError("validation split required");

    const auto& any = dataset.features.begin()->second;
    TrainState state = init_train_state(config, spec, mode, any.d(), any.n());

    // Small validation splits cannot host full-way episodes; cap the val way
    // so early stopping still compares a fixed protocol across epochs.
    const int val_way = std::min<int>(
        config.way, static_cast<int>(dataset.split_index.at("val").size()));
    const auto val_episodes =
        build_fixed_test_episodes(dataset, "val", val_way, config.shot,
                                  config.queries_per_class, config.val_episodes,
                                  splitmix64_once(config.seed, 0x76616cull));

    TrainResult result;
    result.best = state;
    int stale = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        double loss_sum = 0.0;
        for (int e = 0; e < config.episodes_per_epoch; ++e) {
            const Episode ep = sample_episode(dataset, "train", config.way, config.shot,
                                              config.queries_per_class, state.rng);
            loss_sum += train_step(state, ep, spec, config);
        }
        const EvalOutcome val =
            evaluate_serial(val_episodes, spec_with_state(spec, state), state.params);

        EpochLog row;
        row.epoch = epoch;
        row.mean_train_loss = loss_sum / static_cast<double>(config.episodes_per_epoch);
        row.val_accuracy = val.mean_accuracy;
        row.tau = state.tau();
        result.log.push_back(row);

        if (val.mean_accuracy > state.best_val_accuracy) {
            state.best_val_accuracy = val.mean_accuracy;
            state.best_epoch = epoch;
            result.best = state;
            stale = 0;
        } else {
            ++stale;
            if (stale >= config.patience) break;
        }
    }
    return result;
}

FiniteDiffReport finite_diff_check(const TrainState& state, const Episode& episode,
                                   const MatcherSpec& spec, double step, double tolerance,
                                   const std::function<void(EpisodeGrads&)>& tamper) {
    EpisodeGrads grads(state.params, state.linear_weights.size());
    episode_loss(episode, spec, state, &grads);
    if (tamper) tamper(grads);

    const auto rel_err = [](double a, double b) {
        return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };

    FiniteDiffReport report;
    auto check_block = [&](const std::string& name, std::size_t count,
                           const std::function<double&(TrainState&, std::size_t)>& entry,
                           const std::vector<double>& analytic) {
        FiniteDiffBlock block;
        block.name = name;
        block.count = count;
        for (std::size_t i = 0; i < count; ++i) {
            TrainState probe = state;
            double& up = entry(probe, i);
            const double original = up;
            up = original + step;
            const double plus = episode_loss(episode, spec, probe, nullptr);
            up = original - step;
            const double minus = episode_loss(episode, spec, probe, nullptr);
            const double fd = (plus - minus) / (2.0 * step);
            block.max_rel_err = std::max(block.max_rel_err, rel_err(fd, analytic[i]));
        }
        block.pass = block.max_rel_err <= tolerance;
        report.blocks.push_back(block);
        report.pass = report.pass && block.pass;
    };

    if (state.params.mode == ProjectionMode::learned) {
        check_block("W", state.params.weight.size(),
                    [](TrainState& s, std::size_t i) -> double& { return s.params.weight[i]; },
                    grads.projection.d_weight);
        check_block("gain", state.params.gain.size(),
                    [](TrainState& s, std::size_t i) -> double& { return s.params.gain[i]; },
                    grads.projection.d_gain);
        check_block("bias", state.params.bias.size(),
                    [](TrainState& s, std::size_t i) -> double& { return s.params.bias[i]; },
                    grads.projection.d_bias);
    }
    // tau is checked in tau-space; log parameterization is chain-ruled in the
    // step, not in the loss.
    {
        FiniteDiffBlock block;
        block.name = "tau";
        block.count = 1;
        TrainState probe = state;
        probe.log_tau = std::log(state.tau() + step);
        const double plus = episode_loss(episode, spec, probe, nullptr);
        probe.log_tau = std::log(state.tau() - step);
        const double minus = episode_loss(episode, spec, probe, nullptr);
        const double fd = (plus - minus) / (2.0 * step);
        block.max_rel_err = rel_err(fd, grads.d_tau);
        block.pass = block.max_rel_err <= tolerance;
        report.blocks.push_back(block);
        report.pass = report.pass && block.pass;
    }
    if (!state.linear_weights.empty())
        check_block("linear", state.linear_weights.size(),
                    [](TrainState& s, std::size_t i) -> double& { return s.linear_weights[i]; },
                    grads.d_linear);
    return report;
}

bool episode_has_matcher_ties(const Episode& episode, const MatcherSpec& spec,
                              const TrainState& state, double tol) {
    if (spec.kind != MatcherKind::max && spec.kind != MatcherKind::chamfer_q &&
        spec.kind != MatcherKind::chamfer_s && spec.kind != MatcherKind::chamfer_qs)
        return false;

    const auto top_two_close = [&](const std::vector<double>& vals) {
        double best = -std::numeric_limits<double>::infinity(), second = best;
        for (double v : vals) {
            if (v > best) {
                second = best;
                best = v;
            } else if (v > second) {
                second = v;
            }
        }
        return vals.size() > 1 && best - second < tol;
    };

    const auto tuples =
        enumerate_tuples(static_cast<int>(episode.clip_count()), spec.tuple_len, spec.tuple_mode);
    std::vector<std::vector<std::vector<std::vector<double>>>> support_proj(episode.way);
    for (int c = 0; c < episode.way; ++c)
        for (const auto& fs : episode.support[c]) {
            std::vector<std::vector<double>> proj;
            for (const auto& t : tuples)
                proj.push_back(project(state.params, concat_tuple(fs, t)));
            support_proj[c].push_back(std::move(proj));
        }

    for (const auto& query : episode.queries) {
        std::vector<std::vector<double>> q_proj;
        for (const auto& t : tuples)
            q_proj.push_back(project(state.params, concat_tuple(query.features, t)));
        for (int c = 0; c < episode.way; ++c) {
            std::vector<SimilarityMatrix> mats;
            for (int s = 0; s < episode.shot; ++s)
                mats.push_back(similarity_matrix(q_proj, support_proj[c][s]));
            const SimilarityMatrix m = spec.aggregation == Aggregation::joint
                                           ? joint_matrix(mats)
                                           : SimilarityMatrix();
            const std::vector<const SimilarityMatrix*> targets =
                spec.aggregation == Aggregation::joint
                    ? std::vector<const SimilarityMatrix*>{&m}
                    : [&] {
                          std::vector<const SimilarityMatrix*> v;
                          for (const auto& mm : mats) v.push_back(&mm);
                          return v;
                      }();
            for (const auto* mm : targets) {
                if (spec.kind == MatcherKind::max) {
                    if (top_two_close(mm->values)) return true;
                    continue;
                }
                if (spec.kind != MatcherKind::chamfer_s)
                    for (std::size_t i = 0; i < mm->rows; ++i) {
                        std::vector<double> row(mm->cols);
                        for (std::size_t j = 0; j < mm->cols; ++j) row[j] = mm->at(i, j);
                        if (top_two_close(row)) return true;
                    }
                if (spec.kind != MatcherKind::chamfer_q)
                    for (std::size_t j = 0; j < mm->cols; ++j) {
                        std::vector<double> col(mm->rows);
                        for (std::size_t i = 0; i < mm->rows; ++i) col[i] = mm->at(i, j);
                        if (top_two_close(col)) return true;
                    }
            }
        }
    }
    return false;
}

// --- checkpoint / log io -----------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_train_checkpoint(const std::filesystem::path& destination, const TrainState& state,
                           int epoch) {
    std::string buf = encode_projection(state.params);
    put_u64(buf, static_cast<std::uint64_t>(epoch));
    put_f64(buf, state.tau());
    if (!state.linear_weights.empty()) {
        const auto side = static_cast<std::uint32_t>(
            std::llround(std::sqrt(static_cast<double>(state.linear_weights.size()))));
        put_u32(buf, side);
        for (double w : state.linear_weights) put_f64(buf, w);
    }
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + destination.string());
}

TrainCheckpoint load_train_checkpoint(const std::filesystem::path& source) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + source.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    TrainCheckpoint ck;
    std::size_t cursor = decode_projection(raw, ck.params);
    if (raw.size() < cursor + 16) throw DataError("truncated train checkpoint");
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    ck.epoch = get_u64(p + cursor);
    cursor += 8;
    ck.tau = std::bit_cast<double>(get_u64(p + cursor));
    cursor += 8;
    if (cursor < raw.size()) {
        if (raw.size() < cursor + 4) throw DataError("truncated linear-weights section");
        std::uint32_t side = 0;
        for (int i = 0; i < 4; ++i) side |= static_cast<std::uint32_t>(p[cursor + i]) << (8 * i);
        cursor += 4;
        const std::size_t count = static_cast<std::size_t>(side) * side;
        if (raw.size() != cursor + 8 * count)
            throw DataError("truncated linear-weights section");
        ck.linear_weights.resize(count);
        for (auto& w : ck.linear_weights) {
            w = std::bit_cast<double>(get_u64(p + cursor));
            cursor += 8;
        }
    }
    return ck;
}

void write_train_log(const std::filesystem::path& destination,
                     const std::vector<EpochLog>& log) {
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    out << "epoch\tmean_train_loss\tval_accuracy\ttau\n";
    char buf[128];
    for (const auto& row : log) {
        std::snprintf(buf, sizeof(buf), "%d\t%.10g\t%.10g\t%.10g\n", row.epoch,
                      row.mean_train_loss, row.val_accuracy, row.tau);
        out << buf;
    }
}

}  // namespace fewmatch
