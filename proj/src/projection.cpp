#include "fewmatch/projection.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fewmatch/rng.hpp"

namespace fewmatch {

namespace {

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) throw DataError(std::string("non-finite ") + what);
}

// out = y / ||y||; writes out and returns ||y||.
double l2_normalize(std::span<const double> y, std::vector<double>& out) {
    double norm_sq = 0.0;
    for (double v : y) norm_sq += v * v;
    const double norm = std::sqrt(norm_sq);
    if (norm == 0.0) throw DataError("zero-norm feature at l2 normalization");
    out.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] / norm;
    return norm;
}

struct LayerNormCache {
    std::vector<double> normalized;  // (z - mean) / sqrt(var + eps)
    double inv_std = 0.0;
};

std::vector<double> layer_norm(const ProjectionParams& p, std::span<const double> z,
                               LayerNormCache* cache) {
    const std::size_t dim = z.size();
    double mean = 0.0;
    for (double v : z) mean += v;
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= static_cast<double>(dim);  // population variance
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);

    std::vector<double> out(dim);
    if (cache) {
        cache->normalized.resize(dim);
        cache->inv_std = inv_std;
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const double h = (z[i] - mean) * inv_std;
        if (cache) cache->normalized[i] = h;
        out[i] = p.gain[i] * h + p.bias[i];
    }
    return out;
}

}  // namespace

ProjectionParams identity_projection(std::size_t dim) {
    ProjectionParams p;
    p.mode = ProjectionMode::identity;
    p.input_dim = dim;
    p.output_dim = dim;
    return p;
}

ProjectionParams init_projection(std::size_t input_dim, std::size_t output_dim,
                                 std::uint64_t seed) {
    if (input_dim < 1 || output_dim < 1)
        throw DataError("projection dims must be >= 1");
    ProjectionParams p;
    p.mode = ProjectionMode::learned;
    p.input_dim = input_dim;
    p.output_dim = output_dim;
    const double a = std::sqrt(6.0 / static_cast<double>(input_dim + output_dim));
    Rng rng(seed);
    p.weight.resize(input_dim * output_dim);
    for (auto& w : p.weight) w = a * (2.0 * rng.next_double() - 1.0);
    p.gain.assign(output_dim, 1.0);
    p.bias.assign(output_dim, 0.0);
    return p;
}

std::vector<double> project(const ProjectionParams& params, std::span<const double> x) {
    check_finite(x, "feature");
    if (params.mode == ProjectionMode::identity) {
        std::vector<double> out;
        l2_normalize(x, out);
        return out;
    }
    if (x.size() != params.input_dim)
        throw DataError("projection input dimension mismatch: got " + std::to_string(x.size()) +
                        ", expected " + std::to_string(params.input_dim));
    std::vector<double> z(params.output_dim, 0.0);
    for (std::size_t i = 0; i < params.output_dim; ++i) {
        const double* row = params.weight.data() + i * params.input_dim;
        double acc = 0.0;
        for (std::size_t j = 0; j < params.input_dim; ++j) acc += row[j] * x[j];
        z[i] = acc;
    }
    const std::vector<double> y = layer_norm(params, z, nullptr);
    std::vector<double> out;
    l2_normalize(y, out);
    return out;
}

std::vector<double> project_backward(const ProjectionParams& params, std::span<const double> x,
                                     std::span<const double> upstream, ProjectionGrads& grads) {
    check_finite(x, "feature");
    if (params.mode == ProjectionMode::identity) {
        // out = x / r;  dx = (upstream - out (out . upstream)) / r
        std::vector<double> out;
        const double r = l2_normalize(x, out);
        double dot = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) dot += out[i] * upstream[i];
        std::vector<double> dx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = (upstream[i] - out[i] * dot) / r;
        return dx;
    }

    if (x.size() != params.input_dim)
        throw DataError("projection input dimension mismatch");
    const std::size_t in = params.input_dim;
    const std::size_t out_dim = params.output_dim;

    // Forward pass, keeping intermediates.
    std::vector<double> z(out_dim, 0.0);
    for (std::size_t i = 0; i < out_dim; ++i) {
        const double* row = params.weight.data() + i * in;
        double acc = 0.0;
        for (std::size_t j = 0; j < in; ++j) acc += row[j] * x[j];
        z[i] = acc;
    }
    LayerNormCache ln;
    const std::vector<double> y = layer_norm(params, z, &ln);
    std::vector<double> out;
    const double r = l2_normalize(y, out);

    // l2 backward.
    double dot = 0.0;
    for (std::size_t i = 0; i < out_dim; ++i) dot += out[i] * upstream[i];
    std::vector<double> dy(out_dim);
    for (std::size_t i = 0; i < out_dim; ++i) dy[i] = (upstream[i] - out[i] * dot) / r;

    // Affine backward.
    std::vector<double> dh(out_dim);
    for (std::size_t i = 0; i < out_dim; ++i) {
        grads.d_bias[i] += dy[i];
        grads.d_gain[i] += dy[i] * ln.normalized[i];
        dh[i] = dy[i] * params.gain[i];
    }

    // LayerNorm backward: dz = s (dh - mean(dh) - h mean(dh*h)).
    double mean_dh = 0.0, mean_dh_h = 0.0;
    for (std::size_t i = 0; i < out_dim; ++i) {
        mean_dh += dh[i];
        mean_dh_h += dh[i] * ln.normalized[i];
    }
    mean_dh /= static_cast<double>(out_dim);
    mean_dh_h /= static_cast<double>(out_dim);
    std::vector<double> dz(out_dim);
    for (std::size_t i = 0; i < out_dim; ++i)
        dz[i] = ln.inv_std * (dh[i] - mean_dh - ln.normalized[i] * mean_dh_h);

    // Linear backward.
    std::vector<double> dx(in, 0.0);
    for (std::size_t i = 0; i < out_dim; ++i) {
        double* d_row = grads.d_weight.data() + i * in;
        const double* row = params.weight.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) {
            d_row[j] += dz[i] * x[j];
            dx[j] += row[j] * dz[i];
        }
    }
    return dx;
}

std::vector<double> concat_tuple(const FeatureSet& fs, std::span<const int> tuple) {
    if (tuple.empty()) throw DataError("tuple length must be >= 1");
    std::vector<double> out;
    out.reserve(tuple.size() * fs.d());
    for (int idx : tuple) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= fs.n())
            throw DataError("tuple index out of range: " + std::to_string(idx));
        for (float v : fs.clips[idx]) out.push_back(static_cast<double>(v));
    }
    return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'F', 'P', 'P', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

std::string encode_projection(const ProjectionParams& params) {
    std::string buf;
    buf.append(kCheckpointMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(params.input_dim));
    put_u32(buf, static_cast<std::uint32_t>(params.output_dim));
    buf.push_back(static_cast<char>(params.mode));
    if (params.mode == ProjectionMode::learned) {
        for (double w : params.weight) put_f64(buf, w);
        for (double g : params.gain) put_f64(buf, g);
        for (double b : params.bias) put_f64(buf, b);
    }
    return buf;
}

// Returns bytes consumed, so a trainer checkpoint can carry a trailer.
std::size_t decode_projection(const std::string& raw, ProjectionParams& params) {
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    if (raw.size() < 13 || std::memcmp(raw.data(), kCheckpointMagic, 4) != 0)
        throw DataError("bad magic in projection checkpoint");
    params.input_dim = get_u32(p + 4);
    params.output_dim = get_u32(p + 8);
    const unsigned char mode = p[12];
    if (mode > 1) throw DataError("unknown projection mode flag");
    params.mode = static_cast<ProjectionMode>(mode);
    std::size_t cursor = 13;
    if (params.mode == ProjectionMode::learned) {
        const std::size_t count =
            params.input_dim * params.output_dim + 2 * params.output_dim;
        if (raw.size() < cursor + 8 * count)
            throw DataError("truncated projection checkpoint");
        params.weight.resize(params.input_dim * params.output_dim);
        params.gain.resize(params.output_dim);
        params.bias.resize(params.output_dim);
        for (auto& w : params.weight) { w = get_f64(p + cursor); cursor += 8; }
        for (auto& g : params.gain) { g = get_f64(p + cursor); cursor += 8; }
        for (auto& b : params.bias) { b = get_f64(p + cursor); cursor += 8; }
    } else {
        params.weight.clear();
        params.gain.clear();
        params.bias.clear();
        if (params.input_dim != params.output_dim)
            throw DataError("identity projection checkpoint with mismatched dims");
    }
    return cursor;
}

void save_projection(const ProjectionParams& params, const std::filesystem::path& destination) {
    const std::string buf = encode_projection(params);
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + destination.string());
}

ProjectionParams load_projection(const std::filesystem::path& source) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + source.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ProjectionParams params;
    const std::size_t used = decode_projection(raw, params);
    if (used != raw.size())
        throw DataError("trailing bytes in projection checkpoint: " + source.string());
    return params;
}

}  // namespace fewmatch
