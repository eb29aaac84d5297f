#include "fewmatch/synthetic.hpp"

#include <cmath>

#include "fewmatch/feature_io.hpp"
#include "fewmatch/rng.hpp"

namespace fewmatch {

namespace {

std::vector<double> unit_sphere_vector(Rng& rng, int d) {
    std::vector<double> v(d);
    for (;;) {
        double norm_sq = 0.0;
        for (auto& x : v) {
            x = rng.next_gaussian();
            norm_sq += x * x;
        }
        if (norm_sq > 1e-24) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& x : v) x *= inv;
            return v;
        }
    }
}

std::string class_label(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class%03d", index);
    return buf;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (num_classes < 6) throw DataError("synthetic spec: num_classes must be >= 6");
    if (segments < 1) throw DataError("synthetic spec: segments must be >= 1");
    if (d < 1) throw DataError("synthetic spec: d must be >= 1");
    if (noise_sigma < 0) throw DataError("synthetic spec: noise_sigma must be >= 0");
    if (order_pairs < 0) throw DataError("synthetic spec: order_pairs must be >= 0");
    if (2 * order_pairs > num_classes)
        throw DataError("synthetic spec: order_pairs*2 exceeds num_classes");
    if (videos_per_class_train < 1 || videos_per_class_val < 1 || videos_per_class_test < 1)
        throw DataError("synthetic spec: videos_per_class must be >= 1 for every split");
}

SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const std::filesystem::path& out_dir) {
    spec.validate();

    const int train_count = spec.num_classes / 2;
    const int val_count = spec.num_classes / 6;
    const int test_count = spec.num_classes - train_count - val_count;

    auto split_of = [&](int c) -> std::string {
        if (c < train_count) return "train";
        if (c < train_count + val_count) return "val";
        return "test";
    };
    auto videos_of = [&](const std::string& split) {
        if (split == "train") return spec.videos_per_class_train;
        if (split == "val") return spec.videos_per_class_val;
        return spec.videos_per_class_test;
    };

    // Pair consecutive classes starting at the test block so a small
    // order_pairs count covers the evaluation classes first.
    std::vector<int> pair_partner(spec.num_classes, -1);  // index of forward class, set on reversed class
    {
        std::vector<std::pair<int, int>> blocks = {
            {train_count + val_count, spec.num_classes},  // test
            {train_count, train_count + val_count},       // val
            {0, train_count},                             // train
        };
        int remaining = spec.order_pairs;
        for (auto [lo, hi] : blocks) {
            for (int a = lo; a + 1 < hi && remaining > 0; a += 2, --remaining)
                pair_partner[a + 1] = a;
        }
        if (remaining > 0)
            throw DataError("synthetic spec: order_pairs exceed pairable classes within splits");
    }

    std::filesystem::create_directories(out_dir / "features");
    Rng rng(spec.seed);

    SyntheticSummary summary;
    summary.train_classes = train_count;
    summary.val_classes = val_count;
    summary.test_classes = test_count;

    std::vector<std::vector<std::vector<double>>> prototypes(spec.num_classes);
    for (int c = 0; c < spec.num_classes; ++c) {
        if (pair_partner[c] >= 0) {
            const auto& forward = prototypes[pair_partner[c]];
            prototypes[c].assign(forward.rbegin(), forward.rend());
            summary.reversed_pairs.emplace_back(class_label(pair_partner[c]), class_label(c));
        } else {
            prototypes[c].reserve(spec.segments);
            for (int s = 0; s < spec.segments; ++s)
                prototypes[c].push_back(unit_sphere_vector(rng, spec.d));
        }

        // noise_sigma is the expected noise-vector norm relative to the unit
        // prototype, so the signal-to-noise ratio is dimension-free:
        // components are i.i.d. N(0, sigma^2 / d).
        const double component_sigma = spec.noise_sigma / std::sqrt(static_cast<double>(spec.d));
        const std::string label = class_label(c);
        const std::string split = split_of(c);
        for (int v = 0; v < videos_of(split); ++v) {
            FeatureSet fs;
            fs.video_id = label + "_" + split + "_v" + std::to_string(v);
            fs.clips.reserve(spec.segments);
            for (int s = 0; s < spec.segments; ++s) {
                std::vector<float> clip(spec.d);
                for (int j = 0; j < spec.d; ++j)
                    clip[j] = static_cast<float>(prototypes[c][s][j] +
                                                 component_sigma * rng.next_gaussian());
                fs.clips.push_back(std::move(clip));
            }
            const std::string rel = "features/" + fs.video_id + ".fvf";
            write_feature_file(fs, out_dir / rel);
            summary.manifest.entries.push_back({fs.video_id, label, split, rel});
        }
    }

    validate_manifest(summary.manifest);
    write_manifest(summary.manifest, out_dir / "manifest.tsv");
    return summary;
}

}  // namespace fewmatch
