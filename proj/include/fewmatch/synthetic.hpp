#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fewmatch/types.hpp"

namespace fewmatch {

// Recipe for a desk-scale dataset. Each ordinary class gets `segments`
// prototype vectors drawn uniformly on the unit sphere; a video's clip i is
// prototype_i plus isotropic Gaussian noise. Reversed-pair classes reuse their
// partner's prototypes in reversed temporal order, so order-invariant
// matchers cannot tell the two classes apart.
struct SyntheticSpec {
    int num_classes = 24;
    int segments = 8;  // clips per video (n)
    int d = 16;
    double noise_sigma = 0.1;
    int order_pairs = 0;
    int videos_per_class_train = 10;
    int videos_per_class_val = 10;
    int videos_per_class_test = 10;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSummary {
    Manifest manifest;
    std::vector<std::pair<std::string, std::string>> reversed_pairs;  // (forward, reversed)
    int train_classes = 0, val_classes = 0, test_classes = 0;
};

// Classes are split into contiguous blocks train/val/test (1/2, 1/6, 1/3 of
// num_classes, remainders to train). Reversed pairs are consecutive classes
// allocated from the test block first, then val, then train; pairs never
// straddle splits. Output is byte-identical for identical (spec, seed).
SyntheticSummary generate_synthetic(const SyntheticSpec& spec,
                                    const std::filesystem::path& out_dir);

}  // namespace fewmatch
