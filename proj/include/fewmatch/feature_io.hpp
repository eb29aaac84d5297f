#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fewmatch/types.hpp"

namespace fewmatch {

// Feature file layout (little-endian throughout):
//   bytes 0..3   magic "FVF1"
//   bytes 4..7   u32 n   (clip count)
//   bytes 8..11  u32 d   (feature dimension)
//   then n*d binary32 values, clip-major.
void write_feature_file(const FeatureSet& fs, const std::filesystem::path& destination);
FeatureSet read_feature_file(const std::filesystem::path& source);

// Manifest: UTF-8 TSV with header "video_id\tclass\tsplit\tpath".
void write_manifest(const Manifest& manifest, const std::filesystem::path& destination);
Manifest read_manifest(const std::filesystem::path& source);

// Structural checks: unique video ids, known split names, and pairwise
// disjoint class-label sets across splits. File existence is checked on load.
void validate_manifest(const Manifest& manifest);

// A fully loaded dataset: manifest plus every referenced feature set, with a
// per-split {class -> sorted video ids} index for sampling.
struct Dataset {
    std::filesystem::path root;
    Manifest manifest;
    std::unordered_map<std::string, FeatureSet> features;
    std::map<std::string, std::map<std::string, std::vector<std::string>>> split_index;

    const FeatureSet& feature(const std::string& video_id) const;
    bool has_split(const std::string& split) const;
};

Dataset load_dataset(const std::filesystem::path& root);

}  // namespace fewmatch
