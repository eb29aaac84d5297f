#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "fewmatch/matchers.hpp"
#include "fewmatch/scorer.hpp"

namespace fewmatch {

// Reproducibility header written at the top of every results file.
struct RunHeader {
    std::string command;
    std::string build = build_identifier();
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::uint64_t episode_checksum = 0;
    std::vector<std::string> extra;  // free-form "key=value" lines

    static std::string build_identifier();
};

// Rows: episode_id, query_index, true_class, predicted_class, then one score
// column per class. A trailing summary comment carries mean accuracy and the
// 95% normal-approximation interval. Formatting is fixed so identical runs
// produce identical bytes.
void write_results_tsv(std::ostream& out, const RunHeader& header, const EvalOutcome& outcome,
                       int way);
void write_results_tsv(const std::filesystem::path& destination, const RunHeader& header,
                       const EvalOutcome& outcome, int way);

// Chamfer-Q row argmaxes of one query against a set of supports:
// "query_clip \t support_video \t support_clip \t similarity".
void write_correspondences_tsv(std::ostream& out, const FeatureSet& query,
                               const std::vector<FeatureSet>& supports,
                               const ProjectionParams& params);

std::string format_double(double v);

}  // namespace fewmatch
