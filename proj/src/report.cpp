#include "fewmatch/report.hpp"

#include <cstdio>
#include <fstream>

namespace fewmatch {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::string RunHeader::build_identifier() {
#if defined(__clang__)
    return "fewmatch-0.1.0 clang-" + std::to_string(__clang_major__);
#elif defined(__GNUC__)
    return "fewmatch-0.1.0 gcc-" + std::to_string(__GNUC__);
#else
    return "fewmatch-0.1.0";
#endif
}

void write_results_tsv(std::ostream& out, const RunHeader& header, const EvalOutcome& outcome,
                       int way) {
    char hex[32];
    out << "# fewmatch " << header.command << "\n";
    out << "# build=" << header.build << "\n";
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(header.config_hash));
    out << "# config_hash=" << hex << "\n";
    out << "# seed=" << header.seed << "\n";
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(header.episode_checksum));
    out << "# episode_checksum=" << hex << "\n";
    for (const auto& line : header.extra) out << "# " << line << "\n";

    out << "episode_id\tquery_index\ttrue_class\tpredicted_class";
    for (int c = 0; c < way; ++c) out << "\tscore_" << c;
    out << "\n";
    for (const auto& ep : outcome.episodes)
        for (const auto& q : ep.queries) {
            out << ep.episode_id << '\t' << q.query_index << '\t' << q.true_class << '\t'
                << q.predicted;
            for (double s : q.scores) out << '\t' << format_double(s);
            out << "\n";
        }
    out << "# summary queries=" << outcome.query_count << " correct=" << outcome.correct
        << " accuracy=" << format_double(outcome.mean_accuracy)
        << " ci95=" << format_double(outcome.ci95_halfwidth) << "\n";
}

void write_results_tsv(const std::filesystem::path& destination, const RunHeader& header,
                       const EvalOutcome& outcome, int way) {
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    write_results_tsv(out, header, outcome, way);
    if (!out) throw DataError("write failed: " + destination.string());
}

void write_correspondences_tsv(std::ostream& out, const FeatureSet& query,
                               const std::vector<FeatureSet>& supports,
                               const ProjectionParams& params) {
    out << "query_clip\tsupport_video\tsupport_clip\tsimilarity\n";
    std::vector<std::vector<double>> q_proj;
    for (std::size_t i = 0; i < query.n(); ++i)
        q_proj.push_back(project(params, concat_tuple(query, std::vector<int>{(int)i})));
    for (const auto& support : supports) {
        std::vector<std::vector<double>> x_proj;
        for (std::size_t j = 0; j < support.n(); ++j)
            x_proj.push_back(project(params, concat_tuple(support, std::vector<int>{(int)j})));
        const SimilarityMatrix m = similarity_matrix(q_proj, x_proj);
        const auto arg = chamfer_row_argmax(m);
        for (std::size_t i = 0; i < m.rows; ++i)
            out << i << '\t' << support.video_id << '\t' << arg[i] << '\t'
                << format_double(m.at(i, arg[i])) << "\n";
    }
}

}  // namespace fewmatch
