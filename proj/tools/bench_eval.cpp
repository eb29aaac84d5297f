// Benchmark: serial reference evaluation vs the OpenMP episode loop, with a
// bitwise equality check between the two.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fewmatch/sampler.hpp"
#include "fewmatch/scorer.hpp"
#include "fewmatch/synthetic.hpp"

using namespace fewmatch;
namespace fs = std::filesystem;

namespace {

double run_ms(const std::function<EvalOutcome()>& fn, EvalOutcome& out) {
    const auto start = std::chrono::steady_clock::now();
    out = fn();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(stop - start).count();
}

bool identical(const EvalOutcome& a, const EvalOutcome& b) {
    if (a.correct != b.correct || a.query_count != b.query_count) return false;
    if (a.episodes.size() != b.episodes.size()) return false;
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        if (a.episodes[i].queries.size() != b.episodes[i].queries.size()) return false;
        for (std::size_t q = 0; q < a.episodes[i].queries.size(); ++q) {
            if (a.episodes[i].queries[q].predicted != b.episodes[i].queries[q].predicted)
                return false;
            if (a.episodes[i].queries[q].scores != b.episodes[i].queries[q].scores)
                return false;
        }
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    int episodes = 200, way = 5, shot = 5, max_workers = 4;
    if (argc > 1) episodes = std::atoi(argv[1]);
    if (argc > 2) max_workers = std::atoi(argv[2]);

    const fs::path dir = fs::temp_directory_path() / "fewmatch_bench_ds";
    fs::remove_all(dir);
    SyntheticSpec spec;
    spec.num_classes = 24;
    spec.segments = 8;
    spec.d = 64;
    spec.noise_sigma = 0.5;
    spec.videos_per_class_train = 2;
    spec.videos_per_class_val = 2;
    spec.videos_per_class_test = 8;
    spec.seed = 1;
    generate_synthetic(spec, dir);
    const Dataset ds = load_dataset(dir);
    const auto eps = build_fixed_test_episodes(ds, "test", way, shot, 1, episodes, 7);

    MatcherSpec matcher;
    matcher.kind = MatcherKind::chamfer_qs;
    matcher.aggregation = Aggregation::joint;
    const auto params = identity_projection(spec.d);

    std::printf("bench: %d episodes, %d-way %d-shot, chamfer_qs joint, d=%d\n", episodes, way,
                shot, spec.d);
#ifdef _OPENMP
    std::printf("openmp: enabled (max threads %d)\n", omp_get_max_threads());
#else
    std::printf("openmp: disabled at build time; parallel path falls back to serial\n");
#endif

    EvalOutcome reference;
    const double serial_ms =
        run_ms([&] { return evaluate_serial(eps, matcher, params); }, reference);
    std::printf("%-18s %10.1f ms   accuracy %.4f\n", "serial reference", serial_ms,
                reference.mean_accuracy);

    int rc = 0;
    for (int workers = 2; workers <= max_workers; workers *= 2) {
        EvalOutcome outcome;
        const double ms =
            run_ms([&] { return evaluate(eps, matcher, params, workers); }, outcome);
        const bool same = identical(reference, outcome);
        std::printf("%-14s %2dT %10.1f ms   speedup %4.2fx   results %s\n", "openmp", workers,
                    ms, serial_ms / ms, same ? "bitwise-identical" : "MISMATCH");
        if (!same) rc = 1;
    }
    fs::remove_all(dir);
    return rc;
}
