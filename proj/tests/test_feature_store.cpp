#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "fewmatch/feature_io.hpp"
#include "fewmatch/sampler.hpp"
#include "fewmatch/synthetic.hpp"
#include "test_util.hpp"

using namespace fewmatch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("feature file layout") {
    TempDir tmp("fewmatch_fvf");
    FeatureSet fs1;
    fs1.video_id = "tiny";
    fs1.clips = {{1.0f, 0.0f}};
    write_feature_file(fs1, tmp.path / "tiny.fvf");

    const std::string raw = slurp(tmp.path / "tiny.fvf");
    REQUIRE(raw.size() == 20);  // 4 magic + 2 u32 counts + 2 f32 values
    CHECK(raw.substr(0, 4) == "FVF1");
    CHECK(static_cast<unsigned char>(raw[4]) == 1);  // n
    CHECK(static_cast<unsigned char>(raw[8]) == 2);  // d
    // 1.0f little-endian = 00 00 80 3f
    CHECK(static_cast<unsigned char>(raw[14]) == 0x80);
    CHECK(static_cast<unsigned char>(raw[15]) == 0x3f);
}

TEST_CASE("feature file round trip is exact") {
    TempDir tmp("fewmatch_fvf_rt");
    Rng rng(1);
    const auto fs1 = testutil::random_feature_set(rng, "rt", 8, 512);
    write_feature_file(fs1, tmp.path / "rt.fvf");
    const auto fs2 = read_feature_file(tmp.path / "rt.fvf");
    REQUIRE(fs2.n() == 8);
    REQUIRE(fs2.d() == 512);
    CHECK(fs2.clips == fs1.clips);
}

TEST_CASE("feature file error paths") {
    TempDir tmp("fewmatch_fvf_err");

    FeatureSet bad;
    bad.video_id = "nan";
    bad.clips = {{std::numeric_limits<float>::quiet_NaN()}};
    CHECK_THROWS_WITH_AS(write_feature_file(bad, tmp.path / "nan.fvf"),
                         doctest::Contains("non-finite feature"), DataError);

    FeatureSet ok;
    ok.video_id = "ok";
    ok.clips = {{1.0f, 2.0f}, {3.0f, 4.0f}};
    write_feature_file(ok, tmp.path / "ok.fvf");

    SUBCASE("bad magic") {
        auto raw = slurp(tmp.path / "ok.fvf");
        raw[0] = 'X';
        std::ofstream(tmp.path / "badmagic.fvf", std::ios::binary) << raw;
        CHECK_THROWS_WITH_AS(read_feature_file(tmp.path / "badmagic.fvf"),
                             doctest::Contains("bad magic"), DataError);
    }
    SUBCASE("truncated payload: header n=2,d=2 but only 3 floats") {
        auto raw = slurp(tmp.path / "ok.fvf");
        raw.resize(raw.size() - 4);
        std::ofstream(tmp.path / "short.fvf", std::ios::binary) << raw;
        CHECK_THROWS_WITH_AS(read_feature_file(tmp.path / "short.fvf"),
                             doctest::Contains("truncated payload"), DataError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_feature_file(tmp.path / "nope.fvf"), DataError);
    }
}

TEST_CASE("manifest round trip and validation") {
    TempDir tmp("fewmatch_manifest");
    Manifest m;
    m.entries = {{"a", "c0", "train", "features/a.fvf"},
                 {"b", "c1", "test", "features/b.fvf"}};
    write_manifest(m, tmp.path / "manifest.tsv");
    const auto m2 = read_manifest(tmp.path / "manifest.tsv");
    REQUIRE(m2.entries.size() == 2);
    CHECK(m2.entries[1].class_label == "c1");
    validate_manifest(m2);

    Manifest dup = m;
    dup.entries.push_back({"a", "c2", "val", "x"});
    CHECK_THROWS_WITH_AS(validate_manifest(dup), doctest::Contains("duplicate"), DataError);

    Manifest overlap = m;
    overlap.entries.push_back({"c", "c0", "test", "x"});
    CHECK_THROWS_AS(validate_manifest(overlap), DataError);
}

TEST_CASE("synthetic generation") {
    TempDir tmp("fewmatch_synth");
    SyntheticSpec spec;
    spec.num_classes = 12;
    spec.segments = 4;
    spec.d = 8;
    spec.noise_sigma = 0.0;
    spec.order_pairs = 2;
    spec.videos_per_class_train = 2;
    spec.videos_per_class_val = 2;
    spec.videos_per_class_test = 2;
    spec.seed = 5;

    const auto summary = generate_synthetic(spec, tmp.path / "ds");
    CHECK(summary.train_classes == 6);
    CHECK(summary.val_classes == 2);
    CHECK(summary.test_classes == 4);
    REQUIRE(summary.reversed_pairs.size() == 2);

    const auto ds = load_dataset(tmp.path / "ds");

    SUBCASE("zero noise: same-class videos identical") {
        const auto& videos = ds.split_index.at("train").begin()->second;
        CHECK(ds.feature(videos[0]).clips == ds.feature(videos[1]).clips);
    }
    SUBCASE("reversed pair classes are exact clip-order reversals") {
        for (const auto& [fwd, rev] : summary.reversed_pairs) {
            const auto split_of = [&](const std::string& label) {
                for (const auto& [split, classes] : ds.split_index)
                    if (classes.count(label)) return split;
                throw DataError("label not found: " + label);
            };
            const auto& a = ds.feature(ds.split_index.at(split_of(fwd)).at(fwd)[0]);
            const auto& b = ds.feature(ds.split_index.at(split_of(rev)).at(rev)[0]);
            auto reversed = a.clips;
            std::reverse(reversed.begin(), reversed.end());
            CHECK(b.clips == reversed);
        }
    }
    SUBCASE("same spec, same seed: byte-identical output") {
        generate_synthetic(spec, tmp.path / "ds2");
        for (const auto& e : summary.manifest.entries)
            CHECK(slurp(tmp.path / "ds" / e.path) == slurp(tmp.path / "ds2" / e.path));
        CHECK(slurp(tmp.path / "ds" / "manifest.tsv") ==
              slurp(tmp.path / "ds2" / "manifest.tsv"));
    }
    SUBCASE("invalid specs rejected") {
        SyntheticSpec bad = spec;
        bad.noise_sigma = -1;
        CHECK_THROWS_AS(generate_synthetic(bad, tmp.path / "bad"), DataError);
        bad = spec;
        bad.order_pairs = 7;  // 2*7 > 12
        CHECK_THROWS_AS(generate_synthetic(bad, tmp.path / "bad"), DataError);
    }
}

TEST_CASE("episode sampling") {
    TempDir tmp("fewmatch_sampling");
    SyntheticSpec spec;
    spec.num_classes = 24;
    spec.segments = 4;
    spec.d = 8;
    spec.noise_sigma = 0.2;
    spec.videos_per_class_train = 3;
    spec.videos_per_class_val = 3;
    spec.videos_per_class_test = 3;
    spec.seed = 9;
    generate_synthetic(spec, tmp.path / "ds");
    const auto ds = load_dataset(tmp.path / "ds");

    SUBCASE("episode shape") {
        Rng rng(1);
        const auto ep = sample_episode(ds, "test", 5, 1, 1, rng);
        CHECK(ep.way == 5);
        CHECK(ep.support.size() == 5);
        CHECK(ep.queries.size() == 5);
        // classes distinct: support video ids must not repeat across classes
        std::set<std::string> ids;
        for (const auto& cls : ep.support)
            for (const auto& fs : cls) CHECK(ids.insert(fs.video_id).second);
    }
    SUBCASE("insufficient classes") {
        Rng rng(1);
        CHECK_THROWS_WITH_AS(sample_episode(ds, "val", 5, 1, 1, rng),
                             doctest::Contains("insufficient classes"), DataError);
    }
    SUBCASE("insufficient videos") {
        Rng rng(1);
        CHECK_THROWS_WITH_AS(sample_episode(ds, "test", 5, 3, 1, rng),
                             doctest::Contains("insufficient videos"), DataError);
    }
    SUBCASE("same rng state twice gives the identical episode") {
        Rng a(77), b(77);
        const auto e1 = sample_episode(ds, "test", 5, 2, 1, a);
        const auto e2 = sample_episode(ds, "test", 5, 2, 1, b);
        CHECK(episode_list_checksum({e1}) == episode_list_checksum({e2}));
    }
    SUBCASE("fixed episode lists are reproducible and respect count") {
        const auto l1 = build_fixed_test_episodes(ds, "test", 5, 1, 1, 100, 123);
        const auto l2 = build_fixed_test_episodes(ds, "test", 5, 1, 1, 100, 123);
        CHECK(l1.size() == 100);
        CHECK(episode_list_checksum(l1) == episode_list_checksum(l2));
        CHECK(build_fixed_test_episodes(ds, "test", 5, 1, 1, 0, 123).empty());
        const auto l3 = build_fixed_test_episodes(ds, "test", 5, 1, 1, 100, 124);
        CHECK(episode_list_checksum(l1) != episode_list_checksum(l3));
        for (const auto& ep : l1) {
            CHECK(ep.way == 5);
            CHECK(ep.support.size() == 5);
            for (const auto& cls : ep.support) CHECK(cls.size() == 1);
        }
    }
}
