#include "fewmatch/feature_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace fewmatch {

namespace {

constexpr char kMagic[4] = {'F', 'V', 'F', '1'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    static_assert(sizeof(float) == 4);
    const auto bits = std::bit_cast<std::uint32_t>(v);
    put_u32(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace

void write_feature_file(const FeatureSet& fs, const std::filesystem::path& destination) {
    fs.validate();
    std::string buf;
    buf.reserve(12 + 4 * fs.n() * fs.d());
    buf.append(kMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(fs.n()));
    put_u32(buf, static_cast<std::uint32_t>(fs.d()));
    for (const auto& clip : fs.clips)
        for (float v : clip) put_f32(buf, v);

    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed: " + destination.string());
}

FeatureSet read_feature_file(const std::filesystem::path& source) {
    std::ifstream in(source, std::ios::binary);
    if (!in) throw DataError("cannot open feature file: " + source.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());

    if (raw.size() < 12 || std::memcmp(raw.data(), kMagic, 4) != 0)
        throw DataError("bad magic: " + source.string());
    const std::uint32_t n = get_u32(p + 4);
    const std::uint32_t d = get_u32(p + 8);
    if (n == 0 || d == 0) throw DataError("bad magic: zero dimensions in " + source.string());
    const std::size_t expected = 12 + 4ull * n * d;
    if (raw.size() != expected)
        throw DataError("truncated payload: " + source.string() + " (header says " +
                        std::to_string(expected) + " bytes, file has " +
                        std::to_string(raw.size()) + ")");

    FeatureSet fs;
    fs.video_id = source.stem().string();
    fs.clips.assign(n, std::vector<float>(d));
    const unsigned char* cursor = p + 12;
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j) {
            const float v = get_f32(cursor);
            cursor += 4;
            if (!std::isfinite(v))
                throw DataError("non-finite feature in " + source.string());
            fs.clips[i][j] = v;
        }
    return fs;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& destination) {
    std::ofstream out(destination, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for writing: " + destination.string());
    out << "video_id\tclass\tsplit\tpath\n";
    for (const auto& e : manifest.entries)
        out << e.video_id << '\t' << e.class_label << '\t' << e.split << '\t' << e.path << '\n';
    if (!out) throw DataError("write failed: " + destination.string());
}

Manifest read_manifest(const std::filesystem::path& source) {
    std::ifstream in(source);
    if (!in) throw DataError("cannot open manifest: " + source.string());
    Manifest manifest;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, '\t')) cols.push_back(col);
        if (first) {
            first = false;
            if (cols != std::vector<std::string>{"video_id", "class", "split", "path"})
                throw DataError("manifest header mismatch in " + source.string());
            continue;
        }
        if (cols.size() != 4)
            throw DataError("manifest row needs 4 columns: '" + line + "'");
        manifest.entries.push_back({cols[0], cols[1], cols[2], cols[3]});
    }
    if (first) throw DataError("empty manifest: " + source.string());
    return manifest;
}

void validate_manifest(const Manifest& manifest) {
    std::set<std::string> ids;
    std::map<std::string, std::set<std::string>> classes_by_split;
    for (const auto& e : manifest.entries) {
        if (!ids.insert(e.video_id).second)
            throw DataError("duplicate video_id: " + e.video_id);
        if (e.split != "train" && e.split != "val" && e.split != "test")
            throw DataError("unknown split '" + e.split + "' for " + e.video_id);
        classes_by_split[e.split].insert(e.class_label);
    }
    for (auto it = classes_by_split.begin(); it != classes_by_split.end(); ++it)
        for (auto jt = std::next(it); jt != classes_by_split.end(); ++jt)
            for (const auto& label : it->second)
                if (jt->second.count(label))
                    throw DataError("class '" + label + "' appears in splits '" + it->first +
                                    "' and '" + jt->first + "'");
}

const FeatureSet& Dataset::feature(const std::string& video_id) const {
    auto it = features.find(video_id);
    if (it == features.end()) throw DataError("unknown video_id: " + video_id);
    return it->second;
}

bool Dataset::has_split(const std::string& split) const {
    auto it = split_index.find(split);
    return it != split_index.end() && !it->second.empty();
}

Dataset load_dataset(const std::filesystem::path& root) {
    Dataset ds;
    ds.root = root;
    ds.manifest = read_manifest(root / "manifest.tsv");
    validate_manifest(ds.manifest);
    std::optional<std::size_t> n, d;
    for (const auto& e : ds.manifest.entries) {
        FeatureSet fs = read_feature_file(root / e.path);
        fs.video_id = e.video_id;
        if (!n) {
            n = fs.n();
            d = fs.d();
        } else if (fs.n() != *n || fs.d() != *d) {
            throw DataError("feature shape mismatch for " + e.video_id);
        }
        ds.features.emplace(e.video_id, std::move(fs));
        ds.split_index[e.split][e.class_label].push_back(e.video_id);
    }
    for (auto& [split, classes] : ds.split_index)
        for (auto& [label, ids] : classes) std::sort(ids.begin(), ids.end());
    return ds;
}

}  // namespace fewmatch
