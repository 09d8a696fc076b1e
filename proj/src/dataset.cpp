#include "viewadapt/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "viewadapt/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace va {

void DatasetSpec::validate() const {
    if (height % 16 != 0 || width % 16 != 0)
        throw ConfigError("dataset: dims must be multiples of 16, got " +
                          std::to_string(height) + "x" + std::to_string(width));
    if (train_pairs < 1 || test_pairs < 1 || source_train < 1 || source_test < 1)
        throw ConfigError("dataset: counts must be positive");
    if (pitch_list.empty()) throw ConfigError("dataset: empty pitch list");
    for (int d : pitch_list)
        if (d < 10 || d > 90)
            throw ConfigError("dataset: pitch delta " + std::to_string(d) +
                              " outside [10, 90]");
}

const DomainSet& DatasetManifest::domain(int deg) const {
    for (const auto& d : domains)
        if (d.deg == deg) return d;
    throw MissingArtifactError("dataset manifest has no domain for " + std::to_string(deg) +
                               " degrees");
}

namespace {

std::string deg_dir(int deg) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "deg%03d", deg);
    return buf;
}

std::string frame_name(int i, const char* suffix) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "f%04d%s", i, suffix);
    return buf;
}

} // namespace

DatasetManifest build_dataset(uint64_t seed, const DatasetSpec& spec,
                              const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create dataset dir " + out_dir + ": " + ec.message());

    DatasetManifest m;
    m.height = spec.height;
    m.width = spec.width;
    m.classes = kNumClasses;
    m.pitch_list = spec.pitch_list;
    m.palette_file = "palette.json";
    save_palette(default_palette(kNumClasses), out_dir + "/palette.json");

    const Rng root(seed);

    auto make_frame = [&](const std::string& split_tag, int idx, const std::string& dir,
                          FrameRef& out) {
        Rng stream = root.substream(split_tag, uint64_t(idx));
        const uint64_t scene_seed = stream.next();
        Scene scene = generate_scene(scene_seed);
        Rng cam_rng = stream.substream("camera");
        CameraState cam = sample_camera(scene, cam_rng);
        RenderResult r = render(scene, cam, spec.height, spec.width);

        out.scene_seed = scene_seed;
        out.frame_id = idx;
        out.pos[0] = cam.x;
        out.pos[1] = cam.y;
        out.pos[2] = cam.z;
        out.yaw = cam.yaw;
        out.vfov = cam.vfov;
        out.image = dir + "/" + frame_name(idx, ".ppm");
        out.labels = dir + "/" + frame_name(idx, "_labels.pgm");
        write_ppm(out_dir + "/" + out.image, r.color);
        write_pgm(out_dir + "/" + out.labels, r.labels);
    };

    auto make_pair_files = [&](const std::string& split_tag, int deg, int idx,
                               const std::string& dir, PairRef& out) {
        Rng stream = root.substream(split_tag, uint64_t(deg), uint64_t(idx));
        const uint64_t scene_seed = stream.next();
        Scene scene = generate_scene(scene_seed);
        Rng cam_rng = stream.substream("camera");
        CameraState cam = sample_camera(scene, cam_rng);
        FramePair pair = make_pair(scene, cam, deg, spec.height, spec.width,
                                   /*with_correspondence=*/false);

        out.scene_seed = scene_seed;
        out.frame_id = idx;
        out.pitch_delta = deg;
        out.pos[0] = cam.x;
        out.pos[1] = cam.y;
        out.pos[2] = cam.z;
        out.yaw = cam.yaw;
        out.vfov = cam.vfov;
        out.src_image = dir + "/" + frame_name(idx, "_src.ppm");
        out.tgt_image = dir + "/" + frame_name(idx, "_tgt.ppm");
        out.src_labels = dir + "/" + frame_name(idx, "_src_labels.pgm");
        out.tgt_labels = dir + "/" + frame_name(idx, "_tgt_labels.pgm");
        write_ppm(out_dir + "/" + out.src_image, pair.x_s);
        write_ppm(out_dir + "/" + out.tgt_image, pair.x_t);
        write_pgm(out_dir + "/" + out.src_labels, pair.y_s);
        write_pgm(out_dir + "/" + out.tgt_labels, pair.y_t);
    };

    for (const char* split : {"train", "test"}) {
        const std::string dir = std::string("source/") + split;
        fs::create_directories(out_dir + "/" + dir);
        const int n = split == std::string("train") ? spec.source_train : spec.source_test;
        auto& list = split == std::string("train") ? m.source_train : m.source_test;
        for (int i = 0; i < n; ++i) {
            FrameRef f;
            make_frame(std::string("source_") + split, i, dir, f);
            list.push_back(std::move(f));
        }
    }

    for (int deg : spec.pitch_list) {
        DomainSet ds;
        ds.deg = deg;
        for (const char* split : {"train", "test"}) {
            const std::string dir = deg_dir(deg) + "/" + split;
            fs::create_directories(out_dir + "/" + dir);
            const int n = split == std::string("train") ? spec.train_pairs : spec.test_pairs;
            auto& list = split == std::string("train") ? ds.train : ds.test;
            for (int i = 0; i < n; ++i) {
                PairRef p;
                make_pair_files(std::string("pair_") + split, deg, i, dir, p);
                list.push_back(std::move(p));
            }
        }
        m.domains.push_back(std::move(ds));
    }

    save_manifest(m, out_dir + "/manifest.json");
    return m;
}

namespace {

ordered_json frame_to_json(const FrameRef& f) {
    return ordered_json{{"scene_seed", f.scene_seed},
                        {"frame_id", f.frame_id},
                        {"pos", {f.pos[0], f.pos[1], f.pos[2]}},
                        {"yaw", f.yaw},
                        {"vfov", f.vfov},
                        {"image", f.image},
                        {"labels", f.labels}};
}

FrameRef frame_from_json(const json& j) {
    FrameRef f;
    f.scene_seed = j.at("scene_seed").get<uint64_t>();
    f.frame_id = j.at("frame_id").get<int>();
    for (int i = 0; i < 3; ++i) f.pos[i] = j.at("pos").at(size_t(i)).get<double>();
    f.yaw = j.at("yaw").get<double>();
    f.vfov = j.at("vfov").get<double>();
    f.image = j.at("image").get<std::string>();
    f.labels = j.at("labels").get<std::string>();
    return f;
}

ordered_json pair_to_json(const PairRef& p) {
    return ordered_json{{"scene_seed", p.scene_seed},
                        {"frame_id", p.frame_id},
                        {"pitch_delta", p.pitch_delta},
                        {"pos", {p.pos[0], p.pos[1], p.pos[2]}},
                        {"yaw", p.yaw},
                        {"vfov", p.vfov},
                        {"src_image", p.src_image},
                        {"tgt_image", p.tgt_image},
                        {"src_labels", p.src_labels},
                        {"tgt_labels", p.tgt_labels}};
}

PairRef pair_from_json(const json& j) {
    PairRef p;
    p.scene_seed = j.at("scene_seed").get<uint64_t>();
    p.frame_id = j.at("frame_id").get<int>();
    p.pitch_delta = j.at("pitch_delta").get<int>();
    for (int i = 0; i < 3; ++i) p.pos[i] = j.at("pos").at(size_t(i)).get<double>();
    p.yaw = j.at("yaw").get<double>();
    p.vfov = j.at("vfov").get<double>();
    p.src_image = j.at("src_image").get<std::string>();
    p.tgt_image = j.at("tgt_image").get<std::string>();
    p.src_labels = j.at("src_labels").get<std::string>();
    p.tgt_labels = j.at("tgt_labels").get<std::string>();
    return p;
}

} // namespace

void save_manifest(const DatasetManifest& m, const std::string& path) {
    ordered_json j;
    j["height"] = m.height;
    j["width"] = m.width;
    j["classes"] = m.classes;
    j["palette"] = m.palette_file;
    j["pitch_list"] = m.pitch_list;
    j["source"]["train"] = ordered_json::array();
    for (const auto& f : m.source_train) j["source"]["train"].push_back(frame_to_json(f));
    j["source"]["test"] = ordered_json::array();
    for (const auto& f : m.source_test) j["source"]["test"].push_back(frame_to_json(f));
    j["domains"] = ordered_json::array();
    for (const auto& d : m.domains) {
        ordered_json dj;
        dj["deg"] = d.deg;
        dj["train"] = ordered_json::array();
        for (const auto& p : d.train) dj["train"].push_back(pair_to_json(p));
        dj["test"] = ordered_json::array();
        for (const auto& p : d.test) dj["test"].push_back(pair_to_json(p));
        j["domains"].push_back(std::move(dj));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write manifest: " + path);
    f << j.dump(1) << "\n";
}

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw MissingArtifactError("cannot read dataset manifest " + path +
                                   "; run gen-data first");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw FormatError("manifest parse error in " + path + ": " + e.what());
    }
    DatasetManifest m;
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.classes = j.at("classes").get<int>();
    m.palette_file = j.at("palette").get<std::string>();
    m.pitch_list = j.at("pitch_list").get<std::vector<int>>();
    for (const auto& fj : j.at("source").at("train")) m.source_train.push_back(frame_from_json(fj));
    for (const auto& fj : j.at("source").at("test")) m.source_test.push_back(frame_from_json(fj));
    for (const auto& dj : j.at("domains")) {
        DomainSet d;
        d.deg = dj.at("deg").get<int>();
        for (const auto& pj : dj.at("train")) d.train.push_back(pair_from_json(pj));
        for (const auto& pj : dj.at("test")) d.test.push_back(pair_from_json(pj));
        m.domains.push_back(std::move(d));
    }
    return m;
}

CameraState pair_camera(const PairRef& p) {
    CameraState cam;
    cam.x = p.pos[0];
    cam.y = p.pos[1];
    cam.z = p.pos[2];
    cam.yaw = p.yaw;
    cam.vfov = p.vfov;
    cam.pitch = 0.0;
    return cam;
}

} // namespace va
