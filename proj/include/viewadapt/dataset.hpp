#pragma once

#include <string>
#include <vector>

#include "viewadapt/image.hpp"
#include "viewadapt/scene.hpp"

namespace va {

struct DatasetSpec {
    int height = 32, width = 48;
    int train_pairs = 80, test_pairs = 20; // per target domain
    int source_train = 120, source_test = 40;
    std::vector<int> pitch_list{10, 20, 30, 40, 50, 60, 70, 80, 90};

    void validate() const;
};

// one pitch-0 frame (source-domain split used for segmentation training)
struct FrameRef {
    uint64_t scene_seed = 0;
    int frame_id = 0;
    double pos[3] = {0, 0, 0};
    double yaw = 0, vfov = 0;
    std::string image, labels;
};

// synchronized source/target pair: same position and yaw, pitch 0 vs delta
struct PairRef {
    uint64_t scene_seed = 0;
    int frame_id = 0;
    int pitch_delta = 0;
    double pos[3] = {0, 0, 0};
    double yaw = 0, vfov = 0;
    std::string src_image, tgt_image, src_labels, tgt_labels;
};

struct DomainSet {
    int deg = 0;
    std::vector<PairRef> train, test;
};

struct DatasetManifest {
    int height = 0, width = 0, classes = 0;
    std::string palette_file;
    std::vector<int> pitch_list;
    std::vector<FrameRef> source_train, source_test;
    std::vector<DomainSet> domains;

    const DomainSet& domain(int deg) const;
};

// Renders source frames and per-domain synchronized pairs; train/test
// scenes are disjoint by seed partition; re-runs are byte-identical.
DatasetManifest build_dataset(uint64_t seed, const DatasetSpec& spec,
                              const std::string& out_dir);

void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

// reconstruct the cameras of a stored pair (for the correspondence oracle)
CameraState pair_camera(const PairRef& p);

} // namespace va
