#pragma once

#include <string>
#include <vector>

#include "viewadapt/dataset.hpp"
#include "viewadapt/segnet.hpp"
#include "viewadapt/vtn.hpp"

namespace va {

// Whole-experiment configuration; fully serializable, and a persisted
// config re-runs to identical artifacts under the determinism flag.
struct ExperimentConfig {
    uint64_t seed = 7;
    std::string profile = "desk";
    std::string out_dir = "out";
    bool deterministic = false;
    int threads = 0; // 0 = auto

    DatasetSpec dataset;
    VTNConfig vtn;
    SegConfig seg;

    bool train_baseline = true;  // also train/evaluate the no-attention variant
    std::vector<int> adapt_degs; // empty = all domains in pitch_list

    // dataset dims / class count are the single source of truth
    void finalize();
    std::vector<int> effective_adapt_degs() const;
};

ExperimentConfig default_experiment_config(const std::string& profile);

// JSON config with // and /* */ comments allowed; unknown keys rejected.
ExperimentConfig load_experiment_config(const std::string& path);
void save_experiment_config(const ExperimentConfig& cfg, const std::string& path);

// comment stripping preserves line structure so parse errors carry line info
std::string strip_json_comments(const std::string& text);

} // namespace va
