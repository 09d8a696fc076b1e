#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "viewadapt/pipeline.hpp"

namespace {

// exit codes: 0 success, 2 config error, 3 missing prerequisite, 4 numerical failure
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kMissingPrereq = 3;
constexpr int kNumericalFailure = 4;

struct CliOptions {
    std::string config_path;
    std::string profile;
    std::string out_dir;
    std::string pitch_csv;
    uint64_t seed = 0;
    bool has_seed = false;
    bool deterministic = false;
    int threads = 0;
    int domain = 0; // single-target mode
    int epochs = -1;
};

va::ExperimentConfig resolve_config(const CliOptions& o) {
    va::ExperimentConfig cfg = o.config_path.empty()
                                   ? va::default_experiment_config(
                                         o.profile.empty() ? "desk" : o.profile)
                                   : va::load_experiment_config(o.config_path);
    if (!o.profile.empty() && o.config_path.empty()) cfg.profile = o.profile;
    if (o.has_seed) cfg.seed = o.seed;
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.deterministic) cfg.deterministic = true;
    if (o.threads > 0) cfg.threads = o.threads;
    if (!o.pitch_csv.empty()) {
        cfg.dataset.pitch_list.clear();
        std::string cur;
        for (char ch : o.pitch_csv + ",") {
            if (ch == ',') {
                if (!cur.empty()) cfg.dataset.pitch_list.push_back(std::stoi(cur));
                cur.clear();
            } else {
                cur += ch;
            }
        }
    }
    if (o.domain > 0) {
        cfg.dataset.pitch_list = {o.domain};
        cfg.adapt_degs = {o.domain};
    }
    if (o.epochs >= 0) cfg.vtn.epochs = o.epochs;
    cfg.finalize();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"view-adaptation experiment pipeline"};
    app.require_subcommand(1);

    CliOptions opt;
    app.add_option("--config", opt.config_path, "JSON config file (// comments allowed)");
    app.add_option("--profile", opt.profile, "config profile: paper|desk");
    app.add_option("--out", opt.out_dir, "output root directory");
    auto* seed_opt = app.add_option("--seed", opt.seed, "experiment seed");
    app.add_flag("--deterministic", opt.deterministic,
                 "single-threaded fully reproducible mode");
    app.add_option("--threads", opt.threads, "worker threads (0 = auto)");
    app.add_option("--pitch", opt.pitch_csv, "comma-separated pitch gaps, e.g. 10,20,30");
    app.add_option("--domain", opt.domain, "single-target mode: one pitch gap in degrees");
    app.add_option("--epochs", opt.epochs, "override view-transformation training epochs");

    auto* gen = app.add_subcommand("gen-data", "render the procedural dataset");
    auto* tv = app.add_subcommand("train-vtn", "train the view-transformation network(s)");
    auto* hal = app.add_subcommand("hallucinate", "decode target-domain labels");
    auto* ts = app.add_subcommand("train-seg", "train the source segmentation network");
    auto* ad = app.add_subcommand("adapt", "fine-tune segmentation per target domain");
    auto* ev = app.add_subcommand("evaluate", "compute mIoU tables");
    auto* rep = app.add_subcommand("report", "emit text tables and the gain chart");
    auto* all = app.add_subcommand("run-all", "full pipeline end to end");

    CLI11_PARSE(app, argc, argv);
    opt.has_seed = seed_opt->count() > 0;

    try {
        const va::ExperimentConfig cfg = resolve_config(opt);
        if (gen->parsed()) va::cmd_gen_data(cfg);
        if (tv->parsed()) va::cmd_train_vtn(cfg);
        if (hal->parsed()) va::cmd_hallucinate(cfg);
        if (ts->parsed()) va::cmd_train_seg(cfg);
        if (ad->parsed()) va::cmd_adapt(cfg);
        if (ev->parsed()) va::cmd_evaluate(cfg);
        if (rep->parsed()) va::cmd_report(cfg);
        if (all->parsed()) va::run_all(cfg);
        return kOk;
    } catch (const va::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kConfigError;
    } catch (const va::MissingArtifactError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kMissingPrereq;
    } catch (const va::NumericalError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
