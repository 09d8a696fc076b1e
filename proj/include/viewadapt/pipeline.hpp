#pragma once

#include <string>
#include <vector>

#include "viewadapt/config.hpp"
#include "viewadapt/metrics.hpp"

namespace va {

// Stage entry points. Each stage reads upstream artifacts by manifest,
// writes its own under the config's output root, and is idempotent given
// identical inputs. Missing prerequisites raise MissingArtifactError
// naming the subcommand that produces them.
void cmd_gen_data(const ExperimentConfig& cfg);
void cmd_train_vtn(const ExperimentConfig& cfg);
void cmd_hallucinate(const ExperimentConfig& cfg);
void cmd_train_seg(const ExperimentConfig& cfg);
void cmd_adapt(const ExperimentConfig& cfg);
void cmd_evaluate(const ExperimentConfig& cfg);
void cmd_report(const ExperimentConfig& cfg);
void run_all(const ExperimentConfig& cfg);

struct OracleRow {
    int deg = 0;
    double visible_fraction = 0;
    double visible_miou = 0;
};

struct DomainSegRow {
    int deg = 0;
    double source_only = 0;
    double adapted = 0;
    double gain = 0;
};

struct EvalResults {
    std::vector<QualityRow> label_quality; // methods x domains, train split
    std::vector<OracleRow> oracle;
    double source_test_miou = 0;
    std::vector<DomainSegRow> seg;
};

EvalResults evaluate_experiment(const ExperimentConfig& cfg);
void save_eval_results(const EvalResults& r, const std::string& path);
EvalResults load_eval_results(const std::string& path);

// Fig.1-style line chart of adaptation gain vs pitch angle.
std::string gain_svg(const std::vector<DomainSegRow>& rows);

} // namespace va
