#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "viewadapt/image.hpp"

namespace va {

// rows = ground truth, cols = prediction
struct ConfusionMatrix {
    int classes = 0;
    std::vector<int64_t> counts;

    explicit ConfusionMatrix(int c) : classes(c), counts(size_t(c) * c, 0) {}

    int64_t& at(int gt, int pred) { return counts[size_t(gt) * classes + pred]; }
    int64_t at(int gt, int pred) const { return counts[size_t(gt) * classes + pred]; }

    void add(const LabelMap& pred, const LabelMap& gt);
    void add_pixel(uint8_t pred, uint8_t gt);
    void merge(const ConfusionMatrix& other);
    int64_t total() const;

    // IoU_c = TP/(TP+FP+FN); classes absent from both pred and gt are
    // excluded from the mean (reported as NaN per class).
    std::vector<double> per_class_iou() const;
    double mean_iou() const;
};

struct MiouResult {
    std::vector<double> per_class; // NaN for classes absent from both sides
    double mean = 0;
};

MiouResult miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                int classes);
MiouResult miou(const LabelMap& pred, const LabelMap& gt, int classes);

double adaptation_gain(double adapted_miou, double baseline_miou);

struct QualityRow {
    std::string method;
    int domain_deg = 0;
    double miou = 0;
    std::vector<double> per_class;
};

// aligned text table, one row per (method, domain)
std::string format_quality_table(const std::vector<QualityRow>& rows);

} // namespace va
