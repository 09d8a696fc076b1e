#include "viewadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "viewadapt/errors.hpp"

namespace va {

void ConfusionMatrix::add_pixel(uint8_t pred, uint8_t gt) {
    if (pred >= classes || gt >= classes)
        throw ShapeError("confusion: label out of range (pred=" + std::to_string(pred) +
                         ", gt=" + std::to_string(gt) + ", C=" + std::to_string(classes) + ")");
    at(gt, pred)++;
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
    if (pred.h != gt.h || pred.w != gt.w)
        throw ShapeError("confusion: prediction and ground truth sizes differ");
    for (size_t i = 0; i < pred.v.size(); ++i) add_pixel(pred.v[i], gt.v[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.classes != classes) throw ShapeError("confusion: class count mismatch");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

std::vector<double> ConfusionMatrix::per_class_iou() const {
    std::vector<double> iou(size_t(classes));
    for (int c = 0; c < classes; ++c) {
        const int64_t tp = at(c, c);
        int64_t fp = 0, fn = 0;
        for (int o = 0; o < classes; ++o) {
            if (o == c) continue;
            fp += at(o, c);
            fn += at(c, o);
        }
        const int64_t denom = tp + fp + fn;
        iou[size_t(c)] = denom > 0 ? double(tp) / double(denom)
                                   : std::numeric_limits<double>::quiet_NaN();
    }
    return iou;
}

double ConfusionMatrix::mean_iou() const {
    const auto iou = per_class_iou();
    double sum = 0;
    int n = 0;
    for (double v : iou)
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    return n > 0 ? sum / n : 0.0;
}

MiouResult miou(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts,
                int classes) {
    if (preds.size() != gts.size())
        throw ShapeError("miou: prediction and ground-truth counts differ");
    ConfusionMatrix cm(classes);
    for (size_t i = 0; i < preds.size(); ++i) cm.add(preds[i], gts[i]);
    return {cm.per_class_iou(), cm.mean_iou()};
}

MiouResult miou(const LabelMap& pred, const LabelMap& gt, int classes) {
    ConfusionMatrix cm(classes);
    cm.add(pred, gt);
    return {cm.per_class_iou(), cm.mean_iou()};
}

double adaptation_gain(double adapted_miou, double baseline_miou) {
    return adapted_miou - baseline_miou;
}

std::string format_quality_table(const std::vector<QualityRow>& rows) {
    // methods as rows, domains as columns
    std::vector<std::string> methods;
    std::vector<int> domains;
    std::map<std::pair<std::string, int>, double> cell;
    for (const auto& r : rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
        if (std::find(domains.begin(), domains.end(), r.domain_deg) == domains.end())
            domains.push_back(r.domain_deg);
        cell[{r.method, r.domain_deg}] = r.miou;
    }
    std::sort(domains.begin(), domains.end());

    size_t name_w = 6;
    for (const auto& m : methods) name_w = std::max(name_w, m.size());

    std::ostringstream os;
    os << std::string(name_w, ' ');
    char buf[32];
    for (int d : domains) {
        std::snprintf(buf, sizeof buf, " %7ddeg", d);
        os << buf;
    }
    os << "\n";
    for (const auto& m : methods) {
        os << m << std::string(name_w - m.size(), ' ');
        for (int d : domains) {
            auto it = cell.find({m, d});
            if (it == cell.end())
                std::snprintf(buf, sizeof buf, " %10s", "-");
            else
                std::snprintf(buf, sizeof buf, " %10.4f", it->second);
            os << buf;
        }
        os << "\n";
    }
    return os.str();
}

} // namespace va
