#pragma once

#include <string>
#include <vector>

#include "viewadapt/image.hpp"

namespace va {

// Per-pixel probability distribution over C classes; layout (r*W + c)*C + k.
struct SoftLabels {
    int h = 0, w = 0, classes = 0;
    std::vector<float> p;

    SoftLabels() = default;
    SoftLabels(int h_, int w_, int c_)
        : h(h_), w(w_), classes(c_), p(size_t(h_) * w_ * c_, 0.f) {}

    float& at(int r, int c, int k) { return p[(size_t(r) * w + c) * classes + k]; }
    float at(int r, int c, int k) const { return p[(size_t(r) * w + c) * classes + k]; }

    // each pixel's distribution must sum to 1 within tol and be non-negative
    void validate(double tol = 1e-5) const;

    LabelMap argmax() const;
};

// Binary file: magic "SLBL", then H, W, C as u32 LE, then f32 LE payload
// in (row, col, class) order. Round-trips are bit-exact.
void save_soft_labels(const SoftLabels& s, const std::string& path);
SoftLabels load_soft_labels(const std::string& path);

} // namespace va
