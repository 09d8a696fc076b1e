#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "viewadapt/tensor.hpp"

namespace va {

// Interleaved RGB float image, values in [0,1].
struct Image {
    int h = 0, w = 0;
    std::vector<float> px; // h*w*3

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), px(size_t(h_) * size_t(w_) * 3, 0.f) {}

    float& at(int r, int c, int ch) { return px[(size_t(r) * w + c) * 3 + ch]; }
    float at(int r, int c, int ch) const { return px[(size_t(r) * w + c) * 3 + ch]; }
    size_t pixels() const { return size_t(h) * size_t(w); }
};

struct LabelMap {
    int h = 0, w = 0;
    std::vector<uint8_t> v; // h*w class ids

    LabelMap() = default;
    LabelMap(int h_, int w_) : h(h_), w(w_), v(size_t(h_) * size_t(w_), 0) {}

    uint8_t& at(int r, int c) { return v[size_t(r) * w + c]; }
    uint8_t at(int r, int c) const { return v[size_t(r) * w + c]; }
};

struct Palette {
    std::vector<std::array<float, 3>> colors;
    int classes() const { return int(colors.size()); }
};

// Fixed palette of C saturated colors with pairwise distance >= 0.3.
Palette default_palette(int classes);

void save_palette(const Palette& p, const std::string& path);
Palette load_palette(const std::string& path);

// Binary PPM (P6, maxval 255); floats quantized by round(255*clamp01(v)).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

// Binary PGM (P5, maxval 255); pixel value = class id (or any byte payload).
void write_pgm(const std::string& path, const LabelMap& m);
LabelMap read_pgm(const std::string& path);

Image render_semantic(const LabelMap& labels, const Palette& palette);

// --- tensor bridging (NCHW) ---

template <class T>
Tensor<T> image_to_tensor(const Image& img, bool requires_grad = false) {
    std::vector<T> d(size_t(3) * img.pixels());
    const int64_t hw = int64_t(img.pixels());
    for (int64_t i = 0; i < hw; ++i)
        for (int ch = 0; ch < 3; ++ch)
            d[size_t(ch * hw + i)] = T(img.px[size_t(i * 3 + ch)]);
    return Tensor<T>::leaf(Shape{1, 3, img.h, img.w}, std::move(d), requires_grad);
}

template <class T>
Tensor<T> images_to_batch(const std::vector<Image>& imgs) {
    const int64_t B = int64_t(imgs.size());
    const int h = imgs[0].h, w = imgs[0].w;
    const int64_t hw = int64_t(h) * w;
    std::vector<T> d(size_t(B * 3 * hw));
    for (int64_t b = 0; b < B; ++b) {
        if (imgs[size_t(b)].h != h || imgs[size_t(b)].w != w)
            throw ShapeError("images_to_batch: mixed image sizes");
        for (int64_t i = 0; i < hw; ++i)
            for (int ch = 0; ch < 3; ++ch)
                d[size_t((b * 3 + ch) * hw + i)] = T(imgs[size_t(b)].px[size_t(i * 3 + ch)]);
    }
    return Tensor<T>::leaf(Shape{B, 3, h, w}, std::move(d), false);
}

template <class T>
Image tensor_to_image(const Tensor<T>& t, int64_t batch_index = 0) {
    if (t.rank() != 4 || t.dim(1) != 3)
        throw ShapeError("tensor_to_image: expected [N,3,H,W], got " + shape_str(t.shape()));
    const int64_t hw = t.dim(2) * t.dim(3);
    Image img(int(t.dim(2)), int(t.dim(3)));
    const T* d = t.data().data() + batch_index * 3 * hw;
    for (int64_t i = 0; i < hw; ++i)
        for (int ch = 0; ch < 3; ++ch)
            img.px[size_t(i * 3 + ch)] = float(d[ch * hw + i]);
    return img;
}

} // namespace va
