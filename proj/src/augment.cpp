#include "viewadapt/augment.hpp"

#include <algorithm>
#include <cmath>

#include "viewadapt/errors.hpp"

namespace va {

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    const double d = mx - mn;
    v = mx;
    s = mx > 0 ? d / mx : 0.0;
    if (d <= 0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / d;
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    if (s <= 0) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const double h6 = h * 6.0;
    const int i = std::min(5, int(h6));
    const double f = h6 - i;
    const double p = v * (1 - s);
    const double q = v * (1 - s * f);
    const double t = v * (1 - s * (1 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

} // namespace

Image hue_shift(const Image& img, double shift) {
    if (shift == 0.0) return img;
    Image out(img.h, img.w);
    for (size_t i = 0; i < img.pixels(); ++i) {
        double h, s, v;
        rgb_to_hsv(img.px[i * 3], img.px[i * 3 + 1], img.px[i * 3 + 2], h, s, v);
        double r, g, b;
        hsv_to_rgb(h + shift, s, v, r, g, b);
        out.px[i * 3] = float(r);
        out.px[i * 3 + 1] = float(g);
        out.px[i * 3 + 2] = float(b);
    }
    return out;
}

Image hue_jitter(const Image& img, double delta, Rng& rng) {
    if (delta < 0 || delta > 0.5)
        throw ConfigError("hue_jitter: delta must be in [0, 0.5]");
    const double shift = rng.uniform(-delta, delta);
    return hue_shift(img, shift);
}

namespace {
const ChannelPermutation kAllPermutations[6] = {
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0},
};
}

ChannelPermutation sample_channel_permutation(Rng& rng) {
    return kAllPermutations[rng.index(6)];
}

ChannelPermutation inverse_permutation(const ChannelPermutation& p) {
    ChannelPermutation inv{};
    for (int i = 0; i < 3; ++i) inv[p[i]] = i;
    return inv;
}

Image apply_permutation(const Image& img, const ChannelPermutation& p) {
    Image out(img.h, img.w);
    for (size_t i = 0; i < img.pixels(); ++i)
        for (int ch = 0; ch < 3; ++ch) out.px[i * 3 + ch] = img.px[i * 3 + p[ch]];
    return out;
}

TrainingTuple make_training_tuple(const Image& x_s, const Image& x_t, double a, double b,
                                  const ChannelPermutation& p) {
    TrainingTuple t;
    t.x_q = hue_shift(x_t, a);
    t.x_k = hue_shift(x_s, a);
    t.x_v = apply_permutation(hue_shift(x_s, b), p);
    t.x_qbar = apply_permutation(hue_shift(x_t, b), p);
    return t;
}

TrainingTuple make_training_tuple(const FramePair& pair, double delta, Rng& rng) {
    if (delta < 0 || delta > 0.5)
        throw ConfigError("make_training_tuple: delta must be in [0, 0.5]");
    const double a = rng.uniform(-delta, delta);
    const double b = rng.uniform(-delta, delta);
    const ChannelPermutation p = sample_channel_permutation(rng);
    return make_training_tuple(pair.x_s, pair.x_t, a, b, p);
}

} // namespace va
