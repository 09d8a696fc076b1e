#include "viewadapt/labels.hpp"

#include <cmath>

#include "viewadapt/errors.hpp"

namespace va {

LabelMap nn_decode(const Image& img, const Palette& palette) {
    const int C = palette.classes();
    if (C < 1) throw ConfigError("nn_decode: empty palette");
    LabelMap out(img.h, img.w);
    for (size_t i = 0; i < img.pixels(); ++i) {
        int best = 0;
        float best_d = std::numeric_limits<float>::max();
        for (int c = 0; c < C; ++c) {
            float d = 0;
            for (int ch = 0; ch < 3; ++ch) {
                const float diff = img.px[i * 3 + ch] - palette.colors[size_t(c)][ch];
                d += diff * diff;
            }
            if (d < best_d) { // strict: ties keep the lowest class id
                best_d = d;
                best = c;
            }
        }
        out.v[i] = uint8_t(best);
    }
    return out;
}

Image indicator_image(const LabelMap& labels, int c) {
    if (c < 0 || c > 255) throw ConfigError("indicator_image: class out of range");
    Image img(labels.h, labels.w);
    for (size_t i = 0; i < labels.v.size(); ++i) {
        const float v = labels.v[i] == c ? 1.f : 0.f;
        img.px[i * 3] = img.px[i * 3 + 1] = img.px[i * 3 + 2] = v;
    }
    return img;
}

namespace {

// stack per-class channel-mean responses into per-pixel softmax
SoftLabels responses_to_soft(const std::vector<std::vector<float>>& responses, int h,
                             int w, double temperature) {
    if (temperature <= 0) throw ConfigError("functional_decode: temperature must be > 0");
    const int C = int(responses.size());
    SoftLabels soft(h, w, C);
    for (size_t i = 0; i < size_t(h) * w; ++i) {
        double mx = -1e30;
        for (int c = 0; c < C; ++c)
            mx = std::max(mx, double(responses[size_t(c)][i]) / temperature);
        double sum = 0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(double(responses[size_t(c)][i]) / temperature - mx);
            soft.p[i * size_t(C) + size_t(c)] = float(e);
            sum += e;
        }
        for (int c = 0; c < C; ++c) soft.p[i * size_t(C) + size_t(c)] /= float(sum);
    }
    soft.validate();
    return soft;
}

std::vector<float> channel_mean(const Image& img) {
    std::vector<float> m(img.pixels());
    for (size_t i = 0; i < img.pixels(); ++i)
        m[i] = (img.px[i * 3] + img.px[i * 3 + 1] + img.px[i * 3 + 2]) / 3.f;
    return m;
}

} // namespace

SoftLabels functional_decode(const PsiFn& psi, const LabelMap& labels_s, const Image& x_s,
                             const Image& x_t, int classes, double temperature) {
    std::vector<std::vector<float>> responses;
    responses.reserve(size_t(classes));
    for (int c = 0; c < classes; ++c)
        responses.push_back(channel_mean(psi(indicator_image(labels_s, c), x_s, x_t)));
    return responses_to_soft(responses, x_t.h, x_t.w, temperature);
}

SoftLabels functional_decode_vtn(VTNParams& params, const LabelMap& labels_s,
                                 const Image& x_s, const Image& x_t, int classes) {
    std::vector<Image> indicators;
    for (int c = 0; c < classes; ++c) indicators.push_back(indicator_image(labels_s, c));
    std::vector<Image> guides_s(size_t(classes), x_s), guides_t(size_t(classes), x_t);

    Tensor<float> xv = images_to_batch<float>(indicators);
    Tensor<float> xk = images_to_batch<float>(guides_s);
    Tensor<float> xq = images_to_batch<float>(guides_t);
    std::vector<Tensor<float>> outs = vtn_forward(params, xv, xk, xq);

    std::vector<std::vector<float>> responses;
    for (int c = 0; c < classes; ++c)
        responses.push_back(channel_mean(tensor_to_image(outs.back(), c)));
    return responses_to_soft(responses, x_t.h, x_t.w, params.cfg.temperature);
}

std::vector<float> entropy_map(const SoftLabels& soft) {
    soft.validate();
    std::vector<float> ent(size_t(soft.h) * soft.w);
    for (size_t i = 0; i < ent.size(); ++i) {
        double e = 0;
        for (int c = 0; c < soft.classes; ++c) {
            const double p = soft.p[i * size_t(soft.classes) + size_t(c)];
            if (p > 0) e -= p * std::log(p);
        }
        ent[i] = float(e);
    }
    return ent;
}

LabelMap entropy_to_bytes(const std::vector<float>& entropy, int h, int w, int classes) {
    LabelMap m(h, w);
    const double max_e = std::log(double(classes));
    for (size_t i = 0; i < entropy.size(); ++i) {
        const double t = std::min(1.0, std::max(0.0, double(entropy[i]) / max_e));
        m.v[i] = uint8_t(std::lround(t * 255.0));
    }
    return m;
}

} // namespace va
