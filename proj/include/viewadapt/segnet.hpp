#pragma once

#include <array>

#include "viewadapt/adam.hpp"
#include "viewadapt/image.hpp"
#include "viewadapt/nn.hpp"
#include "viewadapt/softlabels.hpp"
#include "viewadapt/vtn.hpp" // EpochStats / EpochCallback

namespace va {

// Small encoder-decoder segmentation network: 4 stride-2 conv blocks down,
// 4 transposed-conv blocks up with skip connections, C logit channels.
struct SegConfig {
    int classes = 6;
    int height = 32, width = 48;
    std::array<int, 4> channels{16, 24, 32, 48};

    int source_epochs = 16;
    int source_batch = 8;
    double source_lr = 2e-4;

    // adaptation schedule; paper profile: batch 6, lr 7.5e-5 halved after
    // epochs 10 and 15
    int adapt_epochs = 12;
    int adapt_batch = 6;
    double adapt_lr = 7.5e-5;
    int halve_after_1 = 10, halve_after_2 = 15;

    void validate() const {
        if (height % 16 != 0 || width % 16 != 0)
            throw ConfigError("segnet: image dims must be multiples of 16, got " +
                              std::to_string(height) + "x" + std::to_string(width));
        if (classes < 2) throw ConfigError("segnet: need at least 2 classes");
    }
};

SegConfig default_seg_config(const std::string& profile);

template <class T>
struct SegParamsT {
    SegConfig cfg;
    ParamStore<T> store;
};

using SegParams = SegParamsT<float>;

template <class T>
SegParamsT<T> init_segnet(const SegConfig& cfg, uint64_t seed) {
    cfg.validate();
    SegParamsT<T> p;
    p.cfg = cfg;
    Rng rng = Rng(seed).substream("seg_init");
    const auto& ch = cfg.channels;
    int64_t in = 3;
    for (int i = 0; i < 4; ++i) {
        add_conv(p.store, "down" + std::to_string(i + 1), ch[size_t(i)], in, 4, rng);
        add_layernorm(p.store, "ln_d" + std::to_string(i + 1), ch[size_t(i)]);
        in = ch[size_t(i)];
    }
    for (int i = 3; i >= 1; --i) {
        add_conv_transpose(p.store, "up" + std::to_string(i), ch[size_t(i)],
                           ch[size_t(i - 1)], 2, rng);
        add_layernorm(p.store, "ln_u" + std::to_string(i), ch[size_t(i - 1)]);
        add_conv(p.store, "mix" + std::to_string(i), ch[size_t(i - 1)],
                 2 * ch[size_t(i - 1)], 3, rng);
        add_layernorm(p.store, "ln_m" + std::to_string(i), ch[size_t(i - 1)]);
    }
    add_conv_transpose(p.store, "up0", ch[0], ch[0], 2, rng);
    add_layernorm(p.store, "ln_u0", ch[0]);
    add_conv(p.store, "head", cfg.classes, ch[0], 1, rng);
    return p;
}

// Dense logits at input resolution, [N, C, H, W].
template <class T>
Tensor<T> seg_forward(SegParamsT<T>& p, const Tensor<T>& img) {
    if (img.rank() != 4 || img.dim(1) != 3 || img.dim(2) != p.cfg.height ||
        img.dim(3) != p.cfg.width)
        throw ShapeError("seg_forward: expected [N,3," + std::to_string(p.cfg.height) +
                         "," + std::to_string(p.cfg.width) + "], got " +
                         shape_str(img.shape()));
    auto& ps = p.store;
    const T a = T(kLeakySlope);
    Tensor<T> d1 = leaky_relu(ln_block(ps, "ln_d1", conv_block(ps, "down1", img, 2, 1)), a);
    Tensor<T> d2 = leaky_relu(ln_block(ps, "ln_d2", conv_block(ps, "down2", d1, 2, 1)), a);
    Tensor<T> d3 = leaky_relu(ln_block(ps, "ln_d3", conv_block(ps, "down3", d2, 2, 1)), a);
    Tensor<T> d4 = leaky_relu(ln_block(ps, "ln_d4", conv_block(ps, "down4", d3, 2, 1)), a);

    auto up = [&](const std::string& idx, const Tensor<T>& x) {
        return leaky_relu(
            ln_block(ps, "ln_u" + idx,
                     conv_transpose2d(x, ps.at("up" + idx + "/w"), ps.at("up" + idx + "/b"), 2)),
            a);
    };
    auto mix = [&](const std::string& idx, const Tensor<T>& x, const Tensor<T>& skip) {
        return leaky_relu(ln_block(ps, "ln_m" + idx,
                                   conv_block(ps, "mix" + idx,
                                              concat_channels<T>({x, skip}), 1, 1)),
                          a);
    };
    Tensor<T> u3 = mix("3", up("3", d4), d3);
    Tensor<T> u2 = mix("2", up("2", u3), d2);
    Tensor<T> u1 = mix("1", up("1", u2), d1);
    Tensor<T> u0 = up("0", u1);
    return conv_block(ps, "head", u0, 1, 0);
}

LabelMap seg_predict(SegParams& p, const Image& img);

// Cross-entropy training on hard source labels.
SegParams train_source(const SegConfig& cfg,
                       const std::vector<std::pair<Image, LabelMap>>& data, uint64_t seed,
                       const EpochCallback& on_epoch = nullptr);

// Fine-tunes from the source parameters with soft cross-entropy on
// hallucinated labels; never sees target ground truth.
SegParams adapt_target(const SegParams& source,
                       const std::vector<std::pair<Image, SoftLabels>>& data,
                       uint64_t seed, const EpochCallback& on_epoch = nullptr);

void save_seg(const SegParams& params, const std::string& path);
SegParams load_seg(const std::string& path);

} // namespace va
