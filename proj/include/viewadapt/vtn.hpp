#pragma once

#include <functional>
#include <string>
#include <vector>

#include "viewadapt/adam.hpp"
#include "viewadapt/augment.hpp"
#include "viewadapt/image.hpp"
#include "viewadapt/nn.hpp"

namespace va {

// View-transformation network psi(x_V; x_K, x_Q): three strided encoders,
// L attention layers over flattened tokens, one decoder shared by all
// layers. Every decoded layer output contributes to the training loss with
// weight lambda_l = 2^-(L-l).
struct VTNConfig {
    int layers = 2;
    int enc_channels = 16;
    int downsample = 4; // two stride-2 encoder convs
    int height = 32, width = 48;
    PositionalMode positional = PositionalMode::modulate;
    AttnVariant arch = AttnVariant::attention;

    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999;
    int batch = 8;
    int epochs = 10;
    double jitter = 0.15;
    double temperature = 1.0; // functional decoding softmax temperature

    int dk() const { return int(lifted_channels(enc_channels, positional)); }

    void validate() const {
        if (layers < 1) throw ConfigError("vtn: layers must be >= 1");
        if (height % 8 != 0 || width % 8 != 0)
            throw ConfigError("vtn: image dims must be multiples of 8, got " +
                              std::to_string(height) + "x" + std::to_string(width));
        if (enc_channels < 1 || batch < 1 || epochs < 0 || jitter < 0 || jitter > 0.5 ||
            temperature <= 0)
            throw ConfigError("vtn: bad hyperparameters");
    }
};

// profile is "paper" or "desk"
VTNConfig default_vtn_config(const std::string& profile);

inline double lambda_weight(int l, int layers) {
    return std::pow(2.0, -double(layers - l)); // l in 1..layers
}

template <class T>
struct VTNParamsT {
    VTNConfig cfg;
    ParamStore<T> store;
};

using VTNParams = VTNParamsT<float>;

template <class T>
VTNParamsT<T> init_vtn(const VTNConfig& cfg, uint64_t seed) {
    cfg.validate();
    VTNParamsT<T> p;
    p.cfg = cfg;
    Rng rng = Rng(seed).substream("vtn_init");
    init_encoder(p.store, "enc_q", 3, cfg.enc_channels, rng);
    init_encoder(p.store, "enc_k", 3, cfg.enc_channels, rng);
    init_encoder(p.store, "enc_v", 3, cfg.enc_channels, rng);
    for (int l = 0; l < cfg.layers; ++l)
        init_attention_layer(p.store, "layer" + std::to_string(l), int64_t(cfg.dk()),
                             int64_t(cfg.enc_channels), cfg.arch, rng);
    init_decoder(p.store, "dec", cfg.enc_channels, rng);
    return p;
}

template <class T>
void check_image_input(const Tensor<T>& x, const VTNConfig& cfg, const char* name) {
    if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.height || x.dim(3) != cfg.width)
        throw ShapeError(std::string("vtn_forward: ") + name + " must be [N,3," +
                         std::to_string(cfg.height) + "," + std::to_string(cfg.width) +
                         "], got " + shape_str(x.shape()));
    for (const T v : x.data())
        if (v < T(0) || v > T(1))
            throw NumericalError(std::string("vtn_forward: ") + name +
                                 " values must lie in [0,1]");
}

// Returns the L decoded images [x_Q^1 ... x_Q^L]; the last one is the
// hallucination. Attention weights can be captured through `probe`.
template <class T>
std::vector<Tensor<T>> vtn_forward(VTNParamsT<T>& params, const Tensor<T>& x_v,
                                   const Tensor<T>& x_k, const Tensor<T>& x_q,
                                   AttnProbe<T>* probe = nullptr) {
    const VTNConfig& cfg = params.cfg;
    check_image_input(x_v, cfg, "x_V");
    check_image_input(x_k, cfg, "x_K");
    check_image_input(x_q, cfg, "x_Q");

    Tensor<T> q = lift_features(params.store, "enc_q", x_q, true, cfg.positional);
    Tensor<T> k = lift_features(params.store, "enc_k", x_k, true, cfg.positional);
    Tensor<T> v = lift_features(params.store, "enc_v", x_v, false);

    std::vector<Tensor<T>> outputs;
    outputs.reserve(size_t(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
        LayerStreams<T> s = attention_layer(params.store, "layer" + std::to_string(l), q,
                                            k, v, cfg.arch, probe);
        q = s.q;
        k = s.k;
        v = s.v;
        outputs.push_back(decode_values(params.store, "dec", v));
    }
    return outputs;
}

template <class T>
struct VtnLoss {
    Tensor<T> total;
    std::vector<double> per_layer; // unweighted L1 per layer
};

// sum_l lambda_l * L1(x_Q^l, x_Qbar)
template <class T>
VtnLoss<T> vtn_loss(const std::vector<Tensor<T>>& outputs, const Tensor<T>& target,
                    int layers) {
    if (int(outputs.size()) != layers)
        throw ShapeError("vtn_loss: expected " + std::to_string(layers) +
                         " layer outputs, got " + std::to_string(outputs.size()));
    VtnLoss<T> r;
    for (int l = 1; l <= layers; ++l) {
        Tensor<T> li = l1_loss(outputs[size_t(l - 1)], target);
        r.per_layer.push_back(double(li.item()));
        Tensor<T> weighted = scale(li, T(lambda_weight(l, layers)));
        r.total = r.total.defined() ? add(r.total, weighted) : weighted;
    }
    return r;
}

struct ColorPair {
    Image x_s, x_t;
};

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0;
    std::vector<double> per_layer_loss;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Adam training over augmented tuples; consumes color images only.
// Deterministic for a fixed seed (the augmentation stream depends only on
// (seed, epoch, pair index)).
VTNParams train_vtn(const VTNConfig& cfg, const std::vector<ColorPair>& pairs,
                    uint64_t seed, const EpochCallback& on_epoch = nullptr);

// Zero-shot substitution: the value input is the palette-rendered source
// semantic image; returns the final-layer output.
Image hallucinate_semantic(VTNParams& params, const Image& y_s_semantic,
                           const Image& x_s, const Image& x_t);

void save_vtn(const VTNParams& params, const std::string& path);
VTNParams load_vtn(const std::string& path);

} // namespace va
