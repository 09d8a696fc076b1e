#include "viewadapt/vtn.hpp"

#include <cmath>
#include <numeric>

#include "viewadapt/checkpoint.hpp"

namespace va {

VTNConfig default_vtn_config(const std::string& profile) {
    VTNConfig c;
    if (profile == "paper") {
        c.layers = 8;
        c.height = 384;
        c.width = 512;
        c.batch = 16;
        c.epochs = 10;
        c.lr = 1e-4;
    } else if (profile == "desk") {
        c.layers = 2;
        c.height = 32;
        c.width = 48;
        c.batch = 8;
        c.epochs = 14;
        c.lr = 3e-4;
    } else {
        throw ConfigError("unknown profile: " + profile + " (expected paper|desk)");
    }
    return c;
}

VTNParams train_vtn(const VTNConfig& cfg, const std::vector<ColorPair>& pairs,
                    uint64_t seed, const EpochCallback& on_epoch) {
    cfg.validate();
    if (pairs.empty()) throw ConfigError("train_vtn: empty dataset");

    VTNParams params = init_vtn<float>(cfg, seed);
    AdamState<float> adam;
    adam.lr = float(cfg.lr);
    adam.beta1 = float(cfg.beta1);
    adam.beta2 = float(cfg.beta2);

    const Rng root(seed);
    std::vector<size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), size_t(0));

    int64_t iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = root.substream("vtn_shuffle", uint64_t(epoch));
        shuffle(order, shuffle_rng);

        double loss_sum = 0;
        std::vector<double> layer_sum(size_t(cfg.layers), 0.0);
        int steps = 0;

        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(cfg.batch)) {
            const size_t b1 = std::min(order.size(), b0 + size_t(cfg.batch));
            std::vector<Image> xq, xk, xv, xqbar;
            for (size_t i = b0; i < b1; ++i) {
                const size_t idx = order[i];
                Rng aug = root.substream("vtn_aug", uint64_t(epoch), uint64_t(idx));
                const double a = aug.uniform(-cfg.jitter, cfg.jitter);
                const double bfac = aug.uniform(-cfg.jitter, cfg.jitter);
                const ChannelPermutation p = sample_channel_permutation(aug);
                TrainingTuple t = make_training_tuple(pairs[idx].x_s, pairs[idx].x_t, a,
                                                      bfac, p);
                xq.push_back(std::move(t.x_q));
                xk.push_back(std::move(t.x_k));
                xv.push_back(std::move(t.x_v));
                xqbar.push_back(std::move(t.x_qbar));
            }
            try {
                Tensor<float> tq = images_to_batch<float>(xq);
                Tensor<float> tk = images_to_batch<float>(xk);
                Tensor<float> tv = images_to_batch<float>(xv);
                Tensor<float> tt = images_to_batch<float>(xqbar);

                std::vector<Tensor<float>> outs = vtn_forward(params, tv, tk, tq);
                VtnLoss<float> loss = vtn_loss(outs, tt, cfg.layers);

                params.store.zero_grad();
                backward(loss.total);
                adam_step(params.store, adam);

                loss_sum += double(loss.total.item());
                for (int l = 0; l < cfg.layers; ++l)
                    layer_sum[size_t(l)] += loss.per_layer[size_t(l)];
                ++steps;
                ++iteration;
            } catch (const NumericalError& e) {
                std::string layer_info;
                throw NumericalError("train_vtn: aborted at iteration " +
                                     std::to_string(iteration) + " (epoch " +
                                     std::to_string(epoch) + "): " + e.what());
            }
        }

        if (on_epoch) {
            EpochStats st;
            st.epoch = epoch;
            st.mean_loss = steps > 0 ? loss_sum / steps : 0.0;
            for (double s : layer_sum)
                st.per_layer_loss.push_back(steps > 0 ? s / steps : 0.0);
            on_epoch(st);
        }
    }
    return params;
}

Image hallucinate_semantic(VTNParams& params, const Image& y_s_semantic, const Image& x_s,
                           const Image& x_t) {
    Tensor<float> xv = image_to_tensor<float>(y_s_semantic);
    Tensor<float> xk = image_to_tensor<float>(x_s);
    Tensor<float> xq = image_to_tensor<float>(x_t);
    std::vector<Tensor<float>> outs = vtn_forward(params, xv, xk, xq);
    return tensor_to_image(outs.back());
}

namespace {
constexpr const char* kCfgKeys[] = {
    "config/layers", "config/enc_channels", "config/downsample", "config/height",
    "config/width",  "config/positional",   "config/arch",       "config/temperature",
};
}

void save_vtn(const VTNParams& params, const std::string& path) {
    ParamStore<float> out;
    const VTNConfig& c = params.cfg;
    const float vals[] = {float(c.layers),
                          float(c.enc_channels),
                          float(c.downsample),
                          float(c.height),
                          float(c.width),
                          c.positional == PositionalMode::modulate ? 0.f : 1.f,
                          c.arch == AttnVariant::attention ? 0.f : 1.f,
                          float(c.temperature)};
    for (size_t i = 0; i < std::size(kCfgKeys); ++i)
        out.add(kCfgKeys[i], Tensor<float>::scalar(vals[i]));
    for (const auto& [name, t] : params.store.params) out.add(name, t);
    save_checkpoint(out, path);
}

VTNParams load_vtn(const std::string& path) {
    ParamStore<float> in = load_checkpoint(path);
    VTNParams p;
    auto pop = [&](const char* key) {
        auto it = in.params.find(key);
        if (it == in.params.end())
            throw FormatError("vtn checkpoint missing " + std::string(key) + ": " + path);
        const float v = it->second.item();
        in.params.erase(it);
        return v;
    };
    p.cfg.layers = int(pop("config/layers"));
    p.cfg.enc_channels = int(pop("config/enc_channels"));
    p.cfg.downsample = int(pop("config/downsample"));
    p.cfg.height = int(pop("config/height"));
    p.cfg.width = int(pop("config/width"));
    p.cfg.positional =
        pop("config/positional") == 0.f ? PositionalMode::modulate : PositionalMode::concat;
    p.cfg.arch = pop("config/arch") == 0.f ? AttnVariant::attention : AttnVariant::conv;
    p.cfg.temperature = double(pop("config/temperature"));
    p.store = std::move(in);
    return p;
}

} // namespace va
