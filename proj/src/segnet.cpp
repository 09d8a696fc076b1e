#include "viewadapt/segnet.hpp"

#include <numeric>

#include "viewadapt/checkpoint.hpp"

namespace va {

SegConfig default_seg_config(const std::string& profile) {
    SegConfig c;
    if (profile == "paper") {
        c.adapt_epochs = 25;
        c.adapt_batch = 6;
        c.adapt_lr = 7.5e-5;
        c.halve_after_1 = 10;
        c.halve_after_2 = 15;
    } else if (profile == "desk") {
        c.source_epochs = 16;
        c.source_batch = 8;
        c.source_lr = 2e-4;
        c.adapt_epochs = 12;
        c.adapt_batch = 6;
        c.adapt_lr = 7.5e-5;
        c.halve_after_1 = 6;
        c.halve_after_2 = 9;
    } else {
        throw ConfigError("unknown profile: " + profile + " (expected paper|desk)");
    }
    return c;
}

LabelMap seg_predict(SegParams& p, const Image& img) {
    Tensor<float> logits = seg_forward(p, image_to_tensor<float>(img));
    const int h = p.cfg.height, w = p.cfg.width, C = p.cfg.classes;
    LabelMap out(h, w);
    const float* L = logits.data().data();
    const int64_t hw = int64_t(h) * w;
    for (int64_t i = 0; i < hw; ++i) {
        int best = 0;
        float bv = L[i];
        for (int c = 1; c < C; ++c)
            if (L[c * hw + i] > bv) {
                bv = L[c * hw + i];
                best = c;
            }
        out.v[size_t(i)] = uint8_t(best);
    }
    return out;
}

namespace {

Tensor<float> soft_to_tensor(const std::vector<const SoftLabels*>& batch, int h, int w,
                             int C) {
    const int64_t B = int64_t(batch.size()), hw = int64_t(h) * w;
    std::vector<float> d(size_t(B * C * hw));
    for (int64_t b = 0; b < B; ++b) {
        const SoftLabels& s = *batch[size_t(b)];
        if (s.h != h || s.w != w || s.classes != C)
            throw ShapeError("adapt_target: soft labels do not match image dims");
        for (int64_t i = 0; i < hw; ++i)
            for (int c = 0; c < C; ++c)
                d[size_t((b * C + c) * hw + i)] = s.p[size_t(i) * size_t(C) + size_t(c)];
    }
    return Tensor<float>::leaf(Shape{B, C, h, w}, std::move(d));
}

template <class MakeLoss>
void run_epochs(SegParams& params, size_t n_items, int epochs, int batch, double lr0,
                int halve1, int halve2, uint64_t seed, const char* stream_tag,
                const MakeLoss& make_loss, const EpochCallback& on_epoch) {
    AdamState<float> adam;
    adam.lr = float(lr0);
    const Rng root(seed);
    std::vector<size_t> order(n_items);
    std::iota(order.begin(), order.end(), size_t(0));

    int64_t iteration = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        double lr = lr0;
        if (epoch >= halve1) lr *= 0.5;
        if (epoch >= halve2) lr *= 0.5;
        adam.lr = float(lr);

        Rng shuffle_rng = root.substream(stream_tag, uint64_t(epoch));
        shuffle(order, shuffle_rng);

        double loss_sum = 0;
        int steps = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += size_t(batch)) {
            const size_t b1 = std::min(order.size(), b0 + size_t(batch));
            std::vector<size_t> idx(order.begin() + long(b0), order.begin() + long(b1));
            try {
                Tensor<float> loss = make_loss(params, idx);
                params.store.zero_grad();
                backward(loss);
                adam_step(params.store, adam);
                loss_sum += double(loss.item());
                ++steps;
                ++iteration;
            } catch (const NumericalError& e) {
                throw NumericalError("segnet: aborted at iteration " +
                                     std::to_string(iteration) + " (epoch " +
                                     std::to_string(epoch) + "): " + e.what());
            }
        }
        if (on_epoch) {
            EpochStats st;
            st.epoch = epoch;
            st.mean_loss = steps > 0 ? loss_sum / steps : 0.0;
            on_epoch(st);
        }
    }
}

} // namespace

SegParams train_source(const SegConfig& cfg,
                       const std::vector<std::pair<Image, LabelMap>>& data, uint64_t seed,
                       const EpochCallback& on_epoch) {
    cfg.validate();
    if (data.empty()) throw ConfigError("train_source: empty dataset");
    SegParams params = init_segnet<float>(cfg, seed);
    run_epochs(
        params, data.size(), cfg.source_epochs, cfg.source_batch, cfg.source_lr,
        cfg.source_epochs + 1, cfg.source_epochs + 1, seed, "seg_src_shuffle",
        [&](SegParams& p, const std::vector<size_t>& idx) {
            std::vector<Image> imgs;
            std::vector<uint8_t> labels;
            for (size_t i : idx) {
                imgs.push_back(data[i].first);
                labels.insert(labels.end(), data[i].second.v.begin(),
                              data[i].second.v.end());
            }
            Tensor<float> logits = seg_forward(p, images_to_batch<float>(imgs));
            return hard_cross_entropy(logits, labels);
        },
        on_epoch);
    return params;
}

SegParams adapt_target(const SegParams& source,
                       const std::vector<std::pair<Image, SoftLabels>>& data,
                       uint64_t seed, const EpochCallback& on_epoch) {
    if (data.empty()) throw ConfigError("adapt_target: empty dataset");
    const SegConfig& cfg = source.cfg;
    SegParams params;
    params.cfg = cfg;
    for (const auto& [name, t] : source.store.params) {
        auto copy = t.data();
        params.store.add(name, Tensor<float>::leaf(t.shape(), std::move(copy), true));
    }
    run_epochs(
        params, data.size(), cfg.adapt_epochs, cfg.adapt_batch, cfg.adapt_lr,
        cfg.halve_after_1, cfg.halve_after_2, seed, "seg_adapt_shuffle",
        [&](SegParams& p, const std::vector<size_t>& idx) {
            std::vector<Image> imgs;
            std::vector<const SoftLabels*> soft;
            for (size_t i : idx) {
                imgs.push_back(data[i].first);
                soft.push_back(&data[i].second);
            }
            Tensor<float> logits = seg_forward(p, images_to_batch<float>(imgs));
            Tensor<float> target =
                soft_to_tensor(soft, cfg.height, cfg.width, cfg.classes);
            return soft_cross_entropy(target, logits);
        },
        on_epoch);
    return params;
}

namespace {
constexpr const char* kSegCfgKeys[] = {
    "config/classes", "config/height", "config/width",
    "config/ch1",     "config/ch2",    "config/ch3",
    "config/ch4",
};
}

void save_seg(const SegParams& params, const std::string& path) {
    ParamStore<float> out;
    const SegConfig& c = params.cfg;
    const float vals[] = {float(c.classes), float(c.height),      float(c.width),
                          float(c.channels[0]), float(c.channels[1]), float(c.channels[2]),
                          float(c.channels[3])};
    for (size_t i = 0; i < std::size(kSegCfgKeys); ++i)
        out.add(kSegCfgKeys[i], Tensor<float>::scalar(vals[i]));
    for (const auto& [name, t] : params.store.params) out.add(name, t);
    save_checkpoint(out, path);
}

SegParams load_seg(const std::string& path) {
    ParamStore<float> in = load_checkpoint(path);
    SegParams p;
    auto pop = [&](const char* key) {
        auto it = in.params.find(key);
        if (it == in.params.end())
            throw FormatError("segnet checkpoint missing " + std::string(key) + ": " + path);
        const float v = it->second.item();
        in.params.erase(it);
        return v;
    };
    p.cfg.classes = int(pop("config/classes"));
    p.cfg.height = int(pop("config/height"));
    p.cfg.width = int(pop("config/width"));
    for (int i = 0; i < 4; ++i)
        p.cfg.channels[size_t(i)] = int(pop(kSegCfgKeys[3 + i]));
    p.store = std::move(in);
    return p;
}

} // namespace va
