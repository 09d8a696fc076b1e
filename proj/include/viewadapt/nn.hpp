#pragma once

#include <optional>
#include <utility>

#include "viewadapt/params.hpp"
#include "viewadapt/tensor.hpp"

namespace va {

constexpr double kLeakySlope = 0.1;
constexpr double kLnEps = 1e-5;

// --------------------------------------------------------------------------
// positional grids

// u(r,c) = c/(W-1), v(r,c) = r/(H-1); a 1-wide/1-tall axis maps to 0.
template <class T>
std::pair<std::vector<T>, std::vector<T>> positional_grids(int64_t h, int64_t w) {
    if (h < 1 || w < 1) throw ConfigError("positional_grids: dims must be >= 1");
    std::vector<T> u(size_t(h * w)), v(size_t(h * w));
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            u[size_t(r * w + c)] = w > 1 ? T(c) / T(w - 1) : T(0);
            v[size_t(r * w + c)] = h > 1 ? T(r) / T(h - 1) : T(0);
        }
    return {std::move(u), std::move(v)};
}

// --------------------------------------------------------------------------
// scaled dot-product attention

// softmax(Q K^T / sqrt(d_k)) V over [N, tokens, channels] stacks. The row-
// stochastic weight matrix can be captured through `weights`.
template <class T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               Tensor<T>* weights = nullptr) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
        throw ShapeError("scaled_dot_attention: expected [N, tokens, dim] inputs");
    if (q.dim(2) != k.dim(2))
        throw ShapeError("scaled_dot_attention: query/key width mismatch " +
                         shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    if (k.dim(1) != v.dim(1))
        throw ShapeError("scaled_dot_attention: key/value token count mismatch " +
                         shape_str(k.shape()) + " vs " + shape_str(v.shape()));
    const T inv_sqrt_dk = T(1) / std::sqrt(T(q.dim(2)));
    Tensor<T> logits = scale(bmm(q, transpose_last2(k)), inv_sqrt_dk);
    Tensor<T> w = softmax(logits, 2);
    if (weights) *weights = w;
    return bmm(w, v);
}

// 2D convenience wrapper (single stack).
template <class T>
Tensor<T> scaled_dot_attention2d(const Tensor<T>& q, const Tensor<T>& k,
                                 const Tensor<T>& v, Tensor<T>* weights = nullptr) {
    Tensor<T> q3 = reshape(q, Shape{1, q.dim(0), q.dim(1)});
    Tensor<T> k3 = reshape(k, Shape{1, k.dim(0), k.dim(1)});
    Tensor<T> v3 = reshape(v, Shape{1, v.dim(0), v.dim(1)});
    Tensor<T> out = scaled_dot_attention(q3, k3, v3, weights);
    return reshape(out, Shape{out.dim(1), out.dim(2)});
}

// --------------------------------------------------------------------------
// shared building blocks

template <class T>
Tensor<T> conv_block(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x,
                     int64_t stride, int64_t pad) {
    return conv2d(x, ps.at(prefix + "/w"), ps.at(prefix + "/b"), stride, pad);
}

template <class T>
Tensor<T> ln_block(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x) {
    return layernorm(x, ps.at(prefix + "/g"), ps.at(prefix + "/b"), T(kLnEps), 1);
}

// --------------------------------------------------------------------------
// strided encoder (two stride-2 convs, downsample factor 4)

template <class T>
void init_encoder(ParamStore<T>& ps, const std::string& prefix, int64_t in_ch,
                  int64_t ch, Rng& rng) {
    add_conv(ps, prefix + "/conv1", ch, in_ch, 4, rng);
    add_layernorm(ps, prefix + "/ln1", ch);
    add_conv(ps, prefix + "/conv2", ch, ch, 4, rng);
    add_layernorm(ps, prefix + "/ln2", ch);
}

template <class T>
Tensor<T> encoder_forward(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x) {
    Tensor<T> y = leaky_relu(ln_block(ps, prefix + "/ln1",
                                      conv_block(ps, prefix + "/conv1", x, 2, 1)),
                             T(kLeakySlope));
    return leaky_relu(ln_block(ps, prefix + "/ln2",
                               conv_block(ps, prefix + "/conv2", y, 2, 1)),
                      T(kLeakySlope));
}

enum class PositionalMode { modulate, concat };

// Lift an image to features; for Q/K the normalized grids are attached,
// by default as per-channel modulation [f, f*u, f*v] (tripling channels),
// alternatively as two extra channels [f; u; v].
template <class T>
Tensor<T> lift_features(ParamStore<T>& ps, const std::string& encoder_prefix,
                        const Tensor<T>& img, bool attach_positions,
                        PositionalMode mode = PositionalMode::modulate) {
    Tensor<T> f = encoder_forward(ps, encoder_prefix, img);
    if (!attach_positions) return f;
    const int64_t hp = f.dim(2), wp = f.dim(3);
    auto [u, v] = positional_grids<T>(hp, wp);
    if (mode == PositionalMode::modulate)
        return concat_channels<T>({f, mul_grid(f, u), mul_grid(f, v)});
    const int64_t n = f.dim(0);
    std::vector<T> ud, vd;
    for (int64_t b = 0; b < n; ++b) {
        ud.insert(ud.end(), u.begin(), u.end());
        vd.insert(vd.end(), v.begin(), v.end());
    }
    Tensor<T> ut = Tensor<T>::leaf(Shape{n, 1, hp, wp}, std::move(ud));
    Tensor<T> vt = Tensor<T>::leaf(Shape{n, 1, hp, wp}, std::move(vd));
    return concat_channels<T>({f, ut, vt});
}

inline int64_t lifted_channels(int64_t enc_ch, PositionalMode mode) {
    return mode == PositionalMode::modulate ? enc_ch * 3 : enc_ch + 2;
}

// --------------------------------------------------------------------------
// mini-UNet feed-forward for the query/key streams:
// one stride-2 down conv, one up conv, skip concat, 1x1 fuse,
// layernorm after each conv.

template <class T>
void init_ffn_unet(ParamStore<T>& ps, const std::string& prefix, int64_t ch, Rng& rng) {
    add_conv(ps, prefix + "/down", ch, ch, 4, rng);
    add_layernorm(ps, prefix + "/ln_down", ch);
    add_conv_transpose(ps, prefix + "/up", ch, ch, 2, rng);
    add_layernorm(ps, prefix + "/ln_up", ch);
    add_conv(ps, prefix + "/fuse", ch, 2 * ch, 1, rng);
    add_layernorm(ps, prefix + "/ln_fuse", ch);
}

template <class T>
Tensor<T> ffn_unet_forward(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x) {
    Tensor<T> d = leaky_relu(ln_block(ps, prefix + "/ln_down",
                                      conv_block(ps, prefix + "/down", x, 2, 1)),
                             T(kLeakySlope));
    Tensor<T> u = leaky_relu(
        ln_block(ps, prefix + "/ln_up",
                 conv_transpose2d(d, ps.at(prefix + "/up/w"), ps.at(prefix + "/up/b"), 2)),
        T(kLeakySlope));
    Tensor<T> cat = concat_channels<T>({u, x});
    return leaky_relu(ln_block(ps, prefix + "/ln_fuse",
                               conv_block(ps, prefix + "/fuse", cat, 1, 0)),
                      T(kLeakySlope));
}

// value-stream feed-forwards: plain stride-1 convs with leakyrelu

template <class T>
void init_ffn_v(ParamStore<T>& ps, const std::string& prefix, int64_t ch, Rng& rng) {
    add_conv(ps, prefix + "1/conv", ch, ch, 3, rng);
    add_conv(ps, prefix + "2/conv1", ch, ch, 3, rng);
    add_conv(ps, prefix + "2/conv2", ch, ch, 3, rng);
}

template <class T>
Tensor<T> ffn_v1_forward(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x) {
    return leaky_relu(conv_block(ps, prefix + "1/conv", x, 1, 1), T(kLeakySlope));
}

template <class T>
Tensor<T> ffn_v2_forward(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& x) {
    Tensor<T> y = leaky_relu(conv_block(ps, prefix + "2/conv1", x, 1, 1), T(kLeakySlope));
    return conv_block(ps, prefix + "2/conv2", y, 1, 1);
}

// --------------------------------------------------------------------------
// attention layer

enum class AttnVariant {
    attention, // value transport via scaled dot-product attention
    conv,      // ablation: local 3x3 conv mixing of the three streams
};

template <class T>
struct AttnProbe {
    // per captured layer: row-stochastic [N, tokens, tokens] weights
    std::vector<std::vector<T>> layer_weights;
};

template <class T>
void init_attention_layer(ParamStore<T>& ps, const std::string& prefix, int64_t qk_ch,
                          int64_t v_ch, AttnVariant variant, Rng& rng) {
    init_ffn_unet(ps, prefix + "/ffn_q", qk_ch, rng);
    init_ffn_unet(ps, prefix + "/ffn_k", qk_ch, rng);
    add_conv(ps, prefix + "/w_proj", v_ch, v_ch, 1, rng);
    if (variant == AttnVariant::conv)
        add_conv(ps, prefix + "/mix", v_ch, 2 * qk_ch + v_ch, 3, rng);
    init_ffn_v(ps, prefix + "/ffn_v", v_ch, rng);
}

template <class T>
struct LayerStreams {
    Tensor<T> q, k, v;
};

// One update of the (Q, K, V) feature streams. Maps are flattened to
// H'*W' tokens for the attention step; the value projection is a 1x1 conv.
template <class T>
LayerStreams<T> attention_layer(ParamStore<T>& ps, const std::string& prefix,
                                const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                AttnVariant variant = AttnVariant::attention,
                                AttnProbe<T>* probe = nullptr) {
    if (q.dim(2) != k.dim(2) || q.dim(3) != k.dim(3) || q.dim(2) != v.dim(2) ||
        q.dim(3) != v.dim(3))
        throw ShapeError("attention_layer: feature maps must share spatial size");
    if (q.dim(1) != k.dim(1))
        throw ShapeError("attention_layer: query/key token widths differ: " +
                         shape_str(q.shape()) + " vs " + shape_str(k.shape()));
    const int64_t hp = q.dim(2), wp = q.dim(3);

    Tensor<T> q_next = ffn_unet_forward(ps, prefix + "/ffn_q", q);
    Tensor<T> k_next = ffn_unet_forward(ps, prefix + "/ffn_k", k);

    Tensor<T> vw = conv_block(ps, prefix + "/w_proj", v, 1, 0);
    Tensor<T> v_hat;
    if (variant == AttnVariant::attention) {
        Tensor<T> weights;
        Tensor<T> att = scaled_dot_attention(to_tokens(q), to_tokens(k), to_tokens(vw),
                                             probe ? &weights : nullptr);
        if (probe) probe->layer_weights.push_back(weights.data());
        v_hat = from_tokens(att, hp, wp);
    } else {
        v_hat = conv_block(ps, prefix + "/mix", concat_channels<T>({q, k, vw}), 1, 1);
    }

    Tensor<T> v_bar = add(ffn_v1_forward(ps, prefix + "/ffn_v", v_hat), v);
    Tensor<T> v_next = add(ffn_v2_forward(ps, prefix + "/ffn_v", v_bar), v_bar);
    return {q_next, k_next, v_next};
}

// --------------------------------------------------------------------------
// shared decoder: transposed-conv upsampling back to image space, output
// squashed to [0,1] by a clamped linear.

template <class T>
void init_decoder(ParamStore<T>& ps, const std::string& prefix, int64_t v_ch, Rng& rng) {
    const int64_t mid = std::max<int64_t>(v_ch / 2, 4);
    add_conv_transpose(ps, prefix + "/up1", v_ch, v_ch, 2, rng);
    add_layernorm(ps, prefix + "/ln1", v_ch);
    add_conv_transpose(ps, prefix + "/up2", v_ch, mid, 2, rng);
    add_layernorm(ps, prefix + "/ln2", mid);
    // bias 0.5 starts the clamped-linear output mid-range
    add_conv(ps, prefix + "/out", 3, mid, 3, rng, T(0.5));
}

template <class T>
Tensor<T> decode_values(ParamStore<T>& ps, const std::string& prefix, const Tensor<T>& v) {
    Tensor<T> y = leaky_relu(
        ln_block(ps, prefix + "/ln1",
                 conv_transpose2d(v, ps.at(prefix + "/up1/w"), ps.at(prefix + "/up1/b"), 2)),
        T(kLeakySlope));
    y = leaky_relu(
        ln_block(ps, prefix + "/ln2",
                 conv_transpose2d(y, ps.at(prefix + "/up2/w"), ps.at(prefix + "/up2/b"), 2)),
        T(kLeakySlope));
    return clamp01(conv_block(ps, prefix + "/out", y, 1, 1));
}

} // namespace va
