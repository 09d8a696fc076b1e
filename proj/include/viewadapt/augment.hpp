#pragma once

#include <array>

#include "viewadapt/image.hpp"
#include "viewadapt/rng.hpp"
#include "viewadapt/scene.hpp"

namespace va {

// Channel permutation of (R,G,B); perm[i] = source channel of output i.
using ChannelPermutation = std::array<int, 3>;

constexpr ChannelPermutation kIdentityPermutation{0, 1, 2};

// Shift hue by `shift` turns (RGB -> HSV -> RGB); saturation/value untouched.
Image hue_shift(const Image& img, double shift);

// One uniform draw in [-delta, +delta] per image.
Image hue_jitter(const Image& img, double delta, Rng& rng);

ChannelPermutation sample_channel_permutation(Rng& rng);
ChannelPermutation inverse_permutation(const ChannelPermutation& p);
Image apply_permutation(const Image& img, const ChannelPermutation& p);

// x_Q: target view, jitter a; x_K: source view, jitter a;
// x_V: source view, jitter b + permutation p; x_qbar: target view, jitter b
// + the same permutation p. The permutation never touches x_Q/x_K.
struct TrainingTuple {
    Image x_q, x_k, x_v, x_qbar;
};

TrainingTuple make_training_tuple(const Image& x_s, const Image& x_t, double a, double b,
                                  const ChannelPermutation& p);

TrainingTuple make_training_tuple(const FramePair& pair, double delta, Rng& rng);

} // namespace va
