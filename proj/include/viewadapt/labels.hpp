#pragma once

#include <functional>

#include "viewadapt/image.hpp"
#include "viewadapt/softlabels.hpp"
#include "viewadapt/vtn.hpp"

namespace va {

// Nearest palette color per pixel; ties break toward the lowest class id.
LabelMap nn_decode(const Image& img, const Palette& palette);

// Binary indicator of class c broadcast to 3 channels.
Image indicator_image(const LabelMap& labels, int c);

// Any operator with psi's signature (value image; source, target guides).
using PsiFn = std::function<Image(const Image& value, const Image& x_s, const Image& x_t)>;

// For each class c the response is the channel mean of psi applied to the
// class indicator; the per-pixel softmax of the stacked responses (scaled
// by 1/temperature) is the hallucinated soft label field.
SoftLabels functional_decode(const PsiFn& psi, const LabelMap& labels_s, const Image& x_s,
                             const Image& x_t, int classes, double temperature = 1.0);

// Same decoding through a trained network, with the C class passes batched
// into a single forward. Bit-identical to the generic path.
SoftLabels functional_decode_vtn(VTNParams& params, const LabelMap& labels_s,
                                 const Image& x_s, const Image& x_t, int classes);

// Per-pixel Shannon entropy in nats, in [0, ln C].
std::vector<float> entropy_map(const SoftLabels& soft);

// Entropy scaled to bytes over [0, ln C] for PGM emission.
LabelMap entropy_to_bytes(const std::vector<float>& entropy, int h, int w, int classes);

} // namespace va
