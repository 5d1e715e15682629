#pragma once

#include "vlalab/core/rng.hpp"
#include "vlalab/sim/render.hpp"

namespace vlalab::train {

struct AugmentParams {
    double crop_scale_min = 0.8, crop_scale_max = 1.0;
    double crop_ratio_min = 0.9, crop_ratio_max = 1.1;
    double brightness = 0.2;  // factor in [1-b, 1+b]
    double contrast = 0.2;
    double saturation = 0.2;
    double hue = 0.05;  // fraction of the hue circle
};

struct CropBox {
    double x0 = 0, y0 = 0, w = 0, h = 0;
};

// The crop draw used by augment(): area fraction within the scale range and
// aspect ratio within the ratio range, in continuous coordinates.
CropBox draw_crop_box(double W, double H, const AugmentParams& p, Rng& rng);

// Random resized crop followed by brightness/contrast/saturation/hue jitter,
// clamped to [0, 1]. Deterministic given the rng state.
sim::Image augment(const sim::Image& img, const AugmentParams& p, Rng& rng);

}  // namespace vlalab::train
