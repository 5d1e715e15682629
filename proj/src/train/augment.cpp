#include "vlalab/train/augment.hpp"

#include <algorithm>
#include <cmath>

namespace vlalab::train {

namespace {

float sample_bilinear(const sim::Image& img, double x, double y, int c) {
    x = std::clamp(x, 0.0, static_cast<double>(img.w - 1));
    y = std::clamp(y, 0.0, static_cast<double>(img.h - 1));
    int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, img.w - 1), y1 = std::min(y0 + 1, img.h - 1);
    double fx = x - x0, fy = y - y0;
    double v00 = img.at(y0, x0)[c], v01 = img.at(y0, x1)[c];
    double v10 = img.at(y1, x0)[c], v11 = img.at(y1, x1)[c];
    return static_cast<float>((v00 * (1 - fx) + v01 * fx) * (1 - fy) +
                              (v10 * (1 - fx) + v11 * fx) * fy);
}

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    v = mx;
    double d = mx - mn;
    s = mx <= 0.0 ? 0.0 : d / mx;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (mx == r)
        h = (g - b) / d + (g < b ? 6.0 : 0.0);
    else if (mx == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    h = h - std::floor(h);
    double i = std::floor(h * 6.0);
    double f = h * 6.0 - i;
    double p = v * (1.0 - s);
    double q = v * (1.0 - f * s);
    double t = v * (1.0 - (1.0 - f) * s);
    switch (static_cast<int>(i) % 6) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

}  // namespace

CropBox draw_crop_box(double W, double H, const AugmentParams& p, Rng& rng) {
    // area fraction within [scale_min, scale_max], aspect ratio within
    // [ratio_min, ratio_max]; redrawn until the box fits
    for (int attempt = 0; attempt < 20; ++attempt) {
        double s = rng.uniform(p.crop_scale_min, p.crop_scale_max);
        double r = rng.uniform(p.crop_ratio_min, p.crop_ratio_max);
        double w = std::sqrt(s * W * H * r);
        double h = std::sqrt(s * W * H / r);
        if (w <= W && h <= H)
            return {rng.uniform(0.0, W - w), rng.uniform(0.0, H - h), w, h};
    }
    double side = std::sqrt(p.crop_scale_min * W * H);
    return {0.5 * (W - side), 0.5 * (H - side), side, side};
}

sim::Image augment(const sim::Image& img, const AugmentParams& p, Rng& rng) {
    const double W = img.w, H = img.h;
    CropBox box = draw_crop_box(W, H, p, rng);

    sim::Image out;
    for (int r = 0; r < img.h; ++r)
        for (int c = 0; c < img.w; ++c) {
            double sx = box.x0 + (c + 0.5) / W * box.w - 0.5;
            double sy = box.y0 + (r + 0.5) / H * box.h - 0.5;
            float* px = out.at(r, c);
            for (int k = 0; k < 3; ++k) px[k] = sample_bilinear(img, sx, sy, k);
        }

    double fb = 1.0 + rng.uniform(-p.brightness, p.brightness);
    double fc = 1.0 + rng.uniform(-p.contrast, p.contrast);
    double fs = 1.0 + rng.uniform(-p.saturation, p.saturation);
    double dh = rng.uniform(-p.hue, p.hue);

    // contrast pivots on the mean gray level after brightness
    double mean_gray = 0.0;
    for (int r = 0; r < out.h; ++r)
        for (int c = 0; c < out.w; ++c) {
            const float* px = out.at(r, c);
            mean_gray += 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        }
    mean_gray = mean_gray * fb / (out.h * out.w);

    for (int r = 0; r < out.h; ++r)
        for (int c = 0; c < out.w; ++c) {
            float* px = out.at(r, c);
            double rr = px[0] * fb, gg = px[1] * fb, bb = px[2] * fb;
            rr = (rr - mean_gray) * fc + mean_gray;
            gg = (gg - mean_gray) * fc + mean_gray;
            bb = (bb - mean_gray) * fc + mean_gray;
            double gray = 0.299 * rr + 0.587 * gg + 0.114 * bb;
            rr = gray + (rr - gray) * fs;
            gg = gray + (gg - gray) * fs;
            bb = gray + (bb - gray) * fs;
            double h, s, v;
            rgb_to_hsv(std::clamp(rr, 0.0, 1.0), std::clamp(gg, 0.0, 1.0),
                       std::clamp(bb, 0.0, 1.0), h, s, v);
            hsv_to_rgb(h + dh, s, v, rr, gg, bb);
            px[0] = static_cast<float>(std::clamp(rr, 0.0, 1.0));
            px[1] = static_cast<float>(std::clamp(gg, 0.0, 1.0));
            px[2] = static_cast<float>(std::clamp(bb, 0.0, 1.0));
        }
    return out;
}

}  // namespace vlalab::train
