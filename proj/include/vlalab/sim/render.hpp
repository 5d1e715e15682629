#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vlalab/sim/world.hpp"

namespace vlalab::sim {

constexpr int kImageSize = 48;

// Row-major HxWx3 image, values in [0, 1]. Row 0 is the top of the frame
// (world y = 1 for the third-person camera).
struct Image {
    int h = kImageSize, w = kImageSize;
    std::vector<float> px;

    Image() : px(static_cast<size_t>(kImageSize) * kImageSize * 3, 0.0f) {}
    float* at(int r, int c) { return px.data() + (static_cast<size_t>(r) * w + c) * 3; }
    const float* at(int r, int c) const { return px.data() + (static_cast<size_t>(r) * w + c) * 3; }
};

enum class CameraKind { third_person, wrist };

// Environment appearance: lighting, background, camera extrinsics, and pixel
// noise. Default values render the canonical (training) appearance.
struct Appearance {
    double brightness = 1.0;
    std::array<double, 3> background = {0.40, 0.44, 0.50};
    double cam_dx = 0.0, cam_dy = 0.0;  // third-person window offset
    double cam_zoom = 1.0;              // third-person window scale
    double noise_std = 0.0;
    uint64_t noise_seed = 0;
};

// Deterministic rasterization; `frame_salt` seeds the per-frame noise stream
// (use the env step counter so consecutive frames get fresh noise).
Image render(const WorldState& state, CameraKind camera, const Appearance& appearance,
             uint64_t frame_salt = 0);

// 8-bit quantization used by the dataset format.
std::vector<uint8_t> quantize(const Image& img);
Image dequantize(const uint8_t* bytes, size_t n);

}  // namespace vlalab::sim
