#include "vlalab/sim/render.hpp"

#include <algorithm>
#include <cmath>

namespace vlalab::sim {

namespace {

struct Rgb {
    double r, g, b;
};

Rgb color_rgb(ColorName c) {
    switch (c) {
        case ColorName::red: return {0.85, 0.18, 0.15};
        case ColorName::green: return {0.18, 0.72, 0.25};
        case ColorName::blue: return {0.22, 0.35, 0.85};
        case ColorName::yellow: return {0.90, 0.84, 0.18};
    }
    return {1, 0, 1};
}

constexpr Rgb kTable{0.71, 0.68, 0.63};
constexpr Rgb kPlate{0.92, 0.92, 0.95};
constexpr Rgb kPlateRim{0.55, 0.55, 0.60};
constexpr Rgb kBox{0.55, 0.40, 0.24};
constexpr Rgb kBoxInner{0.42, 0.30, 0.18};
constexpr Rgb kDrawerHousing{0.34, 0.24, 0.16};
constexpr Rgb kDrawerTray{0.50, 0.36, 0.22};
constexpr Rgb kDrawerPanel{0.62, 0.45, 0.28};
constexpr Rgb kHandle{0.10, 0.10, 0.12};
constexpr Rgb kFinger{0.13, 0.13, 0.16};
constexpr Rgb kPalm{0.22, 0.22, 0.27};

bool in_rect(double x, double y, double x0, double y0, double x1, double y1) {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
}

bool in_circle(double x, double y, double cx, double cy, double r) {
    double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
}

bool in_triangle(double x, double y, double cx, double cy, double half) {
    // upward-pointing triangle: apex at (cx, cy + half)
    double ly = y - (cy - half * 0.8);
    if (ly < 0 || ly > 1.8 * half) return false;
    double width = half * (1.0 - ly / (1.8 * half));
    return std::abs(x - cx) <= width;
}

// Scene color at a world point; painter's order from background up.
Rgb scene_color(const WorldState& s, double x, double y, const Appearance& ap) {
    Rgb c{ap.background[0], ap.background[1], ap.background[2]};

    if (in_rect(x, y, 0.0, 0.0, 1.0, 1.0)) c = kTable;

    if (s.has_drawer) {
        using namespace geom;
        if (in_rect(x, y, kDrawerX0, kDrawerY0, kDrawerX1, kDrawerY1)) c = kDrawerHousing;
        double front = kDrawerX0 - s.drawer_pos;
        if (s.drawer_pos > 0.005 && in_rect(x, y, front, kDrawerY0 + 0.02, kDrawerX0, kDrawerY1 - 0.02))
            c = kDrawerTray;
        if (in_rect(x, y, front - 0.02, kDrawerY0 + 0.01, front, kDrawerY1 - 0.01)) c = kDrawerPanel;
        if (in_circle(x, y, handle_x(s.drawer_pos), handle_y(), 0.018)) c = kHandle;
    }

    for (const auto& f : s.fixtures) {
        if (f.kind == FixtureKind::plate) {
            if (in_circle(x, y, f.x, f.y, geom::kPlateRadius)) c = kPlateRim;
            if (in_circle(x, y, f.x, f.y, geom::kPlateRadius - 0.015)) c = kPlate;
        } else {
            double h = geom::kBoxHalf;
            if (in_rect(x, y, f.x - h, f.y - h, f.x + h, f.y + h)) c = kBox;
            if (in_rect(x, y, f.x - h + 0.015, f.y - h + 0.015, f.x + h - 0.015, f.y + h - 0.015))
                c = kBoxInner;
        }
    }

    for (const auto& o : s.objects) {
        bool hit = false;
        switch (o.shape) {
            case ShapeKind::block:
                hit = in_rect(x, y, o.x - geom::kBlockHalf, o.y - geom::kBlockHalf,
                              o.x + geom::kBlockHalf, o.y + geom::kBlockHalf);
                break;
            case ShapeKind::ball:
                hit = in_circle(x, y, o.x, o.y, geom::kBallRadius);
                break;
            case ShapeKind::triangle:
                hit = in_triangle(x, y, o.x, o.y, geom::kTriangleHalf);
                break;
        }
        if (hit) c = color_rgb(o.color);
    }

    for (const auto& g : s.grippers) {
        double gap = g.open ? 0.040 : 0.018;
        double ct = std::cos(g.theta), st = std::sin(g.theta);
        // two fingers and a palm bar, rotated by theta about the gripper center
        auto local = [&](double lx, double ly, double hw, double hh) {
            double rx = x - g.x, ry = y - g.y;
            double ux = ct * rx + st * ry, uy = -st * rx + ct * ry;
            return std::abs(ux - lx) <= hw && std::abs(uy - ly) <= hh;
        };
        if (local(-gap, 0.0, 0.008, 0.030) || local(gap, 0.0, 0.008, 0.030)) c = kFinger;
        if (local(0.0, 0.034, gap + 0.008, 0.008)) c = kPalm;
    }
    return c;
}

}  // namespace

Image render(const WorldState& state, CameraKind camera, const Appearance& ap,
             uint64_t frame_salt) {
    double cx, cy, half;
    if (camera == CameraKind::third_person) {
        cx = 0.5 + ap.cam_dx;
        cy = 0.5 + ap.cam_dy;
        half = 0.55 * ap.cam_zoom;
    } else {
        cx = state.grippers.at(0).x;
        cy = state.grippers.at(0).y;
        half = 0.22;
    }

    Image img;
    const int n = kImageSize;
    for (int r = 0; r < n; ++r) {
        for (int col = 0; col < n; ++col) {
            double acc[3] = {0, 0, 0};
            // 2x2 subsamples per pixel
            for (int sy = 0; sy < 2; ++sy)
                for (int sx = 0; sx < 2; ++sx) {
                    double u = (col + 0.25 + 0.5 * sx) / n;
                    double v = (r + 0.25 + 0.5 * sy) / n;
                    double wx = cx + (u - 0.5) * 2.0 * half;
                    double wy = cy + (0.5 - v) * 2.0 * half;  // row 0 = top = high y
                    Rgb c = scene_color(state, wx, wy, ap);
                    acc[0] += c.r;
                    acc[1] += c.g;
                    acc[2] += c.b;
                }
            float* px = img.at(r, col);
            for (int k = 0; k < 3; ++k)
                px[k] = static_cast<float>(std::clamp(acc[k] * 0.25 * ap.brightness, 0.0, 1.0));
        }
    }

    if (ap.noise_std > 0.0) {
        Rng noise(derive_seed(ap.noise_seed, "pixel_noise", frame_salt,
                              camera == CameraKind::wrist ? 1 : 0));
        for (auto& p : img.px)
            p = static_cast<float>(
                std::clamp(static_cast<double>(p) + noise.normal(0.0, ap.noise_std), 0.0, 1.0));
    }
    return img;
}

std::vector<uint8_t> quantize(const Image& img) {
    std::vector<uint8_t> out(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(std::clamp(img.px[i], 0.0f, 1.0f) * 255.0f));
    return out;
}

Image dequantize(const uint8_t* bytes, size_t n) {
    Image img;
    if (n != img.px.size()) throw SimError("dequantize: size mismatch");
    for (size_t i = 0; i < n; ++i) img.px[i] = static_cast<float>(bytes[i]) / 255.0f;
    return img;
}

}  // namespace vlalab::sim
