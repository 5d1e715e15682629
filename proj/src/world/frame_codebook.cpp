#include "vlalab/world/frame_codebook.hpp"

#include <set>

#include "vlalab/action/codecs.hpp"

namespace vlalab::world {

std::vector<double> frame_patches(const sim::Image& frame, int patch) {
    if (frame.h % patch != 0 || frame.w % patch != 0)
        throw sim::SimError("frame_patches: image extents not divisible by patch size");
    int gh = frame.h / patch, gw = frame.w / patch;
    std::vector<double> out;
    out.reserve(static_cast<size_t>(gh) * gw * patch * patch * 3);
    for (int gr = 0; gr < gh; ++gr)
        for (int gc = 0; gc < gw; ++gc)
            for (int r = 0; r < patch; ++r)
                for (int c = 0; c < patch; ++c) {
                    const float* px = frame.at(gr * patch + r, gc * patch + c);
                    out.push_back(px[0]);
                    out.push_back(px[1]);
                    out.push_back(px[2]);
                }
    return out;
}

FrameCodebook fit_frame_codebook(const std::vector<const sim::Image*>& frames, int patch, int k,
                                 uint64_t seed) {
    if (frames.empty()) throw sim::SimError("fit_frame_codebook: no frames");
    std::vector<double> points;
    for (const sim::Image* f : frames) {
        auto p = frame_patches(*f, patch);
        points.insert(points.end(), p.begin(), p.end());
    }
    int dim = patch * patch * 3;
    int n = static_cast<int>(points.size()) / dim;

    // distinct patches must cover the codebook
    std::set<std::vector<double>> distinct;
    for (int i = 0; i < n && static_cast<int>(distinct.size()) < k; ++i)
        distinct.insert(std::vector<double>(points.begin() + static_cast<size_t>(i) * dim,
                                            points.begin() + static_cast<size_t>(i + 1) * dim));
    if (static_cast<int>(distinct.size()) < k)
        throw sim::SimError("fit_frame_codebook: codebook size exceeds distinct patches");

    FrameCodebook cb;
    cb.k = k;
    cb.patch = patch;
    cb.centroids = action::kmeans_fit(points, dim, k, 12, seed);
    return cb;
}

std::vector<int> tokenize_frame(const sim::Image& frame, const FrameCodebook& cb) {
    auto points = frame_patches(frame, cb.patch);
    int dim = cb.patch_len();
    int n = static_cast<int>(points.size()) / dim;
    std::vector<int> ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        ids[static_cast<size_t>(i)] = action::nearest_centroid(
            points.data() + static_cast<size_t>(i) * dim, cb.centroids, cb.k, dim);
    return ids;
}

double frame_quantization_error(const sim::Image& frame, const FrameCodebook& cb) {
    auto points = frame_patches(frame, cb.patch);
    auto ids = tokenize_frame(frame, cb);
    int dim = cb.patch_len();
    double total = 0.0;
    for (size_t i = 0; i < ids.size(); ++i) {
        const double* c = cb.centroids.data() + static_cast<size_t>(ids[i]) * dim;
        for (int j = 0; j < dim; ++j) {
            double d = points[i * dim + static_cast<size_t>(j)] - c[j];
            total += d * d;
        }
    }
    return total / static_cast<double>(points.size());
}

}  // namespace vlalab::world
