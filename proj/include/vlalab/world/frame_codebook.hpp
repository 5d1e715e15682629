#pragma once

#include <cstdint>
#include <vector>

#include "vlalab/sim/render.hpp"

namespace vlalab::world {

// Patch-cluster tokenizer for future-frame prediction: k-means centroids over
// flattened (patch x patch x 3) image patches; a frame tokenizes to the grid
// of nearest-centroid ids in raster order.
struct FrameCodebook {
    int k = 0;
    int patch = 0;
    std::vector<double> centroids;  // k * patch*patch*3

    int patch_len() const { return patch * patch * 3; }
    int grid_side(int image_size) const { return image_size / patch; }
};

// Flattened patches of one frame, raster order, each patch row-major RGB.
std::vector<double> frame_patches(const sim::Image& frame, int patch);

FrameCodebook fit_frame_codebook(const std::vector<const sim::Image*>& frames, int patch, int k,
                                 uint64_t seed);

std::vector<int> tokenize_frame(const sim::Image& frame, const FrameCodebook& cb);

// Mean squared quantization error of the tokenization, for oracle checks.
double frame_quantization_error(const sim::Image& frame, const FrameCodebook& cb);

}  // namespace vlalab::world
