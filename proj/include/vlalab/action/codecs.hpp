#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlalab::action {

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Continuous action window of shape (t x dim), time-major.
struct ActionChunk {
    int t = 0;
    int dim = 0;
    std::vector<double> v;  // t * dim

    ActionChunk() = default;
    ActionChunk(int t_, int dim_) : t(t_), dim(dim_), v(static_cast<size_t>(t_) * dim_, 0.0) {}

    double& at(int i, int j) { return v[static_cast<size_t>(i) * dim + j]; }
    double at(int i, int j) const { return v[static_cast<size_t>(i) * dim + j]; }
    size_t size() const { return v.size(); }
};

// ---------------------------------------------------------------------------
// normalization
// ---------------------------------------------------------------------------

// Per-dimension min/max over a training set. Dimensions whose max equals min
// are flagged constant: they normalize to 0 and denormalize back to the
// constant.
struct NormStats {
    std::vector<double> min, max;
    std::vector<uint8_t> constant;

    int dim() const { return static_cast<int>(min.size()); }
};

NormStats fit_norm_stats(const std::vector<ActionChunk>& dataset);
ActionChunk normalize(const ActionChunk& a, const NormStats& stats);
ActionChunk denormalize(const ActionChunk& a, const NormStats& stats);

// ---------------------------------------------------------------------------
// uniform binning over [-1, 1]
// ---------------------------------------------------------------------------

// index = min(floor((x + 1) / 2 * bins), bins - 1); inputs may stray outside
// [-1, 1] by at most 1e-6.
int bin_encode_value(double x, int bins);
double bin_decode_value(int index, int bins);

std::vector<int> bin_encode(const ActionChunk& a, int bins);
ActionChunk bin_decode(const std::vector<int>& indices, int t, int dim, int bins);

// ---------------------------------------------------------------------------
// orthonormal DCT along the time axis
// ---------------------------------------------------------------------------

// Row-major (t x t) orthonormal DCT-II matrix; its transpose is the inverse
// (DCT-III).
std::vector<double> dct_matrix(int t);

ActionChunk dct_forward(const ActionChunk& chunk);
ActionChunk dct_inverse(const ActionChunk& coeffs);

// ---------------------------------------------------------------------------
// k-means (shared by the residual quantizer and the frame tokenizer)
// ---------------------------------------------------------------------------

// Returns k*dim centroids. Seeding is k-means++-style; empty clusters are
// reseeded to the farthest point each iteration.
std::vector<double> kmeans_fit(const std::vector<double>& points, int dim, int k, int iters,
                               uint64_t seed);

int nearest_centroid(const double* vec, const std::vector<double>& centroids, int k, int dim);

// ---------------------------------------------------------------------------
// residual vector quantization
// ---------------------------------------------------------------------------

// `levels` k-means codebooks; level l quantizes the residual left by levels
// < l. Codes are per-step dim-vectors.
struct Codebook {
    int levels = 0;
    int k = 0;
    int dim = 0;
    std::vector<double> codes;  // levels * k * dim

    const double* code(int level, int idx) const {
        return codes.data() + (static_cast<size_t>(level) * k + idx) * dim;
    }
};

struct VqFitOptions {
    int levels = 3;
    int k = 64;
    int iters = 25;
    uint64_t seed = 0;
};

// Fits residual k-means on per-step vectors drawn from the chunks.
Codebook vq_fit(const std::vector<ActionChunk>& chunks, const VqFitOptions& opt);

// One index per (step, level): t * levels entries, level-major per step.
std::vector<int> vq_encode_step(const Codebook& cb, const double* step_vec);
std::vector<int> vq_encode(const Codebook& cb, const ActionChunk& chunk);
ActionChunk vq_reconstruct(const Codebook& cb, const std::vector<int>& indices, int t);

// Mean reconstruction error (L2 per step) using the first `levels` levels.
double vq_reconstruction_error(const Codebook& cb, const std::vector<ActionChunk>& chunks,
                               int levels);

}  // namespace vlalab::action
