#include "vlalab/action/codecs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vlalab/core/rng.hpp"

namespace vlalab::action {

NormStats fit_norm_stats(const std::vector<ActionChunk>& dataset) {
    if (dataset.empty()) throw CodecError("fit_norm_stats: empty dataset");
    int dim = dataset[0].dim;
    NormStats s;
    s.min.assign(dim, std::numeric_limits<double>::infinity());
    s.max.assign(dim, -std::numeric_limits<double>::infinity());
    for (const auto& c : dataset) {
        if (c.dim != dim) throw CodecError("fit_norm_stats: mixed dimensionality");
        for (int i = 0; i < c.t; ++i)
            for (int j = 0; j < dim; ++j) {
                s.min[j] = std::min(s.min[j], c.at(i, j));
                s.max[j] = std::max(s.max[j], c.at(i, j));
            }
    }
    s.constant.assign(dim, 0);
    for (int j = 0; j < dim; ++j)
        if (s.max[j] <= s.min[j]) s.constant[j] = 1;
    return s;
}

ActionChunk normalize(const ActionChunk& a, const NormStats& stats) {
    if (a.dim != stats.dim()) throw CodecError("normalize: dimension mismatch");
    ActionChunk out(a.t, a.dim);
    for (int i = 0; i < a.t; ++i)
        for (int j = 0; j < a.dim; ++j) {
            if (stats.constant[j]) {
                out.at(i, j) = 0.0;
            } else {
                out.at(i, j) = 2.0 * (a.at(i, j) - stats.min[j]) / (stats.max[j] - stats.min[j]) - 1.0;
            }
        }
    return out;
}

ActionChunk denormalize(const ActionChunk& a, const NormStats& stats) {
    if (a.dim != stats.dim()) throw CodecError("denormalize: dimension mismatch");
    ActionChunk out(a.t, a.dim);
    for (int i = 0; i < a.t; ++i)
        for (int j = 0; j < a.dim; ++j) {
            if (stats.constant[j]) {
                out.at(i, j) = stats.min[j];
            } else {
                out.at(i, j) = stats.min[j] + (a.at(i, j) + 1.0) * 0.5 * (stats.max[j] - stats.min[j]);
            }
        }
    return out;
}

int bin_encode_value(double x, int bins) {
    if (x < -1.0 - 1e-6 || x > 1.0 + 1e-6)
        throw CodecError("bin_encode: value outside [-1, 1]: " + std::to_string(x));
    x = std::clamp(x, -1.0, 1.0);
    int idx = static_cast<int>(std::floor((x + 1.0) * 0.5 * bins));
    return std::min(idx, bins - 1);
}

double bin_decode_value(int index, int bins) {
    if (index < 0 || index >= bins) throw CodecError("bin_decode: index out of range");
    return -1.0 + (index + 0.5) * 2.0 / bins;
}

std::vector<int> bin_encode(const ActionChunk& a, int bins) {
    std::vector<int> out(a.size());
    for (size_t i = 0; i < a.size(); ++i) out[i] = bin_encode_value(a.v[i], bins);
    return out;
}

ActionChunk bin_decode(const std::vector<int>& indices, int t, int dim, int bins) {
    if (indices.size() != static_cast<size_t>(t) * dim) throw CodecError("bin_decode: size mismatch");
    ActionChunk out(t, dim);
    for (size_t i = 0; i < indices.size(); ++i) out.v[i] = bin_decode_value(indices[i], bins);
    return out;
}

std::vector<double> dct_matrix(int t) {
    if (t <= 0) throw CodecError("dct_matrix: t must be positive");
    std::vector<double> m(static_cast<size_t>(t) * t);
    const double pi = 3.14159265358979323846;
    for (int k = 0; k < t; ++k) {
        double s = std::sqrt((k == 0 ? 1.0 : 2.0) / t);
        for (int n = 0; n < t; ++n)
            m[static_cast<size_t>(k) * t + n] = s * std::cos(pi * (n + 0.5) * k / t);
    }
    return m;
}

ActionChunk dct_forward(const ActionChunk& chunk) {
    if (chunk.t == 0) throw CodecError("dct_forward: empty chunk");
    std::vector<double> m = dct_matrix(chunk.t);
    ActionChunk out(chunk.t, chunk.dim);
    for (int k = 0; k < chunk.t; ++k)
        for (int j = 0; j < chunk.dim; ++j) {
            double acc = 0.0;
            for (int n = 0; n < chunk.t; ++n)
                acc += m[static_cast<size_t>(k) * chunk.t + n] * chunk.at(n, j);
            out.at(k, j) = acc;
        }
    return out;
}

ActionChunk dct_inverse(const ActionChunk& coeffs) {
    if (coeffs.t == 0) throw CodecError("dct_inverse: empty chunk");
    std::vector<double> m = dct_matrix(coeffs.t);
    ActionChunk out(coeffs.t, coeffs.dim);
    for (int n = 0; n < coeffs.t; ++n)
        for (int j = 0; j < coeffs.dim; ++j) {
            double acc = 0.0;
            for (int k = 0; k < coeffs.t; ++k)
                acc += m[static_cast<size_t>(k) * coeffs.t + n] * coeffs.at(k, j);
            out.at(n, j) = acc;
        }
    return out;
}

int nearest_centroid(const double* vec, const std::vector<double>& centroids, int k, int dim) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
        double d = 0.0;
        for (int j = 0; j < dim; ++j) {
            double dlt = vec[j] - centroids[static_cast<size_t>(c) * dim + j];
            d += dlt * dlt;
        }
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

namespace {

std::vector<double> kmeans(const std::vector<double>& points, int n, int dim, int k, int iters,
                           Rng& rng) {
    std::vector<double> cent(static_cast<size_t>(k) * dim);
    // seed: first centroid uniform, rest greedy-far with random tie offsets
    int first = rng.uniform_int(n);
    std::copy(points.begin() + static_cast<size_t>(first) * dim,
              points.begin() + static_cast<size_t>(first + 1) * dim, cent.begin());
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                double dlt = points[static_cast<size_t>(i) * dim + j] -
                             cent[static_cast<size_t>(c - 1) * dim + j];
                d += dlt * dlt;
            }
            dist[i] = std::min(dist[i], d);
            total += dist[i];
        }
        int pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += dist[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy(points.begin() + static_cast<size_t>(pick) * dim,
                  points.begin() + static_cast<size_t>(pick + 1) * dim,
                  cent.begin() + static_cast<size_t>(c) * dim);
    }

    std::vector<int> assign(n, 0);
    std::vector<double> sums(static_cast<size_t>(k) * dim);
    std::vector<int> counts(k);
    for (int it = 0; it < iters; ++it) {
        for (int i = 0; i < n; ++i)
            assign[i] = nearest_centroid(points.data() + static_cast<size_t>(i) * dim, cent, k, dim);
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            counts[assign[i]] += 1;
            for (int j = 0; j < dim; ++j)
                sums[static_cast<size_t>(assign[i]) * dim + j] +=
                    points[static_cast<size_t>(i) * dim + j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (int j = 0; j < dim; ++j)
                    cent[static_cast<size_t>(c) * dim + j] =
                        sums[static_cast<size_t>(c) * dim + j] / counts[c];
            } else {
                // dead code: reseed to the point farthest from its centroid
                int far = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    double d = 0.0;
                    for (int j = 0; j < dim; ++j) {
                        double dlt = points[static_cast<size_t>(i) * dim + j] -
                                     cent[static_cast<size_t>(assign[i]) * dim + j];
                        d += dlt * dlt;
                    }
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                std::copy(points.begin() + static_cast<size_t>(far) * dim,
                          points.begin() + static_cast<size_t>(far + 1) * dim,
                          cent.begin() + static_cast<size_t>(c) * dim);
            }
        }
    }
    return cent;
}

}  // namespace

std::vector<double> kmeans_fit(const std::vector<double>& points, int dim, int k, int iters,
                               uint64_t seed) {
    if (dim <= 0 || points.size() % static_cast<size_t>(dim) != 0)
        throw CodecError("kmeans_fit: bad point buffer");
    int n = static_cast<int>(points.size() / static_cast<size_t>(dim));
    if (n < k) throw CodecError("kmeans_fit: fewer points than clusters");
    Rng rng(derive_seed(seed, "kmeans"));
    return kmeans(points, n, dim, k, iters, rng);
}

Codebook vq_fit(const std::vector<ActionChunk>& chunks, const VqFitOptions& opt) {
    if (chunks.empty()) throw CodecError("vq_fit: empty corpus");
    int dim = chunks[0].dim;
    std::vector<double> points;
    for (const auto& c : chunks) {
        if (c.dim != dim) throw CodecError("vq_fit: mixed dimensionality");
        points.insert(points.end(), c.v.begin(), c.v.end());
    }
    int n = static_cast<int>(points.size() / dim);
    if (n < opt.k)
        throw CodecError("vq_fit: corpus has " + std::to_string(n) + " vectors, need >= " +
                         std::to_string(opt.k));

    Codebook cb;
    cb.levels = opt.levels;
    cb.k = opt.k;
    cb.dim = dim;
    cb.codes.resize(static_cast<size_t>(opt.levels) * opt.k * dim);

    Rng rng(derive_seed(opt.seed, "vq_fit"));
    std::vector<double> residual = points;
    for (int level = 0; level < opt.levels; ++level) {
        std::vector<double> cent = kmeans(residual, n, dim, opt.k, opt.iters, rng);
        std::copy(cent.begin(), cent.end(),
                  cb.codes.begin() + static_cast<size_t>(level) * opt.k * dim);
        for (int i = 0; i < n; ++i) {
            int c = nearest_centroid(residual.data() + static_cast<size_t>(i) * dim, cent, opt.k, dim);
            for (int j = 0; j < dim; ++j)
                residual[static_cast<size_t>(i) * dim + j] -= cent[static_cast<size_t>(c) * dim + j];
        }
    }
    return cb;
}

std::vector<int> vq_encode_step(const Codebook& cb, const double* step_vec) {
    std::vector<int> out(cb.levels);
    std::vector<double> r(step_vec, step_vec + cb.dim);
    for (int level = 0; level < cb.levels; ++level) {
        std::vector<double> cent(cb.codes.begin() + static_cast<size_t>(level) * cb.k * cb.dim,
                                 cb.codes.begin() + static_cast<size_t>(level + 1) * cb.k * cb.dim);
        int c = nearest_centroid(r.data(), cent, cb.k, cb.dim);
        out[level] = c;
        for (int j = 0; j < cb.dim; ++j) r[j] -= cb.code(level, c)[j];
    }
    return out;
}

std::vector<int> vq_encode(const Codebook& cb, const ActionChunk& chunk) {
    if (chunk.dim != cb.dim) throw CodecError("vq_encode: dimension mismatch");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(chunk.t) * cb.levels);
    for (int i = 0; i < chunk.t; ++i) {
        auto step = vq_encode_step(cb, chunk.v.data() + static_cast<size_t>(i) * chunk.dim);
        out.insert(out.end(), step.begin(), step.end());
    }
    return out;
}

ActionChunk vq_reconstruct(const Codebook& cb, const std::vector<int>& indices, int t) {
    if (indices.size() != static_cast<size_t>(t) * cb.levels)
        throw CodecError("vq_reconstruct: index count mismatch");
    ActionChunk out(t, cb.dim);
    for (int i = 0; i < t; ++i)
        for (int level = 0; level < cb.levels; ++level) {
            const double* c = cb.code(level, indices[static_cast<size_t>(i) * cb.levels + level]);
            for (int j = 0; j < cb.dim; ++j) out.at(i, j) += c[j];
        }
    return out;
}

double vq_reconstruction_error(const Codebook& cb, const std::vector<ActionChunk>& chunks,
                               int levels) {
    double total = 0.0;
    int count = 0;
    for (const auto& chunk : chunks) {
        for (int i = 0; i < chunk.t; ++i) {
            const double* vec = chunk.v.data() + static_cast<size_t>(i) * chunk.dim;
            std::vector<double> r(vec, vec + cb.dim);
            for (int level = 0; level < levels; ++level) {
                std::vector<double> cent(
                    cb.codes.begin() + static_cast<size_t>(level) * cb.k * cb.dim,
                    cb.codes.begin() + static_cast<size_t>(level + 1) * cb.k * cb.dim);
                int c = nearest_centroid(r.data(), cent, cb.k, cb.dim);
                for (int j = 0; j < cb.dim; ++j) r[j] -= cb.code(level, c)[j];
            }
            double d = 0.0;
            for (int j = 0; j < cb.dim; ++j) d += r[j] * r[j];
            total += std::sqrt(d);
            count += 1;
        }
    }
    return count ? total / count : 0.0;
}

}  // namespace vlalab::action
