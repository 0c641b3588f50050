#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hutk/dsp.hpp"
#include "hutk/tensor.hpp"

namespace hutk {

struct Codebook {
    Tensor<float> centroids;  // K x D
    double inertia = 0.0;

    int64_t k() const { return centroids.shape[0]; }
    int64_t dim() const { return centroids.shape[1]; }
};

struct UnitSequence {
    std::vector<uint16_t> units;
    int64_t k = 0;
    double frame_rate_hz = 0.0;
};

// Seeded k-means++ initialization followed by Lloyd iterations until the
// maximum centroid shift drops below tol or max_iter is reached. Inertia is
// checked to be non-increasing every iteration. Empty clusters are re-seeded
// to the point currently farthest from its assigned centroid.
Codebook kmeans_fit(const Tensor<float>& points, int64_t k, uint64_t seed, int max_iter = 100,
                    double tol = 1e-6);

// Nearest centroid by squared Euclidean distance; ties break to the lowest
// centroid index.
std::vector<int64_t> kmeans_assign_frames(const Codebook& cb, const Tensor<float>& frames);

UnitSequence kmeans_assign(const Codebook& cb, const FeatureSequence& f);

void write_codebook(const std::string& path, const Codebook& cb);
Codebook read_codebook(const std::string& path);

void write_units(const std::string& path, const UnitSequence& u);
UnitSequence read_units(const std::string& path);

}  // namespace hutk
