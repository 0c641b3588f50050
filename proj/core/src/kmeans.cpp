#include "hutk/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hutk/io.hpp"
#include "hutk/rng.hpp"

namespace hutk {

namespace {

double row_dist2(const double* a, const double* b, int64_t d) {
    double acc = 0.0;
    for (int64_t j = 0; j < d; ++j) {
        const double diff = a[j] - b[j];
        acc += diff * diff;
    }
    return acc;
}

int64_t count_distinct(const std::vector<double>& pts, int64_t n, int64_t d, int64_t stop_at) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
        return std::lexicographical_compare(pts.data() + a * d, pts.data() + (a + 1) * d,
                                            pts.data() + b * d, pts.data() + (b + 1) * d);
    });
    int64_t distinct = n > 0 ? 1 : 0;
    for (int64_t i = 1; i < n && distinct < stop_at; ++i) {
        if (!std::equal(pts.data() + order[static_cast<size_t>(i)] * d,
                        pts.data() + (order[static_cast<size_t>(i)] + 1) * d,
                        pts.data() + order[static_cast<size_t>(i - 1)] * d)) {
            ++distinct;
        }
    }
    return distinct;
}

}  // namespace

Codebook kmeans_fit(const Tensor<float>& points, int64_t k, uint64_t seed, int max_iter,
                    double tol) {
    require(points.rank() == 2, ErrorCode::ShapeMismatch, "kmeans_fit: points must be rank 2");
    const int64_t n = points.shape[0];
    const int64_t d = points.shape[1];
    require(k >= 1, ErrorCode::BadConfig, "kmeans_fit: K must be >= 1");
    require(n >= k, ErrorCode::DegenerateData,
            "kmeans_fit: " + std::to_string(n) + " points for K=" + std::to_string(k));

    std::vector<double> pts(static_cast<size_t>(n * d));
    for (int64_t i = 0; i < n * d; ++i) {
        pts[static_cast<size_t>(i)] = static_cast<double>(points.at(i));
    }
    require(count_distinct(pts, n, d, k) >= k, ErrorCode::DegenerateData,
            "kmeans_fit: fewer than K distinct points");

    Rng rng(seed);
    std::vector<double> cent(static_cast<size_t>(k * d));
    std::vector<double> dist2(static_cast<size_t>(n));

    // k-means++ seeding.
    {
        const int64_t first = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n)));
        std::copy(pts.data() + first * d, pts.data() + (first + 1) * d, cent.data());
        for (int64_t i = 0; i < n; ++i) {
            dist2[static_cast<size_t>(i)] = row_dist2(pts.data() + i * d, cent.data(), d);
        }
        for (int64_t c = 1; c < k; ++c) {
            const double total = std::accumulate(dist2.begin(), dist2.end(), 0.0);
            int64_t pick = -1;
            if (total > 0.0) {
                const double r = rng.uniform() * total;
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i) {
                    acc += dist2[static_cast<size_t>(i)];
                    if (acc > r) {
                        pick = i;
                        break;
                    }
                }
            }
            if (pick < 0) {
                // Rounding fell off the end; take the last point with mass.
                for (int64_t i = n - 1; i >= 0; --i) {
                    if (dist2[static_cast<size_t>(i)] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
            require(pick >= 0, ErrorCode::DegenerateData, "kmeans_fit: seeding exhausted");
            std::copy(pts.data() + pick * d, pts.data() + (pick + 1) * d, cent.data() + c * d);
            for (int64_t i = 0; i < n; ++i) {
                const double nd = row_dist2(pts.data() + i * d, cent.data() + c * d, d);
                dist2[static_cast<size_t>(i)] = std::min(dist2[static_cast<size_t>(i)], nd);
            }
        }
    }

    std::vector<int64_t> assign(static_cast<size_t>(n), 0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    double inertia = 0.0;

    for (int iter = 0; iter < max_iter; ++iter) {
        inertia = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            double best = row_dist2(pts.data() + i * d, cent.data(), d);
            int64_t best_c = 0;
            for (int64_t c = 1; c < k; ++c) {
                const double dd = row_dist2(pts.data() + i * d, cent.data() + c * d, d);
                if (dd < best) {
                    best = dd;
                    best_c = c;
                }
            }
            assign[static_cast<size_t>(i)] = best_c;
            inertia += best;
        }
        require(inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, ErrorCode::DegenerateData,
                "kmeans_fit: inertia increased");
        prev_inertia = inertia;

        std::vector<double> sums(static_cast<size_t>(k * d), 0.0);
        std::vector<int64_t> counts(static_cast<size_t>(k), 0);
        for (int64_t i = 0; i < n; ++i) {
            const int64_t c = assign[static_cast<size_t>(i)];
            ++counts[static_cast<size_t>(c)];
            for (int64_t j = 0; j < d; ++j) {
                sums[static_cast<size_t>(c * d + j)] += pts[static_cast<size_t>(i * d + j)];
            }
        }

        double max_shift2 = 0.0;
        for (int64_t c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] == 0) {
                // Re-seed to the point farthest from its assigned centroid.
                int64_t far_i = 0;
                double far_d = -1.0;
                for (int64_t i = 0; i < n; ++i) {
                    const double dd = row_dist2(pts.data() + i * d,
                                                cent.data() + assign[static_cast<size_t>(i)] * d, d);
                    if (dd > far_d) {
                        far_d = dd;
                        far_i = i;
                    }
                }
                const double shift2 =
                    row_dist2(cent.data() + c * d, pts.data() + far_i * d, d);
                std::copy(pts.data() + far_i * d, pts.data() + (far_i + 1) * d, cent.data() + c * d);
                max_shift2 = std::max(max_shift2, shift2);
                continue;
            }
            double shift2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                const double nv =
                    sums[static_cast<size_t>(c * d + j)] / counts[static_cast<size_t>(c)];
                const double diff = nv - cent[static_cast<size_t>(c * d + j)];
                shift2 += diff * diff;
                cent[static_cast<size_t>(c * d + j)] = nv;
            }
            max_shift2 = std::max(max_shift2, shift2);
        }
        if (std::sqrt(max_shift2) < tol) {
            break;
        }
    }

    // Final inertia under the final centroids.
    inertia = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        double best = row_dist2(pts.data() + i * d, cent.data(), d);
        for (int64_t c = 1; c < k; ++c) {
            best = std::min(best, row_dist2(pts.data() + i * d, cent.data() + c * d, d));
        }
        inertia += best;
    }

    Codebook cb;
    cb.centroids = Tensor<float>::zeros({k, d});
    for (int64_t i = 0; i < k * d; ++i) {
        cb.centroids.at(i) = static_cast<float>(cent[static_cast<size_t>(i)]);
    }
    cb.inertia = inertia;
    return cb;
}

std::vector<int64_t> kmeans_assign_frames(const Codebook& cb, const Tensor<float>& frames) {
    require(frames.rank() == 2, ErrorCode::ShapeMismatch, "kmeans_assign: frames must be rank 2");
    const int64_t d = cb.dim();
    require(frames.shape[1] == d, ErrorCode::DimensionMismatch,
            "kmeans_assign: feature dim " + std::to_string(frames.shape[1]) + " vs codebook dim " +
                std::to_string(d));
    const int64_t t = frames.shape[0];
    const int64_t k = cb.k();
    std::vector<int64_t> out(static_cast<size_t>(t));
    for (int64_t i = 0; i < t; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int64_t best_c = 0;
        for (int64_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                const double diff = static_cast<double>(frames.at(i, j)) -
                                    static_cast<double>(cb.centroids.at(c, j));
                acc += diff * diff;
            }
            if (acc < best) {
                best = acc;
                best_c = c;
            }
        }
        out[static_cast<size_t>(i)] = best_c;
    }
    return out;
}

UnitSequence kmeans_assign(const Codebook& cb, const FeatureSequence& f) {
    require(cb.k() <= 65536, ErrorCode::BadConfig, "kmeans_assign: K exceeds u16 label range");
    const std::vector<int64_t> ids = kmeans_assign_frames(cb, f.frames);
    UnitSequence u;
    u.units.resize(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        u.units[i] = static_cast<uint16_t>(ids[i]);
    }
    u.k = cb.k();
    u.frame_rate_hz = f.frame_rate_hz;
    return u;
}

void write_codebook(const std::string& path, const Codebook& cb) {
    BinWriter out(path);
    out.magic("KMC1");
    out.u32(static_cast<uint32_t>(cb.k()));
    out.u32(static_cast<uint32_t>(cb.dim()));
    out.f32_array(cb.centroids.data.data(), cb.centroids.data.size());
    out.close();
}

Codebook read_codebook(const std::string& path) {
    BinReader in(path, ErrorCode::Malformed);
    require(in.magic() == "KMC1", ErrorCode::VersionMismatch, "bad codebook magic: " + path);
    const int64_t k = in.u32();
    const int64_t d = in.u32();
    Codebook cb;
    cb.centroids = Tensor<float>::zeros({k, d});
    in.f32_array(cb.centroids.data.data(), cb.centroids.data.size());
    require(cb.centroids.all_finite(), ErrorCode::NonFinite, "codebook has non-finite centroids");
    return cb;
}

void write_units(const std::string& path, const UnitSequence& u) {
    BinWriter out(path);
    out.magic("UNT1");
    out.u32(static_cast<uint32_t>(u.k));
    out.u32(static_cast<uint32_t>(u.units.size()));
    for (uint16_t id : u.units) {
        out.u16(id);
    }
    out.close();
}

UnitSequence read_units(const std::string& path) {
    BinReader in(path, ErrorCode::Malformed);
    require(in.magic() == "UNT1", ErrorCode::VersionMismatch, "bad label file magic: " + path);
    UnitSequence u;
    u.k = in.u32();
    const size_t t = in.u32();
    u.units.resize(t);
    for (size_t i = 0; i < t; ++i) {
        u.units[i] = in.u16();
        require(u.units[i] < u.k, ErrorCode::Malformed, "label id out of range: " + path);
    }
    u.frame_rate_hz = 50.0;
    return u;
}

}  // namespace hutk
