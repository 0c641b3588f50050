#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hutk/common.hpp"
#include "hutk/rng.hpp"
#include "hutk/tensor.hpp"

namespace hutk {

// Reverse-mode tape. Nodes are recorded in execution order; backward() walks
// them once in exact reverse order. A tape is single-owner and not shared
// across threads. Values are checked for NaN/Inf after every op.
template <typename T>
class Tape {
public:
    using Id = int32_t;
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<Mat>;
    using CMatMap = Eigen::Map<const Mat>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }
    int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

    // ---- node access ----

    const std::vector<int64_t>& shape(Id id) const { return node(id).shape; }

    int64_t numel(Id id) const { return Tensor<T>::numel_of(node(id).shape); }

    const T* val(Id id) const {
        const Node& n = node(id);
        return n.extern_data != nullptr ? n.extern_data : n.owned.data();
    }

    Tensor<T> value_tensor(Id id) const {
        const Node& n = node(id);
        const T* p = val(id);
        return Tensor<T>(n.shape, std::vector<T>(p, p + numel(id)));
    }

    T scalar_value(Id id) const {
        require(numel(id) == 1, ErrorCode::ShapeMismatch, "node is not a scalar");
        return val(id)[0];
    }

    // Gradient of a node after backward(); zeros if the node was never reached.
    Tensor<T> grad_tensor(Id id) const {
        const Node& n = node(id);
        if (n.grad.empty()) {
            return Tensor<T>::zeros(n.shape);
        }
        return Tensor<T>(n.shape, n.grad);
    }

    bool requires_grad(Id id) const { return node(id).requires_grad; }

    // ---- leaves ----

    Id leaf(const Tensor<T>& t, bool requires_grad = false) {
        Node n;
        n.shape = t.shape;
        n.owned = t.data;
        n.requires_grad = requires_grad && grad_enabled_;
        return push(std::move(n), "leaf");
    }

    Id leaf_ref(const T* data, std::vector<int64_t> shape, bool requires_grad = false) {
        Node n;
        n.shape = std::move(shape);
        n.extern_data = data;
        n.requires_grad = requires_grad && grad_enabled_;
        return push(std::move(n), "leaf_ref");
    }

    // ---- elementwise / simple ----

    Id add(Id a, Id b) {
        require(shape(a) == shape(b), ErrorCode::ShapeMismatch,
                "add: " + shape_str(shape(a)) + " vs " + shape_str(shape(b)));
        const int64_t n = numel(a);
        Node out = make_like(shape(a), {a, b});
        const T* pa = val(a);
        const T* pb = val(b);
        for (int64_t i = 0; i < n; ++i) {
            out.owned[static_cast<size_t>(i)] = pa[i] + pb[i];
        }
        Id id = push(std::move(out), "add");
        record(id, [this, id, a, b, n] {
            const T* g = grad_ptr(id);
            axpy(a, g, n, T(1));
            axpy(b, g, n, T(1));
        });
        return id;
    }

    Id sub(Id a, Id b) {
        require(shape(a) == shape(b), ErrorCode::ShapeMismatch, "sub: shape mismatch");
        const int64_t n = numel(a);
        Node out = make_like(shape(a), {a, b});
        const T* pa = val(a);
        const T* pb = val(b);
        for (int64_t i = 0; i < n; ++i) {
            out.owned[static_cast<size_t>(i)] = pa[i] - pb[i];
        }
        Id id = push(std::move(out), "sub");
        record(id, [this, id, a, b, n] {
            const T* g = grad_ptr(id);
            axpy(a, g, n, T(1));
            axpy(b, g, n, T(-1));
        });
        return id;
    }

    Id mul(Id a, Id b) {
        require(shape(a) == shape(b), ErrorCode::ShapeMismatch, "mul: shape mismatch");
        const int64_t n = numel(a);
        Node out = make_like(shape(a), {a, b});
        const T* pa = val(a);
        const T* pb = val(b);
        for (int64_t i = 0; i < n; ++i) {
            out.owned[static_cast<size_t>(i)] = pa[i] * pb[i];
        }
        Id id = push(std::move(out), "mul");
        record(id, [this, id, a, b, n] {
            const T* g = grad_ptr(id);
            const T* pa2 = val(a);
            const T* pb2 = val(b);
            if (node(a).requires_grad) {
                T* ga = grad_accum(a);
                for (int64_t i = 0; i < n; ++i) {
                    ga[i] += g[i] * pb2[i];
                }
            }
            if (node(b).requires_grad) {
                T* gb = grad_accum(b);
                for (int64_t i = 0; i < n; ++i) {
                    gb[i] += g[i] * pa2[i];
                }
            }
        });
        return id;
    }

    Id scale(Id a, T c) {
        const int64_t n = numel(a);
        Node out = make_like(shape(a), {a});
        const T* pa = val(a);
        for (int64_t i = 0; i < n; ++i) {
            out.owned[static_cast<size_t>(i)] = pa[i] * c;
        }
        Id id = push(std::move(out), "scale");
        record(id, [this, id, a, c, n] {
            const T* g = grad_ptr(id);
            axpy(a, g, n, c);
        });
        return id;
    }

    // x: TxD plus a broadcast row of length D (bias add).
    Id add_row(Id x, Id row) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "add_row: x must be rank 2");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        require(numel(row) == cols, ErrorCode::ShapeMismatch, "add_row: row length mismatch");
        Node out = make_like(shape(x), {x, row});
        const T* px = val(x);
        const T* pr = val(row);
        for (int64_t i = 0; i < rows; ++i) {
            for (int64_t j = 0; j < cols; ++j) {
                out.owned[static_cast<size_t>(i * cols + j)] = px[i * cols + j] + pr[j];
            }
        }
        Id id = push(std::move(out), "add_row");
        record(id, [this, id, x, row, rows, cols] {
            const T* g = grad_ptr(id);
            axpy(x, g, rows * cols, T(1));
            if (node(row).requires_grad) {
                T* gr = grad_accum(row);
                for (int64_t i = 0; i < rows; ++i) {
                    for (int64_t j = 0; j < cols; ++j) {
                        gr[j] += g[i * cols + j];
                    }
                }
            }
        });
        return id;
    }

    Id sum(Id a) {
        const int64_t n = numel(a);
        Node out = make_like({1}, {a});
        T acc = T(0);
        const T* pa = val(a);
        for (int64_t i = 0; i < n; ++i) {
            acc += pa[i];
        }
        out.owned[0] = acc;
        Id id = push(std::move(out), "sum");
        record(id, [this, id, a, n] {
            const T g = grad_ptr(id)[0];
            if (node(a).requires_grad) {
                T* ga = grad_accum(a);
                for (int64_t i = 0; i < n; ++i) {
                    ga[i] += g;
                }
            }
        });
        return id;
    }

    // ---- linear algebra ----

    Id matmul(Id a, Id b) {
        require(shape(a).size() == 2 && shape(b).size() == 2, ErrorCode::ShapeMismatch,
                "matmul: operands must be rank 2");
        const int64_t m = shape(a)[0];
        const int64_t k = shape(a)[1];
        const int64_t k2 = shape(b)[0];
        const int64_t n = shape(b)[1];
        require(k == k2, ErrorCode::ShapeMismatch,
                "matmul: inner dimensions " + shape_str(shape(a)) + " vs " + shape_str(shape(b)));
        Node out = make_like({m, n}, {a, b});
        {
            CMatMap A(val(a), m, k);
            CMatMap B(val(b), k, n);
            MatMap C(out.owned.data(), m, n);
            C.noalias() = A * B;
        }
        Id id = push(std::move(out), "matmul");
        record(id, [this, id, a, b, m, k, n] {
            CMatMap G(grad_ptr(id), m, n);
            if (node(a).requires_grad) {
                CMatMap B(val(b), k, n);
                MatMap GA(grad_accum(a), m, k);
                GA.noalias() += G * B.transpose();
            }
            if (node(b).requires_grad) {
                CMatMap A(val(a), m, k);
                MatMap GB(grad_accum(b), k, n);
                GB.noalias() += A.transpose() * G;
            }
        });
        return id;
    }

    Id transpose(Id a) {
        require(shape(a).size() == 2, ErrorCode::ShapeMismatch, "transpose: rank 2 only");
        const int64_t m = shape(a)[0];
        const int64_t n = shape(a)[1];
        Node out = make_like({n, m}, {a});
        {
            CMatMap A(val(a), m, n);
            MatMap O(out.owned.data(), n, m);
            O.noalias() = A.transpose();
        }
        Id id = push(std::move(out), "transpose");
        record(id, [this, id, a, m, n] {
            if (node(a).requires_grad) {
                CMatMap G(grad_ptr(id), n, m);
                MatMap GA(grad_accum(a), m, n);
                GA.noalias() += G.transpose();
            }
        });
        return id;
    }

    // Valid (unpadded) 1-D convolution in cross-correlation convention.
    // x: L x C_in (time major), w: (kernel*C_in) x C_out, bias: C_out.
    // Row (tau*C_in + c) of w multiplies channel c at window offset tau.
    Id conv1d(Id x, Id w, Id bias, int64_t kernel, int64_t stride) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "conv1d: x must be rank 2");
        const int64_t L = shape(x)[0];
        const int64_t cin = shape(x)[1];
        require(shape(w).size() == 2 && shape(w)[0] == kernel * cin, ErrorCode::ShapeMismatch,
                "conv1d: weight rows must equal kernel*C_in");
        const int64_t cout = shape(w)[1];
        require(numel(bias) == cout, ErrorCode::ShapeMismatch, "conv1d: bias length mismatch");
        require(L >= kernel, ErrorCode::EmptyOutput,
                "conv1d: input length " + std::to_string(L) + " < kernel " + std::to_string(kernel));
        const int64_t lout = (L - kernel) / stride + 1;

        // im2col: one row per output position, columns ordered (tau, channel).
        Mat cols(lout, kernel * cin);
        const T* px = val(x);
        for (int64_t t = 0; t < lout; ++t) {
            const T* win = px + t * stride * cin;
            std::copy(win, win + kernel * cin, cols.data() + t * kernel * cin);
        }

        Node out = make_like({lout, cout}, {x, w, bias});
        {
            CMatMap W(val(w), kernel * cin, cout);
            MatMap O(out.owned.data(), lout, cout);
            O.noalias() = cols * W;
            O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(val(bias), cout);
        }
        Id id = push(std::move(out), "conv1d");
        const bool need_back = grad_enabled_ && node(id).requires_grad;
        if (need_back) {
            auto saved = std::make_shared<Mat>(std::move(cols));
            record(id, [this, id, x, w, bias, kernel, stride, L, cin, cout, lout, saved] {
                CMatMap G(grad_ptr(id), lout, cout);
                if (node(w).requires_grad) {
                    MatMap GW(grad_accum(w), kernel * cin, cout);
                    GW.noalias() += saved->transpose() * G;
                }
                if (node(bias).requires_grad) {
                    // Accumulate by hand in fixed row order: Eigen's partial
                    // reduction into a mapped destination picks its summation
                    // split from the destination pointer's alignment, which
                    // makes the result depend on where the buffer landed.
                    T* gb = grad_accum(bias);
                    const T* g = grad_ptr(id);
                    for (int64_t t = 0; t < lout; ++t) {
                        for (int64_t c = 0; c < cout; ++c) {
                            gb[c] += g[t * cout + c];
                        }
                    }
                }
                if (node(x).requires_grad) {
                    CMatMap W(val(w), kernel * cin, cout);
                    Mat gcols = G * W.transpose();  // lout x (kernel*cin)
                    T* gx = grad_accum(x);
                    for (int64_t t = 0; t < lout; ++t) {
                        T* dst = gx + t * stride * cin;
                        const T* src = gcols.data() + t * kernel * cin;
                        for (int64_t i = 0; i < kernel * cin; ++i) {
                            dst[i] += src[i];
                        }
                    }
                }
            });
        }
        return id;
    }

    // Per-row layer normalization with variance computed as 1/N.
    Id layer_norm(Id x, Id gamma, Id beta, T eps) {
        const auto& xs = shape(x);
        require(!xs.empty(), ErrorCode::ShapeMismatch, "layer_norm: empty input");
        const int64_t cols = xs.back();
        const int64_t rows = numel(x) / cols;
        require(cols >= 1, ErrorCode::ShapeMismatch, "layer_norm: empty row");
        require(numel(gamma) == cols && numel(beta) == cols, ErrorCode::ShapeMismatch,
                "layer_norm: gamma/beta length mismatch");

        Node out = make_like(xs, {x, gamma, beta});
        std::vector<T> xhat(static_cast<size_t>(rows * cols));
        std::vector<T> inv_std(static_cast<size_t>(rows));
        const T* px = val(x);
        const T* pg = val(gamma);
        const T* pb = val(beta);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = px + r * cols;
            T mean = T(0);
            for (int64_t j = 0; j < cols; ++j) {
                mean += xr[j];
            }
            mean /= static_cast<T>(cols);
            T var = T(0);
            for (int64_t j = 0; j < cols; ++j) {
                const T d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<T>(cols);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[static_cast<size_t>(r)] = is;
            for (int64_t j = 0; j < cols; ++j) {
                const T xh = (xr[j] - mean) * is;
                xhat[static_cast<size_t>(r * cols + j)] = xh;
                out.owned[static_cast<size_t>(r * cols + j)] = xh * pg[j] + pb[j];
            }
        }
        Id id = push(std::move(out), "layer_norm");
        const bool need_back = grad_enabled_ && node(id).requires_grad;
        if (need_back) {
            auto saved_xhat = std::make_shared<std::vector<T>>(std::move(xhat));
            auto saved_is = std::make_shared<std::vector<T>>(std::move(inv_std));
            record(id, [this, id, x, gamma, beta, rows, cols, saved_xhat, saved_is] {
                const T* g = grad_ptr(id);
                const T* pg2 = val(gamma);
                const T* xh = saved_xhat->data();
                T* ggamma = node(gamma).requires_grad ? grad_accum(gamma) : nullptr;
                T* gbeta = node(beta).requires_grad ? grad_accum(beta) : nullptr;
                T* gx = node(x).requires_grad ? grad_accum(x) : nullptr;
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * cols;
                    const T* xhr = xh + r * cols;
                    if (ggamma != nullptr || gbeta != nullptr) {
                        for (int64_t j = 0; j < cols; ++j) {
                            if (ggamma != nullptr) {
                                ggamma[j] += gr[j] * xhr[j];
                            }
                            if (gbeta != nullptr) {
                                gbeta[j] += gr[j];
                            }
                        }
                    }
                    if (gx != nullptr) {
                        T mean_gdy = T(0);
                        T mean_gdy_xh = T(0);
                        for (int64_t j = 0; j < cols; ++j) {
                            const T gdy = gr[j] * pg2[j];
                            mean_gdy += gdy;
                            mean_gdy_xh += gdy * xhr[j];
                        }
                        mean_gdy /= static_cast<T>(cols);
                        mean_gdy_xh /= static_cast<T>(cols);
                        const T is = (*saved_is)[static_cast<size_t>(r)];
                        for (int64_t j = 0; j < cols; ++j) {
                            const T gdy = gr[j] * pg2[j];
                            gx[r * cols + j] += is * (gdy - mean_gdy - xhr[j] * mean_gdy_xh);
                        }
                    }
                }
            });
        }
        return id;
    }

    // Exact Gaussian-CDF GELU: x * Phi(x), erf based.
    Id gelu(Id x) {
        const int64_t n = numel(x);
        Node out = make_like(shape(x), {x});
        const T* px = val(x);
        for (int64_t i = 0; i < n; ++i) {
            out.owned[static_cast<size_t>(i)] = px[i] * gauss_cdf(px[i]);
        }
        Id id = push(std::move(out), "gelu");
        record(id, [this, id, x, n] {
            const T* g = grad_ptr(id);
            if (node(x).requires_grad) {
                const T* px2 = val(x);
                T* gx = grad_accum(x);
                for (int64_t i = 0; i < n; ++i) {
                    const T v = px2[i];
                    gx[i] += g[i] * (gauss_cdf(v) + v * gauss_pdf(v));
                }
            }
        });
        return id;
    }

    Id softmax_rows(Id x) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "softmax_rows: rank 2 only");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        Node out = make_like(shape(x), {x});
        const T* px = val(x);
        for (int64_t r = 0; r < rows; ++r) {
            softmax_row(px + r * cols, out.owned.data() + r * cols, cols);
        }
        Id id = push(std::move(out), "softmax_rows");
        record(id, [this, id, x, rows, cols] {
            if (node(x).requires_grad) {
                const T* g = grad_ptr(id);
                const T* y = val(id);
                T* gx = grad_accum(x);
                for (int64_t r = 0; r < rows; ++r) {
                    const T* yr = y + r * cols;
                    const T* gr = g + r * cols;
                    T dot = T(0);
                    for (int64_t j = 0; j < cols; ++j) {
                        dot += yr[j] * gr[j];
                    }
                    for (int64_t j = 0; j < cols; ++j) {
                        gx[r * cols + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
        });
        return id;
    }

    Id log_softmax_rows(Id x) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "log_softmax_rows: rank 2 only");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        Node out = make_like(shape(x), {x});
        const T* px = val(x);
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = px + r * cols;
            T mx = xr[0];
            for (int64_t j = 1; j < cols; ++j) {
                mx = std::max(mx, xr[j]);
            }
            T acc = T(0);
            for (int64_t j = 0; j < cols; ++j) {
                acc += std::exp(xr[j] - mx);
            }
            const T lse = mx + std::log(acc);
            for (int64_t j = 0; j < cols; ++j) {
                out.owned[static_cast<size_t>(r * cols + j)] = xr[j] - lse;
            }
        }
        Id id = push(std::move(out), "log_softmax_rows");
        record(id, [this, id, x, rows, cols] {
            if (node(x).requires_grad) {
                const T* g = grad_ptr(id);
                const T* y = val(id);
                T* gx = grad_accum(x);
                for (int64_t r = 0; r < rows; ++r) {
                    const T* gr = g + r * cols;
                    const T* yr = y + r * cols;
                    T gsum = T(0);
                    for (int64_t j = 0; j < cols; ++j) {
                        gsum += gr[j];
                    }
                    for (int64_t j = 0; j < cols; ++j) {
                        gx[r * cols + j] += gr[j] - std::exp(yr[j]) * gsum;
                    }
                }
            }
        });
        return id;
    }

    Id slice_rows(Id x, int64_t r0, int64_t r1) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "slice_rows: rank 2 only");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        require(0 <= r0 && r0 <= r1 && r1 <= rows, ErrorCode::ShapeMismatch, "slice_rows: bad range");
        Node out = make_like({r1 - r0, cols}, {x});
        const T* px = val(x);
        std::copy(px + r0 * cols, px + r1 * cols, out.owned.begin());
        Id id = push(std::move(out), "slice_rows");
        record(id, [this, id, x, r0, r1, cols] {
            if (node(x).requires_grad) {
                const T* g = grad_ptr(id);
                T* gx = grad_accum(x);
                for (int64_t i = 0; i < (r1 - r0) * cols; ++i) {
                    gx[r0 * cols + i] += g[i];
                }
            }
        });
        return id;
    }

    Id slice_cols(Id x, int64_t c0, int64_t c1) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "slice_cols: rank 2 only");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        require(0 <= c0 && c0 <= c1 && c1 <= cols, ErrorCode::ShapeMismatch, "slice_cols: bad range");
        const int64_t w = c1 - c0;
        Node out = make_like({rows, w}, {x});
        const T* px = val(x);
        for (int64_t r = 0; r < rows; ++r) {
            std::copy(px + r * cols + c0, px + r * cols + c1, out.owned.begin() + r * w);
        }
        Id id = push(std::move(out), "slice_cols");
        record(id, [this, id, x, c0, w, rows, cols] {
            if (node(x).requires_grad) {
                const T* g = grad_ptr(id);
                T* gx = grad_accum(x);
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < w; ++j) {
                        gx[r * cols + c0 + j] += g[r * w + j];
                    }
                }
            }
        });
        return id;
    }

    Id concat_cols(const std::vector<Id>& xs) {
        require(!xs.empty(), ErrorCode::ShapeMismatch, "concat_cols: no inputs");
        const int64_t rows = shape(xs[0])[0];
        int64_t total = 0;
        for (Id x : xs) {
            require(shape(x).size() == 2 && shape(x)[0] == rows, ErrorCode::ShapeMismatch,
                    "concat_cols: row mismatch");
            total += shape(x)[1];
        }
        Node out = make_like({rows, total}, xs);
        int64_t off = 0;
        std::vector<int64_t> offsets;
        for (Id x : xs) {
            const int64_t w = shape(x)[1];
            const T* px = val(x);
            for (int64_t r = 0; r < rows; ++r) {
                std::copy(px + r * w, px + (r + 1) * w, out.owned.begin() + r * total + off);
            }
            offsets.push_back(off);
            off += w;
        }
        Id id = push(std::move(out), "concat_cols");
        record(id, [this, id, xs, offsets, rows, total] {
            const T* g = grad_ptr(id);
            for (size_t i = 0; i < xs.size(); ++i) {
                if (!node(xs[i]).requires_grad) {
                    continue;
                }
                const int64_t w = shape(xs[i])[1];
                const int64_t off2 = offsets[i];
                T* gx = grad_accum(xs[i]);
                for (int64_t r = 0; r < rows; ++r) {
                    for (int64_t j = 0; j < w; ++j) {
                        gx[r * w + j] += g[r * total + off2 + j];
                    }
                }
            }
        });
        return id;
    }

    // Replace the given rows of x by a broadcast learned row (mask embedding).
    Id replace_rows(Id x, Id row, const std::vector<int64_t>& rows_idx) {
        require(shape(x).size() == 2, ErrorCode::ShapeMismatch, "replace_rows: rank 2 only");
        const int64_t rows = shape(x)[0];
        const int64_t cols = shape(x)[1];
        require(numel(row) == cols, ErrorCode::ShapeMismatch, "replace_rows: row length mismatch");
        for (int64_t r : rows_idx) {
            require(0 <= r && r < rows, ErrorCode::ShapeMismatch, "replace_rows: row out of range");
        }
        Node out = make_like(shape(x), {x, row});
        const T* px = val(x);
        const T* pr = val(row);
        std::copy(px, px + rows * cols, out.owned.begin());
        for (int64_t r : rows_idx) {
            std::copy(pr, pr + cols, out.owned.begin() + r * cols);
        }
        Id id = push(std::move(out), "replace_rows");
        auto idx = std::make_shared<std::vector<int64_t>>(rows_idx);
        record(id, [this, id, x, row, idx, rows, cols] {
            const T* g = grad_ptr(id);
            std::vector<bool> replaced(static_cast<size_t>(rows), false);
            for (int64_t r : *idx) {
                replaced[static_cast<size_t>(r)] = true;
            }
            if (node(x).requires_grad) {
                T* gx = grad_accum(x);
                for (int64_t r = 0; r < rows; ++r) {
                    if (replaced[static_cast<size_t>(r)]) {
                        continue;
                    }
                    for (int64_t j = 0; j < cols; ++j) {
                        gx[r * cols + j] += g[r * cols + j];
                    }
                }
            }
            if (node(row).requires_grad) {
                T* gr = grad_accum(row);
                for (int64_t r : *idx) {
                    for (int64_t j = 0; j < cols; ++j) {
                        gr[j] += g[r * cols + j];
                    }
                }
            }
        });
        return id;
    }

    // -log softmax(logits)[target] with max subtraction. logits: length-K
    // vector (rank 1 or 1xK).
    Id cross_entropy(Id logits, int64_t target) {
        const int64_t k = numel(logits);
        require(0 <= target && target < k, ErrorCode::TargetOutOfRange,
                "cross_entropy: target " + std::to_string(target) + " not in [0," +
                    std::to_string(k) + ")");
        return softmax_xent_rows_impl(logits, {static_cast<int>(target)}, {0}, 1, k);
    }

    // Mean cross entropy over the selected rows of a TxK logit matrix.
    // labels[t] is consulted only for selected rows.
    Id softmax_xent_rows(Id logits, const std::vector<int>& labels,
                         const std::vector<int64_t>& rows_idx) {
        require(shape(logits).size() == 2, ErrorCode::ShapeMismatch,
                "softmax_xent_rows: rank 2 only");
        const int64_t t = shape(logits)[0];
        const int64_t k = shape(logits)[1];
        require(static_cast<int64_t>(labels.size()) == t, ErrorCode::ShapeMismatch,
                "softmax_xent_rows: labels length mismatch");
        require(!rows_idx.empty(), ErrorCode::EmptyMaskSet, "softmax_xent_rows: no rows selected");
        for (int64_t r : rows_idx) {
            require(0 <= r && r < t, ErrorCode::ShapeMismatch, "softmax_xent_rows: row out of range");
            require(0 <= labels[static_cast<size_t>(r)] && labels[static_cast<size_t>(r)] < k,
                    ErrorCode::TargetOutOfRange, "softmax_xent_rows: label out of range");
        }
        return softmax_xent_rows_impl(logits, labels, rows_idx, t, k);
    }

    // ---- backward ----

    void backward(Id root) {
        require(numel(root) == 1, ErrorCode::ShapeMismatch, "backward: root must be a scalar");
        backward_from(root, {T(1)});
    }

    // Seed the given node with an upstream gradient and run the reverse sweep
    // from it. Used when an external (non-tape) function consumes the node's
    // value and supplies d(loss)/d(value).
    void backward_from(Id from, const std::vector<T>& seed) {
        require(static_cast<int64_t>(seed.size()) == numel(from), ErrorCode::ShapeMismatch,
                "backward_from: seed size mismatch");
        T* g = grad_accum(from);
        for (size_t i = 0; i < seed.size(); ++i) {
            g[i] += seed[i];
        }
        for (Id i = from; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.backprop && !n.grad.empty()) {
                n.backprop();
            }
        }
    }

private:
    struct Node {
        std::vector<int64_t> shape;
        std::vector<T> owned;
        const T* extern_data = nullptr;
        std::vector<T> grad;
        std::function<void()> backprop;
        bool requires_grad = false;
    };

    bool grad_enabled_;
    std::vector<Node> nodes_;

    const Node& node(Id id) const { return nodes_[static_cast<size_t>(id)]; }
    Node& node(Id id) { return nodes_[static_cast<size_t>(id)]; }

    Node make_like(const std::vector<int64_t>& shape, const std::vector<Id>& inputs) {
        Node n;
        n.shape = shape;
        n.owned.resize(static_cast<size_t>(Tensor<T>::numel_of(shape)));
        for (Id in : inputs) {
            if (node(in).requires_grad) {
                n.requires_grad = true;
            }
        }
        n.requires_grad = n.requires_grad && grad_enabled_;
        return n;
    }

    Id push(Node&& n, const char* opname) {
        const T* p = n.extern_data != nullptr ? n.extern_data : n.owned.data();
        const int64_t count = Tensor<T>::numel_of(n.shape);
        for (int64_t i = 0; i < count; ++i) {
            if (!std::isfinite(static_cast<double>(p[i]))) {
                raise(ErrorCode::NonFinite, std::string("non-finite value produced by ") + opname);
            }
        }
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    void record(Id id, std::function<void()> fn) {
        if (grad_enabled_ && node(id).requires_grad) {
            node(id).backprop = std::move(fn);
        }
    }

    T* grad_accum(Id id) {
        Node& n = node(id);
        if (n.grad.empty()) {
            n.grad.assign(static_cast<size_t>(Tensor<T>::numel_of(n.shape)), T(0));
        }
        return n.grad.data();
    }

    // Gradient of a node inside a backward closure; the node is known touched.
    const T* grad_ptr(Id id) { return node(id).grad.data(); }

    void axpy(Id dst, const T* g, int64_t n, T c) {
        if (!node(dst).requires_grad) {
            return;
        }
        T* gd = grad_accum(dst);
        for (int64_t i = 0; i < n; ++i) {
            gd[i] += c * g[i];
        }
    }

    static T gauss_cdf(T x) {
        return T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
    }

    static T gauss_pdf(T x) {
        return std::exp(T(-0.5) * x * x) * T(0.3989422804014326779);
    }

    static void softmax_row(const T* x, T* y, int64_t n) {
        T mx = x[0];
        for (int64_t j = 1; j < n; ++j) {
            mx = std::max(mx, x[j]);
        }
        T acc = T(0);
        for (int64_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            acc += y[j];
        }
        for (int64_t j = 0; j < n; ++j) {
            y[j] /= acc;
        }
    }

    Id softmax_xent_rows_impl(Id logits, std::vector<int> labels, std::vector<int64_t> rows_idx,
                              int64_t t, int64_t k) {
        (void)t;
        Node out = make_like({1}, {logits});
        const T* pl = val(logits);
        std::vector<T> probs(rows_idx.size() * static_cast<size_t>(k));
        T acc = T(0);
        for (size_t i = 0; i < rows_idx.size(); ++i) {
            const int64_t r = rows_idx[i];
            T* pr = probs.data() + i * static_cast<size_t>(k);
            softmax_row(pl + r * k, pr, k);
            acc -= std::log(std::max(pr[labels[static_cast<size_t>(r)]],
                                     std::numeric_limits<T>::min()));
        }
        out.owned[0] = acc / static_cast<T>(rows_idx.size());
        Id id = push(std::move(out), "softmax_xent");
        const bool need_back = grad_enabled_ && node(id).requires_grad;
        if (need_back) {
            auto saved = std::make_shared<std::vector<T>>(std::move(probs));
            auto rows_s = std::make_shared<std::vector<int64_t>>(std::move(rows_idx));
            auto labels_s = std::make_shared<std::vector<int>>(std::move(labels));
            record(id, [this, id, logits, saved, rows_s, labels_s, k] {
                const T g = grad_ptr(id)[0] / static_cast<T>(rows_s->size());
                if (node(logits).requires_grad) {
                    T* gl = grad_accum(logits);
                    for (size_t i = 0; i < rows_s->size(); ++i) {
                        const int64_t r = (*rows_s)[i];
                        const T* pr = saved->data() + i * static_cast<size_t>(k);
                        const int lab = (*labels_s)[static_cast<size_t>(r)];
                        for (int64_t j = 0; j < k; ++j) {
                            T d = pr[j];
                            if (j == lab) {
                                d -= T(1);
                            }
                            gl[r * k + j] += g * d;
                        }
                    }
                }
            });
        }
        return id;
    }
};

// Central finite differences against an analytic gradient. Relative error per
// coordinate is |g - ghat| / max(1, |g|, |ghat|); the max over checked
// coordinates is returned. For large tensors a deterministic random subset of
// max_coords coordinates is checked.
inline double finite_diff_check(const std::function<double(const Tensor<double>&)>& f,
                                const Tensor<double>& x, const std::vector<double>& analytic_grad,
                                double h = 1e-5, int64_t max_coords = -1,
                                uint64_t sample_seed = 1234) {
    require(static_cast<int64_t>(analytic_grad.size()) == x.numel(), ErrorCode::ShapeMismatch,
            "finite_diff_check: gradient length mismatch");
    std::vector<int64_t> coords;
    const int64_t n = x.numel();
    if (max_coords < 0 || n <= max_coords) {
        coords.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            coords[static_cast<size_t>(i)] = i;
        }
    } else {
        Rng rng(sample_seed);
        std::vector<int64_t> all(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            all[static_cast<size_t>(i)] = i;
        }
        rng.shuffle(all);
        coords.assign(all.begin(), all.begin() + static_cast<size_t>(max_coords));
    }
    double max_rel = 0.0;
    Tensor<double> probe = x;
    for (int64_t c : coords) {
        const double orig = probe.at(c);
        probe.at(c) = orig + h;
        const double fp = f(probe);
        probe.at(c) = orig - h;
        const double fm = f(probe);
        probe.at(c) = orig;
        const double ghat = (fp - fm) / (2.0 * h);
        const double g = analytic_grad[static_cast<size_t>(c)];
        const double rel = std::abs(g - ghat) / std::max({1.0, std::abs(g), std::abs(ghat)});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace hutk
