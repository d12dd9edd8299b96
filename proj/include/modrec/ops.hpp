#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "modrec/tensor.hpp"

// Forward/backward kernels for every op the models need. Convolutions use the
// cross-correlation convention (no kernel flip). All functions are pure:
// callers keep whatever forward state the backward pass needs.

namespace modrec {

inline int conv_out_len(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

inline Shape bias_shape(int c_out) { return Shape{c_out}; }

namespace detail {

template <typename T>
void check_conv_channels(int in_c, int w_c, const Shape& in_shape, const Shape& w_shape) {
    if (in_c != w_c)
        throw ShapeError("conv input channels " + shape_str(in_shape) +
                         " do not match weight C_in " + shape_str(w_shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv1d: input (C_in, L), weights (C_out, C_in, k), bias (C_out)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         int stride, int padding) {
    if (input.ndim() != 2 || weights.ndim() != 3 || bias.ndim() != 1)
        throw ShapeError("conv1d expects input (C_in,L), weights (C_out,C_in,k), bias (C_out); got " +
                         shape_str(input.shape()) + ", " + shape_str(weights.shape()));
    detail::check_conv_channels<T>(input.dim(0), weights.dim(1), input.shape(), weights.shape());
    const int c_in = input.dim(0), len = input.dim(1);
    const int c_out = weights.dim(0), k = weights.dim(2);
    if (bias.dim(0) != c_out)
        throw ShapeError("conv1d bias " + shape_str(bias.shape()) + " does not match C_out " +
                         std::to_string(c_out));
    const int out_len = conv_out_len(len, k, stride, padding);
    if (out_len <= 0)
        throw ShapeError("conv1d output length non-positive for input " + shape_str(input.shape()));

    Tensor<T> out({c_out, out_len});
    if (stride == 1) {
        for (int co = 0; co < c_out; ++co) {
            T* orow = out.data() + out.idx2(co, 0);
            std::fill(orow, orow + out_len, bias[static_cast<std::size_t>(co)]);
            for (int ci = 0; ci < c_in; ++ci) {
                const T* irow = input.data() + input.idx2(ci, 0);
                for (int j = 0; j < k; ++j) {
                    const T w = weights.at(co, ci, j);
                    const int off = j - padding;  // input index = t + off
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(out_len, len - off);
                    const T* in_p = irow + off;
                    for (int t = t0; t < t1; ++t) orow[t] += w * in_p[t];
                }
            }
        }
    } else {
        for (int co = 0; co < c_out; ++co)
            for (int t = 0; t < out_len; ++t) {
                T acc = bias[static_cast<std::size_t>(co)];
                for (int ci = 0; ci < c_in; ++ci)
                    for (int j = 0; j < k; ++j) {
                        const int x = t * stride - padding + j;
                        if (x >= 0 && x < len) acc += weights.at(co, ci, j) * input.at(ci, x);
                    }
                out.at(co, t) = acc;
            }
    }
    return out;
}

template <typename T>
struct Conv1dGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out, int stride, int padding) {
    const int c_in = input.dim(0), len = input.dim(1);
    const int c_out = weights.dim(0), k = weights.dim(2);
    const int out_len = conv_out_len(len, k, stride, padding);
    if (grad_out.ndim() != 2 || grad_out.dim(0) != c_out || grad_out.dim(1) != out_len)
        throw ShapeError("conv1d grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match forward output (" + std::to_string(c_out) + "," +
                         std::to_string(out_len) + ")");

    Conv1dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>(bias_shape(c_out))};
    if (stride == 1) {
        for (int co = 0; co < c_out; ++co) {
            const T* grow = grad_out.data() + grad_out.idx2(co, 0);
            T bsum = T(0);
#pragma omp simd reduction(+ : bsum)
            for (int t = 0; t < out_len; ++t) bsum += grow[t];
            g.bias[static_cast<std::size_t>(co)] = bsum;
            for (int ci = 0; ci < c_in; ++ci) {
                const T* irow = input.data() + input.idx2(ci, 0);
                T* girow = g.input.data() + g.input.idx2(ci, 0);
                for (int j = 0; j < k; ++j) {
                    const int off = j - padding;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(out_len, len - off);
                    T wsum = T(0);
                    const T* in_p = irow + off;
#pragma omp simd reduction(+ : wsum)
                    for (int t = t0; t < t1; ++t) wsum += grow[t] * in_p[t];
                    g.weights.at(co, ci, j) += wsum;
                    const T w = weights.at(co, ci, j);
                    T* gi_p = girow + off;
                    for (int t = t0; t < t1; ++t) gi_p[t] += w * grow[t];
                }
            }
        }
    } else {
        for (int co = 0; co < c_out; ++co)
            for (int t = 0; t < out_len; ++t) {
                const T gv = grad_out.at(co, t);
                g.bias[static_cast<std::size_t>(co)] += gv;
                for (int ci = 0; ci < c_in; ++ci)
                    for (int j = 0; j < k; ++j) {
                        const int x = t * stride - padding + j;
                        if (x >= 0 && x < len) {
                            g.weights.at(co, ci, j) += gv * input.at(ci, x);
                            g.input.at(ci, x) += gv * weights.at(co, ci, j);
                        }
                    }
            }
    }
    return g;
}

// ---------------------------------------------------------------------------
// conv2d: input (C_in, H, W), weights (C_out, C_in, kH, kW), bias (C_out)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                         int stride, int padding) {
    if (input.ndim() != 3 || weights.ndim() != 4 || bias.ndim() != 1)
        throw ShapeError(
            "conv2d expects input (C_in,H,W), weights (C_out,C_in,kH,kW), bias (C_out); got " +
            shape_str(input.shape()) + ", " + shape_str(weights.shape()));
    detail::check_conv_channels<T>(input.dim(0), weights.dim(1), input.shape(), weights.shape());
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    if (bias.dim(0) != c_out)
        throw ShapeError("conv2d bias " + shape_str(bias.shape()) + " does not match C_out " +
                         std::to_string(c_out));
    const int out_h = conv_out_len(h, kh, stride, padding);
    const int out_w = conv_out_len(w, kw, stride, padding);
    if (out_h <= 0 || out_w <= 0)
        throw ShapeError("conv2d output dims non-positive for input " + shape_str(input.shape()));

    Tensor<T> out({c_out, out_h, out_w});
    if (stride == 1) {
        for (int co = 0; co < c_out; ++co) {
            T* oplane = out.data() + out.idx3(co, 0, 0);
            std::fill(oplane, oplane + static_cast<std::size_t>(out_h) * out_w,
                      bias[static_cast<std::size_t>(co)]);
            for (int ci = 0; ci < c_in; ++ci)
                for (int jy = 0; jy < kh; ++jy) {
                    const int yoff = jy - padding;
                    const int y0 = std::max(0, -yoff);
                    const int y1 = std::min(out_h, h - yoff);
                    for (int jx = 0; jx < kw; ++jx) {
                        const T wv = weights.at(co, ci, jy, jx);
                        const int xoff = jx - padding;
                        const int x0 = std::max(0, -xoff);
                        const int x1 = std::min(out_w, w - xoff);
                        for (int y = y0; y < y1; ++y) {
                            T* orow = oplane + static_cast<std::size_t>(y) * out_w;
                            const T* irow =
                                input.data() + input.idx3(ci, y + yoff, 0) + xoff;
                            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                        }
                    }
                }
        }
    } else {
        for (int co = 0; co < c_out; ++co)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x) {
                    T acc = bias[static_cast<std::size_t>(co)];
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int jy = 0; jy < kh; ++jy)
                            for (int jx = 0; jx < kw; ++jx) {
                                const int yy = y * stride - padding + jy;
                                const int xx = x * stride - padding + jx;
                                if (yy >= 0 && yy < h && xx >= 0 && xx < w)
                                    acc += weights.at(co, ci, jy, jx) * input.at(ci, yy, xx);
                            }
                    out.at(co, y, x) = acc;
                }
    }
    return out;
}

template <typename T>
struct Conv2dGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                               const Tensor<T>& grad_out, int stride, int padding) {
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int out_h = conv_out_len(h, kh, stride, padding);
    const int out_w = conv_out_len(w, kw, stride, padding);
    if (grad_out.ndim() != 3 || grad_out.dim(0) != c_out || grad_out.dim(1) != out_h ||
        grad_out.dim(2) != out_w)
        throw ShapeError("conv2d grad_out shape " + shape_str(grad_out.shape()) +
                         " does not match forward output (" + std::to_string(c_out) + "," +
                         std::to_string(out_h) + "," + std::to_string(out_w) + ")");

    Conv2dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>(bias_shape(c_out))};
    if (stride == 1) {
        for (int co = 0; co < c_out; ++co) {
            const T* gplane = grad_out.data() + grad_out.idx3(co, 0, 0);
            T bsum = T(0);
            const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
#pragma omp simd reduction(+ : bsum)
            for (std::size_t i = 0; i < plane; ++i) bsum += gplane[i];
            g.bias[static_cast<std::size_t>(co)] = bsum;
            for (int ci = 0; ci < c_in; ++ci)
                for (int jy = 0; jy < kh; ++jy) {
                    const int yoff = jy - padding;
                    const int y0 = std::max(0, -yoff);
                    const int y1 = std::min(out_h, h - yoff);
                    for (int jx = 0; jx < kw; ++jx) {
                        const int xoff = jx - padding;
                        const int x0 = std::max(0, -xoff);
                        const int x1 = std::min(out_w, w - xoff);
                        const T wv = weights.at(co, ci, jy, jx);
                        T wsum = T(0);
                        for (int y = y0; y < y1; ++y) {
                            const T* grow = gplane + static_cast<std::size_t>(y) * out_w;
                            const T* irow =
                                input.data() + input.idx3(ci, y + yoff, 0) + xoff;
                            T* girow = g.input.data() + g.input.idx3(ci, y + yoff, 0) + xoff;
#pragma omp simd reduction(+ : wsum)
                            for (int x = x0; x < x1; ++x) wsum += grow[x] * irow[x];
#pragma omp simd
                            for (int x = x0; x < x1; ++x) girow[x] += wv * grow[x];
                        }
                        g.weights.at(co, ci, jy, jx) += wsum;
                    }
                }
        }
    } else {
        for (int co = 0; co < c_out; ++co)
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x) {
                    const T gv = grad_out.at(co, y, x);
                    g.bias[static_cast<std::size_t>(co)] += gv;
                    for (int ci = 0; ci < c_in; ++ci)
                        for (int jy = 0; jy < kh; ++jy)
                            for (int jx = 0; jx < kw; ++jx) {
                                const int yy = y * stride - padding + jy;
                                const int xx = x * stride - padding + jx;
                                if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
                                    g.weights.at(co, ci, jy, jx) += gv * input.at(ci, yy, xx);
                                    g.input.at(ci, yy, xx) += gv * weights.at(co, ci, jy, jx);
                                }
                            }
                }
    }
    return g;
}

// ---------------------------------------------------------------------------
// maxpool2d: input (C, H, W), non-overlapping windows (pool_h, pool_w)
// ---------------------------------------------------------------------------

// argmax (flat input indices, row-major first occurrence on ties) is the saved
// state the backward pass routes through.
template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& input, int pool_h, int pool_w,
                            std::vector<std::size_t>* argmax = nullptr) {
    if (input.ndim() != 3)
        throw ShapeError("maxpool2d expects input (C,H,W); got " + shape_str(input.shape()));
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (pool_h <= 0 || pool_w <= 0 || h % pool_h != 0 || w % pool_w != 0)
        throw ShapeError("maxpool2d input " + shape_str(input.shape()) +
                         " not divisible by pool (" + std::to_string(pool_h) + "," +
                         std::to_string(pool_w) + ")");
    const int out_h = h / pool_h, out_w = w / pool_w;
    Tensor<T> out({c, out_h, out_w});
    if (argmax) argmax->assign(out.numel(), 0);

    std::size_t oi = 0;
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x, ++oi) {
                std::size_t best_idx = input.idx3(ci, y * pool_h, x * pool_w);
                T best = input[best_idx];
                for (int py = 0; py < pool_h; ++py)
                    for (int px = 0; px < pool_w; ++px) {
                        const std::size_t ii = input.idx3(ci, y * pool_h + py, x * pool_w + px);
                        if (input[ii] > best) {
                            best = input[ii];
                            best_idx = ii;
                        }
                    }
                out[oi] = best;
                if (argmax) (*argmax)[oi] = best_idx;
            }
    return out;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_out) {
    if (grad_out.numel() != argmax.size())
        throw ShapeError("maxpool2d grad_out " + shape_str(grad_out.shape()) +
                         " does not match saved forward output size " +
                         std::to_string(argmax.size()));
    Tensor<T> g(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_out[i];
    return g;
}

// ---------------------------------------------------------------------------
// avgpool2d: input (C, H, W), non-overlapping windows (pool_h, pool_w)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avgpool2d_forward(const Tensor<T>& input, int pool_h, int pool_w) {
    if (input.ndim() != 3)
        throw ShapeError("avgpool2d expects input (C,H,W); got " + shape_str(input.shape()));
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (pool_h <= 0 || pool_w <= 0 || h % pool_h != 0 || w % pool_w != 0)
        throw ShapeError("avgpool2d input " + shape_str(input.shape()) +
                         " not divisible by pool (" + std::to_string(pool_h) + "," +
                         std::to_string(pool_w) + ")");
    const int out_h = h / pool_h, out_w = w / pool_w;
    const T scale = T(1) / static_cast<T>(pool_h * pool_w);
    Tensor<T> out({c, out_h, out_w});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                T acc = T(0);
                for (int py = 0; py < pool_h; ++py)
                    for (int px = 0; px < pool_w; ++px)
                        acc += input.at(ci, y * pool_h + py, x * pool_w + px);
                out.at(ci, y, x) = acc * scale;
            }
    return out;
}

template <typename T>
Tensor<T> avgpool2d_backward(const Shape& input_shape, int pool_h, int pool_w,
                             const Tensor<T>& grad_out) {
    Tensor<T> g(input_shape);
    const T scale = T(1) / static_cast<T>(pool_h * pool_w);
    for (int ci = 0; ci < input_shape[0]; ++ci)
        for (int y = 0; y < grad_out.dim(1); ++y)
            for (int x = 0; x < grad_out.dim(2); ++x) {
                const T gv = grad_out.at(ci, y, x) * scale;
                for (int py = 0; py < pool_h; ++py)
                    for (int px = 0; px < pool_w; ++px)
                        g.at(ci, y * pool_h + py, x * pool_w + px) = gv;
            }
    return g;
}

// ---------------------------------------------------------------------------
// dense: input (D_in), weights (D_out, D_in), bias (D_out)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
    if (input.ndim() != 1 || weights.ndim() != 2 || bias.ndim() != 1)
        throw ShapeError("dense expects input (D_in), weights (D_out,D_in), bias (D_out); got " +
                         shape_str(input.shape()) + ", " + shape_str(weights.shape()));
    const int d_in = input.dim(0), d_out = weights.dim(0);
    if (weights.dim(1) != d_in || bias.dim(0) != d_out)
        throw ShapeError("dense dimension mismatch: input " + shape_str(input.shape()) +
                         " vs weights " + shape_str(weights.shape()));
    Tensor<T> out({d_out});
    for (int o = 0; o < d_out; ++o) {
        const T* wrow = weights.data() + weights.idx2(o, 0);
        const T* in_p = input.data();
        T acc = bias[static_cast<std::size_t>(o)];
#pragma omp simd reduction(+ : acc)
        for (int i = 0; i < d_in; ++i) acc += wrow[i] * in_p[i];
        out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
}

template <typename T>
struct DenseGrads {
    Tensor<T> input;
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             const Tensor<T>& grad_out) {
    const int d_in = input.dim(0), d_out = weights.dim(0);
    if (grad_out.ndim() != 1 || grad_out.dim(0) != d_out)
        throw ShapeError("dense grad_out " + shape_str(grad_out.shape()) + " does not match D_out " +
                         std::to_string(d_out));
    DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({d_out})};
    for (int o = 0; o < d_out; ++o) {
        const T gv = grad_out[static_cast<std::size_t>(o)];
        g.bias[static_cast<std::size_t>(o)] = gv;
        const T* wrow = weights.data() + weights.idx2(o, 0);
        T* gwrow = g.weights.data() + g.weights.idx2(o, 0);
        for (int i = 0; i < d_in; ++i) {
            gwrow[i] = gv * input[static_cast<std::size_t>(i)];
            g.input[static_cast<std::size_t>(i)] += gv * wrow[i];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

// gradient passes where input > 0; zero at exactly 0
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
    if (!input.same_shape(grad_out))
        throw ShapeError("relu grad_out " + shape_str(grad_out.shape()) + " does not match input " +
                         shape_str(input.shape()));
    Tensor<T> g(input.shape());
    for (std::size_t i = 0; i < input.numel(); ++i) g[i] = input[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

// ---------------------------------------------------------------------------
// softmax cross-entropy: logits (B, K), integer labels in [0, K)
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxXentResult {
    T loss;           // mean over the batch
    Tensor<T> probs;  // (B, K) softmax rows, saved for backward
};

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    if (logits.ndim() != 2)
        throw ShapeError("softmax_cross_entropy expects logits (B,K); got " +
                         shape_str(logits.shape()));
    const int b = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeError("softmax_cross_entropy needs K >= 2, got K=" + std::to_string(k));
    if (static_cast<int>(labels.size()) != b)
        throw ShapeError("softmax_cross_entropy got " + std::to_string(labels.size()) +
                         " labels for batch " + std::to_string(b));

    SoftmaxXentResult<T> res{T(0), Tensor<T>({b, k})};
    T total = T(0);
    for (int r = 0; r < b; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        if (label < 0 || label >= k)
            throw ShapeError("label " + std::to_string(label) + " out of range [0," +
                             std::to_string(k) + ")");
        const T* row = logits.data() + logits.idx2(r, 0);
        T mx = row[0];
        for (int c = 1; c < k; ++c) mx = std::max(mx, row[c]);
        T denom = T(0);
        T* prow = res.probs.data() + res.probs.idx2(r, 0);
        for (int c = 0; c < k; ++c) {
            prow[c] = std::exp(row[c] - mx);
            denom += prow[c];
        }
        for (int c = 0; c < k; ++c) prow[c] /= denom;
        total += std::log(denom) - (row[label] - mx);
    }
    res.loss = total / static_cast<T>(b);
    return res;
}

// per row: (softmax - one_hot) / B
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs, std::span<const int> labels) {
    const int b = probs.dim(0), k = probs.dim(1);
    Tensor<T> g({b, k});
    const T inv_b = T(1) / static_cast<T>(b);
    for (int r = 0; r < b; ++r) {
        const T* prow = probs.data() + probs.idx2(r, 0);
        T* grow = g.data() + g.idx2(r, 0);
        for (int c = 0; c < k; ++c) grow[c] = prow[c] * inv_b;
        grow[labels[static_cast<std::size_t>(r)]] -= inv_b;
    }
    return g;
}

// ---------------------------------------------------------------------------
// SGD: value <- value - lr * grad. Gradients are not zeroed here.
// ---------------------------------------------------------------------------

template <typename T>
void sgd_step(const std::vector<Parameter<T>*>& params, T lr) {
    for (Parameter<T>* p : params) {
        T* v = p->value.data();
        const T* g = p->grad.data();
        const std::size_t n = p->value.numel();
        for (std::size_t i = 0; i < n; ++i) v[i] -= lr * g[i];
    }
}

template <typename T>
void zero_grads(const std::vector<Parameter<T>*>& params) {
    for (Parameter<T>* p : params) p->zero_grad();
}

}  // namespace modrec
