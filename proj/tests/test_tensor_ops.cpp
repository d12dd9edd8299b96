#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "modrec/gradcheck.hpp"
#include "modrec/ops.hpp"
#include "modrec/rng.hpp"

using namespace modrec;

// ---------------------------------------------------------------------------
// Independent oracles. These stay naive on purpose: per-output-element gather
// loops, nothing shared with the library kernels.
// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b, int stride,
                       int pad) {
    const int c_in = in.dim(0), h = in.dim(1), wd = in.dim(2);
    const int c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor<T> out({c_out, oh, ow});
    for (int co = 0; co < c_out; ++co)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                T acc = b[(std::size_t)co];
                for (int ci = 0; ci < c_in; ++ci)
                    for (int jy = 0; jy < kh; ++jy)
                        for (int jx = 0; jx < kw; ++jx) {
                            const int yy = y * stride - pad + jy;
                            const int xx = x * stride - pad + jx;
                            if (yy >= 0 && yy < h && xx >= 0 && xx < wd)
                                acc += w.at(co, ci, jy, jx) * in.at(ci, yy, xx);
                        }
                out.at(co, y, x) = acc;
            }
    return out;
}

template <typename T>
Tensor<T> conv1d_naive(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b, int stride,
                       int pad) {
    const int c_in = in.dim(0), len = in.dim(1);
    const int c_out = w.dim(0), k = w.dim(2);
    const int ol = (len + 2 * pad - k) / stride + 1;
    Tensor<T> out({c_out, ol});
    for (int co = 0; co < c_out; ++co)
        for (int t = 0; t < ol; ++t) {
            T acc = b[(std::size_t)co];
            for (int ci = 0; ci < c_in; ++ci)
                for (int j = 0; j < k; ++j) {
                    const int x = t * stride - pad + j;
                    if (x >= 0 && x < len) acc += w.at(co, ci, j) * in.at(ci, x);
                }
            out.at(co, t) = acc;
        }
    return out;
}

template <typename T>
Tensor<T> maxpool2d_naive(const Tensor<T>& in, int ph, int pw) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    Tensor<T> out({c, h / ph, w / pw});
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h / ph; ++y)
            for (int x = 0; x < w / pw; ++x) {
                T best = in.at(ci, y * ph, x * pw);
                for (int py = 0; py < ph; ++py)
                    for (int px = 0; px < pw; ++px)
                        best = std::max(best, in.at(ci, y * ph + py, x * pw + px));
                out.at(ci, y, x) = best;
            }
    return out;
}

template <typename T>
Tensor<T> random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

// random values bounded away from zero, for kink-free relu checks
Tensor<double> random_offzero(const Shape& shape, Rng& rng, double min_abs = 0.1) {
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        const double mag = rng.uniform(min_abs, 1.0);
        t[i] = rng.coin() ? mag : -mag;
    }
    return t;
}

double weighted_sum(const Tensor<double>& t, const Tensor<double>& r) {
    double acc = 0;
    for (std::size_t i = 0; i < t.numel(); ++i) acc += t[i] * r[i];
    return acc;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        worst = std::max(worst, std::abs(double(a[i]) - double(b[i])));
    return worst;
}

void append_elems(Tensor<double>& value, const Tensor<double>& analytic,
                  std::vector<double*>& elems, std::vector<double>& grads) {
    for (std::size_t i = 0; i < value.numel(); ++i) {
        elems.push_back(&value[i]);
        grads.push_back(analytic[i]);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

TEST_CASE("conv2d forward shape matches the 256-filter transform geometry") {
    Rng rng(7);
    auto in = random_tensor<float>({1, 2, 1024}, rng);
    auto w = random_tensor<float>({256, 1, 3, 3}, rng);
    Tensor<float> b({256});
    auto out = conv2d_forward(in, w, b, 1, 1);
    CHECK(out.shape() == Shape{256, 2, 1024});
}

TEST_CASE("conv2d identity kernel passes the value through") {
    Tensor<float> in({1, 1, 1}, {5.0f});
    Tensor<float> w({1, 1, 3, 3});
    w.at(0, 0, 1, 1) = 1.0f;
    Tensor<float> b({1});
    auto out = conv2d_forward(in, w, b, 1, 1);
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out[0] == doctest::Approx(5.0f));
}

TEST_CASE("conv2d forward matches the naive loop oracle") {
    Rng rng(11);
    auto in = random_tensor<float>({2, 4, 5}, rng);
    auto w = random_tensor<float>({3, 2, 3, 3}, rng);
    auto b = random_tensor<float>({3}, rng);
    auto fast = conv2d_forward(in, w, b, 1, 1);
    auto naive = conv2d_naive(in, w, b, 1, 1);
    CHECK(max_abs_diff(fast, naive) < 1e-6);
}

TEST_CASE("conv2d forward matches naive oracle over random small shapes") {
    Rng rng(23);
    for (int rep = 0; rep < 60; ++rep) {
        const int c_in = 1 + (int)rng.uniform_int(3);
        const int c_out = 1 + (int)rng.uniform_int(3);
        const int k = 1 + 2 * (int)rng.uniform_int(2);  // 1 or 3
        const int h = k + (int)rng.uniform_int(6);
        const int w = k + (int)rng.uniform_int(6);
        const int stride = 1 + (int)rng.uniform_int(2);
        const int pad = (int)rng.uniform_int(2);
        auto in = random_tensor<float>({c_in, h, w}, rng);
        auto wt = random_tensor<float>({c_out, c_in, k, k}, rng);
        auto b = random_tensor<float>({c_out}, rng);
        if ((h + 2 * pad - k) / stride + 1 <= 0 || (w + 2 * pad - k) / stride + 1 <= 0) continue;
        CHECK(max_abs_diff(conv2d_forward(in, wt, b, stride, pad),
                           conv2d_naive(in, wt, b, stride, pad)) < 1e-6);
    }
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
    Rng rng(3);
    auto in = random_tensor<float>({2, 4, 4}, rng);
    auto w = random_tensor<float>({3, 5, 3, 3}, rng);
    Tensor<float> b({3});
    CHECK_THROWS_WITH_AS(conv2d_forward(in, w, b, 1, 1),
                         doctest::Contains("(2,4,4)"), ShapeError);
    CHECK_THROWS_WITH_AS(conv2d_forward(in, w, b, 1, 1),
                         doctest::Contains("(3,5,3,3)"), ShapeError);
}

TEST_CASE("conv2d backward: zero upstream gradient gives zero gradients") {
    Rng rng(5);
    auto in = random_tensor<float>({2, 4, 4}, rng);
    auto w = random_tensor<float>({3, 2, 3, 3}, rng);
    Tensor<float> gout({3, 4, 4});
    auto g = conv2d_backward(in, w, gout, 1, 1);
    for (std::size_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 0.0f);
    for (std::size_t i = 0; i < g.weights.numel(); ++i) CHECK(g.weights[i] == 0.0f);
    for (std::size_t i = 0; i < g.bias.numel(); ++i) CHECK(g.bias[i] == 0.0f);
}

TEST_CASE("conv2d backward matches central finite differences") {
    Rng rng(13);
    auto in = random_tensor<double>({2, 3, 3}, rng);
    auto w = random_tensor<double>({2, 2, 3, 3}, rng);
    auto b = random_tensor<double>({2}, rng);
    auto r = random_tensor<double>({2, 3, 3}, rng);  // reduction weights

    auto g = conv2d_backward(in, w, r, 1, 1);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(in, g.input, elems, analytic);
    append_elems(w, g.weights, elems, analytic);
    append_elems(b, g.bias, elems, analytic);
    auto loss = [&]() { return weighted_sum(conv2d_forward(in, w, b, 1, 1), r); };
    CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
}

TEST_CASE("conv2d backward, constant input single filter, matches finite differences") {
    Rng rng(17);
    auto in = Tensor<double>::full({1, 4, 4}, 0.7);
    auto w = random_tensor<double>({1, 1, 3, 3}, rng);
    Tensor<double> b({1});
    auto r = random_tensor<double>({1, 4, 4}, rng);
    auto g = conv2d_backward(in, w, r, 1, 1);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(w, g.weights, elems, analytic);
    auto loss = [&]() { return weighted_sum(conv2d_forward(in, w, b, 1, 1), r); };
    CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
    // with constant input c, every weight gradient is c * sum of upstream
    // grads over the positions where that tap is inside the image
    double interior_sum = 0;
    for (std::size_t i = 0; i < r.numel(); ++i) interior_sum += r[i];
    CHECK(g.weights.at(0, 0, 1, 1) == doctest::Approx(0.7 * interior_sum));
}

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

TEST_CASE("conv1d keeps length with k=3 stride=1 padding=1") {
    Rng rng(19);
    auto in = random_tensor<float>({2, 128}, rng);
    auto w = random_tensor<float>({4, 2, 3}, rng);
    Tensor<float> b({4});
    CHECK(conv1d_forward(in, w, b, 1, 1).shape() == Shape{4, 128});
}

TEST_CASE("conv1d impulse response reproduces the kernel taps") {
    Tensor<float> in({1, 9});
    in.at(0, 4) = 1.0f;
    Tensor<float> w({1, 1, 3}, {0.25f, -0.5f, 1.25f});
    Tensor<float> b({1});
    auto out = conv1d_forward(in, w, b, 1, 1);
    // cross-correlation: out[t] = sum_j w[j] * in[t-1+j]
    CHECK(out.at(0, 3) == doctest::Approx(1.25f));
    CHECK(out.at(0, 4) == doctest::Approx(-0.5f));
    CHECK(out.at(0, 5) == doctest::Approx(0.25f));
}

TEST_CASE("conv1d forward matches naive oracle over random shapes") {
    Rng rng(29);
    for (int rep = 0; rep < 60; ++rep) {
        const int c_in = 1 + (int)rng.uniform_int(3);
        const int c_out = 1 + (int)rng.uniform_int(3);
        const int k = 1 + (int)rng.uniform_int(4);
        const int len = k + (int)rng.uniform_int(8);
        const int stride = 1 + (int)rng.uniform_int(2);
        const int pad = (int)rng.uniform_int(3);
        if ((len + 2 * pad - k) / stride + 1 <= 0) continue;
        auto in = random_tensor<float>({c_in, len}, rng);
        auto wt = random_tensor<float>({c_out, c_in, k}, rng);
        auto b = random_tensor<float>({c_out}, rng);
        CHECK(max_abs_diff(conv1d_forward(in, wt, b, stride, pad),
                           conv1d_naive(in, wt, b, stride, pad)) < 1e-6);
    }
}

TEST_CASE("conv1d backward matches central finite differences") {
    Rng rng(31);
    for (int rep = 0; rep < 5; ++rep) {
        auto in = random_tensor<double>({2, 7}, rng);
        auto w = random_tensor<double>({3, 2, 3}, rng);
        auto b = random_tensor<double>({3}, rng);
        auto r = random_tensor<double>({3, 7}, rng);
        auto g = conv1d_backward(in, w, r, 1, 1);
        std::vector<double*> elems;
        std::vector<double> analytic;
        append_elems(in, g.input, elems, analytic);
        append_elems(w, g.weights, elems, analytic);
        append_elems(b, g.bias, elems, analytic);
        auto loss = [&]() { return weighted_sum(conv1d_forward(in, w, b, 1, 1), r); };
        CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
    }
}

// ---------------------------------------------------------------------------
// maxpool2d
// ---------------------------------------------------------------------------

TEST_CASE("maxpool2d (1,4) maps (2,256,1024) to (2,256,256)") {
    Rng rng(37);
    auto in = random_tensor<float>({2, 256, 1024}, rng);
    CHECK(maxpool2d_forward(in, 1, 4).shape() == Shape{2, 256, 256});
}

TEST_CASE("maxpool2d of a constant tensor is the constant") {
    auto in = Tensor<float>::full({2, 4, 8}, 3.25f);
    auto out = maxpool2d_forward(in, 2, 4);
    CHECK(out.shape() == Shape{2, 2, 2});
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 3.25f);
}

TEST_CASE("maxpool2d rejects non-divisible dims") {
    Tensor<float> in({1, 3, 5});
    CHECK_THROWS_AS(maxpool2d_forward(in, 2, 1), ShapeError);
    CHECK_THROWS_AS(maxpool2d_forward(in, 1, 4), ShapeError);
}

TEST_CASE("maxpool2d matches naive oracle and backward matches finite differences") {
    Rng rng(41);
    for (int rep = 0; rep < 20; ++rep) {
        auto in = random_tensor<double>({1, 2, 8}, rng);
        CHECK(max_abs_diff(maxpool2d_forward(in, 1, 4), maxpool2d_naive(in, 1, 4)) == 0.0);

        std::vector<std::size_t> argmax;
        auto out = maxpool2d_forward(in, 1, 4, &argmax);
        auto r = random_tensor<double>({1, 2, 2}, rng);
        auto gin = maxpool2d_backward<double>(in.shape(), argmax, r);
        std::vector<double*> elems;
        std::vector<double> analytic;
        append_elems(in, gin, elems, analytic);
        auto loss = [&]() { return weighted_sum(maxpool2d_forward(in, 1, 4), r); };
        // skip draws whose in-window runner-up gap is inside the fd window
        double min_gap = 1e9;
        for (int c = 0; c < 2; ++c)
            for (int x = 0; x < 2; ++x) {
                std::vector<double> vals;
                for (int p = 0; p < 4; ++p) vals.push_back(in.at(0, c, x * 4 + p));
                std::sort(vals.begin(), vals.end());
                min_gap = std::min(min_gap, vals[3] - vals[2]);
            }
        if (min_gap < 5e-3) continue;
        CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
    }
}

TEST_CASE("maxpool2d backward routes ties to the first occurrence") {
    Tensor<float> in({1, 1, 4}, {2.0f, 2.0f, 1.0f, 2.0f});
    std::vector<std::size_t> argmax;
    maxpool2d_forward(in, 1, 4, &argmax);
    Tensor<float> gout({1, 1, 1}, {1.0f});
    auto gin = maxpool2d_backward<float>(in.shape(), argmax, gout);
    CHECK(gin[0] == 1.0f);
    CHECK(gin[1] == 0.0f);
    CHECK(gin[3] == 0.0f);
}

// ---------------------------------------------------------------------------
// dense + relu
// ---------------------------------------------------------------------------

TEST_CASE("dense with identity weights and zero bias is the identity") {
    Tensor<float> in({3}, {1.5f, -2.0f, 0.25f});
    Tensor<float> w({3, 3});
    for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0f;
    Tensor<float> b({3});
    auto out = dense_forward(in, w, b);
    for (int i = 0; i < 3; ++i) CHECK(out[(std::size_t)i] == in[(std::size_t)i]);
}

TEST_CASE("relu clamps negatives and zero") {
    Tensor<float> in({3}, {-1.0f, 0.0f, 2.0f});
    auto out = relu_forward(in);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 0.0f);
    CHECK(out[2] == 2.0f);
}

TEST_CASE("relu backward gates on input sign, zero at exactly zero") {
    Tensor<float> in({3}, {-1.0f, 0.0f, 2.0f});
    Tensor<float> g({3}, {5.0f, 5.0f, 5.0f});
    auto gin = relu_backward(in, g);
    CHECK(gin[0] == 0.0f);
    CHECK(gin[1] == 0.0f);
    CHECK(gin[2] == 5.0f);
}

TEST_CASE("dense backward matches central finite differences") {
    Rng rng(43);
    auto in = random_tensor<double>({5}, rng);
    auto w = random_tensor<double>({3, 5}, rng);
    auto b = random_tensor<double>({3}, rng);
    auto r = random_tensor<double>({3}, rng);
    auto g = dense_backward(in, w, r);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(in, g.input, elems, analytic);
    append_elems(w, g.weights, elems, analytic);
    append_elems(b, g.bias, elems, analytic);
    auto loss = [&]() { return weighted_sum(dense_forward(in, w, b), r); };
    CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
}

TEST_CASE("dense rejects dimension mismatch") {
    Tensor<float> in({4});
    Tensor<float> w({3, 5});
    Tensor<float> b({3});
    CHECK_THROWS_AS(dense_forward(in, w, b), ShapeError);
}

// ---------------------------------------------------------------------------
// softmax cross-entropy
// ---------------------------------------------------------------------------

TEST_CASE("softmax cross-entropy of uniform logits is ln K") {
    Tensor<float> logits({2, 8});
    std::vector<int> labels{3, 0};
    auto res = softmax_cross_entropy<float>(logits, labels);
    CHECK(res.loss == doctest::Approx(std::log(8.0)).epsilon(1e-6));
}

TEST_CASE("softmax cross-entropy saturated correct prediction has near-zero loss") {
    Tensor<double> logits({1, 4});
    logits.at(0, 2) = 1000.0;
    std::vector<int> labels{2};
    auto res = softmax_cross_entropy<double>(logits, labels);
    CHECK(res.loss >= 0.0);
    CHECK(res.loss < 1e-6);
}

TEST_CASE("softmax cross-entropy rejects out-of-range labels") {
    Tensor<float> logits({1, 4});
    std::vector<int> bad{4};
    CHECK_THROWS_AS(softmax_cross_entropy<float>(logits, bad), ShapeError);
    std::vector<int> neg{-1};
    CHECK_THROWS_AS(softmax_cross_entropy<float>(logits, neg), ShapeError);
}

TEST_CASE("softmax rows sum to one and loss is non-negative") {
    Rng rng(47);
    for (int rep = 0; rep < 50; ++rep) {
        const int b = 1 + (int)rng.uniform_int(6);
        const int k = 2 + (int)rng.uniform_int(10);
        auto logits = random_tensor<double>({b, k}, rng, -30.0, 30.0);
        std::vector<int> labels;
        for (int i = 0; i < b; ++i) labels.push_back((int)rng.uniform_int((std::uint32_t)k));
        auto res = softmax_cross_entropy<double>(logits, labels);
        CHECK(res.loss >= 0.0);
        for (int r = 0; r < b; ++r) {
            double s = 0;
            for (int c = 0; c < k; ++c) s += res.probs.at(r, c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Rng rng(53);
    auto logits = random_tensor<double>({4, 11}, rng, -2.0, 2.0);
    std::vector<int> labels{1, 10, 0, 7};
    auto res = softmax_cross_entropy<double>(logits, labels);
    auto grad = softmax_cross_entropy_backward(res.probs, labels);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(logits, grad, elems, analytic);
    auto loss = [&]() { return (double)softmax_cross_entropy<double>(logits, labels).loss; };
    CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-4);
}

// ---------------------------------------------------------------------------
// sgd
// ---------------------------------------------------------------------------

TEST_CASE("sgd step applies value -= lr * grad and keeps the gradient") {
    Parameter<float> p("p", Tensor<float>({1}, {1.0f}));
    p.grad[0] = 0.5f;
    std::vector<Parameter<float>*> params{&p};
    sgd_step(params, 0.1f);
    CHECK(p.value[0] == doctest::Approx(0.95f));
    CHECK(p.grad[0] == 0.5f);  // not auto-zeroed
    p.zero_grad();
    sgd_step(params, 0.1f);
    CHECK(p.value[0] == doctest::Approx(0.95f));  // zero grad leaves value unchanged
}

TEST_CASE("sgd on the 1-d quadratic x^2 contracts by (1-2*lr) per step") {
    Parameter<double> p("x", Tensor<double>({1}, {1.0}));
    std::vector<Parameter<double>*> params{&p};
    for (int step = 0; step < 2; ++step) {
        p.zero_grad();
        p.grad[0] = 2.0 * p.value[0];
        sgd_step(params, 0.1);
    }
    CHECK(p.value[0] == doctest::Approx(0.64).epsilon(1e-12));
}

TEST_CASE("sgd strictly decreases a convex quadratic below the stability bound") {
    Rng rng(59);
    Parameter<double> p("x", Tensor<double>({8}));
    std::vector<double> a(8);
    for (int i = 0; i < 8; ++i) {
        a[(std::size_t)i] = rng.uniform(0.5, 2.0);
        p.value[(std::size_t)i] = rng.uniform(-2.0, 2.0);
    }
    std::vector<Parameter<double>*> params{&p};
    auto loss = [&]() {
        double l = 0;
        for (int i = 0; i < 8; ++i) l += a[(std::size_t)i] * p.value[(std::size_t)i] * p.value[(std::size_t)i];
        return l;
    };
    double prev = loss();
    for (int step = 0; step < 20; ++step) {
        p.zero_grad();
        for (int i = 0; i < 8; ++i) p.grad[(std::size_t)i] = 2.0 * a[(std::size_t)i] * p.value[(std::size_t)i];
        sgd_step(params, 0.2);  // below 1/max(a)
        const double cur = loss();
        CHECK(cur < prev);
        prev = cur;
    }
}

// ---------------------------------------------------------------------------
// grad_check entry points
// ---------------------------------------------------------------------------

TEST_CASE("grad_check on a linear op is exact to 1e-10") {
    Rng rng(61);
    auto in = random_offzero({6}, rng);
    auto w = random_offzero({4, 6}, rng);
    auto b = random_offzero({4}, rng);
    auto r = random_offzero({4}, rng);
    auto g = dense_backward(in, w, r);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(in, g.input, elems, analytic);
    append_elems(w, g.weights, elems, analytic);
    auto loss = [&]() { return weighted_sum(dense_forward(in, w, b), r); };
    CHECK(fd_check(elems, analytic, 1e-3, loss) < 1e-10);
}

TEST_CASE("grad_check: conv5 on a (2,128) input") {
    auto build = [](std::uint64_t seed) {
        return build_conv5<double>(128, 3, Conv5Widths{2, 2, 3, 3, 4}, seed);
    };
    auto suite = grad_check_suite(build, 3, 1e-4, 1e-3);
    CHECK(suite.ok(3));
    CHECK(suite.worst_rel_err < 1e-4);
}

TEST_CASE("grad_check: softmax cross-entropy composed with dense") {
    Rng rng(67);
    auto in = random_offzero({6}, rng);
    auto w = random_offzero({4, 6}, rng);
    auto b = random_offzero({4}, rng);
    std::vector<int> labels{2};
    auto forward_loss = [&]() {
        auto logits = dense_forward(in, w, b).reshaped({1, 4});
        return (double)softmax_cross_entropy<double>(logits, labels).loss;
    };
    // analytic: xent backward -> dense backward
    auto logits = dense_forward(in, w, b).reshaped({1, 4});
    auto xent = softmax_cross_entropy<double>(logits, labels);
    auto gl = softmax_cross_entropy_backward(xent.probs, labels).reshaped({4});
    auto g = dense_backward(in, w, gl);
    std::vector<double*> elems;
    std::vector<double> analytic;
    append_elems(in, g.input, elems, analytic);
    append_elems(w, g.weights, elems, analytic);
    append_elems(b, g.bias, elems, analytic);
    CHECK(fd_check(elems, analytic, 1e-3, forward_loss) < 1e-4);
}

TEST_CASE("zero-grad then backward of zero upstream leaves grads exactly zero") {
    auto model = build_conv5<float>(64, 2, Conv5Widths{2, 2, 2, 2, 2}, 9);
    Rng rng(71);
    Tensor<float> x({2, 64});
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = (float)rng.uniform(-1, 1);
    Tape<float> tape;
    auto logits = model.forward(x, &tape);
    GradAccum<float> accum;
    accum.init(model.params());
    accum.clear();
    zero_grads(model.params());
    Tensor<float> zero_up(logits.shape());
    model.backward(tape, zero_up, accum);
    accum.add_to_params(model.params());
    for (auto* p : model.params())
        for (std::size_t i = 0; i < p->grad.numel(); ++i) CHECK(p->grad[i] == 0.0f);
}

TEST_CASE("backward is rejected after the tape is consumed") {
    auto model = build_conv5<float>(32, 2, Conv5Widths{1, 1, 1, 1, 1}, 1);
    Tensor<float> x({2, 32});
    Tape<float> tape;
    auto logits = model.forward(x, &tape);
    GradAccum<float> accum;
    accum.init(model.params());
    accum.clear();
    Tensor<float> g(logits.shape());
    model.backward(tape, g, accum);
    CHECK_THROWS_AS(model.backward(tape, g, accum), ShapeError);
}
