#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "modrec/gradcheck.hpp"
#include "modrec/signal.hpp"
#include "modrec/transforms.hpp"

using namespace modrec;

namespace {
constexpr double kPi = 3.14159265358979323846;
}

TEST_CASE("conv transform maps (1,2,1024) to (2,256,256) with 256 filters") {
    auto layer = make_conv_transform(CtConfig{256, false, 1});
    Tensor<float> batch({1, 2, 1024});
    Rng rng(1);
    for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = (float)rng.uniform(-1, 1);
    auto out = conv_transform(batch, layer);
    CHECK(out.shape() == Shape{1, 2, 256, 256});
}

TEST_CASE("conv transform maps (1,2,128) to (2,32,32) with 32 filters") {
    auto layer = make_conv_transform(CtConfig{32, false, 2});
    Tensor<float> batch({1, 2, 128});
    Rng rng(2);
    for (std::size_t i = 0; i < batch.numel(); ++i) batch[i] = (float)rng.uniform(-1, 1);
    auto out = conv_transform(batch, layer);
    CHECK(out.shape() == Shape{1, 2, 32, 32});
}

TEST_CASE("conv transform of zero input with zero bias is zero for any weights") {
    auto layer = make_conv_transform(CtConfig{16, false, 3});
    Tensor<float> batch({2, 2, 64});
    auto out = conv_transform(batch, layer);  // biases are zero-initialized
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("conv transform rejects N not divisible by 4") {
    auto layer = make_conv_transform(CtConfig{8, false, 4});
    Tensor<float> x({2, 30});
    CHECK_THROWS_AS(layer.forward(x, nullptr), ShapeError);
}

TEST_CASE("conv transform axis swap places filters on the height axis") {
    // single filter that copies the center tap: output (2,1,N/4) pools the
    // identity response, so channel a holds row a of the input
    Rng rng(5);
    ConvTransformLayer<float> layer("ct", 1, false, rng);
    std::vector<Parameter<float>*> params;
    layer.collect_params(params);  // not learnable: empty
    CHECK(params.empty());
    auto& w = const_cast<Parameter<float>&>(layer.weight());
    w.value.fill(0.0f);
    w.value.at(0, 0, 1, 1) = 1.0f;
    Tensor<float> x({2, 8}, {1, 2, 3, 4, 5, 6, 7, 8, -1, -2, -3, -4, -5, -6, -7, -8});
    auto y = layer.forward(x, nullptr);
    CHECK(y.shape() == Shape{2, 1, 2});
    CHECK(y.at(0, 0, 0) == 4.0f);   // max of 1..4
    CHECK(y.at(0, 0, 1) == 8.0f);   // max of 5..8
    CHECK(y.at(1, 0, 0) == -1.0f);  // max of -1..-4
    CHECK(y.at(1, 0, 1) == -5.0f);
}

TEST_CASE("stft frame bookkeeping: window 128, overlap 112 on 1024 samples") {
    StftConfig cfg;
    CHECK(cfg.hop() == 16);
    std::vector<std::complex<float>> x(1024, {1.0f, 0.0f});
    auto m = stft(x, cfg);
    CHECK(m.n_frames == 57);  // floor((1024-128)/16) + 1
    CHECK(m.n_bins == 128);
}

TEST_CASE("stft rejects input shorter than the window") {
    StftConfig cfg;
    std::vector<std::complex<float>> x(100);
    CHECK_THROWS_AS(stft(x, cfg), ShapeError);
}

TEST_CASE("stft of zero input is all zeros") {
    StftConfig cfg;
    std::vector<std::complex<float>> x(512);
    auto m = stft(x, cfg);
    for (const auto& v : m.data) {
        CHECK(v.real() == 0.0);
        CHECK(v.imag() == 0.0);
    }
}

TEST_CASE("pure tone localizes at its bin in every frame") {
    StftConfig cfg;
    for (int k : {0, 1, 7, 33, 64, 100, 127}) {
        std::vector<std::complex<float>> x(1024);
        for (int n = 0; n < 1024; ++n) {
            const double ang = 2.0 * kPi * k * n / 128.0;
            x[(std::size_t)n] = std::complex<float>((float)std::cos(ang), (float)std::sin(ang));
        }
        auto m = stft(x, cfg);
        for (int f = 0; f < m.n_frames; ++f) {
            int best = 0;
            double best_mag = -1;
            for (int b = 0; b < m.n_bins; ++b) {
                const double mag = std::abs(m.at(f, b));
                if (mag > best_mag) {
                    best_mag = mag;
                    best = b;
                }
            }
            CHECK(best == k);
        }
    }
}

TEST_CASE("single-frame Parseval: spectrum energy equals fft_len times windowed energy") {
    StftConfig cfg;
    SynthConfig synth;
    auto frame = modulate(ModScheme::QAM16, 128, synth, 9);
    auto m = stft(frame.iq, cfg);
    REQUIRE(m.n_frames == 1);
    const auto w = hann_window(cfg.window_len);
    double time_e = 0;
    for (int n = 0; n < 128; ++n)
        time_e += std::norm(w[(std::size_t)n] * std::complex<double>(frame.iq[(std::size_t)n].real(),
                                                                     frame.iq[(std::size_t)n].imag()));
    double freq_e = 0;
    for (int b = 0; b < m.n_bins; ++b) freq_e += std::norm(m.at(0, b));
    CHECK(freq_e == doctest::Approx(cfg.fft_len * time_e).epsilon(1e-6));
}

TEST_CASE("hann windows at hop 16 overlap-add to an exact constant inside") {
    const auto w = hann_window(128);
    const int hop = 16;
    // cover an interior sample range with all 8 overlapping shifts
    double lo = 1e300, hi = -1e300;
    for (int n = 128; n < 256; ++n) {
        double acc = 0;
        for (int k = 0; k * hop <= n; ++k) {
            const int idx = n - k * hop;
            if (idx < 128) acc += w[(std::size_t)idx];
        }
        lo = std::min(lo, acc);
        hi = std::max(hi, acc);
    }
    CHECK((hi - lo) / hi < 1e-9);
    CHECK(hi == doctest::Approx(4.0).epsilon(1e-12));  // 8 windows of mean 1/2
}

TEST_CASE("stft image has the paper geometry and finite values") {
    StftConfig cfg;  // W = 256
    SynthConfig synth;
    auto frame = modulate(ModScheme::OFDM, 1024, synth, 10);
    auto m = stft(frame.iq, cfg);
    auto img = stft_to_image(m, cfg);
    CHECK(img.shape() == Shape{2, 256, 256});
    CHECK(img.all_finite());

    StftConfig small = cfg;
    small.out_size = 28;
    auto img28 = stft_to_image(m, small);
    CHECK(img28.shape() == Shape{2, 28, 28});
}

TEST_CASE("stft_to_image of a zero spectrum is zero") {
    StftConfig cfg;
    cfg.out_size = 32;
    StftMatrix m;
    m.n_frames = 57;
    m.n_bins = 128;
    m.data.assign(57 * 128, {0.0, 0.0});
    auto img = stft_to_image(m, cfg);
    for (std::size_t i = 0; i < img.numel(); ++i) CHECK(img[i] == 0.0f);
}

TEST_CASE("stft_to_image at native dimensions is the identity packing") {
    // N = 128 + 127*16 = 2160 gives a native 128x128 grid
    StftConfig cfg;
    cfg.out_size = 128;
    SynthConfig synth;
    auto frame = modulate(ModScheme::FM, 2160, synth, 11);
    auto m = stft(frame.iq, cfg);
    REQUIRE(m.n_frames == 128);
    REQUIRE(m.n_bins == 128);
    auto img = stft_to_image(m, cfg);
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x) {
            CHECK(img.at(0, y, x) == (float)m.at(y, x).real());
            CHECK(img.at(1, y, x) == (float)m.at(y, x).imag());
        }
}

TEST_CASE("learnable conv transform trains through grad_check with a classifier head") {
    auto build = [](std::uint64_t seed) {
        Rng rng(seed);
        std::vector<std::unique_ptr<Layer<double>>> layers;
        layers.push_back(std::make_unique<ConvTransformLayer<double>>("ct", 6, true, rng));
        layers.push_back(std::make_unique<FlattenLayer<double>>());
        layers.push_back(std::make_unique<DenseLayer<double>>("head", 2 * 6 * 6, 4, rng));
        return Model<double>("ct-head", {2, 24}, 4, std::move(layers));
    };
    auto suite = grad_check_suite(build, 5, 1e-4, 1e-3);
    CHECK(suite.ok(5));
    CHECK(suite.worst_rel_err < 1e-4);
}
