#include "modrec/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "modrec/errors.hpp"
#include "modrec/fft.hpp"

namespace modrec {

std::vector<double> hann_window(int len) {
    std::vector<double> w(static_cast<std::size_t>(len));
    const double pi = 3.14159265358979323846;
    for (int n = 0; n < len; ++n)
        w[static_cast<std::size_t>(n)] = 0.5 * (1.0 - std::cos(2.0 * pi * n / len));
    return w;
}

StftMatrix stft(std::span<const std::complex<float>> x, const StftConfig& cfg) {
    const int n = static_cast<int>(x.size());
    if (cfg.overlap < 0 || cfg.overlap >= cfg.window_len)
        throw ShapeError("stft overlap " + std::to_string(cfg.overlap) +
                         " must lie in [0, window_len)");
    if (cfg.fft_len < cfg.window_len)
        throw ShapeError("stft fft_len " + std::to_string(cfg.fft_len) + " below window length " +
                         std::to_string(cfg.window_len));
    if (n < cfg.window_len)
        throw ShapeError("stft input length " + std::to_string(n) + " below window length " +
                         std::to_string(cfg.window_len));
    const int hop = cfg.hop();
    const auto window = hann_window(cfg.window_len);

    StftMatrix m;
    m.n_frames = (n - cfg.window_len) / hop + 1;
    m.n_bins = cfg.fft_len;
    m.data.resize(static_cast<std::size_t>(m.n_frames) * m.n_bins);

    std::vector<std::complex<double>> frame(static_cast<std::size_t>(cfg.fft_len));
    for (int f = 0; f < m.n_frames; ++f) {
        const int start = f * hop;
        std::fill(frame.begin(), frame.end(), std::complex<double>(0.0, 0.0));
        for (int i = 0; i < cfg.window_len; ++i) {
            const auto& v = x[static_cast<std::size_t>(start + i)];
            frame[static_cast<std::size_t>(i)] =
                window[static_cast<std::size_t>(i)] * std::complex<double>(v.real(), v.imag());
        }
        if (is_pow2(static_cast<std::size_t>(cfg.fft_len))) {
            fft_inplace(frame, false);
            std::copy(frame.begin(), frame.end(),
                      m.data.begin() + static_cast<std::size_t>(f) * m.n_bins);
        } else {
            const auto spec = dft(frame);
            std::copy(spec.begin(), spec.end(),
                      m.data.begin() + static_cast<std::size_t>(f) * m.n_bins);
        }
    }
    return m;
}

Tensor<float> stft_to_image(const StftMatrix& m, const StftConfig& cfg) {
    const int w = cfg.out_size;
    if (w <= 0) throw ShapeError("stft image size must be positive");
    Tensor<float> img({2, w, w});
    // align-corners bilinear sampling of the (n_frames x n_bins) plane
    auto src_pos = [](int dst, int dst_size, int src_size) {
        if (dst_size == 1 || src_size == 1) return 0.0;
        return static_cast<double>(dst) * (src_size - 1) / (dst_size - 1);
    };
    for (int y = 0; y < w; ++y) {
        const double sy = src_pos(y, w, m.n_frames);
        const int y0 = static_cast<int>(sy);
        const int y1 = std::min(y0 + 1, m.n_frames - 1);
        const double fy = sy - y0;
        for (int x = 0; x < w; ++x) {
            const double sx = src_pos(x, w, m.n_bins);
            const int x0 = static_cast<int>(sx);
            const int x1 = std::min(x0 + 1, m.n_bins - 1);
            const double fx = sx - x0;
            const std::complex<double> v =
                (1 - fy) * ((1 - fx) * m.at(y0, x0) + fx * m.at(y0, x1)) +
                fy * ((1 - fx) * m.at(y1, x0) + fx * m.at(y1, x1));
            img.at(0, y, x) = static_cast<float>(v.real());
            img.at(1, y, x) = static_cast<float>(v.imag());
        }
    }
    return img;
}

ConvTransformLayer<float> make_conv_transform(const CtConfig& cfg) {
    Rng rng(mix_seed(cfg.weight_seed, 0xC7F1ULL));
    return ConvTransformLayer<float>("ct", cfg.filters, cfg.learnable, rng);
}

Tensor<float> conv_transform(const Tensor<float>& batch, const ConvTransformLayer<float>& layer) {
    if (batch.ndim() != 3 || batch.dim(1) != 2)
        throw ShapeError("conv_transform expects a (B,2,N) batch, got " + shape_str(batch.shape()));
    const int b = batch.dim(0);
    const int n = batch.dim(2);
    const Shape out_shape = layer.output_shape({2, n});  // (2,F,N/4)
    Tensor<float> out({b, out_shape[0], out_shape[1], out_shape[2]});
    const std::size_t sample_len = static_cast<std::size_t>(2) * n;
    const std::size_t out_len = numel_of(out_shape);
    for (int i = 0; i < b; ++i) {
        Tensor<float> x({2, n},
                        std::vector<float>(batch.data() + static_cast<std::size_t>(i) * sample_len,
                                           batch.data() + static_cast<std::size_t>(i + 1) * sample_len));
        Tensor<float> y = layer.forward(x, nullptr);
        std::copy(y.data(), y.data() + out_len, out.data() + static_cast<std::size_t>(i) * out_len);
    }
    return out;
}

}  // namespace modrec
