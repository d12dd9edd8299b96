#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "modrec/layers.hpp"
#include "modrec/tensor.hpp"

namespace modrec {

// ---------------------------------------------------------------------------
// short-time Fourier transform front-end
// ---------------------------------------------------------------------------

struct StftConfig {
    int window_len = 128;
    int overlap = 112;
    int fft_len = 128;
    int out_size = 256;  // W of the (2,W,W) image

    int hop() const { return window_len - overlap; }
};

// Periodic Hann, w[n] = 0.5 (1 - cos(2 pi n / L)). At hop L/8 the shifted
// windows sum to an exact constant, which the symmetric (L-1) form does not.
std::vector<double> hann_window(int len);

// two-sided complex spectrum per frame, row-major (n_frames x n_bins)
struct StftMatrix {
    int n_frames = 0;
    int n_bins = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(int frame, int bin) {
        return data[static_cast<std::size_t>(frame) * n_bins + bin];
    }
    const std::complex<double>& at(int frame, int bin) const {
        return data[static_cast<std::size_t>(frame) * n_bins + bin];
    }
};

// Frames at hop = window_len - overlap, Hann-windowed, zero-padded to fft_len,
// unnormalized DFT. n_frames = floor((N - window_len)/hop) + 1.
StftMatrix stft(std::span<const std::complex<float>> x, const StftConfig& cfg);

// (2, W, W): channel 0 real, channel 1 imaginary; the native n_frames x n_bins
// plane is resampled with bilinear interpolation (exact passthrough when the
// native grid is already W x W).
Tensor<float> stft_to_image(const StftMatrix& m, const StftConfig& cfg);

// ---------------------------------------------------------------------------
// convolutional transform front-end
// ---------------------------------------------------------------------------

struct CtConfig {
    int filters = 256;      // 256 for N=1024, 32 for N=128
    bool learnable = true;  // when false the seeded filter bank stays fixed
    std::uint64_t weight_seed = 1;
};

// standalone filter bank for offline conversion and tests
ConvTransformLayer<float> make_conv_transform(const CtConfig& cfg);

// batch (B,2,N) -> (B,2,F,N/4)
Tensor<float> conv_transform(const Tensor<float>& batch, const ConvTransformLayer<float>& layer);

}  // namespace modrec
