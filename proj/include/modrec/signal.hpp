#pragma once

#include <complex>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "modrec/rng.hpp"

namespace modrec {

// The eight waveform classes, stable integer codes 0..7.
enum class ModScheme : int {
    QAM16 = 0,
    FSK2 = 1,
    FM = 2,
    GMSK = 3,
    OFDM = 4,
    FSK4 = 5,
    PSK4 = 6,
    QPSK = 7,
};

constexpr int kNumSchemes = 8;

const char* scheme_name(ModScheme scheme);
// throws DataError on unknown names; accepts the lowercase names above
ModScheme scheme_from_name(const std::string& name);
std::vector<ModScheme> all_schemes();

// SNR is carried as centi-dB so frames and files agree exactly.
constexpr std::int32_t kSnrNoiselessCentiDb = std::numeric_limits<std::int32_t>::max();

inline std::int32_t snr_to_centi(double snr_db) {
    return static_cast<std::int32_t>(snr_db >= 0 ? snr_db * 100.0 + 0.5 : snr_db * 100.0 - 0.5);
}

// One labeled baseband capture: N complex samples, class label, recorded SNR,
// and the seed it was generated from.
struct SignalFrame {
    std::vector<std::complex<float>> iq;
    int label = 0;
    std::int32_t snr_centi_db = kSnrNoiselessCentiDb;
    std::uint64_t seed = 0;

    int n_samples() const { return static_cast<int>(iq.size()); }
    bool noiseless() const { return snr_centi_db == kSnrNoiselessCentiDb; }
    double snr_db() const { return static_cast<double>(snr_centi_db) / 100.0; }
    double average_power() const;
};

struct SynthConfig {
    int samples_per_symbol = 8;
    double rrc_rolloff = 0.35;   // root-raised-cosine excess bandwidth
    double gmsk_bt = 0.3;        // Gaussian filter bandwidth-time product
    double fm_deviation = 0.1;   // peak deviation, cycles/sample
    double fm_msg_bandwidth = 0.05;
    int ofdm_subcarriers = 64;
    int ofdm_cyclic_prefix = 16;
};

struct ChannelConfig {
    enum class NoiseMode { noiseless, awgn_at_snr };
    std::complex<double> z{1.0, 0.0};  // complex channel gain
    int n_r = 1;                       // single receive antenna in this toolkit
    NoiseMode noise_mode = NoiseMode::noiseless;
    double snr_db = 0.0;  // used when noise_mode == awgn_at_snr
};

// Unit-average-power noiseless baseband waveform for one scheme.
SignalFrame modulate(ModScheme scheme, int n_samples, const SynthConfig& cfg, std::uint64_t seed);

// iq <- z * iq, then noise per noise_mode (seeded off frame.seed).
void apply_channel(SignalFrame& frame, const ChannelConfig& ch);

// Complex AWGN with total variance signal_power / 10^(snr_db/10), split evenly
// between I and Q; records snr_db on the frame.
void add_awgn(SignalFrame& frame, double snr_db, std::uint64_t seed);

// test-facing helpers: the symbol streams behind the linear schemes
std::vector<std::complex<double>> qpsk_symbols(int n, Rng& rng);
std::vector<std::complex<double>> psk4_symbols(int n, Rng& rng);
std::vector<std::complex<double>> qam16_symbols(int n, Rng& rng);
std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols);

}  // namespace modrec
