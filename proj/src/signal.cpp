#include "modrec/signal.hpp"

#include <algorithm>
#include <cmath>

#include "modrec/dataset.hpp"
#include "modrec/errors.hpp"
#include "modrec/fft.hpp"

namespace modrec {

namespace {

constexpr double kPi = 3.14159265358979323846;

using cvec = std::vector<std::complex<double>>;

// steady-state slice of an RRC-shaped symbol stream:
// out[t] = sum_k sym[k] * h[t + 2D - k*sps], D = filter group delay
cvec shape_linear(const cvec& symbols, const std::vector<double>& taps, int sps, int n_out) {
    const int len = static_cast<int>(taps.size());
    const int t0 = len - 1;  // 2D
    cvec out(static_cast<std::size_t>(n_out));
    for (int t = 0; t < n_out; ++t) {
        std::complex<double> acc(0.0, 0.0);
        const int m = t + t0;
        // h index i = m - k*sps must lie in [0, len)
        int k_lo = (m - len + sps) / sps;  // ceil((m - len + 1) / sps)
        if (k_lo < 0) k_lo = 0;
        const int k_hi = std::min(static_cast<int>(symbols.size()) - 1, m / sps);
        for (int k = k_lo; k <= k_hi; ++k) acc += symbols[(std::size_t)k] * taps[(std::size_t)(m - k * sps)];
        out[(std::size_t)t] = acc;
    }
    return out;
}

int linear_symbol_count(int n_out, int sps, int taps_len) {
    return (n_out + 2 * (taps_len - 1)) / sps + 2;
}

cvec gen_qpsk(int n_out, const SynthConfig& cfg, Rng& rng) {
    const auto taps = rrc_taps(cfg.samples_per_symbol, cfg.rrc_rolloff, 6);
    const int nsym = linear_symbol_count(n_out, cfg.samples_per_symbol, (int)taps.size());
    return shape_linear(qpsk_symbols(nsym, rng), taps, cfg.samples_per_symbol, n_out);
}

cvec gen_psk4(int n_out, const SynthConfig& cfg, Rng& rng) {
    const auto taps = rrc_taps(cfg.samples_per_symbol, cfg.rrc_rolloff, 6);
    const int nsym = linear_symbol_count(n_out, cfg.samples_per_symbol, (int)taps.size());
    return shape_linear(psk4_symbols(nsym, rng), taps, cfg.samples_per_symbol, n_out);
}

cvec gen_qam16(int n_out, const SynthConfig& cfg, Rng& rng) {
    const auto taps = rrc_taps(cfg.samples_per_symbol, cfg.rrc_rolloff, 6);
    const int nsym = linear_symbol_count(n_out, cfg.samples_per_symbol, (int)taps.size());
    return shape_linear(qam16_symbols(nsym, rng), taps, cfg.samples_per_symbol, n_out);
}

// continuous-phase tone switching; tone = level / (2*sps) cycles per sample
cvec gen_fsk(int n_out, const SynthConfig& cfg, Rng& rng, bool four_level) {
    const int sps = cfg.samples_per_symbol;
    if (3.0 / (2.0 * sps) >= 0.5)
        throw DataError("FSK tones exceed Nyquist at samples_per_symbol=" + std::to_string(sps));
    cvec out((std::size_t)n_out);
    double phase = 0.0;
    int level = 0;
    for (int t = 0; t < n_out; ++t) {
        if (t % sps == 0) {
            if (four_level) {
                static const int levels4[4] = {-3, -1, 1, 3};
                level = levels4[rng.uniform_int(4)];
            } else {
                level = rng.coin() ? 1 : -1;
            }
        }
        phase += 2.0 * kPi * level / (2.0 * sps);
        out[(std::size_t)t] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return out;
}

// Gaussian-filtered MSK, modulation index 1/2: each bit contributes +-pi/2 of
// phase spread over the smoothed pulse
cvec gen_gmsk(int n_out, const SynthConfig& cfg, Rng& rng) {
    const int sps = cfg.samples_per_symbol;
    // Gaussian kernel, std in samples from the BT product
    const double sigma = sps * std::sqrt(std::log(2.0)) / (2.0 * kPi * cfg.gmsk_bt);
    const int half = std::max(1, (int)std::ceil(4.0 * sigma));
    std::vector<double> gauss((std::size_t)(2 * half + 1));
    double gsum = 0.0;
    for (int i = -half; i <= half; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        gauss[(std::size_t)(i + half)] = v;
        gsum += v;
    }
    for (auto& v : gauss) v /= gsum;
    // frequency pulse: rect(sps) * gauss, unit symbol integral after the
    // pi/(2*sps) phase scale below
    std::vector<double> pulse((std::size_t)(sps + 2 * half));
    for (int i = 0; i < (int)pulse.size(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < sps; ++j) {
            const int gi = i - j;
            if (gi >= 0 && gi < (int)gauss.size()) acc += gauss[(std::size_t)gi];
        }
        pulse[(std::size_t)i] = acc;
    }
    const int pulse_span_sym = (int)pulse.size() / sps + 1;
    const int offset = pulse_span_sym * sps;
    const int nsym = (n_out + offset) / sps + pulse_span_sym + 2;
    std::vector<int> bits((std::size_t)nsym);
    for (auto& b : bits) b = rng.coin() ? 1 : -1;

    cvec out((std::size_t)n_out);
    double phase = 0.0;
    for (int m = 0; m < n_out + offset; ++m) {
        double freq = 0.0;
        const int k_hi = std::min(nsym - 1, m / sps);
        for (int k = std::max(0, (m - (int)pulse.size() + sps) / sps); k <= k_hi; ++k) {
            const int pi_idx = m - k * sps;
            if (pi_idx >= 0 && pi_idx < (int)pulse.size())
                freq += bits[(std::size_t)k] * pulse[(std::size_t)pi_idx];
        }
        phase += (kPi / (2.0 * sps)) * freq;
        if (m >= offset)
            out[(std::size_t)(m - offset)] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return out;
}

// analog FM of a band-limited random message, constant envelope
cvec gen_fm(int n_out, const SynthConfig& cfg, Rng& rng) {
    // windowed-sinc low-pass at the message bandwidth
    const int half = 64;
    std::vector<double> lpf((std::size_t)(2 * half + 1));
    for (int i = -half; i <= half; ++i) {
        const double x = 2.0 * kPi * cfg.fm_msg_bandwidth * i;
        const double sinc = i == 0 ? 1.0 : std::sin(x) / x;
        const double hamming = 0.54 + 0.46 * std::cos(kPi * i / half);
        lpf[(std::size_t)(i + half)] = sinc * hamming;
    }
    const int n_msg = n_out + 2 * half;
    std::vector<double> white((std::size_t)(n_msg + 2 * half));
    for (auto& v : white) v = rng.normal();
    std::vector<double> msg((std::size_t)n_out);
    double peak = 0.0;
    for (int t = 0; t < n_out; ++t) {
        double acc = 0.0;
        for (int i = 0; i < (int)lpf.size(); ++i) acc += lpf[(std::size_t)i] * white[(std::size_t)(t + i)];
        msg[(std::size_t)t] = acc;
        peak = std::max(peak, std::abs(acc));
    }
    if (peak > 0)
        for (auto& v : msg) v /= peak;
    cvec out((std::size_t)n_out);
    double phase = 0.0;
    for (int t = 0; t < n_out; ++t) {
        phase += 2.0 * kPi * cfg.fm_deviation * msg[(std::size_t)t];
        out[(std::size_t)t] = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return out;
}

// QPSK-loaded subcarriers, IFFT, cyclic prefix
cvec gen_ofdm(int n_out, const SynthConfig& cfg, Rng& rng) {
    const int nsc = cfg.ofdm_subcarriers;
    const int cp = cfg.ofdm_cyclic_prefix;
    if (!is_pow2((std::size_t)nsc))
        throw DataError("OFDM subcarrier count must be a power of two, got " + std::to_string(nsc));
    cvec out;
    out.reserve((std::size_t)n_out + (std::size_t)(nsc + cp));
    while ((int)out.size() < n_out) {
        cvec freq((std::size_t)nsc);
        for (auto& f : freq) {
            const auto bits = rng.uniform_int(4);
            const double re = (bits & 1) ? 1.0 : -1.0;
            const double im = (bits & 2) ? 1.0 : -1.0;
            f = std::complex<double>(re, im) / std::sqrt(2.0);
        }
        fft_inplace(freq, true);  // to time domain
        for (int i = nsc - cp; i < nsc; ++i) out.push_back(freq[(std::size_t)i]);
        for (int i = 0; i < nsc; ++i) out.push_back(freq[(std::size_t)i]);
    }
    out.resize((std::size_t)n_out);
    return out;
}

}  // namespace

const char* scheme_name(ModScheme scheme) {
    switch (scheme) {
        case ModScheme::QAM16: return "qam16";
        case ModScheme::FSK2: return "fsk2";
        case ModScheme::FM: return "fm";
        case ModScheme::GMSK: return "gmsk";
        case ModScheme::OFDM: return "ofdm";
        case ModScheme::FSK4: return "fsk4";
        case ModScheme::PSK4: return "psk4";
        case ModScheme::QPSK: return "qpsk";
    }
    throw DataError("unknown modulation scheme code " +
                    std::to_string(static_cast<int>(scheme)));
}

ModScheme scheme_from_name(const std::string& name) {
    for (ModScheme s : all_schemes())
        if (name == scheme_name(s)) return s;
    throw DataError("unknown modulation scheme \"" + name + "\"");
}

std::vector<ModScheme> all_schemes() {
    return {ModScheme::QAM16, ModScheme::FSK2, ModScheme::FM,   ModScheme::GMSK,
            ModScheme::OFDM,  ModScheme::FSK4, ModScheme::PSK4, ModScheme::QPSK};
}

double SignalFrame::average_power() const {
    double acc = 0.0;
    for (const auto& v : iq) acc += std::norm(std::complex<double>(v.real(), v.imag()));
    return iq.empty() ? 0.0 : acc / static_cast<double>(iq.size());
}

std::vector<std::complex<double>> qpsk_symbols(int n, Rng& rng) {
    cvec out((std::size_t)n);
    const double s = 1.0 / std::sqrt(2.0);
    for (auto& v : out) {
        const auto bits = rng.uniform_int(4);
        v = std::complex<double>((bits & 1) ? s : -s, (bits & 2) ? s : -s);
    }
    return out;
}

std::vector<std::complex<double>> psk4_symbols(int n, Rng& rng) {
    // axis-aligned constellation {1, j, -1, -j}, differentially encoded
    cvec out((std::size_t)n);
    unsigned acc = 0;
    for (auto& v : out) {
        acc = (acc + rng.uniform_int(4)) & 3u;
        switch (acc) {
            case 0: v = {1.0, 0.0}; break;
            case 1: v = {0.0, 1.0}; break;
            case 2: v = {-1.0, 0.0}; break;
            default: v = {0.0, -1.0}; break;
        }
    }
    return out;
}

std::vector<std::complex<double>> qam16_symbols(int n, Rng& rng) {
    // Gray-coded {-3,-1,1,3} per rail, scaled to unit average symbol energy
    static const double levels[4] = {-3.0, -1.0, 1.0, 3.0};
    static const int gray[4] = {0, 1, 3, 2};
    const double s = 1.0 / std::sqrt(10.0);
    cvec out((std::size_t)n);
    for (auto& v : out) {
        const auto bits = rng.uniform_int(16);
        int li = 0, lq = 0;
        for (int g = 0; g < 4; ++g) {
            if (gray[g] == (int)(bits & 3)) li = g;
            if (gray[g] == (int)((bits >> 2) & 3)) lq = g;
        }
        v = std::complex<double>(levels[li] * s, levels[lq] * s);
    }
    return out;
}

std::vector<double> rrc_taps(int sps, double rolloff, int span_symbols) {
    const int len = 2 * span_symbols * sps + 1;
    std::vector<double> taps((std::size_t)len);
    const double beta = rolloff;
    for (int i = 0; i < len; ++i) {
        const double t = (i - span_symbols * sps) / static_cast<double>(sps);
        double h;
        if (std::abs(t) < 1e-12) {
            h = 1.0 - beta + 4.0 * beta / kPi;
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
            h = (beta / std::sqrt(2.0)) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) +
                 (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
        } else {
            const double denom = kPi * t * (1.0 - 16.0 * beta * beta * t * t);
            h = (std::sin(kPi * t * (1.0 - beta)) +
                 4.0 * beta * t * std::cos(kPi * t * (1.0 + beta))) /
                denom;
        }
        taps[(std::size_t)i] = h;
    }
    return taps;
}

SignalFrame modulate(ModScheme scheme, int n_samples, const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.samples_per_symbol < 2)
        throw DataError("samples_per_symbol must be >= 2, got " +
                        std::to_string(cfg.samples_per_symbol));
    if (n_samples < cfg.samples_per_symbol)
        throw DataError("n_samples " + std::to_string(n_samples) +
                        " below one symbol at samples_per_symbol=" +
                        std::to_string(cfg.samples_per_symbol));
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(scheme)));
    cvec wave;
    switch (scheme) {
        case ModScheme::QAM16: wave = gen_qam16(n_samples, cfg, rng); break;
        case ModScheme::FSK2: wave = gen_fsk(n_samples, cfg, rng, false); break;
        case ModScheme::FM: wave = gen_fm(n_samples, cfg, rng); break;
        case ModScheme::GMSK: wave = gen_gmsk(n_samples, cfg, rng); break;
        case ModScheme::OFDM: wave = gen_ofdm(n_samples, cfg, rng); break;
        case ModScheme::FSK4: wave = gen_fsk(n_samples, cfg, rng, true); break;
        case ModScheme::PSK4: wave = gen_psk4(n_samples, cfg, rng); break;
        case ModScheme::QPSK: wave = gen_qpsk(n_samples, cfg, rng); break;
        default:
            throw DataError("unknown modulation scheme code " +
                            std::to_string(static_cast<int>(scheme)));
    }
    // normalize to unit average power
    double power = 0.0;
    for (const auto& v : wave) power += std::norm(v);
    power /= static_cast<double>(wave.size());
    const double scale = power > 0 ? 1.0 / std::sqrt(power) : 1.0;

    SignalFrame frame;
    frame.iq.resize(wave.size());
    for (std::size_t i = 0; i < wave.size(); ++i)
        frame.iq[i] = std::complex<float>(static_cast<float>(wave[i].real() * scale),
                                          static_cast<float>(wave[i].imag() * scale));
    frame.label = static_cast<int>(scheme);
    frame.snr_centi_db = kSnrNoiselessCentiDb;
    frame.seed = seed;
    return frame;
}

void apply_channel(SignalFrame& frame, const ChannelConfig& ch) {
    if (ch.n_r != 1)
        throw DataError("single-antenna toolkit: n_r must be 1, got " + std::to_string(ch.n_r));
    const std::complex<float> z(static_cast<float>(ch.z.real()), static_cast<float>(ch.z.imag()));
    for (auto& v : frame.iq) v *= z;
    if (ch.noise_mode == ChannelConfig::NoiseMode::awgn_at_snr)
        add_awgn(frame, ch.snr_db, mix_seed(frame.seed, 0xCAA7ULL));
}

void add_awgn(SignalFrame& frame, double snr_db, std::uint64_t seed) {
    const double signal_power = frame.average_power();
    const double noise_var = signal_power / std::pow(10.0, snr_db / 10.0);
    const double comp_std = std::sqrt(noise_var / 2.0);
    Rng rng(mix_seed(seed, 0xA36EULL));
    for (auto& v : frame.iq) {
        v += std::complex<float>(static_cast<float>(comp_std * rng.normal()),
                                 static_cast<float>(comp_std * rng.normal()));
    }
    frame.snr_centi_db = snr_to_centi(snr_db);
}

SnrPolicy SnrPolicy::grid(double lo_db, double hi_db, double step_db) {
    SnrPolicy p;
    p.kind = Kind::grid;
    for (double v = lo_db; v <= hi_db + 1e-9; v += step_db) p.grid_db.push_back(v);
    return p;
}

IqDataset generate_dataset(const std::vector<ModScheme>& classes, int per_class_train,
                           int per_class_test, int n_samples, const SnrPolicy& snr_policy,
                           const SynthConfig& cfg, std::uint64_t master_seed) {
    if (per_class_train <= 0 || per_class_test < 0)
        throw DataError("per-class counts must be positive");
    if (classes.empty()) throw DataError("empty class list");
    IqDataset ds;
    ds.geometry = {n_samples, static_cast<int>(classes.size())};
    for (ModScheme s : classes) ds.class_names.emplace_back(scheme_name(s));
    const int per_class = per_class_train + per_class_test;
    ds.frames.reserve(classes.size() * static_cast<std::size_t>(per_class));

    for (std::size_t c = 0; c < classes.size(); ++c) {
        for (int i = 0; i < per_class; ++i) {
            const std::uint64_t frame_seed =
                mix_seed(master_seed, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(i));
            SignalFrame frame = modulate(classes[c], n_samples, cfg, frame_seed);
            frame.label = static_cast<int>(c);
            switch (snr_policy.kind) {
                case SnrPolicy::Kind::fixed:
                    add_awgn(frame, snr_policy.fixed_db, mix_seed(frame_seed, 0x50F1ULL));
                    break;
                case SnrPolicy::Kind::grid: {
                    Rng pick(mix_seed(frame_seed, 0x5A12ULL));
                    const double db = snr_policy.grid_db[pick.uniform_int(
                        static_cast<std::uint32_t>(snr_policy.grid_db.size()))];
                    add_awgn(frame, db, mix_seed(frame_seed, 0x50F1ULL));
                    break;
                }
                case SnrPolicy::Kind::noiseless:
                    break;
            }
            ds.frames.push_back(std::move(frame));
        }
    }
    ds.validate();
    return ds;
}

}  // namespace modrec
