#include "hutk/dsp.hpp"

#include <algorithm>
#include <cmath>

#include "hutk/io.hpp"

namespace hutk {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Delta coefficients by +-2 frame linear regression with edge repetition.
Tensor<double> delta_features(const Tensor<double>& x) {
    const int64_t t = x.shape[0];
    const int64_t d = x.shape[1];
    Tensor<double> out = Tensor<double>::zeros({t, d});
    const double denom = 10.0;  // 2 * (1^2 + 2^2)
    auto clampi = [t](int64_t i) { return std::clamp<int64_t>(i, 0, t - 1); };
    for (int64_t i = 0; i < t; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            double acc = 0.0;
            for (int64_t n = 1; n <= 2; ++n) {
                acc += static_cast<double>(n) * (x.at(clampi(i + n), j) - x.at(clampi(i - n), j));
            }
            out.at(i, j) = acc / denom;
        }
    }
    return out;
}

}  // namespace

int64_t frame_count(int64_t n_samples, int win, int hop) {
    if (n_samples < win) {
        return 0;
    }
    return 1 + (n_samples - win) / hop;
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
    }
    return w;
}

Tensor<double> frame_signal(const Waveform& w, const DspConfig& cfg) {
    require(w.sample_rate == 16000, ErrorCode::UnsupportedSampleRate,
            "expected 16000 Hz, got " + std::to_string(w.sample_rate));
    const int win = cfg.win_samples(w.sample_rate);
    const int hop = cfg.hop_samples(w.sample_rate);
    const int64_t t = frame_count(static_cast<int64_t>(w.samples.size()), win, hop);
    const std::vector<double> window = hann_window(win);
    Tensor<double> out = Tensor<double>::zeros({t, win});
    for (int64_t i = 0; i < t; ++i) {
        const float* src = w.samples.data() + i * hop;
        for (int j = 0; j < win; ++j) {
            out.at(i, j) = static_cast<double>(src[j]) * window[static_cast<size_t>(j)];
        }
    }
    return out;
}

void fft_inplace(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    require(n > 0 && (n & (n - 1)) == 0, ErrorCode::BadConfig, "FFT length must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(a[i], a[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const std::complex<double> u = a[i + j];
                const std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<double> power_spectrum(const double* window, int64_t len, int n_fft) {
    require(len <= n_fft, ErrorCode::BadConfig, "window longer than n_fft");
    std::vector<std::complex<double>> a(static_cast<size_t>(n_fft), {0.0, 0.0});
    for (int64_t i = 0; i < len; ++i) {
        a[static_cast<size_t>(i)] = {window[i], 0.0};
    }
    fft_inplace(a);
    std::vector<double> p(static_cast<size_t>(n_fft / 2 + 1));
    for (size_t k = 0; k < p.size(); ++k) {
        p[k] = std::norm(a[k]);
    }
    return p;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin, double fmax) {
    const int bins = n_fft / 2 + 1;
    const double mel_lo = hz_to_mel(fmin);
    const double mel_hi = hz_to_mel(fmax);
    std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
    for (int m = 0; m < n_mels + 2; ++m) {
        edges[static_cast<size_t>(m)] =
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
    }
    Tensor<double> bank = Tensor<double>::zeros({n_mels, bins});
    for (int m = 0; m < n_mels; ++m) {
        const double left = edges[static_cast<size_t>(m)];
        const double center = edges[static_cast<size_t>(m) + 1];
        const double right = edges[static_cast<size_t>(m) + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * sample_rate / n_fft;
            double w = 0.0;
            if (f >= left && f <= center) {
                w = (f - left) / (center - left);
            } else if (f > center && f <= right) {
                w = (right - f) / (right - center);
            }
            bank.at(m, k) = w;
        }
    }
    return bank;
}

Tensor<double> dct2_orthonormal(int n_out, int n_in) {
    Tensor<double> m = Tensor<double>::zeros({n_out, n_in});
    for (int k = 0; k < n_out; ++k) {
        const double scale = (k == 0) ? std::sqrt(1.0 / n_in) : std::sqrt(2.0 / n_in);
        for (int n = 0; n < n_in; ++n) {
            m.at(k, n) = scale * std::cos(kPi * k * (n + 0.5) / n_in);
        }
    }
    return m;
}

Tensor<double> mfcc_coeffs(const Waveform& w, const DspConfig& cfg) {
    const Tensor<double> frames = frame_signal(w, cfg);
    const int64_t t = frames.shape[0];
    const int win = cfg.win_samples(w.sample_rate);
    const Tensor<double> bank =
        mel_filterbank(cfg.n_mels, cfg.n_fft, w.sample_rate, 0.0, w.sample_rate / 2.0);
    const Tensor<double> dct = dct2_orthonormal(cfg.n_mfcc, cfg.n_mels);
    const int bins = cfg.n_fft / 2 + 1;

    Tensor<double> coeffs = Tensor<double>::zeros({t, cfg.n_mfcc});
    std::vector<double> logmel(static_cast<size_t>(cfg.n_mels));
    for (int64_t i = 0; i < t; ++i) {
        const std::vector<double> p = power_spectrum(frames.data.data() + i * win, win, cfg.n_fft);
        for (int m = 0; m < cfg.n_mels; ++m) {
            double e = 0.0;
            for (int k = 0; k < bins; ++k) {
                e += bank.at(m, k) * p[static_cast<size_t>(k)];
            }
            logmel[static_cast<size_t>(m)] = std::log(std::max(e, cfg.log_floor));
        }
        for (int k = 0; k < cfg.n_mfcc; ++k) {
            double acc = 0.0;
            for (int m = 0; m < cfg.n_mels; ++m) {
                acc += dct.at(k, m) * logmel[static_cast<size_t>(m)];
            }
            coeffs.at(i, k) = acc;
        }
    }
    return coeffs;
}

FeatureSequence mfcc(const Waveform& w, const DspConfig& cfg) {
    const Tensor<double> coeffs = mfcc_coeffs(w, cfg);
    const int64_t t = coeffs.shape[0];
    const int d = cfg.feature_dim();
    Tensor<float> out = Tensor<float>::zeros({t, d});
    if (cfg.deltas) {
        const Tensor<double> d1 = delta_features(coeffs);
        const Tensor<double> d2 = delta_features(d1);
        for (int64_t i = 0; i < t; ++i) {
            for (int j = 0; j < cfg.n_mfcc; ++j) {
                out.at(i, j) = static_cast<float>(coeffs.at(i, j));
                out.at(i, cfg.n_mfcc + j) = static_cast<float>(d1.at(i, j));
                out.at(i, 2 * cfg.n_mfcc + j) = static_cast<float>(d2.at(i, j));
            }
        }
    } else {
        for (int64_t i = 0; i < t; ++i) {
            for (int j = 0; j < cfg.n_mfcc; ++j) {
                out.at(i, j) = static_cast<float>(coeffs.at(i, j));
            }
        }
    }
    FeatureSequence f;
    f.frames = std::move(out);
    f.frame_rate_hz = 1000.0 / cfg.hop_ms;
    f.source = FeatureSource::mfcc;
    return f;
}

void write_features(const std::string& path, const FeatureSequence& f) {
    require(f.frames.rank() == 2, ErrorCode::ShapeMismatch, "feature matrix must be rank 2");
    BinWriter out(path);
    out.magic("FEA1");
    out.u32(static_cast<uint32_t>(f.frames.shape[0]));
    out.u32(static_cast<uint32_t>(f.frames.shape[1]));
    out.f32_array(f.frames.data.data(), f.frames.data.size());
    out.close();
}

FeatureSequence read_features(const std::string& path) {
    BinReader in(path, ErrorCode::Malformed);
    require(in.magic() == "FEA1", ErrorCode::VersionMismatch, "bad feature file magic: " + path);
    const int64_t t = in.u32();
    const int64_t d = in.u32();
    FeatureSequence f;
    f.frames = Tensor<float>::zeros({t, d});
    in.f32_array(f.frames.data.data(), f.frames.data.size());
    f.frame_rate_hz = 100.0;
    f.source = FeatureSource::mfcc;
    return f;
}

}  // namespace hutk
