#pragma once

#include <complex>
#include <string>
#include <vector>

#include "hutk/tensor.hpp"
#include "hutk/wav.hpp"

namespace hutk {

struct DspConfig {
    int win_ms = 25;
    int hop_ms = 10;
    int n_fft = 512;
    int n_mels = 26;
    int n_mfcc = 13;
    bool deltas = true;
    double log_floor = 1e-10;

    int win_samples(int sample_rate) const { return sample_rate * win_ms / 1000; }
    int hop_samples(int sample_rate) const { return sample_rate * hop_ms / 1000; }
    int feature_dim() const { return deltas ? 3 * n_mfcc : n_mfcc; }
};

enum class FeatureSource { mfcc, hidden };

struct FeatureSequence {
    Tensor<float> frames;  // T x D
    double frame_rate_hz = 0.0;
    FeatureSource source = FeatureSource::mfcc;
};

int64_t frame_count(int64_t n_samples, int win, int hop);

std::vector<double> hann_window(int n);

// Windowed frames, T x win. Zero frames for inputs shorter than one window.
Tensor<double> frame_signal(const Waveform& w, const DspConfig& cfg);

// In-place radix-2 FFT; the length must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a);

// Zero-pads to n_fft and returns |DFT_k|^2 for k in [0, n_fft/2].
std::vector<double> power_spectrum(const double* window, int64_t len, int n_fft);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular mel filterbank, n_mels x (n_fft/2+1), HTK scale, peak weight 1.
Tensor<double> mel_filterbank(int n_mels, int n_fft, int sample_rate, double fmin, double fmax);

// Orthonormal DCT-II matrix, n_out x n_in.
Tensor<double> dct2_orthonormal(int n_out, int n_in);

// Cepstral coefficients at full precision, T x n_mfcc: frame, power
// spectrum, mel energies, log with floor, DCT.
Tensor<double> mfcc_coeffs(const Waveform& w, const DspConfig& cfg);

// Full MFCC pipeline at 100 Hz: mfcc_coeffs plus optional delta and
// delta-delta appendage, cast to f32.
FeatureSequence mfcc(const Waveform& w, const DspConfig& cfg);

void write_features(const std::string& path, const FeatureSequence& f);
FeatureSequence read_features(const std::string& path);

}  // namespace hutk
