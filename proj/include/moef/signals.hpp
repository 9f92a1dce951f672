#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moef {

// Occasion-signal time series: M business statistics sampled every T
// minutes, most recent N steps. Column t is the value vector at time
// end_timestamp - (N-1-t) * T * 60.
struct OccasionSignalSeries {
    std::size_t num_signals = 0; // M
    std::size_t num_steps = 0;   // N
    std::vector<double> values;  // row-major M x N
    std::vector<std::string> signal_names;
    int64_t sampling_interval_minutes = 5; // T
    int64_t end_timestamp = 0;             // epoch seconds of latest step

    double at(std::size_t signal, std::size_t step) const {
        return values[signal * num_steps + step];
    }
    double& at(std::size_t signal, std::size_t step) {
        return values[signal * num_steps + step];
    }
    int64_t step_timestamp(std::size_t step) const {
        return end_timestamp -
               static_cast<int64_t>(num_steps - 1 - step) * sampling_interval_minutes * 60;
    }
    // Trailing slice of `steps` columns ending at column `end_step` (inclusive).
    OccasionSignalSeries tail_slice(std::size_t end_step, std::size_t steps) const;
};

enum class Normalization { Zscore, Log1p, None };

Normalization normalization_from_string(const std::string& s);
std::string to_string(Normalization n);

struct WindowingConfig {
    std::size_t window_size = 24; // N_w
    std::size_t stride = 6;       // N_s
    std::size_t fft_points = 32;  // N_f, power of two, >= window_size
    Normalization normalization = Normalization::Zscore;
    bool one_sided = false; // keep only bins [0, N_f/2] when set

    void validate() const;
};

// Per-signal mean/stddev over a reference (training) period.
struct SignalStats {
    std::vector<double> mean;
    std::vector<double> stddev;

    static SignalStats compute(const OccasionSignalSeries& series);
    // Stats over columns whose timestamp is <= cutoff.
    static SignalStats compute_until(const OccasionSignalSeries& series, int64_t cutoff_timestamp);
};

// Sequence of flattened per-window spectra: L_eff rows of width M * N_f
// (or M * N_w for the time-domain variant).
struct SpectrumSequence {
    std::size_t length = 0; // L_eff
    std::size_t width = 0;  // d
    std::vector<double> values;
    std::vector<std::size_t> window_start_indices;

    const double* row(std::size_t t) const { return values.data() + t * width; }
};

// One M x N_w window per valid start: 0, N_s, 2*N_s, ...
// L_eff = floor((N - N_w) / N_s) + 1.
std::vector<std::vector<double>> slide_windows(const OccasionSignalSeries& series,
                                               const WindowingConfig& cfg);
std::size_t window_count(std::size_t num_steps, const WindowingConfig& cfg);

OccasionSignalSeries normalize(const OccasionSignalSeries& series, const SignalStats& stats,
                               Normalization mode);

// Per-row magnitude spectrum of a zero-padded window: rows x fft_points,
// all bins kept.
std::vector<double> fft_modulus(const std::vector<double>& window, std::size_t rows,
                                std::size_t window_size, std::size_t fft_points);

// normalize -> slide -> per-window FFT modulus -> row-major flatten.
SpectrumSequence build_spectrum_sequence(const OccasionSignalSeries& series,
                                         const WindowingConfig& cfg, const SignalStats& stats);

// Time-domain sibling used by the no-FFT model variant: normalize (log1p)
// -> slide -> flatten raw windows to width M * N_w.
SpectrumSequence build_window_sequence(const OccasionSignalSeries& series,
                                       const WindowingConfig& cfg, const SignalStats& stats);

// File format: header "M N T end_timestamp", then M lines "name,v1,...,vN".
OccasionSignalSeries read_signals_file(const std::string& path);
void write_signals_file(const std::string& path, const OccasionSignalSeries& series);

} // namespace moef
