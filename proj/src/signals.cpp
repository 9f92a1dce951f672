#include "moef/signals.hpp"

#include "moef/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <sstream>

namespace moef {

namespace {

constexpr double kStdEps = 1e-8;

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place, n a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

} // namespace

OccasionSignalSeries OccasionSignalSeries::tail_slice(std::size_t end_step,
                                                      std::size_t steps) const {
    if (end_step >= num_steps || steps == 0 || steps > end_step + 1) {
        throw DataError("signal series slice [" + std::to_string(steps) + " steps ending at " +
                        std::to_string(end_step) + "] out of range for series of length " +
                        std::to_string(num_steps));
    }
    OccasionSignalSeries out;
    out.num_signals = num_signals;
    out.num_steps = steps;
    out.signal_names = signal_names;
    out.sampling_interval_minutes = sampling_interval_minutes;
    out.end_timestamp = step_timestamp(end_step);
    out.values.resize(num_signals * steps);
    const std::size_t begin = end_step + 1 - steps;
    for (std::size_t s = 0; s < num_signals; ++s) {
        for (std::size_t t = 0; t < steps; ++t) out.values[s * steps + t] = at(s, begin + t);
    }
    return out;
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "zscore") return Normalization::Zscore;
    if (s == "log1p") return Normalization::Log1p;
    if (s == "none") return Normalization::None;
    throw ConfigError("unknown normalization mode '" + s + "' (expected zscore|log1p|none)");
}

std::string to_string(Normalization n) {
    switch (n) {
        case Normalization::Zscore: return "zscore";
        case Normalization::Log1p: return "log1p";
        case Normalization::None: return "none";
    }
    return "?";
}

void WindowingConfig::validate() const {
    if (window_size == 0 || stride == 0) {
        throw ConfigError("windowing: window_size and stride must be positive");
    }
    if (!is_power_of_two(fft_points)) {
        throw ConfigError("windowing: fft_points " + std::to_string(fft_points) +
                          " is not a power of two");
    }
    if (fft_points < window_size) {
        throw ConfigError("windowing: fft_points " + std::to_string(fft_points) +
                          " < window_size " + std::to_string(window_size));
    }
}

SignalStats SignalStats::compute(const OccasionSignalSeries& series) {
    return compute_until(series, series.end_timestamp);
}

SignalStats SignalStats::compute_until(const OccasionSignalSeries& series,
                                       int64_t cutoff_timestamp) {
    std::size_t steps = 0;
    for (std::size_t t = 0; t < series.num_steps; ++t) {
        if (series.step_timestamp(t) <= cutoff_timestamp) steps = t + 1;
    }
    if (steps == 0) {
        throw DataError("signal stats: no series columns at or before cutoff timestamp " +
                        std::to_string(cutoff_timestamp));
    }
    SignalStats stats;
    stats.mean.resize(series.num_signals);
    stats.stddev.resize(series.num_signals);
    for (std::size_t s = 0; s < series.num_signals; ++s) {
        double mu = 0.0;
        for (std::size_t t = 0; t < steps; ++t) mu += series.at(s, t);
        mu /= static_cast<double>(steps);
        double var = 0.0;
        for (std::size_t t = 0; t < steps; ++t) {
            const double d = series.at(s, t) - mu;
            var += d * d;
        }
        var /= static_cast<double>(steps);
        stats.mean[s] = mu;
        stats.stddev[s] = std::sqrt(var);
    }
    return stats;
}

std::size_t window_count(std::size_t num_steps, const WindowingConfig& cfg) {
    if (num_steps < cfg.window_size) {
        throw DataError("insufficient history: series has " + std::to_string(num_steps) +
                        " steps, window needs " + std::to_string(cfg.window_size));
    }
    return (num_steps - cfg.window_size) / cfg.stride + 1;
}

std::vector<std::vector<double>> slide_windows(const OccasionSignalSeries& series,
                                               const WindowingConfig& cfg) {
    cfg.validate();
    const std::size_t count = window_count(series.num_steps, cfg);
    std::vector<std::vector<double>> windows;
    windows.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * cfg.stride;
        std::vector<double> win(series.num_signals * cfg.window_size);
        for (std::size_t s = 0; s < series.num_signals; ++s) {
            for (std::size_t t = 0; t < cfg.window_size; ++t) {
                win[s * cfg.window_size + t] = series.at(s, start + t);
            }
        }
        windows.push_back(std::move(win));
    }
    return windows;
}

OccasionSignalSeries normalize(const OccasionSignalSeries& series, const SignalStats& stats,
                               Normalization mode) {
    OccasionSignalSeries out = series;
    switch (mode) {
        case Normalization::None:
            break;
        case Normalization::Zscore: {
            if (stats.mean.size() != series.num_signals) {
                throw DataError("normalize: stats cover " + std::to_string(stats.mean.size()) +
                                " signals, series has " + std::to_string(series.num_signals));
            }
            for (std::size_t s = 0; s < series.num_signals; ++s) {
                const double mu = stats.mean[s];
                const double inv = 1.0 / (stats.stddev[s] + kStdEps);
                for (std::size_t t = 0; t < series.num_steps; ++t) {
                    out.at(s, t) = (series.at(s, t) - mu) * inv;
                }
            }
            break;
        }
        case Normalization::Log1p: {
            for (std::size_t s = 0; s < series.num_signals; ++s) {
                for (std::size_t t = 0; t < series.num_steps; ++t) {
                    const double v = series.at(s, t);
                    if (v < 0.0) {
                        const std::string name = s < series.signal_names.size()
                                                     ? series.signal_names[s]
                                                     : std::to_string(s);
                        throw DataError("normalize: log1p on negative value " +
                                        std::to_string(v) + " in signal '" + name +
                                        "' at step " + std::to_string(t));
                    }
                    out.at(s, t) = std::log1p(v);
                }
            }
            break;
        }
    }
    return out;
}

std::vector<double> fft_modulus(const std::vector<double>& window, std::size_t rows,
                                std::size_t window_size, std::size_t fft_points) {
    if (!is_power_of_two(fft_points) || fft_points < window_size) {
        throw ConfigError("fft_modulus: fft_points " + std::to_string(fft_points) +
                          " must be a power of two >= window_size " +
                          std::to_string(window_size));
    }
    if (window.size() != rows * window_size) {
        throw DimensionError("fft_modulus: window has " + std::to_string(window.size()) +
                             " values, expected " + std::to_string(rows * window_size));
    }
    std::vector<double> out(rows * fft_points);
    std::vector<std::complex<double>> buf(fft_points);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < window_size; ++t) {
            buf[t] = std::complex<double>(window[r * window_size + t], 0.0);
        }
        // zero-pad on the right up to fft_points
        for (std::size_t t = window_size; t < fft_points; ++t) buf[t] = {0.0, 0.0};
        fft_radix2(buf);
        for (std::size_t k = 0; k < fft_points; ++k) out[r * fft_points + k] = std::abs(buf[k]);
    }
    return out;
}

namespace {

SpectrumSequence build_sequence(const OccasionSignalSeries& series, const WindowingConfig& cfg,
                                const SignalStats& stats, bool apply_fft,
                                Normalization mode) {
    cfg.validate();
    const OccasionSignalSeries norm = normalize(series, stats, mode);
    const auto windows = slide_windows(norm, cfg);

    const std::size_t bins = cfg.one_sided && apply_fft ? cfg.fft_points / 2 + 1 : cfg.fft_points;
    SpectrumSequence seq;
    seq.length = windows.size();
    seq.width = series.num_signals * (apply_fft ? bins : cfg.window_size);
    seq.values.reserve(seq.length * seq.width);
    seq.window_start_indices.resize(seq.length);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        seq.window_start_indices[w] = w * cfg.stride;
        if (apply_fft) {
            const auto spec =
                fft_modulus(windows[w], series.num_signals, cfg.window_size, cfg.fft_points);
            if (cfg.one_sided) {
                for (std::size_t s = 0; s < series.num_signals; ++s) {
                    for (std::size_t k = 0; k < bins; ++k) {
                        seq.values.push_back(spec[s * cfg.fft_points + k]);
                    }
                }
            } else {
                seq.values.insert(seq.values.end(), spec.begin(), spec.end());
            }
        } else {
            seq.values.insert(seq.values.end(), windows[w].begin(), windows[w].end());
        }
    }
    return seq;
}

} // namespace

SpectrumSequence build_spectrum_sequence(const OccasionSignalSeries& series,
                                         const WindowingConfig& cfg, const SignalStats& stats) {
    return build_sequence(series, cfg, stats, /*apply_fft=*/true, cfg.normalization);
}

SpectrumSequence build_window_sequence(const OccasionSignalSeries& series,
                                       const WindowingConfig& cfg, const SignalStats& stats) {
    return build_sequence(series, cfg, stats, /*apply_fft=*/false, cfg.normalization);
}

OccasionSignalSeries read_signals_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open signals file: " + path);
    OccasionSignalSeries series;
    std::string header;
    if (!std::getline(in, header)) throw DataError("signals file is empty: " + path);
    {
        std::istringstream hs(header);
        long long m = 0, n = 0, t = 0, end_ts = 0;
        if (!(hs >> m >> n >> t >> end_ts) || m <= 0 || n <= 0 || t <= 0) {
            throw DataError("malformed signals header '" + header + "' in " + path);
        }
        series.num_signals = static_cast<std::size_t>(m);
        series.num_steps = static_cast<std::size_t>(n);
        series.sampling_interval_minutes = t;
        series.end_timestamp = end_ts;
    }
    series.values.resize(series.num_signals * series.num_steps);
    series.signal_names.resize(series.num_signals);
    for (std::size_t s = 0; s < series.num_signals; ++s) {
        std::string line;
        if (!std::getline(in, line)) {
            throw DataError("signals file " + path + " truncated at signal " + std::to_string(s));
        }
        std::istringstream ls(line);
        std::string field;
        if (!std::getline(ls, field, ',')) {
            throw DataError("signals file " + path + ": missing name on signal line " +
                            std::to_string(s));
        }
        series.signal_names[s] = field;
        for (std::size_t t = 0; t < series.num_steps; ++t) {
            if (!std::getline(ls, field, ',')) {
                throw DataError("signals file " + path + ": signal '" + series.signal_names[s] +
                                "' has fewer than " + std::to_string(series.num_steps) +
                                " values");
            }
            try {
                series.at(s, t) = std::stod(field);
            } catch (const std::exception&) {
                throw DataError("signals file " + path + ": bad value '" + field +
                                "' in signal '" + series.signal_names[s] + "'");
            }
        }
        if (std::getline(ls, field, ',')) {
            throw DataError("signals file " + path + ": signal '" + series.signal_names[s] +
                            "' has more than " + std::to_string(series.num_steps) + " values");
        }
    }
    return series;
}

void write_signals_file(const std::string& path, const OccasionSignalSeries& series) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write signals file: " + path);
    out << series.num_signals << ' ' << series.num_steps << ' '
        << series.sampling_interval_minutes << ' ' << series.end_timestamp << '\n';
    out.precision(17);
    for (std::size_t s = 0; s < series.num_signals; ++s) {
        out << (s < series.signal_names.size() ? series.signal_names[s]
                                               : "signal_" + std::to_string(s));
        for (std::size_t t = 0; t < series.num_steps; ++t) out << ',' << series.at(s, t);
        out << '\n';
    }
    if (!out) throw DataError("write failed for signals file: " + path);
}

} // namespace moef
