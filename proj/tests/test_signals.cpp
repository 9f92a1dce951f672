#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "moef/errors.hpp"
#include "moef/rng.hpp"
#include "moef/signals.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace moef;

namespace {

OccasionSignalSeries make_series(std::size_t m, std::size_t n, double fill = 0.0) {
    OccasionSignalSeries s;
    s.num_signals = m;
    s.num_steps = n;
    s.values.assign(m * n, fill);
    for (std::size_t i = 0; i < m; ++i) s.signal_names.push_back("sig" + std::to_string(i));
    s.sampling_interval_minutes = 5;
    s.end_timestamp = 1600000000;
    return s;
}

WindowingConfig cfg(std::size_t nw, std::size_t ns, std::size_t nf,
                    Normalization norm = Normalization::None) {
    WindowingConfig c;
    c.window_size = nw;
    c.stride = ns;
    c.fft_points = nf;
    c.normalization = norm;
    return c;
}

} // namespace

TEST_CASE("window count and starts for the default layout") {
    auto s = make_series(1, 96);
    auto windows = slide_windows(s, cfg(24, 6, 32));
    REQUIRE(windows.size() == 13);
    CHECK(window_count(96, cfg(24, 6, 32)) == 13);

    // exact tiling
    CHECK(slide_windows(make_series(1, 12), cfg(4, 4, 4)).size() == 3);
    // single window when N == N_w
    CHECK(slide_windows(make_series(2, 24), cfg(24, 6, 32)).size() == 1);
}

TEST_CASE("windows are exact slices of the series") {
    Rng rng(2);
    auto s = make_series(3, 96);
    for (double& v : s.values) v = rng.uniform(0.0, 10.0);
    auto c = cfg(24, 6, 32);
    auto windows = slide_windows(s, c);
    for (std::size_t w = 0; w < windows.size(); ++w) {
        const std::size_t start = w * c.stride;
        for (std::size_t sig = 0; sig < 3; ++sig) {
            for (std::size_t t = 0; t < c.window_size; ++t) {
                CHECK(windows[w][sig * c.window_size + t] == s.at(sig, start + t));
            }
        }
    }
}

TEST_CASE("insufficient history raises a data error") {
    auto s = make_series(1, 12);
    CHECK_THROWS_AS(slide_windows(s, cfg(24, 6, 32)), DataError);
}

TEST_CASE("bad fft configuration raises a config error") {
    auto s = make_series(1, 48);
    CHECK_THROWS_AS(slide_windows(s, cfg(24, 6, 31)), ConfigError); // not a power of two
    CHECK_THROWS_AS(slide_windows(s, cfg(24, 6, 16)), ConfigError); // fewer points than window
    CHECK_THROWS_AS(fft_modulus(std::vector<double>(24, 0.0), 1, 24, 31), ConfigError);
}

TEST_CASE("normalization modes") {
    auto s = make_series(2, 10, 7.0);
    auto stats = SignalStats::compute(s);
    auto z = normalize(s, stats, Normalization::Zscore);
    for (double v : z.values) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

    auto s2 = make_series(1, 4, 0.0);
    s2.at(0, 1) = std::exp(1.0) - 1.0;
    auto l = normalize(s2, stats, Normalization::Log1p);
    CHECK(l.at(0, 0) == 0.0);
    CHECK(l.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));

    auto s3 = make_series(1, 4, 1.0);
    s3.at(0, 2) = -0.5;
    try {
        normalize(s3, stats, Normalization::Log1p);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("sig0") != std::string::npos);
        CHECK(msg.find("2") != std::string::npos);
    }
}

TEST_CASE("fft spot cases") {
    // all-zero window -> all-zero spectrum
    auto zero = fft_modulus(std::vector<double>(24, 0.0), 1, 24, 32);
    for (double v : zero) CHECK(v == 0.0);

    // constant c over a full 32-sample window: DC bin = 32c, others 0
    const double c = 1.75;
    auto dc = fft_modulus(std::vector<double>(32, c), 1, 32, 32);
    CHECK(std::abs(dc[0] - 32.0 * c) < 1e-9);
    for (std::size_t k = 1; k < 32; ++k) CHECK(std::abs(dc[k]) < 1e-9);

    // cosine at bin 4: bins 4 and 28 equal N/2 = 16
    std::vector<double> cosine(32);
    for (std::size_t t = 0; t < 32; ++t)
        cosine[t] = std::cos(2.0 * M_PI * 4.0 * static_cast<double>(t) / 32.0);
    auto spec = fft_modulus(cosine, 1, 32, 32);
    auto ref = oracle::dft_modulus(cosine, 32);
    for (std::size_t k = 0; k < 32; ++k) {
        CHECK(std::abs(spec[k] - ref[k]) < 1e-9);
        if (k == 4 || k == 28) CHECK(std::abs(spec[k] - 16.0) < 1e-9);
        else CHECK(std::abs(spec[k]) < 1e-9);
    }
}

TEST_CASE("fft matches the direct DFT oracle on random windows") {
    Rng rng(7);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> window = oracle::random_vector(rng, 24, -5.0, 5.0);
        auto fast = fft_modulus(window, 1, 24, 32);
        auto ref = oracle::dft_modulus(window, 32);
        for (std::size_t k = 0; k < 32; ++k) CHECK(std::abs(fast[k] - ref[k]) < 1e-9);
    }
}

TEST_CASE("Parseval identity for zero-padded input") {
    Rng rng(13);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> window = oracle::random_vector(rng, 24, -3.0, 3.0);
        auto spec = fft_modulus(window, 1, 24, 32);
        double lhs = 0.0;
        for (double v : spec) lhs += v * v;
        double rhs = 0.0;
        for (double v : window) rhs += v * v;
        rhs *= 32.0;
        CHECK(std::abs(lhs - rhs) / rhs < 1e-9);
    }
}

TEST_CASE("conjugate symmetry of real input") {
    Rng rng(19);
    std::vector<double> window = oracle::random_vector(rng, 24, -2.0, 2.0);
    auto spec = fft_modulus(window, 1, 24, 32);
    for (std::size_t k = 1; k < 32; ++k) {
        CHECK(std::abs(spec[k] - spec[32 - k]) < 1e-12);
    }
}

TEST_CASE("time shift by whole periods leaves window spectra unchanged") {
    // periodic signal with period 12 samples
    const std::size_t period = 12;
    auto make_periodic = [&](std::size_t shift) {
        auto s = make_series(1, 96);
        for (std::size_t t = 0; t < 96; ++t) {
            const double ph = 2.0 * M_PI * static_cast<double>((t + shift) % period) /
                              static_cast<double>(period);
            s.at(0, t) = 3.0 + std::sin(ph) + 0.5 * std::cos(2.0 * ph);
        }
        return s;
    };
    auto c = cfg(24, 6, 32);
    SignalStats stats;
    stats.mean = {0.0};
    stats.stddev = {1.0};
    auto a = build_spectrum_sequence(make_periodic(0), c, stats);
    auto b = build_spectrum_sequence(make_periodic(2 * period), c, stats);
    REQUIRE(a.values.size() == b.values.size());
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(std::abs(a.values[i] - b.values[i]) < 1e-9);
    }
}

TEST_CASE("spectrum sequence shapes") {
    auto s = make_series(2, 96, 1.0);
    auto stats = SignalStats::compute(s);
    auto seq = build_spectrum_sequence(s, cfg(24, 6, 32, Normalization::Zscore), stats);
    CHECK(seq.length == 13);
    CHECK(seq.width == 64);
    CHECK(seq.window_start_indices.front() == 0);
    CHECK(seq.window_start_indices.back() == 72);

    auto s1 = make_series(1, 24);
    auto seq1 = build_spectrum_sequence(s1, cfg(24, 6, 32), SignalStats::compute(s1));
    CHECK(seq1.length == 1);
    CHECK(seq1.width == 32);

    // zero series -> zero matrix
    auto zs = make_series(2, 96, 0.0);
    auto zseq = build_spectrum_sequence(zs, cfg(24, 6, 32), SignalStats::compute(zs));
    for (double v : zseq.values) CHECK(v == 0.0);

    // magnitudes are non-negative
    Rng rng(3);
    auto rs = make_series(2, 96);
    for (double& v : rs.values) v = rng.uniform(0.0, 100.0);
    auto rseq = build_spectrum_sequence(rs, cfg(24, 6, 32, Normalization::Zscore),
                                        SignalStats::compute(rs));
    for (double v : rseq.values) CHECK(v >= 0.0);
}

TEST_CASE("one-sided option halves the spectrum width") {
    auto s = make_series(2, 96, 1.0);
    auto c = cfg(24, 6, 32);
    c.one_sided = true;
    auto seq = build_spectrum_sequence(s, c, SignalStats::compute(s));
    CHECK(seq.width == 2 * (32 / 2 + 1));
}

TEST_CASE("time-domain window sequence for the no-FFT path") {
    auto s = make_series(2, 96, 2.0);
    auto seq = build_window_sequence(s, cfg(24, 6, 32, Normalization::Log1p),
                                     SignalStats::compute(s));
    CHECK(seq.length == 13);
    CHECK(seq.width == 2 * 24);
    for (double v : seq.values) CHECK(v == doctest::Approx(std::log1p(2.0)).epsilon(1e-12));
}

TEST_CASE("signals file round trip and malformed input") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "moef_signals_test";
    fs::create_directories(dir);
    const std::string path = (dir / "signals.csv").string();

    Rng rng(5);
    auto s = make_series(3, 48);
    for (double& v : s.values) v = rng.uniform(0.0, 500.0);
    write_signals_file(path, s);
    auto r = read_signals_file(path);
    CHECK(r.num_signals == 3);
    CHECK(r.num_steps == 48);
    CHECK(r.end_timestamp == s.end_timestamp);
    CHECK(r.sampling_interval_minutes == 5);
    CHECK(r.signal_names == s.signal_names);
    for (std::size_t i = 0; i < s.values.size(); ++i) CHECK(r.values[i] == s.values[i]);

    const std::string bad = (dir / "bad.csv").string();
    {
        std::FILE* f = std::fopen(bad.c_str(), "w");
        std::fputs("2 4 5\n", f); // header too short
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_signals_file(bad), DataError);
    CHECK_THROWS_AS(read_signals_file((dir / "missing.csv").string()), DataError);
}

TEST_CASE("series slicing by snapshot column") {
    auto s = make_series(2, 50);
    for (std::size_t sig = 0; sig < 2; ++sig)
        for (std::size_t t = 0; t < 50; ++t) s.at(sig, t) = static_cast<double>(100 * sig + t);
    auto sl = s.tail_slice(40, 10);
    CHECK(sl.num_steps == 10);
    CHECK(sl.at(0, 0) == 31.0);
    CHECK(sl.at(0, 9) == 40.0);
    CHECK(sl.at(1, 9) == 140.0);
    CHECK(sl.end_timestamp == s.step_timestamp(40));
    CHECK_THROWS_AS(s.tail_slice(60, 10), DataError);
    CHECK_THROWS_AS(s.tail_slice(5, 10), DataError);
}
