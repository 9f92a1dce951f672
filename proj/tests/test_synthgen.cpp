#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "moef/errors.hpp"
#include "moef/metrics.hpp"
#include "moef/synthgen.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <filesystem>
#include <map>

using namespace moef;

namespace {

// Small fast world: 2-day horizon, one promotion, light traffic.
WorldConfig small_world(uint64_t seed = 5) {
    WorldConfig c = WorldConfig::defaults();
    c.seed = seed;
    c.num_users = 300;
    c.num_items = 120;
    c.num_categories = 12;
    c.num_brands = 20;
    c.segments = {
        {RegimeKind::Normal, 0.75, 0.0},
        {RegimeKind::PrePromo, 0.25, 0.5},
        {RegimeKind::PromoPeak, 0.5, 1.0},
        {RegimeKind::PostPromo, 0.5, 0.3},
    };
    c.split_day = 1.25;
    c.impressions_per_snapshot = 20;
    c.warmup_history_min = 3;
    c.warmup_history_max = 6;
    return c;
}

std::string temp_dir(const std::string& name) {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

} // namespace

TEST_CASE("schedule construction covers the horizon contiguously") {
    auto cfg = WorldConfig::defaults();
    auto sched = build_schedule(cfg);
    CHECK(sched.segments.size() == 8);
    CHECK(sched.segments.front().start_ts == cfg.start_timestamp);
    CHECK(sched.segments.back().end_ts == cfg.end_timestamp());
    CHECK(sched.kind_at(cfg.start_timestamp) == RegimeKind::Normal);
    // day 5.5 falls in the first promotion peak
    CHECK(sched.kind_at(cfg.start_timestamp + 5 * 86400 + 43200) == RegimeKind::PromoPeak);
    CHECK_THROWS_AS(sched.kind_at(cfg.start_timestamp - 1), DataError);
}

TEST_CASE("aligned pure-tone config puts energy only in DC and the cycle bin") {
    // cycle period 40 min = window span 160 min / 4 -> bin 4 of a 32-point
    // FFT when the window is 32 samples with no padding
    WorldConfig c = small_world();
    c.segments = {{RegimeKind::Normal, 2.0, 0.0}};
    c.split_day = 1.0;
    c.cycle_period_minutes = 40.0;
    for (auto& s : c.signals) {
        s.noise_sigma = 0.0;
        s.burst_amp = 0.0;
    }
    auto sched = build_schedule(c);
    auto series = generate_signals(sched, c);

    WindowingConfig wc;
    wc.window_size = 32;
    wc.stride = 8;
    wc.fft_points = 32;
    wc.normalization = Normalization::None;
    auto windows = slide_windows(series, wc);
    for (const auto& win : windows) {
        auto spec = fft_modulus(win, series.num_signals, 32, 32);
        for (std::size_t s = 0; s < series.num_signals; ++s) {
            for (std::size_t k = 0; k < 32; ++k) {
                const double v = spec[s * 32 + k];
                if (k == 0 || k == 4 || k == 28) continue;
                CHECK(std::abs(v) < 1e-9);
            }
            CHECK(spec[s * 32 + 4] > 1.0); // the tone is present
        }
    }
}

TEST_CASE("identical seeds give bitwise-identical series and streams") {
    auto cfg = small_world(11);
    auto sched = build_schedule(cfg);
    auto s1 = generate_signals(sched, cfg);
    auto s2 = generate_signals(sched, cfg);
    REQUIRE(s1.values.size() == s2.values.size());
    for (std::size_t i = 0; i < s1.values.size(); ++i) CHECK(s1.values[i] == s2.values[i]);

    auto i1 = generate_interactions(sched, cfg, s1);
    auto i2 = generate_interactions(sched, cfg, s2);
    REQUIRE(i1.records.size() == i2.records.size());
    for (std::size_t i = 0; i < i1.records.size(); ++i) {
        CHECK(i1.records[i].user_id == i2.records[i].user_id);
        CHECK(i1.records[i].item_id == i2.records[i].item_id);
        CHECK(i1.records[i].label == i2.records[i].label);
        CHECK(i1.records[i].timestamp == i2.records[i].timestamp);
        CHECK(i1.true_p[i] == i2.true_p[i]);
    }
}

TEST_CASE("promo windows carry more burst-frequency energy than normal windows") {
    WorldConfig c = small_world(7);
    for (auto& s : c.signals) s.noise_sigma = 0.0;
    auto sched = build_schedule(c);
    auto series = generate_signals(sched, c);

    WindowingConfig wc; // defaults: 24/6/32
    // burst period 40 min at T=5 -> 8 samples per cycle; 24-sample window
    // padded to 32 concentrates energy near bin 32*5/40 = 4
    auto windows = slide_windows(series, wc);
    const std::size_t n_win = windows.size();
    double promo_energy = 0.0, normal_energy = 0.0;
    std::size_t promo_n = 0, normal_n = 0;
    for (std::size_t w = 0; w < n_win; ++w) {
        const std::size_t start = w * wc.stride;
        const int64_t mid_ts = series.step_timestamp(start + wc.window_size / 2);
        const RegimeKind kind = sched.kind_at(mid_ts);
        if (kind != RegimeKind::Normal && kind != RegimeKind::PromoPeak) continue;
        // skip windows that straddle a segment boundary
        if (sched.kind_at(series.step_timestamp(start)) !=
            sched.kind_at(series.step_timestamp(start + wc.window_size - 1))) {
            continue;
        }
        auto spec = fft_modulus(windows[w], series.num_signals, wc.window_size, wc.fft_points);
        double e = 0.0;
        for (std::size_t s = 0; s < series.num_signals; ++s) {
            for (std::size_t k = 3; k <= 5; ++k) e += spec[s * 32 + k];
        }
        if (kind == RegimeKind::PromoPeak) {
            promo_energy += e;
            ++promo_n;
        } else {
            normal_energy += e;
            ++normal_n;
        }
    }
    REQUIRE(promo_n > 0);
    REQUIRE(normal_n > 0);
    CHECK(promo_energy / promo_n > normal_energy / normal_n);
}

TEST_CASE("identity preference rotation keeps per-category CTR regime-independent") {
    WorldConfig c = WorldConfig::defaults();
    c.seed = 31;
    c.num_users = 2000;
    c.num_items = 400;
    c.num_categories = 20;
    c.rotation_angle_deg = 0.0; // identity rotation
    c.promo_gain = 1.0;
    c.impressions_per_snapshot = 180; // ~100k records over the horizon
    auto sched = build_schedule(c);
    auto series = generate_signals(sched, c);
    auto stream = generate_interactions(sched, c, series);
    REQUIRE(stream.records.size() > 90000);

    // per-category chi-square of click counts across the four regime kinds,
    // pooled into one statistic
    std::map<int64_t, std::array<std::array<double, 2>, 4>> table;
    for (const auto& r : stream.records) {
        const auto kind = static_cast<std::size_t>(sched.kind_at(r.timestamp));
        table[r.category_id][kind][static_cast<std::size_t>(r.label)] += 1.0;
    }
    double stat = 0.0;
    double dof = 0.0;
    for (const auto& [cat, cells] : table) {
        double row_total[4] = {0, 0, 0, 0};
        double col_total[2] = {0, 0};
        double total = 0.0;
        for (int k = 0; k < 4; ++k) {
            for (int y = 0; y < 2; ++y) {
                row_total[k] += cells[k][y];
                col_total[y] += cells[k][y];
                total += cells[k][y];
            }
        }
        if (total < 200.0) continue;
        int active_rows = 0;
        for (int k = 0; k < 4; ++k) {
            if (row_total[k] >= 20.0) ++active_rows;
        }
        if (active_rows < 2 || col_total[0] == 0.0 || col_total[1] == 0.0) continue;
        for (int k = 0; k < 4; ++k) {
            if (row_total[k] < 20.0) continue;
            for (int y = 0; y < 2; ++y) {
                const double expected = row_total[k] * col_total[y] / total;
                if (expected > 0.0) {
                    const double d = cells[k][y] - expected;
                    stat += d * d / expected;
                }
            }
        }
        dof += static_cast<double>(active_rows - 1);
    }
    REQUIRE(dof > 0.0);
    const double pvalue = oracle::chi_square_pvalue(stat, dof);
    CHECK(pvalue > 0.01);
}

TEST_CASE("distinct promo preferences shift the clicked-category entropy") {
    WorldConfig c = WorldConfig::defaults();
    c.seed = 13;
    c.num_users = 2000;
    c.num_items = 400;
    c.num_categories = 20;
    c.impressions_per_snapshot = 180;
    auto sched = build_schedule(c);
    auto series = generate_signals(sched, c);
    auto stream = generate_interactions(sched, c, series);
    REQUIRE(stream.records.size() > 90000);

    std::vector<std::size_t> promo_counts(c.num_categories, 0), normal_counts(c.num_categories, 0);
    for (const auto& r : stream.records) {
        if (r.label != 1) continue;
        const RegimeKind k = sched.kind_at(r.timestamp);
        if (k == RegimeKind::PromoPeak) {
            promo_counts[static_cast<std::size_t>(r.category_id)]++;
        } else if (k == RegimeKind::Normal) {
            normal_counts[static_cast<std::size_t>(r.category_id)]++;
        }
    }
    const double h_promo = category_entropy(promo_counts);
    const double h_normal = category_entropy(normal_counts);
    CHECK(std::abs(h_promo - h_normal) > 0.05);
}

TEST_CASE("records carry valid fields and snapshot binding") {
    auto cfg = small_world(17);
    auto sched = build_schedule(cfg);
    auto series = generate_signals(sched, cfg);
    auto stream = generate_interactions(sched, cfg, series);
    REQUIRE(!stream.records.empty());

    const int64_t step = cfg.sampling_interval_minutes * 60;
    for (std::size_t i = 0; i < stream.records.size(); ++i) {
        const auto& r = stream.records[i];
        CHECK((r.label == 0 || r.label == 1));
        CHECK(r.behavior.size() <= cfg.max_history);
        CHECK(r.timestamp >= cfg.start_timestamp);
        CHECK(r.timestamp < cfg.end_timestamp());
        CHECK(stream.true_p[i] > 0.0);
        CHECK(stream.true_p[i] < 1.0);
        // snapshot column covers the record's serving moment
        const int64_t snap_ts =
            cfg.start_timestamp + r.snapshot_id * step;
        CHECK(r.timestamp <= snap_ts);
        CHECK(r.timestamp > snap_ts - static_cast<int64_t>(cfg.snapshot_stride) * step);
        if (i > 0) CHECK(stream.records[i - 1].timestamp <= r.timestamp);
    }
}

TEST_CASE("dataset writing: split, conservation, ordering, round trip") {
    auto cfg = small_world(23);
    auto sched = build_schedule(cfg);
    auto series = generate_signals(sched, cfg);
    auto stream = generate_interactions(sched, cfg, series);

    const std::string dir = temp_dir("moef_synth_write");
    auto files = DatasetFiles::in_dir(dir);
    auto schema = FeatureSchema::default_schema();
    auto rep = write_dataset(stream, cfg.split_timestamp(), files, cfg, sched, series, schema);

    CHECK(rep.train_count + rep.val_count == stream.records.size());
    CHECK(rep.train_count > 0);
    CHECK(rep.val_count > 0);
    CHECK_FALSE(rep.empty_split_warning);
    CHECK(rep.val_ceiling > 0.5);

    auto train = read_dataset(files.train, schema);
    auto val = read_dataset(files.validation, schema);
    CHECK(train.size() == rep.train_count);
    CHECK(val.size() == rep.val_count);
    int64_t max_train_ts = 0;
    for (const auto& r : train) max_train_ts = std::max(max_train_ts, r.timestamp);
    int64_t min_val_ts = val.front().timestamp;
    for (const auto& r : val) min_val_ts = std::min(min_val_ts, r.timestamp);
    CHECK(max_train_ts < min_val_ts); // leak-free temporal split

    // full TSV round trip on a prefix
    for (std::size_t i = 0; i < std::min<std::size_t>(50, train.size()); ++i) {
        const auto& a = stream.records[i];
        const auto& b = train[i];
        CHECK(a.user_id == b.user_id);
        CHECK(a.item_id == b.item_id);
        CHECK(a.behavior.size() == b.behavior.size());
        for (std::size_t p = 0; p < a.behavior.size(); ++p) {
            CHECK(a.behavior[p].item_id == b.behavior[p].item_id);
            CHECK(a.behavior[p].category_id == b.behavior[p].category_id);
            CHECK(a.behavior[p].brand_id == b.behavior[p].brand_id);
        }
        CHECK(a.label == b.label);
        CHECK(a.timestamp == b.timestamp);
        CHECK(a.snapshot_id == b.snapshot_id);
    }

    // manifest round trip
    auto m = read_manifest(files.manifest);
    CHECK(m.split_timestamp == cfg.split_timestamp());
    CHECK(m.report.train_count == rep.train_count);
    CHECK(m.world.num_users == cfg.num_users);
    CHECK(m.schedule.segments.size() == sched.segments.size());

    // same seed -> identical files
    const std::string dir2 = temp_dir("moef_synth_write2");
    auto files2 = DatasetFiles::in_dir(dir2);
    write_dataset(stream, cfg.split_timestamp(), files2, cfg, sched, series, schema);
    CHECK(oracle::file_hash(files.train) == oracle::file_hash(files2.train));
    CHECK(oracle::file_hash(files.validation) == oracle::file_hash(files2.validation));
    CHECK(oracle::file_hash(files.signals) == oracle::file_hash(files2.signals));
}

TEST_CASE("degenerate splits are valid but flagged") {
    auto cfg = small_world(29);
    auto sched = build_schedule(cfg);
    auto series = generate_signals(sched, cfg);
    auto stream = generate_interactions(sched, cfg, series);
    const std::string dir = temp_dir("moef_synth_degenerate");
    auto schema = FeatureSchema::default_schema();
    // split at the horizon end: everything lands in train
    auto rep = write_dataset(stream, cfg.end_timestamp(), DatasetFiles::in_dir(dir), cfg, sched,
                             series, schema);
    CHECK(rep.val_count == 0);
    CHECK(rep.empty_split_warning);
    CHECK(std::isnan(rep.val_ceiling));

    CHECK_THROWS_AS(write_dataset(stream, cfg.start_timestamp - 999,
                                  DatasetFiles::in_dir(dir), cfg, sched, series, schema),
                    ConfigError);
}

TEST_CASE("too-short horizon is rejected") {
    auto cfg = small_world();
    cfg.segments = {{RegimeKind::Normal, 0.1, 0.0}}; // 28 columns < 96
    auto sched = build_schedule(cfg);
    CHECK_THROWS_AS(generate_signals(sched, cfg), ConfigError);
}

TEST_CASE("auc and entropy metric spot values") {
    CHECK(auc({1, 0}, {0.9, 0.1}) == 1.0);
    CHECK(auc({1, 1, 0, 0}, {0.8, 0.4, 0.6, 0.2}) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(auc({1, 0, 1, 0}, {0.5, 0.5, 0.5, 0.5}) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(auc({1, 1}, {0.3, 0.4}), ContractError);

    CHECK(category_entropy({10}) == 0.0);
    CHECK(category_entropy({5, 5, 5, 5}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(category_entropy({2, 1, 1}) == doctest::Approx(1.039721).epsilon(1e-5));
    CHECK_THROWS_AS(category_entropy({0, 0}), ContractError);
}
