#pragma once

// Small shared model/data fixtures for the unit suites. Widths are scaled
// far down so finite-difference sweeps stay fast.

#include "moef/data.hpp"
#include "moef/harness.hpp"
#include "moef/mixture.hpp"
#include "moef/rng.hpp"
#include "moef/signals.hpp"

#include <vector>

namespace fixtures {

inline moef::FeatureSchema tiny_schema() {
    return moef::tiny_gradcheck_config().schema;
}

inline moef::ExpertSizes tiny_sizes() {
    return moef::tiny_gradcheck_config().expert_sizes;
}

inline moef::ModelConfig tiny_config(moef::ModelVariant v = moef::ModelVariant::Full) {
    return moef::tiny_gradcheck_config(v);
}

inline moef::OccasionSignalSeries tiny_series(moef::Rng& rng, std::size_t m = 2,
                                              std::size_t n = 32) {
    moef::OccasionSignalSeries s;
    s.num_signals = m;
    s.num_steps = n;
    s.sampling_interval_minutes = 5;
    s.end_timestamp = 1700000000;
    for (std::size_t i = 0; i < m; ++i) s.signal_names.push_back("sig" + std::to_string(i));
    s.values.resize(m * n);
    for (double& v : s.values) v = rng.uniform(10.0, 100.0);
    return s;
}

inline std::vector<moef::SampleRecord> tiny_batch(moef::Rng& rng, std::size_t count,
                                                  int64_t timestamp = 1699999000) {
    std::vector<moef::SampleRecord> batch(count);
    for (std::size_t i = 0; i < count; ++i) {
        moef::SampleRecord& r = batch[i];
        r.user_id = static_cast<int64_t>(rng.below(500));
        r.item_id = static_cast<int64_t>(rng.below(300));
        r.category_id = static_cast<int64_t>(rng.below(20));
        r.brand_id = static_cast<int64_t>(rng.below(40));
        r.user_profile = {static_cast<int64_t>(rng.below(3))};
        r.context = {static_cast<int64_t>(rng.below(24)), static_cast<int64_t>(rng.below(8))};
        const std::size_t len = rng.below(4); // 0..3
        for (std::size_t p = 0; p < len; ++p) {
            moef::BehaviorItem bi;
            bi.item_id = static_cast<int64_t>(rng.below(300));
            bi.category_id = static_cast<int64_t>(rng.below(20));
            bi.brand_id = static_cast<int64_t>(rng.below(40));
            r.behavior.push_back(bi);
        }
        r.label = rng.uniform() < 0.4 ? 1 : 0;
        r.timestamp = timestamp;
        r.snapshot_id = 31;
    }
    return batch;
}

} // namespace fixtures
