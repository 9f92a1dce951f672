#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace moef {

// One categorical feature: hashed into `buckets` rows (bucket 0 reserved
// for missing values), embedded at `width`.
struct FeatureField {
    std::string name;
    std::size_t buckets = 1024;
    std::size_t width = 8;

    bool operator==(const FeatureField&) const = default;
};

// Feature layout of a dataset. The behavior sequence embeds item-side
// fields and shares their tables with the target item.
struct FeatureSchema {
    std::vector<FeatureField> user_features;    // user_id first
    std::vector<FeatureField> item_features;    // item_id, category_id, brand_id
    std::vector<FeatureField> context_features; // hour_of_day, position
    std::size_t max_seq_len = 50;

    std::size_t user_width() const;
    std::size_t item_width() const;
    std::size_t context_width() const;
    // width of one behavior position: sum of item-feature widths
    std::size_t sequence_width() const;

    bool operator==(const FeatureSchema&) const = default;

    // Ids at 2^17 buckets / width 32 for item, category and brand; the
    // remaining categoricals at 2^10 buckets / width 8.
    static FeatureSchema default_schema();
};

struct BehaviorItem {
    int64_t item_id = -1;
    int64_t category_id = -1;
    int64_t brand_id = -1;
};

// One labeled impression.
struct SampleRecord {
    int64_t user_id = -1;
    int64_t item_id = -1;
    int64_t category_id = -1;
    int64_t brand_id = -1;
    std::vector<int64_t> user_profile; // values for user_features[1..]
    std::vector<int64_t> context;      // values for context_features
    std::vector<BehaviorItem> behavior;
    int label = 0;
    int64_t timestamp = 0;
    int64_t snapshot_id = 0;
};

// Hashing trick: value -> bucket in [1, buckets); negative values mean
// missing and map to the reserved bucket 0.
std::size_t hash_bucket(int64_t value, const FeatureField& field);

// Tab-separated dataset file, one record per line:
//   user_id item_id category_id brand_id profile.. context.. seq label ts snapshot
// seq is ";"-separated "item:category:brand" triples, empty when no history.
std::vector<SampleRecord> read_dataset(const std::string& path, const FeatureSchema& schema);
void write_dataset_file(const std::string& path, const std::vector<SampleRecord>& records,
                        const FeatureSchema& schema);
void append_record(std::string& out, const SampleRecord& r);

} // namespace moef
