#include "moef/data.hpp"

#include "moef/errors.hpp"
#include "moef/rng.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace moef {

namespace {

std::size_t sum_widths(const std::vector<FeatureField>& fields) {
    std::size_t w = 0;
    for (const auto& f : fields) w += f.width;
    return w;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int64_t parse_int(std::string_view field, const std::string& path, std::size_t line_no) {
    int64_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad integer field '" +
                        std::string(field) + "'");
    }
    return v;
}

} // namespace

std::size_t FeatureSchema::user_width() const { return sum_widths(user_features); }
std::size_t FeatureSchema::item_width() const { return sum_widths(item_features); }
std::size_t FeatureSchema::context_width() const { return sum_widths(context_features); }
std::size_t FeatureSchema::sequence_width() const { return sum_widths(item_features); }

FeatureSchema FeatureSchema::default_schema() {
    FeatureSchema s;
    const std::size_t id_buckets = 1u << 17;
    const std::size_t small_buckets = 1u << 10;
    s.user_features = {
        {"user_id", id_buckets, 8},        {"gender", small_buckets, 8},
        {"age_bucket", small_buckets, 8},  {"city_tier", small_buckets, 8},
        {"member_level", small_buckets, 8}, {"activity_level", small_buckets, 8},
    };
    s.item_features = {
        {"item_id", id_buckets, 32},
        {"category_id", id_buckets, 32},
        {"brand_id", id_buckets, 32},
    };
    s.context_features = {
        {"hour_of_day", small_buckets, 8},
        {"position", small_buckets, 8},
    };
    s.max_seq_len = 50;
    return s;
}

std::size_t hash_bucket(int64_t value, const FeatureField& field) {
    if (value < 0) return 0;
    if (field.buckets < 2) {
        throw ConfigError("feature '" + field.name + "' needs at least 2 hash buckets");
    }
    const uint64_t mixed =
        splitmix64(static_cast<uint64_t>(value) * 0x9e3779b97f4a7c15ULL ^ fnv1a(field.name));
    return 1 + static_cast<std::size_t>(mixed % (field.buckets - 1));
}

std::vector<SampleRecord> read_dataset(const std::string& path, const FeatureSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path);
    if (schema.user_features.empty() || schema.item_features.size() < 3 ||
        schema.context_features.empty()) {
        throw ConfigError("schema must declare user, item (id/category/brand) and context features");
    }
    const std::size_t n_profile = schema.user_features.size() - 1;
    const std::size_t n_context = schema.context_features.size();
    // ids(4) + profile + context + sequence + label + timestamp + snapshot
    const std::size_t n_fields = 4 + n_profile + n_context + 4;

    std::vector<SampleRecord> records;
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> fields;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        fields.clear();
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.emplace_back(line, start, tab == std::string::npos ? tab : tab - start);
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != n_fields) {
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(n_fields) + " tab-separated fields, got " +
                            std::to_string(fields.size()));
        }
        SampleRecord r;
        std::size_t f = 0;
        r.user_id = parse_int(fields[f++], path, line_no);
        r.item_id = parse_int(fields[f++], path, line_no);
        r.category_id = parse_int(fields[f++], path, line_no);
        r.brand_id = parse_int(fields[f++], path, line_no);
        r.user_profile.resize(n_profile);
        for (std::size_t i = 0; i < n_profile; ++i) {
            r.user_profile[i] = parse_int(fields[f++], path, line_no);
        }
        r.context.resize(n_context);
        for (std::size_t i = 0; i < n_context; ++i) {
            r.context[i] = parse_int(fields[f++], path, line_no);
        }
        const std::string& seq = fields[f++];
        if (!seq.empty()) {
            std::size_t pos = 0;
            while (pos < seq.size()) {
                std::size_t end = seq.find(';', pos);
                if (end == std::string::npos) end = seq.size();
                const std::string_view triple(seq.data() + pos, end - pos);
                const std::size_t c1 = triple.find(':');
                const std::size_t c2 = c1 == std::string_view::npos
                                           ? std::string_view::npos
                                           : triple.find(':', c1 + 1);
                if (c1 == std::string_view::npos || c2 == std::string_view::npos) {
                    throw DataError(path + ":" + std::to_string(line_no) +
                                    ": malformed behavior triple '" + std::string(triple) + "'");
                }
                BehaviorItem b;
                b.item_id = parse_int(triple.substr(0, c1), path, line_no);
                b.category_id = parse_int(triple.substr(c1 + 1, c2 - c1 - 1), path, line_no);
                b.brand_id = parse_int(triple.substr(c2 + 1), path, line_no);
                r.behavior.push_back(b);
                pos = end + 1;
            }
        }
        if (r.behavior.size() > schema.max_seq_len) {
            throw DataError(path + ":" + std::to_string(line_no) + ": behavior sequence of " +
                            std::to_string(r.behavior.size()) + " exceeds max_seq_len " +
                            std::to_string(schema.max_seq_len));
        }
        const int64_t label = parse_int(fields[f++], path, line_no);
        if (label != 0 && label != 1) {
            throw DataError(path + ":" + std::to_string(line_no) + ": label must be 0 or 1, got " +
                            std::to_string(label));
        }
        r.label = static_cast<int>(label);
        r.timestamp = parse_int(fields[f++], path, line_no);
        r.snapshot_id = parse_int(fields[f++], path, line_no);
        records.push_back(std::move(r));
    }
    return records;
}

void append_record(std::string& out, const SampleRecord& r) {
    out += std::to_string(r.user_id);
    out += '\t';
    out += std::to_string(r.item_id);
    out += '\t';
    out += std::to_string(r.category_id);
    out += '\t';
    out += std::to_string(r.brand_id);
    for (int64_t v : r.user_profile) {
        out += '\t';
        out += std::to_string(v);
    }
    for (int64_t v : r.context) {
        out += '\t';
        out += std::to_string(v);
    }
    out += '\t';
    for (std::size_t i = 0; i < r.behavior.size(); ++i) {
        if (i) out += ';';
        out += std::to_string(r.behavior[i].item_id);
        out += ':';
        out += std::to_string(r.behavior[i].category_id);
        out += ':';
        out += std::to_string(r.behavior[i].brand_id);
    }
    out += '\t';
    out += std::to_string(r.label);
    out += '\t';
    out += std::to_string(r.timestamp);
    out += '\t';
    out += std::to_string(r.snapshot_id);
    out += '\n';
}

void write_dataset_file(const std::string& path, const std::vector<SampleRecord>& records,
                        const FeatureSchema& schema) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file: " + path);
    const std::size_t n_profile = schema.user_features.size() - 1;
    const std::size_t n_context = schema.context_features.size();
    std::string buf;
    for (const SampleRecord& r : records) {
        if (r.user_profile.size() != n_profile || r.context.size() != n_context) {
            throw DataError("record does not match schema: " +
                            std::to_string(r.user_profile.size()) + " profile / " +
                            std::to_string(r.context.size()) + " context fields");
        }
        buf.clear();
        append_record(buf, r);
        out << buf;
    }
    if (!out) throw DataError("write failed for dataset file: " + path);
}

} // namespace moef
