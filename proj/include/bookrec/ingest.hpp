#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bookrec/graph.hpp"

namespace bookrec::ingest {

struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error(msg) {}
};

// One crawled record, already extracted from HTML into key/value form.
// Scalar payload fields hold one element; reference fields (e.g. "author_ids")
// hold the list of referenced external ids.
struct RawRecord {
    std::string source_url;
    EntityKind kind = EntityKind::Book;
    std::map<std::string, std::vector<std::string>> payload;

    const std::string* field(const std::string& key) const {
        auto it = payload.find(key);
        if (it == payload.end() || it->second.empty()) return nullptr;
        return &it->second.front();
    }
};

// "1,250" -> 1250, Bangla digits mapped to ASCII, currency marks stripped.
// Unparseable input yields nullopt.
std::optional<double> normalize_numeric(std::string_view raw);

// null -> null; <1 -> 1.0; >5 -> 5.0; otherwise unchanged.
std::optional<double> clamp_rating(std::optional<double> raw);

// NFD-normalized, trimmed, internal whitespace runs collapsed to one space.
// Throws DecodeError on invalid UTF-8.
std::string normalize_text(std::string_view raw);

// Lowercases scheme and host, strips the fragment, keeps the query.
std::string normalize_url(std::string_view url);

struct DedupResult {
    std::vector<RawRecord> kept;         // first occurrence per key, input order
    std::vector<RawRecord> dropped;      // later duplicates
    std::vector<RawRecord> quarantined;  // records lacking both URL and id
    int64_t dropped_count() const { return static_cast<int64_t>(dropped.size()); }
};

// A record is a duplicate when its normalized-URL key or its (kind, id) key
// was already seen.
DedupResult dedup_records(const std::vector<RawRecord>& records);

struct AnonymizeOptions {
    std::string prefix = "USER";
    int pad_width = 6;  // cosmetic
};

struct AnonymizeResult {
    std::vector<RawRecord> records;
    // raw user key -> issued id, in first-appearance order (a bijection)
    std::vector<std::pair<std::string, std::string>> mapping;
};

// Replaces each distinct raw user key with a sequential "USER######" id and
// drops PII payload fields (username, email, avatar_url).
AnonymizeResult anonymize_users(const std::vector<RawRecord>& records,
                                const AnonymizeOptions& opts = {});

struct LinkResult {
    std::vector<RelationEdge> edges;
    int64_t unresolved = 0;
};

// One edge per (record, referenced id) pair whose target is registered in the
// builder; unresolved references are tallied, not errors.
LinkResult link_entities(const std::vector<RawRecord>& records, const GraphBuilder& builder);

struct SplitSpec {
    double train_frac = 0.70;
    double valid_frac = 0.15;
    double test_frac = 0.15;
    uint64_t seed = 42;

    void validate() const;  // throws std::invalid_argument
};

struct InteractionSplit {
    std::vector<Interaction> train, valid, test;
    // index sets over the source list: disjoint, union covers it
    std::vector<int64_t> train_idx, valid_idx, test_idx;
};

// Seeded uniform permutation; first floor(n*train) indices go to train, the
// next floor(n*valid) to valid, the remainder to test.
InteractionSplit split_interactions(const std::vector<Interaction>& interactions,
                                    const SplitSpec& spec);

}  // namespace bookrec::ingest
