#pragma once

// Dataset profiling: completeness, interaction sparsity, rating distribution,
// review-language classification, publisher affinity.

#include <nlohmann/json.hpp>

#include "bookrec/graph.hpp"

namespace bookrec::stats {

using json = nlohmann::json;

struct HistBin {
    std::string label;
    int64_t count = 0;
    double percent = 0.0;
};

struct PageRow {
    std::string label;
    int64_t books = 0;
    double book_percent = 0.0;
    int64_t reviews = 0;
    double review_percent = 0.0;
};

struct DatasetProfile {
    int64_t book_count = 0;
    int64_t user_count = 0;
    int64_t review_count = 0;

    std::vector<HistBin> completeness;      // per metadata field, percent of books
    std::vector<HistBin> book_engagement;   // 0 / 1 / 2 / 3 / 4 / 5+
    std::vector<HistBin> user_activity;     // 1 / 2-4 / 5-9 / 10-19 / 20-49 / 50+
    std::vector<HistBin> rating_frequency;  // 0 (unrated) .. 5
    std::vector<HistBin> language;          // Bangla / English / Mixed / Other
    std::vector<PageRow> page_ranges;       // 1-100 .. 500+

    json to_json() const;
    std::string to_tables() const;
};

DatasetProfile compute_profile(const BookGraph& graph);

enum class LanguageType { Bangla, English, Mixed, Other };
const char* to_string(LanguageType t);

struct LanguageThresholds {
    double dominant = 0.9;  // single-script share for Bangla/English
    double mixed = 0.1;     // both-script floor for Mixed
};

// Script shares are computed over letters only; digits and punctuation are
// script-neutral. Empty or symbol-only text classifies as Other.
LanguageType classify_language(std::string_view text, const LanguageThresholds& th = {});

struct PublisherAffinity {
    int32_t publisher_a = -1;
    int32_t publisher_b = -1;
    int64_t shared_authors = 0;
    double jaccard = 0.0;
};

// Publisher pairs by Jaccard similarity of their author sets, ranked by shared
// count then similarity; pairs with no shared author are excluded.
std::vector<PublisherAffinity> jaccard_affinity(const BookGraph& graph, int32_t top_n);

std::string affinity_table(const BookGraph& graph, const std::vector<PublisherAffinity>& rows);

}  // namespace bookrec::stats
