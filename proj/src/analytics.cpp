#include "bookrec/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace bookrec::stats {

const char* to_string(LanguageType t) {
    switch (t) {
        case LanguageType::Bangla: return "Bangla";
        case LanguageType::English: return "English";
        case LanguageType::Mixed: return "Mixed";
        case LanguageType::Other: return "Other";
    }
    return "?";
}

LanguageType classify_language(std::string_view text, const LanguageThresholds& th) {
    int64_t bengali = 0, latin = 0, other = 0;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t before = pos;
        auto cp = utf8_decode(text, pos);
        if (!cp) {
            pos = before + 1;
            continue;
        }
        const uint32_t c = *cp;
        if (c < 0x80) {
            if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) ++latin;
            continue;  // ASCII digits/punctuation are script-neutral
        }
        if (c >= 0x0980 && c <= 0x09FF) {
            if (c >= 0x09E6 && c <= 0x09EF) continue;  // Bangla digits
            ++bengali;
            continue;
        }
        const bool punct = (c >= 0x2000 && c <= 0x206F) || c == 0x0964 || c == 0x0965 ||
                           (c >= 0x3000 && c <= 0x303F) || c == 0x00A0;
        if (!punct) ++other;
    }
    const int64_t total = bengali + latin + other;
    if (total == 0) return LanguageType::Other;
    const double share_bn = static_cast<double>(bengali) / total;
    const double share_en = static_cast<double>(latin) / total;
    if (share_bn >= th.dominant) return LanguageType::Bangla;
    if (share_en >= th.dominant) return LanguageType::English;
    if (share_bn >= th.mixed && share_en >= th.mixed) return LanguageType::Mixed;
    return LanguageType::Other;
}

namespace {

std::vector<HistBin> make_hist(const std::vector<std::string>& labels,
                               const std::vector<int64_t>& counts) {
    int64_t total = 0;
    for (int64_t c : counts) total += c;
    std::vector<HistBin> bins;
    for (size_t i = 0; i < labels.size(); ++i) {
        HistBin b;
        b.label = labels[i];
        b.count = counts[i];
        b.percent = total > 0 ? 100.0 * counts[i] / total : 0.0;
        bins.push_back(std::move(b));
    }
    return bins;
}

}  // namespace

DatasetProfile compute_profile(const BookGraph& graph) {
    DatasetProfile profile;
    const auto& books = graph.books();
    profile.book_count = static_cast<int64_t>(books.size());
    profile.user_count = graph.num_users();
    profile.review_count = static_cast<int64_t>(graph.reviews().size());

    // metadata completeness, field list per the book attribute schema
    {
        int64_t title = 0, cat = 0, pub = 0, rating = 0, review_count = 0, pages = 0,
                isbn = 0, summary = 0;
        for (int32_t b = 0; b < graph.num_books(); ++b) {
            const auto& book = books[b];
            if (!book.title.empty()) ++title;
            if (!graph.neighbors({EntityKind::Book, b}, Relation::BookCategory).empty()) ++cat;
            if (!graph.neighbors({EntityKind::Book, b}, Relation::BookPublisher).empty()) ++pub;
            if (book.avg_rating) ++rating;
            if (book.review_count) ++review_count;
            if (book.pages) ++pages;
            if (book.isbn) ++isbn;
            if (book.summary) ++summary;
        }
        auto field = [&](const std::string& name, int64_t count) {
            HistBin b;
            b.label = name;
            b.count = count;
            b.percent = profile.book_count > 0 ? 100.0 * count / profile.book_count : 0.0;
            profile.completeness.push_back(std::move(b));
        };
        field("Title", title);
        field("Book ID", profile.book_count);
        field("Category", cat);
        field("Publisher", pub);
        field("Rating", rating);
        field("Review Count", review_count);
        field("Pages", pages);
        field("ISBN", isbn);
        field("Summary", summary);
    }

    // reviews per book -> engagement bins 0 / 1 / 2 / 3 / 4 / 5+
    {
        std::vector<int64_t> bins(6, 0);
        for (int32_t b = 0; b < graph.num_books(); ++b) {
            const auto n =
                graph.neighbors({EntityKind::Book, b}, Relation::BookReview).size();
            bins[std::min<size_t>(n, 5)]++;
        }
        profile.book_engagement =
            make_hist({"0 reviews", "1 review", "2 reviews", "3 reviews", "4 reviews",
                       "5 or more reviews"},
                      bins);
    }

    // reviews per user -> activity bins 1 / 2-4 / 5-9 / 10-19 / 20-49 / 50+
    {
        std::vector<int64_t> bins(6, 0);
        for (int32_t u = 0; u < graph.num_users(); ++u) {
            const auto n = graph.neighbors({EntityKind::User, u}, Relation::UserReview).size();
            if (n == 0) continue;
            size_t bin;
            if (n == 1)
                bin = 0;
            else if (n <= 4)
                bin = 1;
            else if (n <= 9)
                bin = 2;
            else if (n <= 19)
                bin = 3;
            else if (n <= 49)
                bin = 4;
            else
                bin = 5;
            bins[bin]++;
        }
        profile.user_activity = make_hist(
            {"1 review", "2-4 reviews", "5-9 reviews", "10-19 reviews", "20-49 reviews",
             "50 or more reviews"},
            bins);
    }

    // rating frequency: 0 stands for "no rating given"
    {
        std::vector<int64_t> bins(6, 0);
        for (const auto& r : graph.reviews()) {
            if (!r.rating) {
                bins[0]++;
                continue;
            }
            int64_t v = std::llround(*r.rating);
            v = std::clamp<int64_t>(v, 1, 5);
            bins[v]++;
        }
        profile.rating_frequency = make_hist({"0", "1", "2", "3", "4", "5"}, bins);
    }

    // review language
    {
        std::vector<int64_t> bins(4, 0);
        for (const auto& r : graph.reviews()) {
            LanguageType t =
                r.text ? classify_language(*r.text) : LanguageType::Other;
            bins[static_cast<size_t>(t)]++;
        }
        profile.language = make_hist({"Bangla", "English", "Mixed", "Other"}, bins);
    }

    // page ranges over books with a known page count
    {
        const std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> ranges = {
            {"1-100", {1, 100}},     {"101-200", {101, 200}}, {"201-300", {201, 300}},
            {"301-400", {301, 400}}, {"401-500", {401, 500}}, {"500+", {501, INT64_MAX}}};
        std::vector<int64_t> book_bins(ranges.size(), 0), review_bins(ranges.size(), 0);
        int64_t books_with_pages = 0, reviews_with_pages = 0;
        for (int32_t b = 0; b < graph.num_books(); ++b) {
            if (!books[b].pages) continue;
            const int64_t pages = *books[b].pages;
            const int64_t reviews =
                static_cast<int64_t>(graph.neighbors({EntityKind::Book, b},
                                                     Relation::BookReview).size());
            for (size_t r = 0; r < ranges.size(); ++r) {
                if (pages >= ranges[r].second.first && pages <= ranges[r].second.second) {
                    book_bins[r]++;
                    review_bins[r] += reviews;
                    break;
                }
            }
            ++books_with_pages;
            reviews_with_pages += reviews;
        }
        for (size_t r = 0; r < ranges.size(); ++r) {
            PageRow row;
            row.label = ranges[r].first;
            row.books = book_bins[r];
            row.book_percent =
                books_with_pages > 0 ? 100.0 * book_bins[r] / books_with_pages : 0.0;
            row.reviews = review_bins[r];
            row.review_percent =
                reviews_with_pages > 0 ? 100.0 * review_bins[r] / reviews_with_pages : 0.0;
            profile.page_ranges.push_back(std::move(row));
        }
    }
    return profile;
}

json DatasetProfile::to_json() const {
    auto hist = [](const std::vector<HistBin>& bins) {
        json rows = json::array();
        for (const auto& b : bins)
            rows.push_back({{"label", b.label}, {"count", b.count}, {"percent", b.percent}});
        return rows;
    };
    json pages = json::array();
    for (const auto& r : page_ranges)
        pages.push_back({{"label", r.label},
                         {"books", r.books},
                         {"book_percent", r.book_percent},
                         {"reviews", r.reviews},
                         {"review_percent", r.review_percent}});
    return {{"books", book_count},
            {"users", user_count},
            {"reviews", review_count},
            {"completeness", hist(completeness)},
            {"book_engagement", hist(book_engagement)},
            {"user_activity", hist(user_activity)},
            {"rating_frequency", hist(rating_frequency)},
            {"language", hist(language)},
            {"page_ranges", pages}};
}

std::string DatasetProfile::to_tables() const {
    std::ostringstream out;
    char buf[160];
    auto table = [&](const char* title, const char* col, const std::vector<HistBin>& bins) {
        out << title << "\n";
        std::snprintf(buf, sizeof(buf), "  %-24s %12s %10s\n", col, "Count", "%");
        out << buf;
        for (const auto& b : bins) {
            std::snprintf(buf, sizeof(buf), "  %-24s %12lld %9.1f%%\n", b.label.c_str(),
                          static_cast<long long>(b.count), b.percent);
            out << buf;
        }
        out << "\n";
    };
    table("Metadata completeness", "Field", completeness);
    table("Book interaction sparsity", "Engagement", book_engagement);
    table("User interaction sparsity", "Review activity", user_activity);
    table("Rating frequency distribution", "Rating", rating_frequency);
    table("Review language classification", "Language type", language);

    out << "Engagement by book length\n";
    std::snprintf(buf, sizeof(buf), "  %-12s %10s %9s %10s %9s\n", "Page range", "Books",
                  "Books %", "Reviews", "Reviews %");
    out << buf;
    for (const auto& r : page_ranges) {
        std::snprintf(buf, sizeof(buf), "  %-12s %10lld %8.1f%% %10lld %8.1f%%\n",
                      r.label.c_str(), static_cast<long long>(r.books), r.book_percent,
                      static_cast<long long>(r.reviews), r.review_percent);
        out << buf;
    }
    return out.str();
}

std::vector<PublisherAffinity> jaccard_affinity(const BookGraph& graph, int32_t top_n) {
    const int32_t num_publishers = graph.entity_count(EntityKind::Publisher);
    std::vector<std::set<int32_t>> authors(num_publishers);
    for (int32_t p = 0; p < num_publishers; ++p) {
        auto list = graph.neighbors({EntityKind::Publisher, p}, Relation::AuthorPublisher);
        authors[p].insert(list.begin(), list.end());
    }

    std::vector<PublisherAffinity> rows;
    for (int32_t a = 0; a < num_publishers; ++a) {
        if (authors[a].empty()) continue;
        for (int32_t b = a + 1; b < num_publishers; ++b) {
            if (authors[b].empty()) continue;
            int64_t shared = 0;
            for (int32_t author : authors[a]) shared += authors[b].count(author);
            if (shared == 0) continue;
            const int64_t unions = static_cast<int64_t>(authors[a].size()) +
                                   static_cast<int64_t>(authors[b].size()) - shared;
            PublisherAffinity row;
            row.publisher_a = a;
            row.publisher_b = b;
            row.shared_authors = shared;
            row.jaccard = static_cast<double>(shared) / static_cast<double>(unions);
            rows.push_back(row);
        }
    }
    std::sort(rows.begin(), rows.end(), [](const PublisherAffinity& x, const PublisherAffinity& y) {
        if (x.shared_authors != y.shared_authors) return x.shared_authors > y.shared_authors;
        if (x.jaccard != y.jaccard) return x.jaccard > y.jaccard;
        if (x.publisher_a != y.publisher_a) return x.publisher_a < y.publisher_a;
        return x.publisher_b < y.publisher_b;
    });
    if (top_n > 0 && static_cast<int32_t>(rows.size()) > top_n) rows.resize(top_n);
    return rows;
}

std::string affinity_table(const BookGraph& graph, const std::vector<PublisherAffinity>& rows) {
    std::ostringstream out;
    char buf[256];
    out << "Publisher affinity via shared authors\n";
    std::snprintf(buf, sizeof(buf), "  %-4s %-24s %-24s %8s %10s\n", "Rank", "Publisher 1",
                  "Publisher 2", "Shared", "Jaccard");
    out << buf;
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        std::snprintf(buf, sizeof(buf), "  %-4zu %-24s %-24s %8lld %10.3f\n", r + 1,
                      graph.publishers()[row.publisher_a].name.c_str(),
                      graph.publishers()[row.publisher_b].name.c_str(),
                      static_cast<long long>(row.shared_authors), row.jaccard);
        out << buf;
    }
    return out.str();
}

}  // namespace bookrec::stats
