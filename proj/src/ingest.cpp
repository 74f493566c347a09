#include "bookrec/ingest.hpp"

#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <unordered_set>

namespace bookrec::ingest {

std::optional<double> normalize_numeric(std::string_view raw) {
    auto cps = utf8_decode_all(raw);
    if (!cps) return std::nullopt;

    std::string cleaned;
    cleaned.reserve(raw.size());
    for (uint32_t cp : *cps) {
        if (cp >= 0x09E6 && cp <= 0x09EF) {  // Bangla digits
            cleaned.push_back(static_cast<char>('0' + (cp - 0x09E6)));
            continue;
        }
        switch (cp) {
            case ',':  // thousands separator
            case ' ':
            case '\t':
            case 0x09F3:  // Bangla taka sign
            case '$':
            case 0x20AC:  // euro
            case 0x00A3:  // pound
            case 0x20B9:  // rupee
                continue;
            default: break;
        }
        if (cp < 0x80) {
            cleaned.push_back(static_cast<char>(cp));
        } else {
            return std::nullopt;  // any other non-ASCII character is not numeric
        }
    }
    if (cleaned.empty()) return std::nullopt;

    errno = 0;
    char* end = nullptr;
    double value = std::strtod(cleaned.c_str(), &end);
    if (end != cleaned.c_str() + cleaned.size() || errno == ERANGE) return std::nullopt;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

std::optional<double> clamp_rating(std::optional<double> raw) {
    if (!raw) return std::nullopt;
    return std::clamp(*raw, 1.0, 5.0);
}

std::string normalize_text(std::string_view raw) {
    if (!utf8_decode_all(raw)) throw DecodeError("normalize_text: invalid UTF-8 input");

    UErrorCode ec = U_ZERO_ERROR;
    const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(ec);
    if (U_FAILURE(ec)) throw std::runtime_error("ICU NFD instance unavailable");

    icu::UnicodeString u = icu::UnicodeString::fromUTF8(
        icu::StringPiece(raw.data(), static_cast<int32_t>(raw.size())));
    icu::UnicodeString normalized = nfd->normalize(u, ec);
    if (U_FAILURE(ec)) throw DecodeError("normalize_text: normalization failed");

    std::string nfd_utf8;
    normalized.toUTF8String(nfd_utf8);

    // trim + collapse whitespace runs
    std::string out;
    out.reserve(nfd_utf8.size());
    bool in_space = false;
    for (char c : nfd_utf8) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    return out;
}

std::string normalize_url(std::string_view url) {
    std::string s(url);
    if (auto frag = s.find('#'); frag != std::string::npos) s.erase(frag);

    auto scheme_end = s.find("://");
    if (scheme_end == std::string::npos) return s;

    for (size_t i = 0; i < scheme_end; ++i) s[i] = static_cast<char>(std::tolower(
        static_cast<unsigned char>(s[i])));

    size_t host_start = scheme_end + 3;
    size_t host_end = s.find_first_of("/?", host_start);
    if (host_end == std::string::npos) host_end = s.size();
    for (size_t i = host_start; i < host_end; ++i)
        s[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(s[i])));
    return s;
}

DedupResult dedup_records(const std::vector<RawRecord>& records) {
    DedupResult result;
    std::unordered_set<uint64_t> seen_urls;
    std::unordered_set<std::string> seen_ids;

    for (const auto& rec : records) {
        const std::string* id = rec.field("id");
        const bool has_url = !rec.source_url.empty();
        if (!has_url && !id) {
            result.quarantined.push_back(rec);
            continue;
        }
        bool duplicate = false;
        uint64_t url_key = 0;
        std::string id_key;
        if (has_url) {
            url_key = fnv1a64(normalize_url(rec.source_url));
            duplicate |= seen_urls.contains(url_key);
        }
        if (id) {
            id_key = std::string(to_string(rec.kind)) + ":" + *id;
            duplicate |= seen_ids.contains(id_key);
        }
        if (duplicate) {
            result.dropped.push_back(rec);
            continue;
        }
        if (has_url) seen_urls.insert(url_key);
        if (id) seen_ids.insert(id_key);
        result.kept.push_back(rec);
    }
    return result;
}

namespace {
const char* kPiiFields[] = {"username", "email", "avatar_url"};
}

AnonymizeResult anonymize_users(const std::vector<RawRecord>& records,
                                const AnonymizeOptions& opts) {
    AnonymizeResult result;
    result.records.reserve(records.size());
    std::unordered_map<std::string, std::string> issued;

    for (const auto& rec : records) {
        RawRecord out = rec;
        const std::string* raw_key = out.field("user_id");
        if (!raw_key) raw_key = out.field("username");
        if (raw_key) {
            auto it = issued.find(*raw_key);
            if (it == issued.end()) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%0*llu", opts.pad_width,
                              static_cast<unsigned long long>(issued.size() + 1));
                std::string anon = opts.prefix + buf;
                it = issued.emplace(*raw_key, anon).first;
                result.mapping.emplace_back(*raw_key, anon);
            }
            out.payload["user_id"] = {it->second};
        }
        for (const char* f : kPiiFields) out.payload.erase(f);
        result.records.push_back(std::move(out));
    }
    return result;
}

namespace {

struct RefRule {
    EntityKind record_kind;
    const char* field;       // plural list form
    const char* field_alt;   // singular alias
    Relation relation;
    bool record_is_src;      // whether the record's entity is the edge src
    EntityKind target_kind;
};

const RefRule kRefRules[] = {
    {EntityKind::Book, "author_ids", "author_id", Relation::BookAuthor, true, EntityKind::Author},
    {EntityKind::Book, "publisher_ids", "publisher_id", Relation::BookPublisher, true,
     EntityKind::Publisher},
    {EntityKind::Book, "category_ids", "category_id", Relation::BookCategory, true,
     EntityKind::Category},
    {EntityKind::Author, "category_ids", "category_id", Relation::AuthorCategory, true,
     EntityKind::Category},
    {EntityKind::Author, "publisher_ids", "publisher_id", Relation::AuthorPublisher, true,
     EntityKind::Publisher},
    {EntityKind::Publisher, "category_ids", "category_id", Relation::PublisherCategory, true,
     EntityKind::Category},
    {EntityKind::Review, "user_ids", "user_id", Relation::UserReview, false, EntityKind::User},
    {EntityKind::Review, "book_ids", "book_id", Relation::BookReview, false, EntityKind::Book},
};

}  // namespace

LinkResult link_entities(const std::vector<RawRecord>& records, const GraphBuilder& builder) {
    LinkResult result;
    for (const auto& rec : records) {
        const std::string* id = rec.field("id");
        if (!id) continue;
        const int32_t self = builder.index_of(rec.kind, *id);
        if (self < 0) continue;

        for (const auto& rule : kRefRules) {
            if (rule.record_kind != rec.kind) continue;
            const std::vector<std::string>* refs = nullptr;
            if (auto it = rec.payload.find(rule.field); it != rec.payload.end())
                refs = &it->second;
            else if (auto it2 = rec.payload.find(rule.field_alt); it2 != rec.payload.end())
                refs = &it2->second;
            if (!refs) continue;

            for (const auto& target_id : *refs) {
                const int32_t target = builder.index_of(rule.target_kind, target_id);
                if (target < 0) {
                    ++result.unresolved;
                    continue;
                }
                if (rule.record_is_src)
                    result.edges.push_back({rule.relation, self, target});
                else
                    result.edges.push_back({rule.relation, target, self});
            }
        }
    }
    return result;
}

void SplitSpec::validate() const {
    auto in_open_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_open_unit(train_frac) || !in_open_unit(valid_frac) || !in_open_unit(test_frac))
        throw std::invalid_argument("split fractions must lie in (0,1)");
    if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("split fractions must sum to 1");
}

InteractionSplit split_interactions(const std::vector<Interaction>& interactions,
                                    const SplitSpec& spec) {
    spec.validate();
    const int64_t n = static_cast<int64_t>(interactions.size());
    if (n == 0) throw std::invalid_argument("split_interactions: empty interaction list");

    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(spec.seed);
    rng.shuffle(perm);

    const int64_t n_train = static_cast<int64_t>(std::floor(n * spec.train_frac));
    const int64_t n_valid = static_cast<int64_t>(std::floor(n * spec.valid_frac));

    InteractionSplit split;
    split.train_idx.assign(perm.begin(), perm.begin() + n_train);
    split.valid_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_valid);
    split.test_idx.assign(perm.begin() + n_train + n_valid, perm.end());

    // Materialize in source order so chronological structure survives the split.
    for (auto* idx : {&split.train_idx, &split.valid_idx, &split.test_idx})
        std::sort(idx->begin(), idx->end());
    for (int64_t i : split.train_idx) split.train.push_back(interactions[i]);
    for (int64_t i : split.valid_idx) split.valid.push_back(interactions[i]);
    for (int64_t i : split.test_idx) split.test.push_back(interactions[i]);
    return split;
}

}  // namespace bookrec::ingest
