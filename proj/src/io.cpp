#include "bookrec/io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace bookrec::io {

namespace fs = std::filesystem;

namespace {

template <typename T>
json opt_json(const std::optional<T>& v) {
    if (!v) return nullptr;
    return *v;
}

template <typename T>
std::optional<T> json_opt(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<T>();
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    return in;
}

json book_to_json(const Book& b) {
    return json{{"id", b.ext_id},
                {"title", b.title},
                {"summary", opt_json(b.summary)},
                {"isbn", opt_json(b.isbn)},
                {"avg_rating", opt_json(b.avg_rating)},
                {"rating_count", opt_json(b.rating_count)},
                {"review_count", opt_json(b.review_count)},
                {"pages", opt_json(b.pages)},
                {"price", opt_json(b.price)}};
}

Book book_from_json(const json& j) {
    Book b;
    b.ext_id = j.at("id").get<std::string>();
    b.title = j.value("title", "");
    b.summary = json_opt<std::string>(j, "summary");
    b.isbn = json_opt<std::string>(j, "isbn");
    b.avg_rating = json_opt<double>(j, "avg_rating");
    b.rating_count = json_opt<int64_t>(j, "rating_count");
    b.review_count = json_opt<int64_t>(j, "review_count");
    b.pages = json_opt<int64_t>(j, "pages");
    b.price = json_opt<double>(j, "price");
    return b;
}

json author_to_json(const Author& a) {
    return json{{"id", a.ext_id},
                {"name", a.name},
                {"biography", opt_json(a.biography)},
                {"follower_count", opt_json(a.follower_count)}};
}

Author author_from_json(const json& j) {
    Author a;
    a.ext_id = j.at("id").get<std::string>();
    a.name = j.value("name", "");
    a.biography = json_opt<std::string>(j, "biography");
    a.follower_count = json_opt<int64_t>(j, "follower_count");
    return a;
}

json category_to_json(const Category& c) {
    return json{{"id", c.ext_id},
                {"name", c.name},
                {"description", opt_json(c.description)},
                {"total_book_count", opt_json(c.total_book_count)}};
}

Category category_from_json(const json& j) {
    Category c;
    c.ext_id = j.at("id").get<std::string>();
    c.name = j.value("name", "");
    c.description = json_opt<std::string>(j, "description");
    c.total_book_count = json_opt<int64_t>(j, "total_book_count");
    return c;
}

json publisher_to_json(const Publisher& p) {
    return json{{"id", p.ext_id},
                {"name", p.name},
                {"description", opt_json(p.description)},
                {"total_author_count", opt_json(p.total_author_count)},
                {"total_book_count", opt_json(p.total_book_count)}};
}

Publisher publisher_from_json(const json& j) {
    Publisher p;
    p.ext_id = j.at("id").get<std::string>();
    p.name = j.value("name", "");
    p.description = json_opt<std::string>(j, "description");
    p.total_author_count = json_opt<int64_t>(j, "total_author_count");
    p.total_book_count = json_opt<int64_t>(j, "total_book_count");
    return p;
}

json review_to_json(const Review& r) {
    return json{{"id", r.ext_id},
                {"rating", opt_json(r.rating)},
                {"text", opt_json(r.text)},
                {"date", opt_json(r.date)},
                {"upvotes", r.upvotes},
                {"downvotes", r.downvotes},
                {"verified", r.verified}};
}

Review review_from_json(const json& j) {
    Review r;
    r.ext_id = j.at("id").get<std::string>();
    r.rating = json_opt<double>(j, "rating");
    r.text = json_opt<std::string>(j, "text");
    r.date = json_opt<int64_t>(j, "date");
    r.upvotes = j.value("upvotes", int64_t{0});
    r.downvotes = j.value("downvotes", int64_t{0});
    r.verified = j.value("verified", false);
    return r;
}

template <typename T, typename Fn>
void write_jsonl(const fs::path& path, const std::vector<T>& rows, Fn to_json_fn) {
    auto out = open_out(path);
    for (const auto& row : rows) out << to_json_fn(row).dump() << "\n";
}

std::vector<json> read_jsonl(const fs::path& path) {
    std::vector<json> rows;
    if (!fs::exists(path)) return rows;
    auto in = open_in(path);
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": invalid JSON");
        rows.push_back(std::move(j));
    }
    return rows;
}

}  // namespace

void write_graph(const BookGraph& graph, const fs::path& dir) {
    fs::create_directories(dir);
    write_jsonl(dir / "books.jsonl", graph.books(), book_to_json);
    write_jsonl(dir / "authors.jsonl", graph.authors(), author_to_json);
    write_jsonl(dir / "categories.jsonl", graph.categories(), category_to_json);
    write_jsonl(dir / "publishers.jsonl", graph.publishers(), publisher_to_json);
    write_jsonl(dir / "reviews.jsonl", graph.reviews(), review_to_json);

    {
        auto out = open_out(dir / "users.jsonl");
        for (const auto& uid : graph.user_ids()) out << json{{"id", uid}}.dump() << "\n";
    }

    for (int ri = 0; ri < kNumRelations; ++ri) {
        auto rel = static_cast<Relation>(ri);
        auto [src_kind, dst_kind] = relation_endpoints(rel);
        auto out = open_out(dir / (std::string("edges_") + to_string(rel) + ".jsonl"));
        for (const auto& e : graph.edges(rel)) {
            out << json{{"relation", to_string(rel)},
                        {"src", graph.ext_id_of(src_kind, e.src)},
                        {"dst", graph.ext_id_of(dst_kind, e.dst)}}
                       .dump()
                << "\n";
        }
    }
}

BookGraph load_graph(const fs::path& dir) {
    GraphBuilder builder;
    for (const auto& j : read_jsonl(dir / "books.jsonl")) builder.add_book(book_from_json(j));
    for (const auto& j : read_jsonl(dir / "authors.jsonl"))
        builder.add_author(author_from_json(j));
    for (const auto& j : read_jsonl(dir / "categories.jsonl"))
        builder.add_category(category_from_json(j));
    for (const auto& j : read_jsonl(dir / "publishers.jsonl"))
        builder.add_publisher(publisher_from_json(j));
    for (const auto& j : read_jsonl(dir / "reviews.jsonl"))
        builder.add_review(review_from_json(j));
    for (const auto& j : read_jsonl(dir / "users.jsonl"))
        builder.add_user(j.at("id").get<std::string>());

    for (int ri = 0; ri < kNumRelations; ++ri) {
        auto rel = static_cast<Relation>(ri);
        auto [src_kind, dst_kind] = relation_endpoints(rel);
        fs::path path = dir / (std::string("edges_") + to_string(rel) + ".jsonl");
        for (const auto& j : read_jsonl(path)) {
            auto declared = relation_from_string(j.at("relation").get<std::string>());
            if (!declared || *declared != rel)
                throw ValidationError(path.string() + ": relation mismatch in edge record");
            // Unknown endpoints become dangling (-1) edges so validate_graph can
            // report them instead of silently dropping.
            int32_t src = builder.index_of(src_kind, j.at("src").get<std::string>());
            int32_t dst = builder.index_of(dst_kind, j.at("dst").get<std::string>());
            builder.add_edge(rel, src, dst);
        }
    }
    return builder.build();
}

void write_interactions_tsv(const fs::path& path, const std::vector<Interaction>& interactions,
                            const BookGraph& graph) {
    auto out = open_out(path);
    out << "user\tbook\tweight\ttimestamp\trating\tverified\n";
    char buf[64];
    for (const auto& it : interactions) {
        out << graph.user_ids().at(it.user) << "\t"
            << graph.books().at(it.book).ext_id << "\t";
        std::snprintf(buf, sizeof(buf), "%.6g", it.weight);
        out << buf << "\t";
        if (it.timestamp) out << *it.timestamp;
        out << "\t";
        if (it.rating) {
            std::snprintf(buf, sizeof(buf), "%.6g", *it.rating);
            out << buf;
        }
        out << "\t" << (it.verified ? "true" : "false") << "\n";
    }
}

void write_split(const fs::path& path, const ingest::SplitSpec& spec,
                 const ingest::InteractionSplit& split) {
    json j{{"spec",
            {{"train_frac", spec.train_frac},
             {"valid_frac", spec.valid_frac},
             {"test_frac", spec.test_frac},
             {"seed", spec.seed}}},
           {"train", split.train_idx},
           {"valid", split.valid_idx},
           {"test", split.test_idx}};
    auto out = open_out(path);
    out << j.dump(2) << "\n";
}

ingest::InteractionSplit load_split(const fs::path& path,
                                    const std::vector<Interaction>& interactions,
                                    ingest::SplitSpec* spec_out) {
    auto in = open_in(path);
    json j = json::parse(in);
    ingest::InteractionSplit split;
    split.train_idx = j.at("train").get<std::vector<int64_t>>();
    split.valid_idx = j.at("valid").get<std::vector<int64_t>>();
    split.test_idx = j.at("test").get<std::vector<int64_t>>();
    auto materialize = [&](const std::vector<int64_t>& idx, std::vector<Interaction>& out) {
        out.reserve(idx.size());
        for (int64_t i : idx) {
            if (i < 0 || i >= static_cast<int64_t>(interactions.size()))
                throw ValidationError("split index out of range: " + std::to_string(i));
            out.push_back(interactions[i]);
        }
    };
    materialize(split.train_idx, split.train);
    materialize(split.valid_idx, split.valid);
    materialize(split.test_idx, split.test);
    if (spec_out) {
        const auto& s = j.at("spec");
        spec_out->train_frac = s.at("train_frac").get<double>();
        spec_out->valid_frac = s.at("valid_frac").get<double>();
        spec_out->test_frac = s.at("test_frac").get<double>();
        spec_out->seed = s.at("seed").get<uint64_t>();
    }
    return split;
}

ingest::RawRecord parse_raw_record(const std::string& line) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("raw record is not a JSON object");

    ingest::RawRecord rec;
    rec.source_url = j.value("source_url", "");
    auto kind = entity_kind_from_string(j.value("kind", ""));
    if (!kind) throw ValidationError("raw record has unknown kind");
    rec.kind = *kind;

    auto payload_it = j.find("payload");
    if (payload_it == j.end() || !payload_it->is_object())
        throw ValidationError("raw record lacks a payload object");
    for (auto& [key, value] : payload_it->items()) {
        std::vector<std::string> values;
        if (value.is_string()) {
            values.push_back(value.get<std::string>());
        } else if (value.is_array()) {
            for (const auto& v : value) {
                if (!v.is_string()) throw ValidationError("payload array values must be strings");
                values.push_back(v.get<std::string>());
            }
        } else if (value.is_number() || value.is_boolean()) {
            values.push_back(value.dump());
        } else if (value.is_null()) {
            continue;
        } else {
            throw ValidationError("unsupported payload value for key " + key);
        }
        rec.payload.emplace(key, std::move(values));
    }
    return rec;
}

RawLoadResult load_raw_dir(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("raw directory does not exist: " + dir.string());

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    RawLoadResult result;
    for (const auto& file : files) {
        auto in = open_in(file);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            try {
                result.records.push_back(parse_raw_record(line));
            } catch (const ValidationError&) {
                ++result.parse_errors;
            }
        }
    }
    return result;
}

json IngestReport::to_json() const {
    return json{{"records_read", records_read},
                {"parse_errors", parse_errors},
                {"duplicates_by_kind", duplicates_by_kind},
                {"duplicates_total", duplicates_total},
                {"quarantined", quarantined},
                {"unresolved_refs", unresolved_refs},
                {"entities", entity_counts},
                {"edges", edge_counts},
                {"interactions", interactions},
                {"interaction_skips", interaction_skips},
                {"violations", violations}};
}

namespace {

std::optional<double> payload_numeric(const ingest::RawRecord& rec, const char* key) {
    const std::string* raw = rec.field(key);
    if (!raw) return std::nullopt;
    return ingest::normalize_numeric(*raw);
}

std::optional<int64_t> payload_count(const ingest::RawRecord& rec, const char* key) {
    auto v = payload_numeric(rec, key);
    if (!v || *v < 0) return std::nullopt;
    return static_cast<int64_t>(std::llround(*v));
}

std::optional<std::string> payload_text(const ingest::RawRecord& rec, const char* key) {
    const std::string* raw = rec.field(key);
    if (!raw) return std::nullopt;
    return ingest::normalize_text(*raw);
}

bool payload_bool(const ingest::RawRecord& rec, const char* key) {
    const std::string* raw = rec.field(key);
    if (!raw) return false;
    return *raw == "true" || *raw == "1" || *raw == "yes";
}

// Review ratings of exactly 0 mean "no rating given" upstream; everything else
// is clamped into [1,5].
std::optional<double> review_rating(const ingest::RawRecord& rec) {
    auto v = payload_numeric(rec, "rating");
    if (!v || *v == 0.0) return std::nullopt;
    return ingest::clamp_rating(v);
}

}  // namespace

IngestOutput run_ingest(const std::vector<ingest::RawRecord>& records,
                        const IngestOptions& opts) {
    IngestOutput out;
    IngestReport& report = out.report;
    report.records_read = static_cast<int64_t>(records.size());

    auto dedup = ingest::dedup_records(records);
    report.quarantined = static_cast<int64_t>(dedup.quarantined.size());
    report.duplicates_total = dedup.dropped_count();
    for (const auto& rec : dedup.dropped) ++report.duplicates_by_kind[to_string(rec.kind)];

    auto anon = ingest::anonymize_users(dedup.kept, opts.anonymize);
    const auto& clean = anon.records;

    GraphBuilder builder;
    for (const auto& rec : clean) {
        const std::string* id = rec.field("id");
        if (!id) continue;
        switch (rec.kind) {
            case EntityKind::Book: {
                Book b;
                b.ext_id = *id;
                b.title = payload_text(rec, "title").value_or("");
                b.summary = payload_text(rec, "summary");
                b.isbn = payload_text(rec, "isbn");
                if (auto ar = payload_numeric(rec, "avg_rating"))
                    b.avg_rating = (*ar == 0.0) ? 0.0 : *ingest::clamp_rating(ar);
                b.rating_count = payload_count(rec, "rating_count");
                b.review_count = payload_count(rec, "review_count");
                if (auto pg = payload_count(rec, "pages"); pg && *pg > 0) b.pages = pg;
                if (auto pr = payload_numeric(rec, "price"); pr && *pr >= 0) b.price = pr;
                builder.add_book(std::move(b));
                break;
            }
            case EntityKind::Author: {
                Author a;
                a.ext_id = *id;
                a.name = payload_text(rec, "name").value_or("");
                a.biography = payload_text(rec, "biography");
                a.follower_count = payload_count(rec, "follower_count");
                builder.add_author(std::move(a));
                break;
            }
            case EntityKind::Category: {
                Category c;
                c.ext_id = *id;
                c.name = payload_text(rec, "name").value_or("");
                c.description = payload_text(rec, "description");
                c.total_book_count = payload_count(rec, "total_book_count");
                builder.add_category(std::move(c));
                break;
            }
            case EntityKind::Publisher: {
                Publisher p;
                p.ext_id = *id;
                p.name = payload_text(rec, "name").value_or("");
                p.description = payload_text(rec, "description");
                p.total_author_count = payload_count(rec, "total_author_count");
                p.total_book_count = payload_count(rec, "total_book_count");
                builder.add_publisher(std::move(p));
                break;
            }
            case EntityKind::Review: {
                Review r;
                r.ext_id = *id;
                r.rating = review_rating(rec);
                r.text = payload_text(rec, "text");
                if (const std::string* d = rec.field("date")) r.date = parse_iso_date(*d);
                r.upvotes = payload_count(rec, "upvotes").value_or(0);
                r.downvotes = payload_count(rec, "downvotes").value_or(0);
                r.verified = payload_bool(rec, "verified");
                builder.add_review(std::move(r));
                break;
            }
            case EntityKind::User:
                builder.add_user(*id);
                break;
        }
    }

    // Users come from anonymized review records, first appearance order.
    for (const auto& rec : clean) {
        if (rec.kind != EntityKind::Review) continue;
        const std::string* uid = rec.field("user_id");
        if (uid && builder.index_of(EntityKind::User, *uid) < 0) builder.add_user(*uid);
    }

    auto linked = ingest::link_entities(clean, builder);
    report.unresolved_refs = linked.unresolved;
    for (const auto& e : linked.edges) builder.add_edge(e.relation, e.src, e.dst);

    out.graph = builder.build();

    for (int k = 0; k < kNumEntityKinds; ++k) {
        auto kind = static_cast<EntityKind>(k);
        report.entity_counts[to_string(kind)] = out.graph.entity_count(kind);
    }
    for (int ri = 0; ri < kNumRelations; ++ri) {
        auto rel = static_cast<Relation>(ri);
        report.edge_counts[to_string(rel)] =
            static_cast<int64_t>(out.graph.edges(rel).size());
    }

    report.violations = static_cast<int64_t>(validate_graph(out.graph).violations.size());

    auto built = build_interactions(out.graph);
    out.interactions = std::move(built.interactions);
    report.interactions = static_cast<int64_t>(out.interactions.size());
    report.interaction_skips = built.skipped;
    return out;
}

IngestReport ingest_directory(const fs::path& raw_dir, const fs::path& out_dir,
                              const IngestOptions& opts) {
    auto raw = load_raw_dir(raw_dir);
    if (raw.records.empty())
        throw std::runtime_error("no raw records found under " + raw_dir.string());

    auto result = run_ingest(raw.records, opts);
    result.report.parse_errors = raw.parse_errors;

    fs::create_directories(out_dir);
    write_graph(result.graph, out_dir);
    write_interactions_tsv(out_dir / "interactions.tsv", result.interactions, result.graph);
    auto out = open_out(out_dir / "ingest_report.json");
    out << result.report.to_json().dump(2) << "\n";
    return result.report;
}

}  // namespace bookrec::io
