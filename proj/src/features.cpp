#include "bookrec/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "bookrec/ingest.hpp"

namespace bookrec::feat {

double sparse_dot(const SparseVec& a, const SparseVec& b) {
    double sum = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first)
            ++i;
        else if (a[i].first > b[j].first)
            ++j;
        else
            sum += a[i++].second * b[j++].second;
    }
    return sum;
}

double sparse_norm(const SparseVec& v) {
    double sum = 0.0;
    for (const auto& [col, val] : v) sum += val * val;
    return std::sqrt(sum);
}

namespace {

// numeric slot order: price, pages, avg_rating, rating_count, review_count
std::array<std::optional<double>, 5> numeric_raw(const Book& b) {
    auto log1p_opt = [](const std::optional<int64_t>& v) -> std::optional<double> {
        if (!v) return std::nullopt;
        return std::log1p(static_cast<double>(*v));
    };
    std::array<std::optional<double>, 5> out;
    out[0] = b.price ? std::optional(std::log1p(*b.price)) : std::nullopt;
    out[1] = log1p_opt(b.pages);
    out[2] = b.avg_rating;
    out[3] = log1p_opt(b.rating_count);
    out[4] = log1p_opt(b.review_count);
    return out;
}

}  // namespace

FeatureBuilder::FeatureBuilder(const BookGraph& graph)
    : graph_(&graph),
      author_dim_(graph.entity_count(EntityKind::Author)),
      category_dim_(graph.entity_count(EntityKind::Category)),
      publisher_dim_(graph.entity_count(EntityKind::Publisher)) {
    std::array<double, 5> sum{}, sum_sq{};
    std::array<int64_t, 5> n{};
    for (const auto& b : graph.books()) {
        auto raw = numeric_raw(b);
        for (int k = 0; k < 5; ++k) {
            if (!raw[k]) continue;
            sum[k] += *raw[k];
            sum_sq[k] += *raw[k] * *raw[k];
            ++n[k];
        }
    }
    for (int k = 0; k < 5; ++k) {
        if (n[k] == 0) {
            mean_[k] = 0.0;
            std_[k] = 0.0;
            continue;
        }
        mean_[k] = sum[k] / n[k];
        double var = sum_sq[k] / n[k] - mean_[k] * mean_[k];
        std_[k] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
}

FeatureBundle FeatureBuilder::build(int32_t book) const {
    FeatureBundle fb;
    fb.author_idx = graph_->neighbors({EntityKind::Book, book}, Relation::BookAuthor);
    fb.category_idx = graph_->neighbors({EntityKind::Book, book}, Relation::BookCategory);
    fb.publisher_idx = graph_->neighbors({EntityKind::Book, book}, Relation::BookPublisher);

    auto raw = numeric_raw(graph_->books().at(book));
    for (int k = 0; k < 5; ++k) {
        if (!raw[k] || std_[k] == 0.0) {
            fb.numeric[k] = 0.0;  // missing or degenerate variance
        } else {
            fb.numeric[k] = (*raw[k] - mean_[k]) / std_[k];
        }
    }
    return fb;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };

    size_t pos = 0;
    while (pos < text.size()) {
        size_t before = pos;
        auto cp = utf8_decode(text, pos);
        if (!cp) {  // skip a malformed byte
            pos = before + 1;
            flush();
            continue;
        }
        uint32_t c = *cp;
        bool word = false;
        if (c < 0x80) {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                word = true;
                c = static_cast<uint32_t>(std::tolower(static_cast<int>(c)));
            }
        } else {
            // Non-ASCII is a word character unless it is punctuation or space.
            const bool punct = (c >= 0x2000 && c <= 0x206F)  // general punctuation
                               || c == 0x0964 || c == 0x0965  // danda
                               || (c >= 0x3000 && c <= 0x303F) || c == 0x00A0;
            word = !punct;
        }
        if (word)
            utf8_encode(c, current);
        else
            flush();
    }
    flush();
    return tokens;
}

namespace {

void collect_terms(const std::vector<std::string>& doc,
                   const std::function<void(const std::string&)>& sink) {
    for (const auto& t : doc) sink(t);
    for (size_t i = 0; i + 1 < doc.size(); ++i) sink(doc[i] + " " + doc[i + 1]);
}

}  // namespace

TfidfModel tfidf_fit(const std::vector<std::vector<std::string>>& documents, double min_df,
                     double max_df, int32_t max_features) {
    if (documents.empty()) throw std::invalid_argument("tfidf_fit: empty corpus");

    const int64_t n_docs = static_cast<int64_t>(documents.size());
    std::map<std::string, int64_t> df;
    {
        std::set<std::string> in_doc;
        for (const auto& doc : documents) {
            in_doc.clear();
            collect_terms(doc, [&](const std::string& t) { in_doc.insert(t); });
            for (const auto& t : in_doc) ++df[t];
        }
    }

    // df bounds are proportions of documents, inclusive on both ends
    std::vector<std::pair<std::string, int64_t>> retained;
    for (const auto& [term, count] : df) {
        double prop = static_cast<double>(count) / n_docs;
        if (prop >= min_df && prop <= max_df) retained.emplace_back(term, count);
    }
    if (retained.empty())
        throw std::runtime_error(
            "tfidf_fit: document-frequency bounds removed every term; relax min_df/max_df");

    if (max_features > 0 && static_cast<int64_t>(retained.size()) > max_features) {
        std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        retained.resize(max_features);
    }
    std::sort(retained.begin(), retained.end());  // columns in lexicographic term order

    TfidfModel model;
    model.min_df = min_df;
    model.max_df = max_df;
    model.max_features = max_features;
    model.num_documents = n_docs;
    model.idf.reserve(retained.size());
    for (int32_t col = 0; col < static_cast<int32_t>(retained.size()); ++col) {
        const auto& [term, count] = retained[col];
        model.vocabulary.emplace(term, col);
        model.idf.push_back(std::log((1.0 + n_docs) / (1.0 + count)) + 1.0);
    }
    return model;
}

SparseVec tfidf_transform(const TfidfModel& model, const std::vector<std::string>& document) {
    std::map<int32_t, double> tf;
    collect_terms(document, [&](const std::string& t) {
        auto it = model.vocabulary.find(t);
        if (it != model.vocabulary.end()) tf[it->second] += 1.0;
    });

    SparseVec vec;
    vec.reserve(tf.size());
    double norm_sq = 0.0;
    for (const auto& [col, count] : tf) {
        double v = count * model.idf[col];
        vec.emplace_back(col, v);
        norm_sq += v * v;
    }
    if (norm_sq > 0.0) {
        double inv = 1.0 / std::sqrt(norm_sq);
        for (auto& [col, v] : vec) v *= inv;
    }
    return vec;
}

std::string compose_book_text(const BookGraph& graph, int32_t book) {
    const Book& b = graph.books().at(book);
    std::vector<std::string> parts;
    auto push = [&](const std::string& s) {
        if (!s.empty()) parts.push_back(s);
    };
    push(b.title);
    if (b.summary) push(*b.summary);
    for (int32_t a : graph.neighbors({EntityKind::Book, book}, Relation::BookAuthor)) {
        push(graph.authors()[a].name);
        if (graph.authors()[a].biography) push(*graph.authors()[a].biography);
    }
    for (int32_t c : graph.neighbors({EntityKind::Book, book}, Relation::BookCategory)) {
        push(graph.categories()[c].name);
        if (graph.categories()[c].description) push(*graph.categories()[c].description);
    }
    for (int32_t p : graph.neighbors({EntityKind::Book, book}, Relation::BookPublisher)) {
        push(graph.publishers()[p].name);
        if (graph.publishers()[p].description) push(*graph.publishers()[p].description);
    }

    std::string joined;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += parts[i];
    }
    return ingest::normalize_text(joined);
}

std::vector<float> hash_text_embed(std::string_view text, int32_t dim) {
    if (dim < 8) throw std::invalid_argument("hash_text_embed: dim must be >= 8");
    std::vector<float> vec(dim, 0.0f);
    for (const auto& token : tokenize(text)) {
        uint64_t h = fnv1a64(token);
        int32_t col = static_cast<int32_t>(h % static_cast<uint64_t>(dim));
        float sign = ((h >> 32) & 1) ? 1.0f : -1.0f;
        vec[col] += sign;
    }
    double norm_sq = 0.0;
    for (float v : vec) norm_sq += static_cast<double>(v) * v;
    if (norm_sq > 0.0) {
        float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
        for (auto& v : vec) v *= inv;
    }
    return vec;
}

namespace {

void normalize_in_place(std::vector<float>& v) {
    double norm_sq = 0.0;
    for (float x : v) norm_sq += static_cast<double>(x) * x;
    if (norm_sq > 0.0) {
        float inv = static_cast<float>(1.0 / std::sqrt(norm_sq));
        for (auto& x : v) x *= inv;
    }
}

}  // namespace

EmbeddingTable load_embeddings(const std::filesystem::path& path, const BookGraph& graph) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.rfind("dim=", 0) != 0)
        throw std::runtime_error("embedding file must start with a dim=<D> header");
    EmbeddingTable table;
    table.dim = std::stoi(line.substr(4));
    table.provenance = path.string();
    if (table.dim <= 0) throw std::runtime_error("embedding dim must be positive");

    int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("embedding row missing TAB at line " +
                                     std::to_string(lineno));
        std::string book_id = line.substr(0, tab);
        int32_t book = graph.index_of(EntityKind::Book, book_id);
        if (book < 0)
            throw std::runtime_error("embedding row references unknown book id '" + book_id +
                                     "' at line " + std::to_string(lineno));
        if (table.vectors.count(book))
            throw std::runtime_error("duplicate book id '" + book_id + "' at line " +
                                     std::to_string(lineno));

        std::vector<float> vec;
        vec.reserve(table.dim);
        std::stringstream ss(line.substr(tab + 1));
        std::string cell;
        while (std::getline(ss, cell, ',')) vec.push_back(std::stof(cell));
        if (static_cast<int32_t>(vec.size()) != table.dim)
            throw std::runtime_error("embedding row length " + std::to_string(vec.size()) +
                                     " does not match dim=" + std::to_string(table.dim) +
                                     " at line " + std::to_string(lineno));
        normalize_in_place(vec);
        table.vectors.emplace(book, std::move(vec));
    }
    return table;
}

void write_embeddings(const std::filesystem::path& path, const BookGraph& graph,
                      const std::vector<std::vector<float>>& per_book, int32_t dim) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write embedding file: " + path.string());
    out << "dim=" << dim << "\n";
    char buf[48];
    for (int32_t b = 0; b < static_cast<int32_t>(per_book.size()); ++b) {
        out << graph.books()[b].ext_id << "\t";
        const auto& vec = per_book[b];
        for (int32_t k = 0; k < dim; ++k) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(vec[k]));
            out << (k ? "," : "") << buf;
        }
        out << "\n";
    }
}

EmbeddingTable hashing_embeddings(const BookGraph& graph, int32_t dim) {
    EmbeddingTable table;
    table.dim = dim;
    table.provenance = "hashing";
    for (int32_t b = 0; b < graph.num_books(); ++b) {
        auto vec = hash_text_embed(compose_book_text(graph, b), dim);
        table.vectors.emplace(b, std::move(vec));
    }
    return table;
}

BookFeatures build_book_features(const BookGraph& graph, const std::vector<Interaction>& train,
                                 const FeatureOptions& opts) {
    BookFeatures features;
    FeatureBuilder builder(graph);
    features.author_dim = builder.author_dim();
    features.category_dim = builder.category_dim();
    features.publisher_dim = builder.publisher_dim();
    features.bundles.reserve(graph.num_books());
    for (int32_t b = 0; b < graph.num_books(); ++b) features.bundles.push_back(builder.build(b));

    // TF-IDF corpus: per book, the concatenation of its training-split review
    // texts. Validation/test text never reaches the vocabulary.
    std::vector<std::vector<std::string>> docs(graph.num_books());
    for (const auto& it : train) {
        if (it.review < 0) continue;
        const auto& review = graph.reviews()[it.review];
        if (!review.text) continue;
        auto tokens = tokenize(*review.text);
        auto& doc = docs[it.book];
        doc.insert(doc.end(), tokens.begin(), tokens.end());
    }

    try {
        features.tfidf =
            tfidf_fit(docs, opts.tfidf_min_df, opts.tfidf_max_df, opts.tfidf_max_features);
    } catch (const std::runtime_error&) {
        if (!opts.relax_df_bounds) throw;
        features.tfidf = tfidf_fit(docs, 0.0, 1.0, opts.tfidf_max_features);
    }
    features.tfidf_vectors.reserve(docs.size());
    for (const auto& doc : docs)
        features.tfidf_vectors.push_back(tfidf_transform(features.tfidf, doc));

    if (!opts.embedding_file.empty())
        features.embeddings = load_embeddings(opts.embedding_file, graph);
    else
        features.embeddings = hashing_embeddings(graph, opts.hash_dim);

    for (size_t b = 0; b < features.bundles.size(); ++b)
        features.bundles[b].text_embedding = features.embeddings.get(static_cast<int32_t>(b));
    return features;
}

}  // namespace bookrec::feat
