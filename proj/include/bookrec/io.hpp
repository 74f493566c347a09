#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bookrec/graph.hpp"
#include "bookrec/ingest.hpp"

namespace bookrec::io {

using json = nlohmann::json;

// --- graph files -------------------------------------------------------------
// One JSON-lines file per entity kind (books.jsonl, ...) and per relation
// (edges_book_author.jsonl, ...). Edge records are
// {"relation": ..., "src": <ext id>, "dst": <ext id>}.

void write_graph(const BookGraph& graph, const std::filesystem::path& dir);
BookGraph load_graph(const std::filesystem::path& dir);

// interactions TSV: "user book weight timestamp rating verified", header line
// included, empty cell for null.
void write_interactions_tsv(const std::filesystem::path& path,
                            const std::vector<Interaction>& interactions,
                            const BookGraph& graph);

// split artifact: JSON carrying the fractions/seed plus the three index lists
// over the deterministic build_interactions order.
void write_split(const std::filesystem::path& path, const ingest::SplitSpec& spec,
                 const ingest::InteractionSplit& split);
ingest::InteractionSplit load_split(const std::filesystem::path& path,
                                    const std::vector<Interaction>& interactions,
                                    ingest::SplitSpec* spec_out = nullptr);

// --- raw records -------------------------------------------------------------

// Parses one raw-record JSON line: {"source_url": ..., "kind": ...,
// "payload": {...}} where payload values are strings or arrays of strings.
// Throws ValidationError on malformed structure.
ingest::RawRecord parse_raw_record(const std::string& line);

struct RawLoadResult {
    std::vector<ingest::RawRecord> records;
    int64_t parse_errors = 0;
};

// Reads every *.jsonl under dir in sorted filename order.
RawLoadResult load_raw_dir(const std::filesystem::path& dir);

// --- ingest pipeline ---------------------------------------------------------

struct IngestReport {
    int64_t records_read = 0;
    int64_t parse_errors = 0;
    std::map<std::string, int64_t> duplicates_by_kind;
    int64_t duplicates_total = 0;
    int64_t quarantined = 0;
    int64_t unresolved_refs = 0;
    std::map<std::string, int64_t> entity_counts;
    std::map<std::string, int64_t> edge_counts;
    int64_t interactions = 0;
    int64_t interaction_skips = 0;
    int64_t violations = 0;

    json to_json() const;
};

struct IngestOptions {
    ingest::AnonymizeOptions anonymize;
    int64_t violation_threshold = 0;  // cmd exit is nonzero above this
};

struct IngestOutput {
    BookGraph graph;
    std::vector<Interaction> interactions;
    IngestReport report;
};

// Full record-files -> graph pipeline: dedup, anonymize, normalize, link,
// validate, derive interactions.
IngestOutput run_ingest(const std::vector<ingest::RawRecord>& records,
                        const IngestOptions& opts = {});

// run_ingest plus all output files (entities, edges, interactions.tsv,
// ingest_report.json) under out_dir.
IngestReport ingest_directory(const std::filesystem::path& raw_dir,
                              const std::filesystem::path& out_dir,
                              const IngestOptions& opts = {});

}  // namespace bookrec::io
