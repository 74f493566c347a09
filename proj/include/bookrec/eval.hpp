#pragma once

// Ranking metrics, the masked evaluation protocol, the cold-start subset, and
// the ablation runner.

#include <functional>
#include <set>

#include "bookrec/ingest.hpp"
#include "bookrec/neural.hpp"
#include "bookrec/recommender.hpp"

namespace bookrec::ev {

using json = nlohmann::json;

struct Metrics {
    double hit = 0.0;
    double mrr = 0.0;
    double ndcg = 0.0;
};

// Binary-relevance Hit/MRR/NDCG at cutoff k over a duplicate-free ranked list.
// NDCG uses IDCG truncated at min(|relevant|, k).
Metrics metrics_at_k(const std::vector<int32_t>& ranked, const std::set<int32_t>& relevant,
                     int32_t k);

struct EvalProtocol {
    std::vector<int32_t> cutoffs{5, 10, 50};
    // Training items are always masked at inference; the protocol offers no
    // way to disable it.
    static constexpr bool mask_train = true;
};

struct RankingReport {
    std::string model;
    std::vector<int32_t> cutoffs;
    std::vector<Metrics> mean;  // one entry per cutoff
    int64_t users_evaluated = 0;
    int64_t users_skipped = 0;
    uint64_t seed = 0;
    std::string config_digest;

    json to_json() const;
    std::string to_table() const;  // aligned-text, one row per cutoff family
};

// Per test user with at least one relevant item: rank the full catalog minus
// the user's train items and average metrics at each cutoff. Users with empty
// test sets or empty candidate sets are skipped and counted. Throws
// LeakageError when the model emits a masked item.
RankingReport evaluate_model(const rec::Recommender& model,
                             const std::vector<Interaction>& train,
                             const std::vector<Interaction>& eval_set,
                             const EvalProtocol& protocol,
                             const std::set<int32_t>* user_subset = nullptr);

// Test users with at most one training interaction.
std::set<int32_t> cold_start_subset(const ingest::InteractionSplit& split);

// mean and population standard deviation per cutoff across seeds
struct MultiSeedReport {
    std::vector<RankingReport> per_seed;
    RankingReport mean;
    std::vector<Metrics> stddev;

    json to_json() const;
};

MultiSeedReport aggregate_reports(std::vector<RankingReport> per_seed);

// --- ablation runner ---------------------------------------------------------

struct AblationRow {
    std::string setting;  // "full", "-side", "-relations", "-interaction"
    rec::AblationFlags flags;
    RankingReport warm;  // all evaluated test users
    RankingReport cold;  // cold-start subset
};

using AblationFitFn =
    std::function<std::unique_ptr<rec::Recommender>(const rec::AblationFlags&)>;

// One row per configuration: the full model plus one single-signal removal per
// requested flag, each evaluated on the warm set and the cold subset with a
// shared seed (the fit function owns the seed).
std::vector<AblationRow> run_ablation(const AblationFitFn& fit,
                                      const std::vector<std::string>& flags,
                                      const ingest::InteractionSplit& split,
                                      const EvalProtocol& protocol);

std::string ablation_table(const std::vector<AblationRow>& rows);

std::string digest_json(const json& j);

}  // namespace bookrec::ev
