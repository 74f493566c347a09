#include "bookrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_set>

namespace bookrec::ev {

Metrics metrics_at_k(const std::vector<int32_t>& ranked, const std::set<int32_t>& relevant,
                     int32_t k) {
    if (k < 1) throw std::invalid_argument("metrics_at_k: k must be >= 1");
    Metrics m;
    if (relevant.empty()) return m;

    const int32_t depth = std::min<int32_t>(k, static_cast<int32_t>(ranked.size()));
    double dcg = 0.0;
    for (int32_t r = 0; r < depth; ++r) {
        if (!relevant.count(ranked[r])) continue;
        if (m.hit == 0.0) {
            m.hit = 1.0;
            m.mrr = 1.0 / static_cast<double>(r + 1);
        }
        dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    }
    double idcg = 0.0;
    const int32_t ideal = std::min<int32_t>(k, static_cast<int32_t>(relevant.size()));
    for (int32_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r + 2));
    m.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;
    return m;
}

json RankingReport::to_json() const {
    json per_cutoff = json::object();
    for (size_t c = 0; c < cutoffs.size(); ++c) {
        per_cutoff[std::to_string(cutoffs[c])] = {
            {"hit", mean[c].hit}, {"mrr", mean[c].mrr}, {"ndcg", mean[c].ndcg}};
    }
    return {{"model", model},
            {"metrics", per_cutoff},
            {"users_evaluated", users_evaluated},
            {"users_skipped", users_skipped},
            {"seed", seed},
            {"config_digest", config_digest}};
}

std::string RankingReport::to_table() const {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s", model.c_str());
    out << buf;
    for (size_t c = 0; c < cutoffs.size(); ++c) {
        std::snprintf(buf, sizeof(buf), " Hit@%-2d %.3f MRR@%-2d %.3f NDCG@%-2d %.3f |",
                      cutoffs[c], mean[c].hit, cutoffs[c], mean[c].mrr, cutoffs[c],
                      mean[c].ndcg);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), " users=%lld skipped=%lld",
                  static_cast<long long>(users_evaluated),
                  static_cast<long long>(users_skipped));
    out << buf;
    return out.str();
}

RankingReport evaluate_model(const rec::Recommender& model,
                             const std::vector<Interaction>& train,
                             const std::vector<Interaction>& eval_set,
                             const EvalProtocol& protocol,
                             const std::set<int32_t>* user_subset) {
    const int32_t num_users = model.num_users();
    const int32_t num_books = model.num_books();
    auto check_user = [&](const Interaction& it) {
        if (it.user < 0 || it.user >= num_users || it.book < 0 || it.book >= num_books)
            throw ValidationError("interaction indices exceed the model's shape");
    };
    std::vector<std::set<int32_t>> train_items(num_users);
    std::vector<char> active(num_users, 0);
    for (const auto& it : train) {
        check_user(it);
        train_items[it.user].insert(it.book);
        active[it.user] = 1;
    }
    std::vector<std::set<int32_t>> relevant(num_users);
    for (const auto& it : eval_set) {
        check_user(it);
        relevant[it.user].insert(it.book);
        active[it.user] = 1;
    }

    std::vector<int32_t> cutoffs = protocol.cutoffs;
    std::sort(cutoffs.begin(), cutoffs.end());
    const int32_t max_k = cutoffs.empty() ? 0 : cutoffs.back();

    RankingReport report;
    report.model = model.kind();
    report.cutoffs = cutoffs;
    report.mean.assign(cutoffs.size(), {});

    for (int32_t u = 0; u < num_users; ++u) {
        if (user_subset && !user_subset->count(u)) continue;
        if (relevant[u].empty()) {
            // active user with an empty test set: skipped and counted
            if (active[u]) ++report.users_skipped;
            continue;
        }
        if (static_cast<int64_t>(train_items[u].size()) >= num_books) {
            ++report.users_skipped;  // mask exhausts the candidate set
            continue;
        }

        rec::BookMask mask(num_books);
        for (int32_t b : train_items[u]) mask.exclude(b);
        auto top = model.rank(u, mask, max_k);

        std::vector<int32_t> ranked;
        ranked.reserve(top.size());
        std::unordered_set<int32_t> seen;
        for (const auto& entry : top) {
            if (train_items[u].count(entry.book))
                throw LeakageError("model " + model.kind() + " returned training item " +
                                   std::to_string(entry.book) + " for user " +
                                   std::to_string(u));
            if (!seen.insert(entry.book).second)
                throw LeakageError("model " + model.kind() + " returned duplicate item " +
                                   std::to_string(entry.book));
            ranked.push_back(entry.book);
        }

        for (size_t c = 0; c < cutoffs.size(); ++c) {
            auto m = metrics_at_k(ranked, relevant[u], cutoffs[c]);
            report.mean[c].hit += m.hit;
            report.mean[c].mrr += m.mrr;
            report.mean[c].ndcg += m.ndcg;
        }
        ++report.users_evaluated;
    }

    if (report.users_evaluated > 0) {
        for (auto& m : report.mean) {
            m.hit /= static_cast<double>(report.users_evaluated);
            m.mrr /= static_cast<double>(report.users_evaluated);
            m.ndcg /= static_cast<double>(report.users_evaluated);
        }
    }
    return report;
}

std::set<int32_t> cold_start_subset(const ingest::InteractionSplit& split) {
    std::map<int32_t, int64_t> train_count;
    for (const auto& it : split.train) ++train_count[it.user];
    std::set<int32_t> cold;
    for (const auto& it : split.test) {
        auto found = train_count.find(it.user);
        const int64_t count = found == train_count.end() ? 0 : found->second;
        if (count <= 1) cold.insert(it.user);
    }
    return cold;
}

MultiSeedReport aggregate_reports(std::vector<RankingReport> per_seed) {
    if (per_seed.empty()) throw std::invalid_argument("aggregate_reports: no reports");
    MultiSeedReport agg;
    agg.mean = per_seed.front();
    agg.mean.seed = 0;
    const size_t n_cut = agg.mean.cutoffs.size();
    const double n = static_cast<double>(per_seed.size());

    agg.mean.mean.assign(n_cut, {});
    agg.stddev.assign(n_cut, {});
    agg.mean.users_evaluated = per_seed.front().users_evaluated;
    agg.mean.users_skipped = per_seed.front().users_skipped;
    for (const auto& r : per_seed) {
        for (size_t c = 0; c < n_cut; ++c) {
            agg.mean.mean[c].hit += r.mean[c].hit / n;
            agg.mean.mean[c].mrr += r.mean[c].mrr / n;
            agg.mean.mean[c].ndcg += r.mean[c].ndcg / n;
        }
    }
    for (const auto& r : per_seed) {
        for (size_t c = 0; c < n_cut; ++c) {
            auto sq = [](double x) { return x * x; };
            agg.stddev[c].hit += sq(r.mean[c].hit - agg.mean.mean[c].hit) / n;
            agg.stddev[c].mrr += sq(r.mean[c].mrr - agg.mean.mean[c].mrr) / n;
            agg.stddev[c].ndcg += sq(r.mean[c].ndcg - agg.mean.mean[c].ndcg) / n;
        }
    }
    for (auto& s : agg.stddev) {
        s.hit = std::sqrt(s.hit);
        s.mrr = std::sqrt(s.mrr);
        s.ndcg = std::sqrt(s.ndcg);
    }
    agg.per_seed = std::move(per_seed);
    return agg;
}

json MultiSeedReport::to_json() const {
    json seeds = json::array();
    for (const auto& r : per_seed) seeds.push_back(r.to_json());
    json dev = json::object();
    for (size_t c = 0; c < mean.cutoffs.size(); ++c) {
        dev[std::to_string(mean.cutoffs[c])] = {
            {"hit", stddev[c].hit}, {"mrr", stddev[c].mrr}, {"ndcg", stddev[c].ndcg}};
    }
    return {{"mean", mean.to_json()}, {"stddev", dev}, {"per_seed", seeds}};
}

std::vector<AblationRow> run_ablation(const AblationFitFn& fit,
                                      const std::vector<std::string>& flags,
                                      const ingest::InteractionSplit& split,
                                      const EvalProtocol& protocol) {
    std::vector<std::pair<std::string, rec::AblationFlags>> configs;
    configs.emplace_back("full", rec::AblationFlags{});
    for (const auto& f : flags) {
        rec::AblationFlags a;
        if (f == "side")
            a.side = false;
        else if (f == "relations")
            a.relations = false;
        else if (f == "interaction")
            a.interaction = false;
        else
            throw std::invalid_argument("run_ablation: unknown flag '" + f + "'");
        configs.emplace_back("-" + f, a);
    }

    const auto cold = cold_start_subset(split);
    std::vector<AblationRow> rows;
    for (const auto& [name, ablation] : configs) {
        AblationRow row;
        row.setting = name;
        row.flags = ablation;
        auto model = fit(ablation);
        row.warm = evaluate_model(*model, split.train, split.test, protocol);
        row.cold = evaluate_model(*model, split.train, split.test, protocol, &cold);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char buf[256];
    out << "scenario    setting        interaction side relations";
    if (!rows.empty())
        for (int32_t k : rows.front().warm.cutoffs)
            out << "  NDCG@" << k;
    out << "\n";
    auto emit = [&](const char* scenario, const AblationRow& row, const RankingReport& rep) {
        std::snprintf(buf, sizeof(buf), "%-11s %-14s %-11s %-4s %-9s", scenario,
                      row.setting.c_str(), row.flags.interaction ? "yes" : "no",
                      row.flags.side ? "yes" : "no", row.flags.relations ? "yes" : "no");
        out << buf;
        for (size_t c = 0; c < rep.cutoffs.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "  %.4f", rep.mean[c].ndcg);
            out << buf;
        }
        out << "\n";
    };
    for (const auto& row : rows) emit("warm-start", row, row.warm);
    for (const auto& row : rows) emit("cold-start", row, row.cold);
    return out.str();
}

std::string digest_json(const json& j) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

}  // namespace bookrec::ev
