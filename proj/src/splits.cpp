#include "idm/splits.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "idm/util.hpp"

namespace idm {

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::array<double, 4> quintile_cuts(std::vector<double> values) {
    if (values.empty()) {
        throw ValidationError("quintile_cuts: no values");
    }
    std::sort(values.begin(), values.end());
    std::array<double, 4> cuts{};
    const double last = static_cast<double>(values.size() - 1);
    for (int k = 0; k < 4; ++k) {
        const double pos = last * 0.2 * (k + 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        cuts[static_cast<std::size_t>(k)] = values[lo] + frac * (values[hi] - values[lo]);
    }
    return cuts;
}

int quintile_of(double value, const std::array<double, 4>& cuts) {
    int q = 1;
    for (double c : cuts) {
        if (value > c) {
            ++q;
        }
    }
    return q;
}

StrataMap stratify(const Corpus& corpus) {
    std::vector<double> diffs;
    diffs.reserve(corpus.size());
    for (const auto& item : corpus) {
        diffs.push_back(item.difficulty);
    }
    StrataMap strata;
    if (corpus.empty()) {
        return strata;
    }
    const auto cuts = quintile_cuts(diffs);

    std::map<std::string, std::array<int, 5>> counts;
    std::map<std::string, std::string> school;
    for (const auto& item : corpus) {
        counts[item.passage_id][static_cast<std::size_t>(quintile_of(item.difficulty, cuts) - 1)] += 1;
        school.emplace(item.passage_id, item.school_type.value_or("-"));
    }
    for (const auto& [pid, c] : counts) {
        // max_element returns the first maximum, i.e. the lower quintile on ties
        const auto mode = std::max_element(c.begin(), c.end()) - c.begin() + 1;
        strata[pid] = school[pid] + "|q" + std::to_string(mode);
    }
    return strata;
}

const std::vector<std::string>& SplitPlan::ids(Split s) const {
    switch (s) {
        case Split::train: return train_ids;
        case Split::val: return val_ids;
        case Split::test: return test_ids;
    }
    return train_ids;
}

namespace {

// Largest-remainder apportionment of n into parts proportional to ratios.
std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& ratios) {
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = ratios[k] * static_cast<double>(n);
        counts[k] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        rem[k] = quota - static_cast<double>(counts[k]);
        used += counts[k];
    }
    while (used < n) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < 3; ++k) {
            if (rem[k] > rem[best] + 1e-12) {
                best = k;
            }
        }
        counts[best] += 1;
        rem[best] = -1.0;
        ++used;
    }
    return counts;
}

std::map<std::string, std::vector<std::string>> passages_by_stratum(const StrataMap& strata) {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& [pid, label] : strata) {
        groups[label].push_back(pid);  // StrataMap iterates in passage-id order
    }
    return groups;
}

}  // namespace

SplitPlan partition(const Corpus& corpus, std::array<double, 3> ratios, std::uint64_t seed) {
    double total = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) {
            throw ValidationError("split ratios must be positive");
        }
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw ValidationError("split ratios must sum to 1");
    }

    SplitPlan plan;
    plan.ratios = ratios;
    plan.seed = seed;
    plan.corpus_hash = corpus_hash(corpus);
    plan.strata = stratify(corpus);

    for (auto& [label, pids] : passages_by_stratum(plan.strata)) {
        Rng rng(mix_seed(seed, label));
        rng.shuffle(pids);
        std::array<std::size_t, 3> counts{pids.size(), 0, 0};
        if (pids.size() < 3) {
            plan.warnings.push_back("stratum " + label + " has " + std::to_string(pids.size()) +
                                    " passage(s); assigned to train");
        } else {
            counts = apportion(pids.size(), ratios);
        }
        std::size_t i = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            for (std::size_t c = 0; c < counts[k]; ++c, ++i) {
                plan.passage_split[pids[i]] = static_cast<Split>(k);
            }
        }
    }
    for (const auto& item : corpus) {
        switch (plan.passage_split.at(item.passage_id)) {
            case Split::train: plan.train_ids.push_back(item.item_id); break;
            case Split::val: plan.val_ids.push_back(item.item_id); break;
            case Split::test: plan.test_ids.push_back(item.item_id); break;
        }
    }
    return plan;
}

SizeSpec parse_size(const std::string& text) {
    if (text == "full") {
        return {"full", 0, true};
    }
    std::size_t pos = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw ValidationError("bad training size '" + text + "'");
    }
    if (pos != text.size() || n == 0) {
        throw ValidationError("bad training size '" + text + "'");
    }
    return {text, static_cast<std::size_t>(n), false};
}

const std::vector<std::string>& SubsampleGrid::at(const std::string& label, std::uint64_t seed) const {
    auto it = cells.find({label, seed});
    if (it == cells.end()) {
        throw ValidationError("no subsample for size " + label + " seed " + std::to_string(seed));
    }
    return it->second;
}

std::vector<std::string> stratified_passage_order(const Corpus& corpus, const SplitPlan& plan,
                                                  std::uint64_t seed) {
    std::map<std::string, std::size_t> items_per_passage;
    for (const auto& item : corpus) {
        if (plan.passage_split.at(item.passage_id) == Split::train) {
            ++items_per_passage[item.passage_id];
        }
    }
    struct Stratum {
        std::vector<std::string> passages;
        std::size_t next = 0;
        double share = 0.0;
        std::size_t taken = 0;
    };
    std::map<std::string, Stratum> strata;
    std::size_t total_items = 0;
    for (const auto& [pid, n] : items_per_passage) {
        auto& s = strata[plan.strata.at(pid)];
        s.passages.push_back(pid);
        s.share += static_cast<double>(n);
        total_items += n;
    }
    for (auto& [label, s] : strata) {
        s.share /= static_cast<double>(total_items);
        Rng rng(mix_seed(seed, label));
        rng.shuffle(s.passages);
    }

    std::vector<std::string> order;
    order.reserve(items_per_passage.size());
    std::size_t taken_total = 0;
    while (order.size() < items_per_passage.size()) {
        Stratum* best = nullptr;
        double best_deficit = 0.0;
        for (auto& [label, s] : strata) {
            if (s.next == s.passages.size()) {
                continue;
            }
            const double deficit = s.share * static_cast<double>(taken_total + 1) - static_cast<double>(s.taken);
            if (best == nullptr || deficit > best_deficit + 1e-12 ||
                (std::abs(deficit - best_deficit) <= 1e-12 && s.share > best->share)) {
                best = &s;
                best_deficit = deficit;
            }
        }
        const std::string& pid = best->passages[best->next++];
        const auto n = items_per_passage[pid];
        best->taken += n;
        taken_total += n;
        order.push_back(pid);
    }
    return order;
}

SubsampleGrid subsample_grid(const Corpus& corpus, const SplitPlan& plan, const std::vector<SizeSpec>& sizes,
                             const std::vector<std::uint64_t>& seeds) {
    SubsampleGrid grid;
    grid.sizes = sizes;
    grid.seeds = seeds;
    grid.corpus_hash = plan.corpus_hash;

    const std::size_t train_items = plan.train_ids.size();
    if (train_items == 0) {
        throw ValidationError("training split is empty");
    }
    for (const auto& size : sizes) {
        if (!size.full && size.items > train_items) {
            throw ValidationError("training size " + size.label + " exceeds the " + std::to_string(train_items) +
                                  " training items");
        }
    }

    std::map<std::string, std::vector<std::string>> items_of;
    for (const auto& item : corpus) {
        if (plan.passage_split.at(item.passage_id) == Split::train) {
            items_of[item.passage_id].push_back(item.item_id);
        }
    }
    for (auto seed : seeds) {
        const auto order = stratified_passage_order(corpus, plan, seed);
        std::vector<std::string> prefix;
        std::vector<std::size_t> cut_after;  // prefix length after each passage
        for (const auto& pid : order) {
            const auto& ids = items_of[pid];
            prefix.insert(prefix.end(), ids.begin(), ids.end());
            cut_after.push_back(prefix.size());
        }
        for (const auto& size : sizes) {
            std::size_t len = prefix.size();
            if (!size.full) {
                len = *std::lower_bound(cut_after.begin(), cut_after.end(), size.items);
            }
            grid.cells[{size.label, seed}] =
                std::vector<std::string>(prefix.begin(), prefix.begin() + static_cast<std::ptrdiff_t>(len));
        }
    }
    return grid;
}

nlohmann::ordered_json plan_to_json(const SplitPlan& plan) {
    nlohmann::ordered_json j;
    j["corpus_hash"] = plan.corpus_hash;
    j["seed"] = plan.seed;
    j["ratios"] = plan.ratios;
    nlohmann::ordered_json passages = nlohmann::ordered_json::object();
    for (const auto& [pid, split] : plan.passage_split) {
        passages[pid] = {{"split", to_string(split)}, {"stratum", plan.strata.at(pid)}};
    }
    j["passages"] = passages;
    j["train_ids"] = plan.train_ids;
    j["val_ids"] = plan.val_ids;
    j["test_ids"] = plan.test_ids;
    j["warnings"] = plan.warnings;
    return j;
}

SplitPlan plan_from_json(const nlohmann::json& j) {
    SplitPlan plan;
    plan.corpus_hash = j.at("corpus_hash").get<std::string>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.ratios = j.at("ratios").get<std::array<double, 3>>();
    for (auto it = j.at("passages").begin(); it != j.at("passages").end(); ++it) {
        const auto split = it.value().at("split").get<std::string>();
        plan.passage_split[it.key()] = split == "train" ? Split::train : split == "val" ? Split::val : Split::test;
        plan.strata[it.key()] = it.value().at("stratum").get<std::string>();
    }
    plan.train_ids = j.at("train_ids").get<std::vector<std::string>>();
    plan.val_ids = j.at("val_ids").get<std::vector<std::string>>();
    plan.test_ids = j.at("test_ids").get<std::vector<std::string>>();
    plan.warnings = j.value("warnings", std::vector<std::string>{});
    return plan;
}

nlohmann::ordered_json grid_to_json(const SubsampleGrid& grid) {
    nlohmann::ordered_json j;
    j["corpus_hash"] = grid.corpus_hash;
    std::vector<std::string> labels;
    for (const auto& s : grid.sizes) {
        labels.push_back(s.full ? "full" : s.label);
    }
    j["sizes"] = labels;
    j["seeds"] = grid.seeds;
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& [key, ids] : grid.cells) {
        cells.push_back({{"size", key.first}, {"seed", key.second}, {"item_ids", ids}});
    }
    j["cells"] = cells;
    return j;
}

SubsampleGrid grid_from_json(const nlohmann::json& j) {
    SubsampleGrid grid;
    grid.corpus_hash = j.at("corpus_hash").get<std::string>();
    for (const auto& s : j.at("sizes")) {
        grid.sizes.push_back(parse_size(s.get<std::string>()));
    }
    grid.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& c : j.at("cells")) {
        grid.cells[{c.at("size").get<std::string>(), c.at("seed").get<std::uint64_t>()}] =
            c.at("item_ids").get<std::vector<std::string>>();
    }
    return grid;
}

}  // namespace idm
