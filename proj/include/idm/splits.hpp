#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "idm/corpus.hpp"
#include "json.hpp"

namespace idm {

enum class Split { train = 0, val = 1, test = 2 };

const char* to_string(Split s);

// passage_id -> "school_type|qK", K the modal difficulty quintile (1..5).
using StrataMap = std::map<std::string, std::string>;

// Empirical 20/40/60/80 percentile cuts (linear interpolation).
std::array<double, 4> quintile_cuts(std::vector<double> values);
// 1-based bin; a value equal to a cut goes to the lower bin.
int quintile_of(double value, const std::array<double, 4>& cuts);

StrataMap stratify(const Corpus& corpus);

struct SplitPlan {
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t seed = 0;
    std::string corpus_hash;
    std::map<std::string, Split> passage_split;
    StrataMap strata;
    // item ids in corpus order
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
    std::vector<std::string> warnings;

    const std::vector<std::string>& ids(Split s) const;
};

// Passage-level stratified partition; largest-remainder allotment per stratum.
SplitPlan partition(const Corpus& corpus, std::array<double, 3> ratios, std::uint64_t seed);

// One training-size target; `full` means the whole training split.
struct SizeSpec {
    std::string label;
    std::size_t items = 0;
    bool full = false;
};

SizeSpec parse_size(const std::string& text);

struct SubsampleGrid {
    std::vector<SizeSpec> sizes;
    std::vector<std::uint64_t> seeds;
    // (size label, seed) -> item ids, in the order the passage prefix adds them
    std::map<std::pair<std::string, std::uint64_t>, std::vector<std::string>> cells;
    std::string corpus_hash;

    const std::vector<std::string>& at(const std::string& label, std::uint64_t seed) const;
};

// Per-seed stratified passage order over the training split: strata are
// shuffled internally, then interleaved by largest remaining quota.
std::vector<std::string> stratified_passage_order(const Corpus& corpus, const SplitPlan& plan,
                                                  std::uint64_t seed);

SubsampleGrid subsample_grid(const Corpus& corpus, const SplitPlan& plan, const std::vector<SizeSpec>& sizes,
                             const std::vector<std::uint64_t>& seeds);

nlohmann::ordered_json plan_to_json(const SplitPlan& plan);
SplitPlan plan_from_json(const nlohmann::json& j);
nlohmann::ordered_json grid_to_json(const SubsampleGrid& grid);
SubsampleGrid grid_from_json(const nlohmann::json& j);

}  // namespace idm
