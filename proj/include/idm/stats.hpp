#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace idm {

double rmse(std::span<const double> preds, std::span<const double> targets);

// 1 - SSres/SStot, SStot taken about the mean of `targets`.
double r2(std::span<const double> preds, std::span<const double> targets);

// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> mid_ranks(std::span<const double> x);

// Pearson correlation of mid-ranks; nullopt when either side has zero variance.
std::optional<double> spearman(std::span<const double> preds, std::span<const double> targets);

std::vector<double> dummy_predict(std::span<const double> train_targets, std::size_t n);

struct WilcoxonResult {
    double V = 0.0;        // sum of mid-ranks of positive differences
    double p = 1.0;        // exact two-sided
    std::size_t n = 0;     // differences kept
    std::size_t zeros = 0; // exact-zero differences dropped
    bool degenerate = false;
};

inline constexpr std::size_t kMaxExactN = 25;

// Exact null distribution over the observed mid-rank multiset.
WilcoxonResult wilcoxon_exact(std::span<const double> differences);

// Brute-force 2^n sign enumeration; for testing the exact routine.
WilcoxonResult wilcoxon_bruteforce(std::span<const double> differences);

// P(V <= k) for n tie-free ranks.
double signed_rank_cdf(std::size_t n, std::size_t k);

struct HodgesLehmann {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t c = 0;  // Walsh averages trimmed from each end
};

HodgesLehmann hodges_lehmann(std::span<const double> differences);

enum class Metric { rmse, r2, spearman };
const char* to_string(Metric m);
Metric parse_metric(const std::string& s);
bool lower_is_better(Metric m);

struct PairedComparison {
    Metric metric = Metric::rmse;
    std::vector<std::uint64_t> seeds;
    std::vector<double> differences;  // a - b per seed
    HodgesLehmann hl;
    WilcoxonResult test;
    std::size_t favourable = 0;
};

// Per-seed values of one metric for two methods; seed sets must match.
// Seeds where either value is NaN (undefined Spearman) are left out.
PairedComparison compare(const std::map<std::uint64_t, double>& a, const std::map<std::uint64_t, double>& b,
                         Metric metric);

double mean(std::span<const double> x);
// Sample standard deviation (n - 1); 0 for a single value.
double sample_sd(std::span<const double> x);
double median(std::vector<double> x);

}  // namespace idm
