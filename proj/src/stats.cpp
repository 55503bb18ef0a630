#include "idm/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "idm/util.hpp"

namespace idm {

namespace {

void check_pair(std::span<const double> preds, std::span<const double> targets, const char* what) {
    if (preds.size() != targets.size()) {
        throw ValidationError(std::string(what) + ": length mismatch");
    }
    if (preds.size() < 2) {
        throw ValidationError(std::string(what) + ": needs at least two values");
    }
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!std::isfinite(preds[i]) || !std::isfinite(targets[i])) {
            throw NumericError(std::string(what) + ": non-finite input at index " + std::to_string(i));
        }
    }
}

// Integer doubled mid-ranks of |d| for the non-zero differences.
std::vector<std::uint64_t> doubled_abs_ranks(std::span<const double> nonzero) {
    std::vector<double> abs(nonzero.size());
    for (std::size_t i = 0; i < nonzero.size(); ++i) abs[i] = std::fabs(nonzero[i]);
    const auto ranks = mid_ranks(abs);
    std::vector<std::uint64_t> out(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) out[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
    return out;
}

struct Signed {
    std::vector<double> nonzero;
    std::size_t zeros = 0;
};

Signed drop_zeros(std::span<const double> d) {
    Signed s;
    for (double x : d) {
        if (!std::isfinite(x)) throw NumericError("wilcoxon: non-finite difference");
        if (x == 0.0) {
            ++s.zeros;
        } else {
            s.nonzero.push_back(x);
        }
    }
    return s;
}

WilcoxonResult finish(std::uint64_t v2, const std::vector<double>& counts, std::size_t n, std::size_t zeros) {
    // counts[s] = number of sign patterns with doubled statistic s
    double below = 0.0, above = 0.0, total = 0.0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
        total += counts[s];
        if (s <= v2) below += counts[s];
        if (s >= v2) above += counts[s];
    }
    WilcoxonResult r;
    r.V = static_cast<double>(v2) / 2.0;
    r.n = n;
    r.zeros = zeros;
    r.p = std::min(1.0, 2.0 * std::min(below, above) / total);
    return r;
}

}  // namespace

double rmse(std::span<const double> preds, std::span<const double> targets) {
    check_pair(preds, targets, "rmse");
    double ss = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) ss += (preds[i] - targets[i]) * (preds[i] - targets[i]);
    return std::sqrt(ss / static_cast<double>(preds.size()));
}

double r2(std::span<const double> preds, std::span<const double> targets) {
    check_pair(preds, targets, "r2");
    const double m = mean(targets);
    double res = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        res += (targets[i] - preds[i]) * (targets[i] - preds[i]);
        tot += (targets[i] - m) * (targets[i] - m);
    }
    if (tot == 0.0) {
        throw NumericError("r2: targets have zero variance");
    }
    return 1.0 - res / tot;
}

std::vector<double> mid_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> preds, std::span<const double> targets) {
    check_pair(preds, targets, "spearman");
    const auto rp = mid_ranks(preds);
    const auto rt = mid_ranks(targets);
    const double mp = mean(rp), mt = mean(rt);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        sxy += (rp[i] - mp) * (rt[i] - mt);
        sxx += (rp[i] - mp) * (rp[i] - mp);
        syy += (rt[i] - mt) * (rt[i] - mt);
    }
    if (sxx == 0.0 || syy == 0.0) {
        return std::nullopt;
    }
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> dummy_predict(std::span<const double> train_targets, std::size_t n) {
    if (train_targets.empty()) {
        throw ValidationError("dummy_predict: empty training targets");
    }
    return std::vector<double>(n, mean(train_targets));
}

WilcoxonResult wilcoxon_exact(std::span<const double> differences) {
    auto s = drop_zeros(differences);
    if (s.nonzero.empty()) {
        if (differences.empty()) throw ValidationError("wilcoxon: no differences");
        WilcoxonResult r;
        r.zeros = s.zeros;
        r.degenerate = true;
        return r;
    }
    if (s.nonzero.size() > kMaxExactN) {
        throw ValidationError("wilcoxon: exact test supports at most " + std::to_string(kMaxExactN) +
                              " non-zero differences");
    }
    const auto ranks = doubled_abs_ranks(s.nonzero);
    std::uint64_t v2 = 0, total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        total += ranks[i];
        if (s.nonzero[i] > 0) v2 += ranks[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::uint64_t reach = 0;
    for (auto r : ranks) {
        reach += r;
        for (std::uint64_t k = reach; k >= r; --k) {
            counts[k] += counts[k - r];
            if (k == r) break;
        }
    }
    return finish(v2, counts, s.nonzero.size(), s.zeros);
}

WilcoxonResult wilcoxon_bruteforce(std::span<const double> differences) {
    auto s = drop_zeros(differences);
    if (s.nonzero.empty()) {
        WilcoxonResult r;
        r.zeros = s.zeros;
        r.degenerate = true;
        return r;
    }
    if (s.nonzero.size() > 20) {
        throw ValidationError("wilcoxon_bruteforce: too many differences");
    }
    const auto ranks = doubled_abs_ranks(s.nonzero);
    std::uint64_t v2 = 0, total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        total += ranks[i];
        if (s.nonzero[i] > 0) v2 += ranks[i];
    }
    std::vector<double> counts(total + 1, 0.0);
    const std::uint64_t patterns = std::uint64_t{1} << ranks.size();
    for (std::uint64_t mask = 0; mask < patterns; ++mask) {
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            if (mask >> i & 1u) v += ranks[i];
        }
        counts[v] += 1.0;
    }
    return finish(v2, counts, s.nonzero.size(), s.zeros);
}

double signed_rank_cdf(std::size_t n, std::size_t k) {
    const std::size_t total = n * (n + 1) / 2;
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    for (std::size_t r = 1; r <= n; ++r) {
        for (std::size_t s = r * (r + 1) / 2; s >= r; --s) counts[s] += counts[s - r];
    }
    double below = 0.0;
    for (std::size_t s = 0; s <= std::min(k, total); ++s) below += counts[s];
    return below / std::ldexp(1.0, static_cast<int>(n));
}

HodgesLehmann hodges_lehmann(std::span<const double> differences) {
    const std::size_t n = differences.size();
    if (n == 0) {
        throw ValidationError("hodges_lehmann: no differences");
    }
    std::vector<double> walsh;
    walsh.reserve(n * (n + 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) walsh.push_back((differences[i] + differences[j]) / 2.0);
    }
    std::sort(walsh.begin(), walsh.end());
    const std::size_t count = walsh.size();
    HodgesLehmann hl;
    hl.estimate = count % 2 == 1 ? walsh[count / 2] : (walsh[count / 2 - 1] + walsh[count / 2]) / 2.0;

    // Largest c with P(V <= c) <= 0.025; none exists for n <= 5, where the
    // interval falls back to the full Walsh range.
    std::size_t c = 0;
    if (n <= kMaxExactN && signed_rank_cdf(n, 0) <= 0.025) {
        while (c + 1 < count && signed_rank_cdf(n, c + 1) <= 0.025) ++c;
    }
    hl.c = c;
    hl.lo = walsh[c];
    hl.hi = walsh[count - 1 - c];
    return hl;
}

const char* to_string(Metric m) {
    switch (m) {
        case Metric::rmse: return "rmse";
        case Metric::r2: return "r2";
        case Metric::spearman: return "spearman";
    }
    return "?";
}

Metric parse_metric(const std::string& s) {
    if (s == "rmse") return Metric::rmse;
    if (s == "r2") return Metric::r2;
    if (s == "spearman") return Metric::spearman;
    throw ValidationError("unknown metric '" + s + "' (expected rmse, r2 or spearman)");
}

bool lower_is_better(Metric m) { return m == Metric::rmse; }

PairedComparison compare(const std::map<std::uint64_t, double>& a, const std::map<std::uint64_t, double>& b,
                         Metric metric) {
    if (a.size() != b.size() ||
        !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) { return x.first == y.first; })) {
        throw ValidationError("compare: seed sets of the two methods differ");
    }
    PairedComparison pc;
    pc.metric = metric;
    for (const auto& [seed, va] : a) {
        const double vb = b.at(seed);
        if (std::isnan(va) || std::isnan(vb)) continue;
        const double d = va - vb;
        pc.seeds.push_back(seed);
        pc.differences.push_back(d);
        if (lower_is_better(metric) ? d < 0.0 : d > 0.0) ++pc.favourable;
    }
    if (pc.differences.empty()) {
        throw ValidationError(std::string("compare: no seed has a defined ") + to_string(metric) + " on both sides");
    }
    pc.hl = hodges_lehmann(pc.differences);
    pc.test = wilcoxon_exact(pc.differences);
    return pc;
}

double mean(std::span<const double> x) {
    if (x.empty()) throw ValidationError("mean of an empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double sample_sd(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double median(std::vector<double> x) {
    if (x.empty()) throw ValidationError("median of an empty sample");
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 == 1 ? x[n / 2] : (x[n / 2 - 1] + x[n / 2]) / 2.0;
}

}  // namespace idm
