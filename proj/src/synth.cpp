#include "idm/synth.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <set>
#include <sstream>

#include "idm/util.hpp"

namespace idm {

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::array<const char*, 3> kSchools = {"middle", "high", "college"};

// Every CV-syllable word of the given syllable count, in a fixed order.
std::vector<std::string> syllable_words(std::size_t syllables) {
    std::vector<std::string> words{""};
    for (std::size_t s = 0; s < syllables; ++s) {
        std::vector<std::string> next;
        for (const auto& w : words) {
            for (char c : kConsonants) {
                for (char v : kVowels) next.push_back(w + c + v);
            }
        }
        words = std::move(next);
    }
    return words;
}

std::vector<std::string> draw_words(std::size_t syllables, std::size_t n, Rng& rng) {
    auto all = syllable_words(syllables);
    if (n > all.size()) {
        throw ValidationError("synth: asked for " + std::to_string(n) + " words but only " +
                              std::to_string(all.size()) + " exist");
    }
    rng.shuffle(all);
    all.resize(n);
    return all;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> split_spaces(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// n distinct indices below `bound` not in `excluded`.
std::vector<std::size_t> distinct_below(std::size_t bound, std::size_t n, const std::set<std::size_t>& excluded,
                                        Rng& rng) {
    std::vector<std::size_t> out;
    std::set<std::size_t> seen = excluded;
    while (out.size() < n) {
        const auto k = static_cast<std::size_t>(rng.below(bound));
        if (seen.insert(k).second) out.push_back(k);
    }
    return out;
}

std::string passage_tag(std::size_t p) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%05zu", p);
    return buf;
}

}  // namespace

void SynthConfig::validate() const {
    if (passages == 0 || items_per_passage == 0) throw ValidationError("synth: counts must be positive");
    if (min_len == 0 || min_len > max_len) throw ValidationError("synth: need 0 < min_len <= max_len");
    if (items_per_passage > min_len) throw ValidationError("synth: items_per_passage must not exceed min_len");
    if (options < 2 || options > 10) throw ValidationError("synth: options must lie in [2, 10]");
    if (key_tokens == 0) throw ValidationError("synth: key_tokens must be positive");
    if (filler_vocab < 2 * key_tokens + 8) throw ValidationError("synth: filler_vocab too small");
    if (cue_pool < items_per_passage * options) throw ValidationError("synth: cue_pool too small");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("synth: sigma must be non-negative");
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ValidationError("synth: coefficients must be finite");
}

nlohmann::ordered_json SynthConfig::to_json() const {
    return {{"passages", passages}, {"items_per_passage", items_per_passage}, {"filler_vocab", filler_vocab},
            {"cue_pool", cue_pool},  {"min_len", min_len},                     {"max_len", max_len},
            {"options", options},    {"key_tokens", key_tokens},               {"alpha", alpha},
            {"beta", beta},          {"sigma", sigma},                         {"seed", seed}};
}

double option_overlap(const Item& item) {
    const auto key_words = split_spaces(item.options.at(static_cast<std::size_t>(item.key)));
    const std::set<std::string> key(key_words.begin(), key_words.end());
    if (key.empty() || item.options.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t m = 0; m < item.options.size(); ++m) {
        if (static_cast<int>(m) == item.key) continue;
        const auto words = split_spaces(item.options[m]);
        std::size_t shared = 0;
        for (const auto& w : std::set<std::string>(words.begin(), words.end())) shared += key.count(w);
        total += static_cast<double>(shared) / static_cast<double>(key.size());
    }
    return total / static_cast<double>(item.options.size() - 1);
}

SynthCorpus generate(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    Rng word_rng(mix_seed(config.seed, "words"));
    // Filler words have two syllables and cues three, so the pools never collide.
    const auto filler = draw_words(2, config.filler_vocab, word_rng);
    const auto cues = draw_words(3, config.cue_pool, word_rng);
    const std::size_t body = config.key_tokens - 1;

    SynthCorpus out;
    std::vector<double> lengths;
    for (std::size_t p = 0; p < config.passages; ++p) {
        const std::string tag = passage_tag(p);
        const std::size_t len =
            static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(config.min_len),
                                                 static_cast<std::int64_t>(config.max_len)));
        std::vector<std::string> words(len);
        for (auto& w : words) w = filler[rng.below(filler.size())];
        const auto cue_ids = distinct_below(cues.size(), config.items_per_passage, {}, rng);
        const auto slots = distinct_below(len, config.items_per_passage, {}, rng);
        for (std::size_t j = 0; j < cue_ids.size(); ++j) words[slots[j]] = cues[cue_ids[j]];
        const std::string passage = join(words);
        const std::set<std::size_t> passage_cues(cue_ids.begin(), cue_ids.end());

        for (std::size_t j = 0; j < config.items_per_passage; ++j) {
            Item item;
            item.item_id = tag + "_q" + std::to_string(j);
            item.passage_id = tag;
            item.passage = passage;
            item.school_type = kSchools[p % kSchools.size()];

            const auto q_len = static_cast<std::size_t>(rng.between(3, 6));
            std::vector<std::string> question;
            for (std::size_t k = 0; k < q_len; ++k) question.push_back(filler[rng.below(filler.size())]);
            item.question = join(question) + " ?";

            const auto key_body = distinct_below(filler.size(), body, {}, rng);
            std::vector<std::string> key{cues[cue_ids[j]]};
            for (auto k : key_body) key.push_back(filler[k]);
            const std::set<std::size_t> key_set(key_body.begin(), key_body.end());
            const auto decoys = distinct_below(cues.size(), config.options - 1, passage_cues, rng);

            std::vector<std::vector<std::string>> opts;
            for (std::size_t m = 0; m + 1 < config.options; ++m) {
                const auto shared = static_cast<std::size_t>(rng.below(config.key_tokens));  // 0..K-1
                std::vector<std::size_t> picked(key_body.begin(), key_body.end());
                rng.shuffle(picked);
                picked.resize(shared);
                const auto fresh = distinct_below(filler.size(), body - shared, key_set, rng);
                std::vector<std::string> d{cues[decoys[m]]};
                for (auto k : picked) d.push_back(filler[k]);
                for (auto k : fresh) d.push_back(filler[k]);
                rng.shuffle(d);
                opts.push_back(std::move(d));
            }
            rng.shuffle(key);
            const auto key_pos = static_cast<std::size_t>(rng.below(config.options));
            opts.insert(opts.begin() + static_cast<std::ptrdiff_t>(key_pos), key);
            for (const auto& o : opts) item.options.push_back(join(o));
            item.key = static_cast<int>(key_pos);

            ItemTruth t;
            t.item_id = item.item_id;
            t.length = len;
            t.overlap = option_overlap(item);
            out.truth.push_back(t);
            lengths.push_back(static_cast<double>(len));
            out.corpus.push_back(std::move(item));
        }
    }

    double m = 0.0;
    for (double x : lengths) m += x;
    m /= static_cast<double>(lengths.size());
    double ss = 0.0;
    for (double x : lengths) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(lengths.size()));
    out.length_mean = m;
    out.length_sd = sd;

    Rng noise(mix_seed(config.seed, "noise"));
    for (std::size_t i = 0; i < out.corpus.size(); ++i) {
        auto& t = out.truth[i];
        const double z = sd > 0.0 ? (static_cast<double>(t.length) - m) / sd : 0.0;
        t.noiseless = config.alpha * z + config.beta * t.overlap;
        out.corpus[i].difficulty = t.noiseless + config.sigma * noise.normal();
    }
    validate_corpus(out.corpus);
    return out;
}

nlohmann::ordered_json truth_to_json(const SynthConfig& config, const SynthCorpus& synth) {
    nlohmann::ordered_json j;
    j["config"] = config.to_json();
    j["coefficients"] = {{"alpha", config.alpha}, {"beta", config.beta}, {"sigma", config.sigma}};
    j["length_mean"] = synth.length_mean;
    j["length_sd"] = synth.length_sd;
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& t : synth.truth) {
        items.push_back({{"item_id", t.item_id}, {"length", t.length}, {"overlap", t.overlap},
                         {"noiseless", t.noiseless}});
    }
    j["items"] = items;
    return j;
}

}  // namespace idm
