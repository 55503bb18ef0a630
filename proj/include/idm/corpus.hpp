#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace idm {

// One multiple-choice reading-comprehension item.
struct Item {
    std::string item_id;
    std::string passage_id;
    std::string passage;
    std::string question;
    std::vector<std::string> options;
    int key = 0;
    double difficulty = 0.0;  // Rasch logit scale
    std::optional<std::string> school_type;
};

using Corpus = std::vector<Item>;

// Parse and validate a JSON-lines corpus. Throws ParseError for a malformed
// line and ValidationError when an Item invariant is violated.
Corpus load_corpus(const std::string& path);
Corpus parse_corpus(std::string_view text);
void validate_corpus(const Corpus& corpus);

nlohmann::ordered_json item_to_json(const Item& item);
std::string corpus_to_jsonl(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::string& path);
// Content hash of the canonical JSONL serialisation.
std::string corpus_hash(const Corpus& corpus);

// Id lookup over a corpus. The optional access hook sees every id that is
// resolved, which lets tests prove a stage never touched the test split.
class CorpusIndex {
public:
    explicit CorpusIndex(const Corpus& corpus);

    const Item& at(std::string_view item_id) const;
    std::vector<const Item*> resolve(std::span<const std::string> ids) const;
    bool contains(std::string_view item_id) const;

    void set_access_hook(std::function<void(std::string_view)> hook) { hook_ = std::move(hook); }
    const Corpus& corpus() const noexcept { return *corpus_; }

private:
    const Corpus* corpus_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::function<void(std::string_view)> hook_;
};

// ---------------------------------------------------------------------------
// Tokenization

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kUnk = 1;
inline constexpr std::int32_t kCls = 2;
inline constexpr std::int32_t kSep = 3;
inline constexpr std::int32_t kNumSpecials = 4;

// Lowercased word-level split; every punctuation mark is its own token.
std::vector<std::string> split_words(std::string_view text);

class Vocab {
public:
    Vocab() = default;

    // Frequency-ranked (ties lexicographic) up to cap - 4 entries, counted over
    // the passage, question and option texts of the given items.
    static Vocab build(std::span<const Item> items, std::size_t cap);
    static Vocab build(std::span<const Item* const> items, std::size_t cap);
    static Vocab build_from_texts(std::span<const std::string> texts, std::size_t cap);

    std::int32_t id(std::string_view token) const;
    const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    std::size_t size() const noexcept { return tokens_.size(); }
    std::size_t cap() const noexcept { return cap_; }

    std::vector<std::int32_t> encode(std::string_view text) const;

    const std::string& source_hash() const noexcept { return source_hash_; }
    void set_source_hash(std::string h) { source_hash_ = std::move(h); }

    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);

    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_ && cap_ == other.cap_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> index_;
    std::size_t cap_ = 0;
    std::string source_hash_;
};

// Token ids for one encoder input. First id is CLS; PAD only as a trailing run.
struct TokenSequence {
    std::vector<std::int32_t> ids;

    std::size_t size() const noexcept { return ids.size(); }
    std::size_t count(std::int32_t id) const;
    // Number of leading non-PAD tokens.
    std::size_t content_length() const;
    // Append PAD until the sequence has `length` ids.
    TokenSequence padded(std::size_t length) const;
    // Throws ValidationError when an invariant is broken.
    void check(std::size_t max_len) const;

    bool operator==(const TokenSequence&) const = default;
};

struct AssemblyLimits {
    std::size_t max_len = 256;          // joint and MCQA inputs
    std::size_t passage_max_len = 192;  // passage component of the component-wise input
};

inline constexpr std::string_view kOptionLabels = "ABCDEFGHIJ";

// "A) opt0 B) opt1 ..." with single spaces between options.
std::string labelled_options(const Item& item);

// CLS passage SEP question SEP labelled-options; passage truncated from its end.
TokenSequence assemble_joint(const Item& item, const Vocab& vocab, std::size_t max_len);

// (passage), (question), (labelled options), each starting with CLS.
std::vector<TokenSequence> assemble_components(const Item& item, const Vocab& vocab, std::size_t max_len,
                                               std::size_t passage_max_len = 192);

// CLS passage question SEP option_m. The passage is cut to fit the longest
// option so all M sequences share one prefix.
TokenSequence assemble_mcqa(const Item& item, const Vocab& vocab, std::size_t max_len, std::size_t option);

}  // namespace idm
