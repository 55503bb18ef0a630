#include "idm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "idm/util.hpp"

namespace idm {

namespace {

Item item_from_json(const nlohmann::json& j) {
    Item item;
    item.item_id = j.at("item_id").get<std::string>();
    item.passage_id = j.at("passage_id").get<std::string>();
    item.passage = j.at("passage").get<std::string>();
    item.question = j.at("question").get<std::string>();
    item.options = j.at("options").get<std::vector<std::string>>();
    item.key = j.at("key").get<int>();
    item.difficulty = j.at("difficulty").get<double>();
    if (auto it = j.find("school_type"); it != j.end() && !it->is_null()) {
        item.school_type = it->get<std::string>();
    }
    return item;
}

}  // namespace

Corpus parse_corpus(std::string_view text) {
    Corpus corpus;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        try {
            corpus.push_back(item_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    validate_corpus(corpus);
    return corpus;
}

Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

void validate_corpus(const Corpus& corpus) {
    std::set<std::string_view> ids;
    std::map<std::string_view, const Item*> passage_owner;
    for (const Item& item : corpus) {
        const std::string& id = item.item_id;
        if (id.empty()) {
            throw ValidationError("item with empty item_id");
        }
        if (!ids.insert(id).second) {
            throw ValidationError("duplicate item_id " + id);
        }
        const auto m = item.options.size();
        if (m < 2 || m > kOptionLabels.size()) {
            throw ValidationError("item " + id + ": option count " + std::to_string(m) + " outside [2, " +
                                  std::to_string(kOptionLabels.size()) + "]");
        }
        for (const auto& opt : item.options) {
            if (opt.empty()) {
                throw ValidationError("item " + id + ": empty option text");
            }
        }
        if (item.key < 0 || static_cast<std::size_t>(item.key) >= m) {
            throw ValidationError("item " + id + ": key " + std::to_string(item.key) + " out of range for " +
                                  std::to_string(m) + " options");
        }
        if (!std::isfinite(item.difficulty)) {
            throw ValidationError("item " + id + ": non-finite difficulty");
        }
        auto [it, fresh] = passage_owner.emplace(item.passage_id, &item);
        if (!fresh && it->second->passage != item.passage) {
            throw ValidationError("item " + id + ": passage text differs from item " + it->second->item_id +
                                  " of passage " + item.passage_id);
        }
    }
}

nlohmann::ordered_json item_to_json(const Item& item) {
    nlohmann::ordered_json j;
    j["item_id"] = item.item_id;
    j["passage_id"] = item.passage_id;
    j["passage"] = item.passage;
    j["question"] = item.question;
    j["options"] = item.options;
    j["key"] = item.key;
    j["difficulty"] = item.difficulty;
    if (item.school_type) {
        j["school_type"] = *item.school_type;
    }
    return j;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const Item& item : corpus) {
        out += item_to_json(item).dump();
        out += '\n';
    }
    return out;
}

void save_corpus(const Corpus& corpus, const std::string& path) { write_file(path, corpus_to_jsonl(corpus)); }

std::string corpus_hash(const Corpus& corpus) { return fnv1a_hex(corpus_to_jsonl(corpus)); }

CorpusIndex::CorpusIndex(const Corpus& corpus) : corpus_(&corpus) {
    by_id_.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        by_id_.emplace(corpus[i].item_id, i);
    }
}

const Item& CorpusIndex::at(std::string_view item_id) const {
    auto it = by_id_.find(std::string(item_id));
    if (it == by_id_.end()) {
        throw ValidationError("unknown item_id " + std::string(item_id));
    }
    if (hook_) {
        hook_(item_id);
    }
    return (*corpus_)[it->second];
}

std::vector<const Item*> CorpusIndex::resolve(std::span<const std::string> ids) const {
    std::vector<const Item*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        out.push_back(&at(id));
    }
    return out;
}

bool CorpusIndex::contains(std::string_view item_id) const { return by_id_.count(std::string(item_id)) > 0; }

// ---------------------------------------------------------------------------

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            flush();
        } else {
            flush();
            words.emplace_back(1, ch);
        }
    }
    flush();
    return words;
}

std::string labelled_options(const Item& item) {
    std::string out;
    for (std::size_t m = 0; m < item.options.size(); ++m) {
        if (m > 0) {
            out += ' ';
        }
        out += kOptionLabels[m];
        out += ") ";
        out += item.options[m];
    }
    return out;
}

namespace {

std::vector<std::string> vocab_texts(std::span<const Item* const> items) {
    std::vector<std::string> texts;
    std::set<std::string_view> seen_passages;
    for (const Item* item : items) {
        if (seen_passages.insert(item->passage_id).second) {
            texts.push_back(item->passage);
        }
        texts.push_back(item->question);
        texts.push_back(labelled_options(*item));
    }
    return texts;
}

}  // namespace

Vocab Vocab::build_from_texts(std::span<const std::string> texts, std::size_t cap) {
    if (cap < 4) {
        throw ValidationError("vocab cap must be at least 4");
    }
    if (texts.empty()) {
        throw ValidationError("cannot build a vocabulary from an empty corpus");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (auto& w : split_words(text)) {
            ++counts[std::move(w)];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    // map order is lexicographic; stable sort keeps it as the tie-break
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    Vocab v;
    v.cap_ = cap;
    v.tokens_ = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
    const std::size_t room = cap - kNumSpecials;
    for (std::size_t i = 0; i < ranked.size() && i < room; ++i) {
        v.tokens_.push_back(ranked[i].first);
    }
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i));
    }
    return v;
}

Vocab Vocab::build(std::span<const Item* const> items, std::size_t cap) {
    if (items.empty()) {
        throw ValidationError("cannot build a vocabulary from an empty corpus");
    }
    const auto texts = vocab_texts(items);
    return build_from_texts(texts, cap);
}

Vocab Vocab::build(std::span<const Item> items, std::size_t cap) {
    std::vector<const Item*> ptrs;
    ptrs.reserve(items.size());
    for (const auto& item : items) {
        ptrs.push_back(&item);
    }
    return build(std::span<const Item* const>(ptrs), cap);
}

std::int32_t Vocab::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    // special names are not reachable from text: split_words never emits '['
    if (it == index_.end() || it->second < kNumSpecials) {
        return kUnk;
    }
    return it->second;
}

std::vector<std::int32_t> Vocab::encode(std::string_view text) const {
    std::vector<std::int32_t> ids;
    for (const auto& w : split_words(text)) {
        ids.push_back(id(w));
    }
    return ids;
}

nlohmann::json Vocab::to_json() const {
    nlohmann::ordered_json j;
    j["header"] = {{"cap", cap_}, {"size", tokens_.size()}, {"source_split_hash", source_hash_}};
    nlohmann::ordered_json map = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        map[tokens_[i]] = i;
    }
    j["token_to_id"] = map;
    return nlohmann::json::parse(j.dump());
}

Vocab Vocab::from_json(const nlohmann::json& j) {
    Vocab v;
    v.cap_ = j.at("header").at("cap").get<std::size_t>();
    v.source_hash_ = j.at("header").value("source_split_hash", "");
    const auto& map = j.at("token_to_id");
    v.tokens_.assign(map.size(), {});
    for (auto it = map.begin(); it != map.end(); ++it) {
        const auto id = it.value().get<std::size_t>();
        if (id >= v.tokens_.size() || !v.tokens_[id].empty()) {
            throw ValidationError("vocab file: ids are not contiguous");
        }
        v.tokens_[id] = it.key();
    }
    if (v.tokens_.size() < kNumSpecials || v.tokens_[kPad] != "[PAD]" || v.tokens_[kCls] != "[CLS]") {
        throw ValidationError("vocab file: special tokens missing");
    }
    for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
        v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i));
    }
    return v;
}

// ---------------------------------------------------------------------------

std::size_t TokenSequence::count(std::int32_t id) const {
    return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id));
}

std::size_t TokenSequence::content_length() const {
    std::size_t n = ids.size();
    while (n > 0 && ids[n - 1] == kPad) {
        --n;
    }
    return n;
}

TokenSequence TokenSequence::padded(std::size_t length) const {
    TokenSequence out = *this;
    if (out.ids.size() < length) {
        out.ids.resize(length, kPad);
    }
    return out;
}

void TokenSequence::check(std::size_t max_len) const {
    if (ids.empty()) {
        throw ValidationError("empty token sequence");
    }
    if (ids.front() != kCls) {
        throw ValidationError("token sequence does not start with CLS");
    }
    if (ids.size() > max_len) {
        throw ValidationError("token sequence longer than max_len");
    }
    const auto content = content_length();
    if (std::find(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(content), kPad) !=
        ids.begin() + static_cast<std::ptrdiff_t>(content)) {
        throw ValidationError("PAD inside token sequence content");
    }
}

namespace {

void append(std::vector<std::int32_t>& dst, const std::vector<std::int32_t>& src, std::size_t limit) {
    dst.insert(dst.end(), src.begin(), src.begin() + static_cast<std::ptrdiff_t>(std::min(limit, src.size())));
}

[[noreturn]] void unencodable(const Item& item, std::size_t needed, std::size_t max_len) {
    throw ValidationError("item " + item.item_id + " is unencodable: question and options need " +
                          std::to_string(needed) + " tokens, max_len is " + std::to_string(max_len));
}

}  // namespace

TokenSequence assemble_joint(const Item& item, const Vocab& vocab, std::size_t max_len) {
    const auto passage = vocab.encode(item.passage);
    const auto question = vocab.encode(item.question);
    const auto options = vocab.encode(labelled_options(item));
    const std::size_t fixed = 3 + question.size() + options.size();
    if (fixed > max_len) {
        unencodable(item, fixed, max_len);
    }
    TokenSequence seq;
    seq.ids.reserve(std::min(max_len, fixed + passage.size()));
    seq.ids.push_back(kCls);
    append(seq.ids, passage, max_len - fixed);
    seq.ids.push_back(kSep);
    append(seq.ids, question, question.size());
    seq.ids.push_back(kSep);
    append(seq.ids, options, options.size());
    return seq;
}

std::vector<TokenSequence> assemble_components(const Item& item, const Vocab& vocab, std::size_t max_len,
                                               std::size_t passage_max_len) {
    const auto passage = vocab.encode(item.passage);
    const auto question = vocab.encode(item.question);
    const auto options = vocab.encode(labelled_options(item));
    if (1 + question.size() > max_len) {
        unencodable(item, 1 + question.size(), max_len);
    }
    if (1 + options.size() > max_len) {
        unencodable(item, 1 + options.size(), max_len);
    }
    if (passage_max_len < 1) {
        throw ValidationError("passage_max_len must be positive");
    }
    std::vector<TokenSequence> out(3);
    out[0].ids.push_back(kCls);
    append(out[0].ids, passage, passage_max_len - 1);
    out[1].ids.push_back(kCls);
    append(out[1].ids, question, question.size());
    out[2].ids.push_back(kCls);
    append(out[2].ids, options, options.size());
    return out;
}

TokenSequence assemble_mcqa(const Item& item, const Vocab& vocab, std::size_t max_len, std::size_t option) {
    if (option >= item.options.size()) {
        throw ValidationError("item " + item.item_id + ": option index " + std::to_string(option) + " out of range");
    }
    const auto passage = vocab.encode(item.passage);
    const auto question = vocab.encode(item.question);
    std::size_t longest = 0;
    std::vector<std::int32_t> chosen;
    for (std::size_t m = 0; m < item.options.size(); ++m) {
        auto ids = vocab.encode(item.options[m]);
        longest = std::max(longest, ids.size());
        if (m == option) {
            chosen = std::move(ids);
        }
    }
    const std::size_t fixed = 2 + question.size() + longest;
    if (fixed > max_len) {
        unencodable(item, fixed, max_len);
    }
    TokenSequence seq;
    seq.ids.push_back(kCls);
    append(seq.ids, passage, max_len - fixed);
    append(seq.ids, question, question.size());
    seq.ids.push_back(kSep);
    append(seq.ids, chosen, chosen.size());
    return seq;
}

}  // namespace idm
