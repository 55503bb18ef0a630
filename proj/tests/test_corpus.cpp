#include <map>

#include "doctest.h"
#include "idm/corpus.hpp"
#include "support.hpp"

using namespace idm;
using idm::test::make_item;
using idm::test::tiny_item;

namespace {

std::string line_of(const Item& item) { return item_to_json(item).dump(); }

Vocab vocab_for(const Item& item, std::size_t cap = 1000) {
    const Corpus c{item};
    return Vocab::build(std::span<const Item>(c), cap);
}

}  // namespace

TEST_CASE("load_corpus round-trips a two-line file") {
    const auto dir = idm::test::temp_dir("corpus_rt");
    const Corpus c{tiny_item("a"), tiny_item("b")};
    save_corpus(c, dir + "/c.jsonl");
    const auto back = load_corpus(dir + "/c.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].item_id == "a");
    CHECK(back[1].item_id == "b");
    CHECK(back[1].options == c[1].options);
    CHECK(back[0].school_type == std::optional<std::string>("high"));
    CHECK(corpus_to_jsonl(back) == corpus_to_jsonl(c));
}

TEST_CASE("key out of range is a validation error naming the item") {
    auto bad = tiny_item("bad_item");
    bad.key = 4;
    try {
        parse_corpus(line_of(bad) + "\n");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("bad_item") != std::string::npos);
    }
}

TEST_CASE("malformed line reports its line number") {
    const std::string text = line_of(tiny_item("a")) + "\n{not json\n";
    try {
        parse_corpus(text);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("duplicate item ids are rejected") {
    const std::string text = line_of(tiny_item("a")) + "\n" + line_of(tiny_item("a")) + "\n";
    CHECK_THROWS_AS(parse_corpus(text), ValidationError);
}

TEST_CASE("shared passage_id with different text is rejected, matching a one-pass map oracle") {
    auto a = tiny_item("a");
    auto b = tiny_item("b");
    b.passage = "A different passage.";
    const Corpus bad{a, b};
    const Corpus good{a, tiny_item("c")};
    auto oracle = [](const Corpus& c) {
        std::map<std::string, std::string> seen;
        for (const auto& item : c) {
            auto [it, fresh] = seen.emplace(item.passage_id, item.passage);
            if (!fresh && it->second != item.passage) return false;
        }
        return true;
    };
    CHECK_FALSE(oracle(bad));
    CHECK_THROWS_AS(validate_corpus(bad), ValidationError);
    CHECK(oracle(good));
    CHECK_NOTHROW(validate_corpus(good));
}

TEST_CASE("other item invariants") {
    auto empty_opt = tiny_item();
    empty_opt.options[2] = "";
    CHECK_THROWS_AS(validate_corpus({empty_opt}), ValidationError);
    auto nan = tiny_item();
    nan.difficulty = std::nan("");
    CHECK_THROWS_AS(validate_corpus({nan}), ValidationError);
    auto neg = tiny_item();
    neg.key = -1;
    CHECK_THROWS_AS(validate_corpus({neg}), ValidationError);
}

TEST_CASE("tokenizer lowercases and splits punctuation") {
    const auto w = split_words("The cat, the DOG!");
    CHECK(w == std::vector<std::string>{"the", "cat", ",", "the", "dog", "!"});
    CHECK(split_words("") .empty());
}

TEST_CASE("vocab ranks by frequency with lexicographic ties") {
    const std::vector<std::string> texts = {"the cat", "the dog"};
    const auto v = Vocab::build_from_texts(texts, 10);
    REQUIRE(v.size() == 7);
    CHECK(v.token(kPad) == "[PAD]");
    CHECK(v.id("the") == 4);
    CHECK(v.id("cat") == 5);
    CHECK(v.id("dog") == 6);
    CHECK(v.id("bird") == kUnk);
}

TEST_CASE("vocab cap 4 keeps only specials") {
    const std::vector<std::string> texts = {"the cat", "the dog"};
    const auto v = Vocab::build_from_texts(texts, 4);
    CHECK(v.size() == 4);
    for (auto id : v.encode("the cat dog")) CHECK(id == kUnk);
}

TEST_CASE("vocab is deterministic and serialises losslessly") {
    const Corpus c{tiny_item("a"), make_item("b", "p2", "Dogs bark loudly.", "Who barks?", {"dogs", "cats"}, 0, 1.0)};
    const auto v1 = Vocab::build(std::span<const Item>(c), 12);
    const auto v2 = Vocab::build(std::span<const Item>(c), 12);
    CHECK(v1 == v2);
    CHECK(v1.size() == 12);
    auto tagged = v1;
    tagged.set_source_hash("abc");
    const auto back = Vocab::from_json(tagged.to_json());
    CHECK(back == v1);
    CHECK(back.source_hash() == "abc");
    const Corpus empty;
    CHECK_THROWS_AS(Vocab::build(std::span<const Item>(empty), 12), ValidationError);
}

TEST_CASE("assemble_joint layout") {
    const auto item = tiny_item();
    const auto v = vocab_for(item);
    const auto s = assemble_joint(item, v, 256);
    CHECK(s.ids.front() == kCls);
    CHECK(s.count(kCls) == 1);
    CHECK(s.count(kSep) == 2);
    CHECK_NOTHROW(s.check(256));
    const auto expected_opts = v.encode("A) on the mat B) in the hat C) under a tree D) by the door");
    CHECK(labelled_options(item) == "A) on the mat B) in the hat C) under a tree D) by the door");
    CHECK(std::equal(expected_opts.rbegin(), expected_opts.rend(), s.ids.rbegin()));
}

TEST_CASE("assemble_joint truncates the passage only") {
    auto item = tiny_item();
    std::string passage;
    for (int i = 0; i < 1000; ++i) passage += "word ";
    item.passage = passage;
    const auto v = vocab_for(item);
    const auto s = assemble_joint(item, v, 64);
    CHECK(s.size() == 64);
    const auto q = v.encode(item.question);
    const auto o = v.encode(labelled_options(item));
    // CLS passage SEP question SEP options: the tail is intact
    std::vector<std::int32_t> tail = {kSep};
    tail.insert(tail.end(), q.begin(), q.end());
    tail.push_back(kSep);
    tail.insert(tail.end(), o.begin(), o.end());
    CHECK(std::equal(tail.rbegin(), tail.rend(), s.ids.rbegin()));
}

TEST_CASE("assemble_joint with an empty passage and an unencodable item") {
    auto item = tiny_item();
    item.passage = "";
    const auto v = vocab_for(tiny_item());
    const auto s = assemble_joint(item, v, 256);
    CHECK(s.ids[0] == kCls);
    CHECK(s.ids[1] == kSep);
    CHECK_THROWS_AS(assemble_joint(tiny_item(), v, 16), ValidationError);
}

TEST_CASE("assemble_components structure and cross-check with the joint layout") {
    const auto item = tiny_item();
    const auto v = vocab_for(item);
    const auto comps = assemble_components(item, v, 256);
    REQUIRE(comps.size() == 3);
    for (const auto& c : comps) {
        CHECK(c.count(kCls) == 1);
        CHECK(c.count(kSep) == 0);
        CHECK(c.ids[0] == kCls);
    }
    // four label markers in order
    std::vector<std::int32_t> labels;
    for (const char* l : {"a", "b", "c", "d"}) labels.push_back(v.id(l));
    std::size_t next = 0;
    for (std::size_t i = 0; i + 1 < comps[2].size() && next < labels.size(); ++i) {
        if (comps[2].ids[i] == labels[next] && comps[2].ids[i + 1] == v.id(")")) ++next;
    }
    CHECK(next == 4);

    std::vector<std::int32_t> re = comps[0].ids;
    re.push_back(kSep);
    re.insert(re.end(), comps[1].ids.begin() + 1, comps[1].ids.end());
    re.push_back(kSep);
    re.insert(re.end(), comps[2].ids.begin() + 1, comps[2].ids.end());
    CHECK(re == assemble_joint(item, v, 256).ids);
}

TEST_CASE("assemble_mcqa layout and shared prefix") {
    auto item = tiny_item();
    item.options[3] = "by the big blue front door of the house";
    const auto v = vocab_for(item);
    std::vector<TokenSequence> seqs;
    for (std::size_t m = 0; m < item.options.size(); ++m) seqs.push_back(assemble_mcqa(item, v, 256, m));
    for (std::size_t m = 0; m < seqs.size(); ++m) {
        const auto& s = seqs[m];
        CHECK(s.count(kSep) == 1);
        CHECK(s.ids[0] == kCls);
        const auto opt = v.encode(item.options[m]);
        CHECK(std::equal(opt.rbegin(), opt.rend(), s.ids.rbegin()));
    }
    auto prefix = [](const TokenSequence& s) {
        const auto sep = std::find(s.ids.begin(), s.ids.end(), kSep);
        return std::vector<std::int32_t>(s.ids.begin(), sep + 1);
    };
    for (const auto& s : seqs) CHECK(prefix(s) == prefix(seqs[0]));
    // passage then question with no separator between them
    const auto p = v.encode(item.passage);
    const auto q = v.encode(item.question);
    std::vector<std::int32_t> expect = {kCls};
    expect.insert(expect.end(), p.begin(), p.end());
    expect.insert(expect.end(), q.begin(), q.end());
    expect.push_back(kSep);
    CHECK(prefix(seqs[0]) == expect);

    // truncation keeps prefixes equal across options of different lengths
    std::string passage;
    for (int i = 0; i < 300; ++i) passage += "cat ";
    item.passage = passage;
    std::vector<TokenSequence> cut;
    for (std::size_t m = 0; m < item.options.size(); ++m) cut.push_back(assemble_mcqa(item, v, 48, m));
    for (const auto& s : cut) {
        CHECK(s.size() <= 48);
        CHECK(prefix(s) == prefix(cut[0]));
    }
    CHECK_THROWS_AS(assemble_mcqa(item, v, 256, 4), ValidationError);
}

TEST_CASE("re-tokenising identical text is deterministic") {
    const auto item = tiny_item();
    const auto v = vocab_for(item);
    CHECK(v.encode(item.passage) == v.encode(item.passage));
    CHECK(assemble_joint(item, v, 256) == assemble_joint(item, v, 256));
}

TEST_CASE("TokenSequence invariants") {
    TokenSequence s{{kCls, 5, 6, kPad, kPad}};
    CHECK(s.content_length() == 3);
    CHECK_NOTHROW(s.check(8));
    CHECK_THROWS_AS(s.check(4), ValidationError);
    TokenSequence inner{{kCls, kPad, 5}};
    CHECK_THROWS_AS(inner.check(8), ValidationError);
    TokenSequence no_cls{{5, 6}};
    CHECK_THROWS_AS(no_cls.check(8), ValidationError);
    CHECK(TokenSequence{{kCls, 7}}.padded(4).ids == std::vector<std::int32_t>{kCls, 7, kPad, kPad});
}

TEST_CASE("CorpusIndex access hook sees every resolved id") {
    const Corpus c{tiny_item("a"), tiny_item("b")};
    CorpusIndex index(c);
    std::vector<std::string> seen;
    index.set_access_hook([&](std::string_view id) { seen.emplace_back(id); });
    const std::vector<std::string> ids = {"b"};
    const auto items = index.resolve(ids);
    CHECK(items[0]->item_id == "b");
    CHECK(seen == std::vector<std::string>{"b"});
    CHECK_THROWS_AS(index.at("zzz"), ValidationError);
}
