#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "lssa/corpus.hpp"
#include "lssa/error.hpp"
#include "lssa/rng.hpp"

using namespace lssa;

namespace {

using Tokens = std::vector<std::string>;

TokenSequence seq_of_len(std::size_t words, std::optional<Label> label = std::nullopt) {
    TokenSequence s;
    s.ids.push_back(special::kBos);
    for (std::size_t i = 0; i < words; ++i) s.ids.push_back(4 + static_cast<int>(i % 7));
    s.ids.push_back(special::kEos);
    s.label = label;
    return s;
}

std::vector<TokenSequence> labeled(std::size_t carriers, std::size_t stegos) {
    std::vector<TokenSequence> out;
    for (std::size_t i = 0; i < carriers; ++i) out.push_back(seq_of_len(1 + i % 9, Label::carrier));
    for (std::size_t i = 0; i < stegos; ++i) out.push_back(seq_of_len(1 + i % 5, Label::stego));
    return out;
}

std::size_t count_label(const std::vector<TokenSequence>& v, Label l) {
    return static_cast<std::size_t>(std::ranges::count_if(v, [&](const auto& s) { return s.label == l; }));
}

}  // namespace

TEST_CASE("tokenize") {
    CHECK(tokenize("").empty());
    CHECK(tokenize("Hello, world!") == Tokens{"hello", ",", "world", "!"});
    CHECK(tokenize("a a a") == Tokens{"a", "a", "a"});
    CHECK(tokenize("  Tabs\tand\nNEWLINES ") == Tokens{"tabs", "and", "newlines"});
    CHECK(tokenize("don't") == Tokens{"don", "'", "t"});
    CHECK(tokenize("caf\xc3\xa9.") == Tokens{"caf\xc3\xa9", "."});
}

TEST_CASE("build vocab") {
    const Vocab v = Vocab::build({{"a", "b", "a"}, {"a"}}, 6);
    CHECK(v.size() == 6);
    CHECK(v.id("<pad>") == 0);
    CHECK(v.id("a") == 4);
    CHECK(v.id("b") == 5);

    const Vocab tie = Vocab::build({{"b", "a"}}, 5);
    CHECK(tie.size() == 5);
    CHECK(tie.id("a") == 4);
    CHECK(tie.id("b") == special::kUnk);
    CHECK_FALSE(tie.contains("b"));

    CHECK(Vocab::build({}, 10).size() == 4);
    CHECK_THROWS_AS(Vocab::build({{"a"}}, 4), ConfigError);
}

TEST_CASE("vocab is a bijection and survives a file round trip") {
    std::vector<Tokens> corpus;
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        Tokens t;
        for (int j = 0; j < 8; ++j) t.push_back("w" + std::to_string(rng.below(60)));
        corpus.push_back(t);
    }
    const Vocab v = Vocab::build(corpus, 40);
    CHECK(v.size() == 40);
    for (int id = 0; id < static_cast<int>(v.size()); ++id) CHECK(v.id(v.token(id)) == id);

    const auto path = (std::filesystem::temp_directory_path() / "lssa_vocab_test.txt").string();
    v.save(path);
    CHECK(Vocab::load(path) == v);
    std::filesystem::remove(path);
}

TEST_CASE("encode and decode") {
    const Vocab v = Vocab::from_tokens({"the", "cat", "sat"});
    const auto ids = v.encode({"the", "cat", "sat"});
    CHECK(ids == std::vector<int>{special::kBos, 4, 5, 6, special::kEos});
    CHECK(v.decode(ids) == "the cat sat");
    CHECK(v.encode({"dog"}) == std::vector<int>{special::kBos, special::kUnk, special::kEos});

    Tokens longer(100, "cat");
    const auto capped = v.encode(longer);
    CHECK(capped.size() == kMaxSequenceLength);
    CHECK(capped.back() == special::kEos);

    const TokenSequence s = encode_text(v, "The cat.", Label::stego);
    CHECK(s.scored_len() == 4);
    CHECK(s.label == Label::stego);
}

TEST_CASE("split sizes") {
    const auto recs = labeled(500, 500);
    const DatasetSplit s = split_dataset(recs, 3);
    CHECK(s.train.size() == 630);
    CHECK(s.validation.size() == 70);
    CHECK(s.test.size() == 300);
    CHECK(count_label(s.test, Label::stego) == 150);
    CHECK(count_label(s.validation, Label::stego) == 35);

    const DatasetSplit again = split_dataset(recs, 3);
    for (std::size_t i = 0; i < s.test.size(); ++i) CHECK(s.test[i].ids == again.test[i].ids);

    CHECK_THROWS_AS(split_dataset(labeled(5, 4), 1), ConfigError);
}

TEST_CASE("split is a stratified partition") {
    for (auto [c, st] : {std::pair<std::size_t, std::size_t>{5, 5}, {7, 3}, {123, 77}, {10, 31}}) {
        std::vector<std::optional<Label>> labels;
        for (std::size_t i = 0; i < c; ++i) labels.push_back(Label::carrier);
        for (std::size_t i = 0; i < st; ++i) labels.push_back(Label::stego);
        const SplitIndices idx = split_indices(labels, c * 31 + st);
        const std::size_t n = c + st;

        std::vector<std::size_t> all;
        for (const auto* part : {&idx.train, &idx.validation, &idx.test}) all.insert(all.end(), part->begin(), part->end());
        std::ranges::sort(all);
        std::vector<std::size_t> expect(n);
        std::iota(expect.begin(), expect.end(), 0);
        CHECK(all == expect);

        const auto test_n = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n)));
        CHECK(idx.test.size() == test_n);
        CHECK(idx.validation.size() == static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n - test_n))));

        auto stego_in = [&](const std::vector<std::size_t>& part) {
            return static_cast<double>(std::ranges::count_if(part, [&](std::size_t i) { return i >= c; }));
        };
        const double frac = static_cast<double>(st) / static_cast<double>(n);
        for (const auto* part : {&idx.train, &idx.validation, &idx.test})
            CHECK(std::abs(stego_in(*part) - frac * static_cast<double>(part->size())) <= 1.0);
    }
}

TEST_CASE("batches") {
    std::vector<TokenSequence> seqs;
    for (std::size_t n : {3, 1, 4, 1, 5}) seqs.push_back(seq_of_len(n));
    const auto batches = make_batches(seqs, 2, 9);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].batch_size == 2);
    CHECK(batches[1].batch_size == 2);
    CHECK(batches[2].batch_size == 1);

    std::multiset<std::size_t> seen;
    for (const auto& b : batches)
        for (std::size_t r = 0; r < b.batch_size; ++r) {
            const auto& s = seqs[b.source[r]];
            seen.insert(b.source[r]);
            std::size_t mask_sum = 0;
            for (std::size_t t = 0; t + 1 < b.max_len; ++t) {
                mask_sum += b.scored(r, t);
                CHECK((b.scored(r, t) == 0) == (b.id(r, t + 1) == special::kPad));
            }
            CHECK(mask_sum == s.scored_len());
        }
    CHECK(seen == std::multiset<std::size_t>{0, 1, 2, 3, 4});

    std::vector<TokenSequence> same(4, seq_of_len(6));
    for (const auto& b : make_batches(same, 3, 1))
        CHECK(std::ranges::count(b.ids, special::kPad) == 0);

    const auto again = make_batches(seqs, 2, 9);
    for (std::size_t i = 0; i < batches.size(); ++i) CHECK(again[i].ids == batches[i].ids);
    CHECK_THROWS_AS(make_batches(seqs, 0, 1), ConfigError);
}

TEST_CASE("labels travel with batches only when complete") {
    auto seqs = labeled(2, 2);
    CHECK(make_batches_ordered(seqs, 4)[0].labels.size() == 4);
    seqs[1].label.reset();
    CHECK(make_batches_ordered(seqs, 4)[0].labels.empty());
}

TEST_CASE("line files") {
    const auto path = (std::filesystem::temp_directory_path() / "lssa_lines_test.txt").string();
    write_lines(path, {"one two", "", "three"});
    CHECK(read_lines(path) == std::vector<std::string>{"one two", "three"});
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_lines(path), IoError);
}
