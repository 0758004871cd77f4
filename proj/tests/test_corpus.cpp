#include <gtest/gtest.h>

#include <sstream>

#include "bytelm/corpus.hpp"

using namespace bytelm;

namespace {

std::string jsonl_line(const std::string& id, const std::string& lang, const std::string& text) {
    nlohmann::json j{{"id", id}, {"lang", lang}, {"text", text}};
    return j.dump() + "\n";
}

Corpus corpus_of_sizes(const std::vector<size_t>& sizes) {
    Corpus c;
    for (size_t i = 0; i < sizes.size(); ++i)
        c.docs.push_back({"d" + std::to_string(i), "xx", std::string(sizes[i], 'a' + (i % 26))});
    return c;
}

}  // namespace

TEST(Ingest, FiltersByLanguageInOrder) {
    std::stringstream in(jsonl_line("1", "pt", "ola") + jsonl_line("2", "en", "hello") +
                         jsonl_line("3", "pt", "mundo"));
    IngestTally tally;
    Corpus c = ingest_to_corpus(in, "pt", &tally);
    ASSERT_EQ(c.docs.size(), 2u);
    EXPECT_EQ(c.docs[0].id, "1");
    EXPECT_EQ(c.docs[1].id, "3");
    EXPECT_EQ(tally.rejects, 0u);
    for (const auto& d : c.docs) EXPECT_EQ(d.language, "pt");
}

TEST(Ingest, EmptyStream) {
    std::stringstream in("");
    IngestTally tally;
    Corpus c = ingest_to_corpus(in, "pt", &tally);
    EXPECT_TRUE(c.docs.empty());
    EXPECT_EQ(tally.rejects, 0u);
}

// Fixture with exactly 7 malformed lines among 100: the reject tally must
// count them all and the 93 well-formed documents must survive.
TEST(Ingest, CountsRejects) {
    std::mt19937_64 rng = make_rng(17);
    std::vector<size_t> bad_lines;
    while (bad_lines.size() < 7) {
        size_t cand = uniform_below(rng, 100);
        if (std::find(bad_lines.begin(), bad_lines.end(), cand) == bad_lines.end()) bad_lines.push_back(cand);
    }
    std::string payload;
    for (size_t i = 0; i < 100; ++i) {
        const bool bad = std::find(bad_lines.begin(), bad_lines.end(), i) != bad_lines.end();
        if (!bad) {
            payload += jsonl_line("doc" + std::to_string(i), "xx", "text " + std::to_string(i));
            continue;
        }
        switch (i % 5) {
            case 0: payload += "{not json at all\n"; break;
            case 1: payload += "[1,2,3]\n"; break;                                      // not an object
            case 2: payload += "{\"id\":\"x\",\"lang\":\"xx\"}\n"; break;               // missing text
            case 3: payload += "{\"id\":\"x\",\"lang\":\"xx\",\"text\":42}\n"; break;   // wrong type
            default: payload += "{\"id\":\"x\",\"lang\":\"xx\",\"text\":\"\"}\n"; break;  // empty text
        }
    }
    std::stringstream in(payload);
    IngestTally tally;
    Corpus c = ingest_to_corpus(in, "xx", &tally);
    EXPECT_EQ(c.docs.size(), 93u);
    EXPECT_EQ(tally.rejects, 7u);
}

TEST(Ingest, RejectsInvalidUtf8) {
    std::string line = "{\"id\":\"1\",\"lang\":\"xx\",\"text\":\"\xC3\x28\"}\n";  // bad continuation
    std::stringstream in(line + jsonl_line("2", "xx", "fine"));
    IngestTally tally;
    Corpus c = ingest_to_corpus(in, "xx", &tally);
    EXPECT_EQ(c.docs.size(), 1u);
    EXPECT_EQ(tally.rejects, 1u);
}

TEST(Utf8, Validator) {
    EXPECT_TRUE(is_valid_utf8("plain ascii"));
    EXPECT_TRUE(is_valid_utf8("caf\xC3\xA9"));
    EXPECT_TRUE(is_valid_utf8("\xE2\x82\xAC"));      // euro sign
    EXPECT_TRUE(is_valid_utf8("\xF0\x9F\x98\x80"));  // emoji
    EXPECT_FALSE(is_valid_utf8("\xC3\x28"));
    EXPECT_FALSE(is_valid_utf8("\xC0\xAF"));          // overlong
    EXPECT_FALSE(is_valid_utf8("\xED\xA0\x80"));      // surrogate
    EXPECT_FALSE(is_valid_utf8("\xF8\x88\x80\x80"));  // 5-byte form
    EXPECT_FALSE(is_valid_utf8("\xE2\x82"));          // truncated
}

TEST(Trim, FullScaleBudgetValuesAccepted) {
    // 65e9 general, 32e9 for the Bengali-sized corpus: accepted as config.
    CorpusBudget general{65000000000ull};
    CorpusBudget bengali{32000000000ull};
    Corpus tiny = corpus_of_sizes({5, 6});
    EXPECT_EQ(trim_to_budget(tiny, general).docs.size(), 2u);
    EXPECT_EQ(trim_to_budget(tiny, bengali).docs.size(), 2u);
}

TEST(Trim, BudgetZeroGivesEmptyCorpus) {
    Corpus c = corpus_of_sizes({1, 2, 3});
    EXPECT_TRUE(trim_to_budget(c, {0}).docs.empty());
}

TEST(Trim, PrefixSumOracle) {
    Corpus c = corpus_of_sizes({10, 20, 30});
    Corpus t = trim_to_budget(c, {35});
    ASSERT_EQ(t.docs.size(), 2u);
    EXPECT_EQ(t.total_bytes(), 30u);
}

// Budget safety on randomized corpora: output fits, and the first excluded
// document would overflow. (Also exercised by acceptance criterion A10.)
TEST(Trim, BudgetSafetyProperty) {
    std::mt19937_64 rng = make_rng(5);
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<size_t> sizes(1 + uniform_below(rng, 20));
        for (auto& s : sizes) s = 1 + uniform_below(rng, 50);
        Corpus c = corpus_of_sizes(sizes);
        const uint64_t budget = uniform_below(rng, 400);
        Corpus t = trim_to_budget(c, {budget});
        EXPECT_LE(t.total_bytes(), budget);
        if (t.docs.size() < c.docs.size())
            EXPECT_GT(t.total_bytes() + c.docs[t.docs.size()].byte_length(), budget);
        for (size_t i = 0; i < t.docs.size(); ++i) EXPECT_EQ(t.docs[i].id, c.docs[i].id);
    }
}

TEST(Trim, Deterministic) {
    Corpus c = corpus_of_sizes({7, 13, 4, 22, 9});
    std::ostringstream a, b;
    write_jsonl(trim_to_budget(c, {30}), a);
    write_jsonl(trim_to_budget(c, {30}), b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(Stats, EmptyCorpus) {
    CorpusStats s = compute_stats(Corpus{});
    EXPECT_EQ(s.doc_count, 0u);
    EXPECT_EQ(s.total_bytes, 0u);
    for (uint64_t h : s.byte_histogram) EXPECT_EQ(h, 0u);
}

TEST(Stats, SingleDocHistogram) {
    Corpus c;
    c.docs.push_back({"1", "xx", "ab"});
    CorpusStats s = compute_stats(c);
    EXPECT_EQ(s.total_bytes, 2u);
    EXPECT_EQ(s.byte_histogram[0x61], 1u);
    EXPECT_EQ(s.byte_histogram[0x62], 1u);
    EXPECT_EQ(s.doc_count, 1u);
}

// Histogram mass equals total bytes, against an independent summation.
TEST(Stats, HistogramSumsToTotalBytes) {
    std::mt19937_64 rng = make_rng(9);
    Corpus c;
    uint64_t expected_total = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string text(1 + uniform_below(rng, 64), ' ');
        for (auto& ch : text) ch = static_cast<char>(0x20 + uniform_below(rng, 0x5f));  // printable ascii
        expected_total += text.size();
        c.docs.push_back({"d" + std::to_string(i), "xx", std::move(text)});
    }
    CorpusStats s = compute_stats(c);
    EXPECT_EQ(s.total_bytes, expected_total);
    uint64_t hist_sum = 0;
    for (uint64_t h : s.byte_histogram) hist_sum += h;
    EXPECT_EQ(hist_sum, s.total_bytes);
    EXPECT_EQ(s.doc_count, 1000u);
}

TEST(Stats, MergeIsAssociativeAcrossShards) {
    Corpus all = corpus_of_sizes({3, 5, 8, 2, 9});
    CorpusStats whole = compute_stats(all);
    CorpusStats merged;
    for (const auto& d : all.docs) {
        Corpus shard;
        shard.docs.push_back(d);
        merged.merge(compute_stats(shard));
    }
    EXPECT_EQ(merged.total_bytes, whole.total_bytes);
    EXPECT_EQ(merged.doc_count, whole.doc_count);
    EXPECT_EQ(merged.byte_histogram, whole.byte_histogram);
}

TEST(Jsonl, RoundTripThroughWriteAndIngest) {
    Corpus c;
    c.docs.push_back({"a", "pt", "ol\xC3\xA1 mundo"});
    c.docs.push_back({"b", "pt", "linha \"com\" aspas\ne quebras"});
    std::ostringstream out;
    write_jsonl(c, out);
    std::stringstream in(out.str());
    Corpus back = ingest_to_corpus(in, "pt");
    ASSERT_EQ(back.docs.size(), 2u);
    EXPECT_EQ(back.docs[0].text, c.docs[0].text);
    EXPECT_EQ(back.docs[1].text, c.docs[1].text);
}
