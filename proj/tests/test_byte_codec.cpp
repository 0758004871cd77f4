#include <gtest/gtest.h>

#include <sstream>

#include "bytelm/byte_codec.hpp"

using namespace bytelm;

namespace {

std::string random_bytes(std::mt19937_64& rng, size_t min_len, size_t max_len) {
    std::string s(min_len + uniform_below(rng, max_len - min_len + 1), '\0');
    for (auto& c : s) c = static_cast<char>(uniform_below(rng, 256));
    return s;
}

}  // namespace

TEST(ByteVocab, IdLayout) {
    EXPECT_EQ(kPadId, 0);
    EXPECT_EQ(kEosId, 1);
    EXPECT_EQ(byte_id(0x00), 2);
    EXPECT_EQ(byte_id(0xFF), 257);
    EXPECT_EQ(sentinel_id(0), 258);
    EXPECT_EQ(sentinel_id(99), 357);
    EXPECT_EQ(kVocabSize, 358);
}

TEST(Encode, EmptyAndOffsets) {
    EXPECT_TRUE(encode_bytes("").empty());
    const std::string bytes{'\x00', '\xFF'};
    const auto ids = encode_bytes(bytes);
    ASSERT_EQ(ids.size(), 2u);
    EXPECT_EQ(ids[0], 2);
    EXPECT_EQ(ids[1], 257);
}

TEST(Decode, DropsSpecialsAndChecksRange) {
    EXPECT_EQ(decode_ids(std::vector<int32_t>{2, 257}), (std::string{'\x00', '\xFF'}));
    EXPECT_EQ(decode_ids(std::vector<int32_t>{1}), "");
    EXPECT_EQ(decode_ids(std::vector<int32_t>{0, 258, 104, 1}), "f");
    EXPECT_THROW(decode_ids(std::vector<int32_t>{358}), DataError);
    EXPECT_THROW(decode_ids(std::vector<int32_t>{-1}), DataError);
}

// Round-trip on arbitrary byte strings, including invalid UTF-8.
TEST(Codec, RoundTripFuzz) {
    std::mt19937_64 rng = make_rng(100);
    for (int i = 0; i < 10000; ++i) {
        const std::string s = random_bytes(rng, 0, 64);
        EXPECT_EQ(decode_ids(encode_bytes(s)), s);
    }
}

// Hand trace of the splice rule: 10 bytes, one span of length 2 at 4..5.
TEST(Corruption, WorkedSpliceExample) {
    const std::vector<int32_t> ids{2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    PretrainExample ex;
    ex.input_ids = {2, 3, 4, 5, sentinel_id(0), 8, 9, 10, 11};
    ex.target_ids = {sentinel_id(0), 6, 7, kEosId};
    EXPECT_EQ(reconstruct(ex), ids);
}

TEST(Corruption, DefaultsGiveEightSpans) {
    // len=1024 at rate 0.15, mean span 20: n = round(1024*0.15/20) = 8 spans,
    // round(1024*0.15) = 154 corrupted bytes.
    std::mt19937_64 rng = make_rng(4);
    std::string text(1024, 'x');
    for (auto& c : text) c = static_cast<char>('a' + uniform_below(rng, 26));
    SpanCorruptionConfig cfg;
    cfg.seed = 9;
    PretrainExample ex = corrupt_spans(encode_bytes(text), cfg);

    int sentinels_in = 0;
    for (int32_t id : ex.input_ids)
        if (is_sentinel_id(id)) ++sentinels_in;
    EXPECT_EQ(sentinels_in, 8);

    int corrupted = 0, sentinels_tgt = 0;
    for (int32_t id : ex.target_ids) {
        if (is_byte_id(id)) ++corrupted;
        if (is_sentinel_id(id)) ++sentinels_tgt;
    }
    EXPECT_EQ(corrupted, 154);
    EXPECT_EQ(sentinels_tgt, 8);
    EXPECT_EQ(ex.target_ids.back(), kEosId);
    EXPECT_EQ(ex.target_ids.front(), sentinel_id(0));
}

TEST(Corruption, SentinelMonotoneAndSpansSeparated) {
    std::mt19937_64 rng = make_rng(8);
    for (int iter = 0; iter < 200; ++iter) {
        const size_t len = 16 + uniform_below(rng, 500);
        std::vector<int32_t> ids(len);
        for (auto& id : ids) id = byte_id(static_cast<unsigned char>(uniform_below(rng, 256)));
        SpanCorruptionConfig cfg;
        cfg.corruption_rate = 0.05 + uniform01(rng) * 0.4;
        cfg.mean_span_length = 1.0 + uniform01(rng) * 30.0;
        cfg.seed = rng();
        PretrainExample ex = corrupt_spans(ids, cfg);

        // sentinels strictly increasing from S_0, never adjacent
        int expected = 0;
        bool prev_was_sentinel = false;
        for (int32_t id : ex.input_ids) {
            if (is_sentinel_id(id)) {
                EXPECT_EQ(id, sentinel_id(expected));
                EXPECT_FALSE(prev_was_sentinel) << "adjacent spans";
                ++expected;
                prev_was_sentinel = true;
            } else {
                EXPECT_TRUE(is_byte_id(id));
                prev_was_sentinel = false;
            }
        }
        EXPECT_GE(expected, 1);
        // target: S_0 span_0 S_1 span_1 ... EOS, sentinels matching input's
        int tgt_sentinels = 0;
        for (int32_t id : ex.target_ids)
            if (is_sentinel_id(id)) {
                EXPECT_EQ(id, sentinel_id(tgt_sentinels));
                ++tgt_sentinels;
            }
        EXPECT_EQ(tgt_sentinels, expected);
        EXPECT_EQ(reconstruct(ex), ids);
    }
}

TEST(Corruption, TooShortErrors) {
    SpanCorruptionConfig cfg;
    EXPECT_THROW(corrupt_spans(std::vector<int32_t>{2}, cfg), DataError);
    EXPECT_THROW(corrupt_spans(std::vector<int32_t>{}, cfg), DataError);
    // non-byte ids rejected
    EXPECT_THROW(corrupt_spans(std::vector<int32_t>{2, 3, kEosId, 4}, cfg), DataError);
}

TEST(Corruption, ConfigValidation) {
    SpanCorruptionConfig cfg;
    cfg.corruption_rate = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.mean_span_length = 0.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.sequence_length = 1;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Reconstruct, ZeroSentinelPassthrough) {
    PretrainExample ex;
    ex.input_ids = {2, 3, 4};
    ex.target_ids = {kEosId};
    EXPECT_EQ(reconstruct(ex), (std::vector<int32_t>{2, 3, 4}));
    ex.target_ids.clear();
    EXPECT_EQ(reconstruct(ex), (std::vector<int32_t>{2, 3, 4}));
}

TEST(Reconstruct, SentinelMismatchErrors) {
    PretrainExample ex;
    ex.input_ids = {2, sentinel_id(0), 3, sentinel_id(1), 4};
    ex.target_ids = {sentinel_id(0), 9, kEosId};  // missing S_1
    EXPECT_THROW(reconstruct(ex), DataError);
    ex.target_ids = {sentinel_id(1), 9, sentinel_id(0), 8, kEosId};  // wrong order
    EXPECT_THROW(reconstruct(ex), DataError);
    ex.input_ids = {2, 3};
    ex.target_ids = {sentinel_id(0), 9, kEosId};  // unconsumed span
    EXPECT_THROW(reconstruct(ex), DataError);
}

// Inverse property under randomized configs (also acceptance criterion A2).
TEST(Corruption, ReconstructInverseFuzz) {
    std::mt19937_64 rng = make_rng(55);
    for (int i = 0; i < 2000; ++i) {
        const std::string s = random_bytes(rng, 2, 300);
        SpanCorruptionConfig cfg;
        cfg.corruption_rate = 0.02 + uniform01(rng) * 0.6;
        cfg.mean_span_length = 1.0 + uniform01(rng) * 40.0;
        cfg.seed = rng();
        const auto ids = encode_bytes(s);
        EXPECT_EQ(reconstruct(corrupt_spans(ids, cfg)), ids);
    }
}

TEST(Pack, WindowCountIsIntegerDivision) {
    Corpus c;
    c.docs.push_back({"a", "xx", std::string(4096, 'q')});
    SpanCorruptionConfig cfg;
    cfg.sequence_length = 1024;
    EXPECT_EQ(pack_corpus(c, cfg).size(), 4u);
}

TEST(Pack, TrailingWindowPolicy) {
    SpanCorruptionConfig cfg;
    cfg.sequence_length = 100;
    cfg.mean_span_length = 20.0;
    {
        // trailing 39 bytes < 2*mean_span -> dropped
        Corpus c;
        c.docs.push_back({"a", "xx", std::string(239, 'q')});
        EXPECT_EQ(pack_corpus(c, cfg).size(), 2u);
    }
    {
        // trailing 40 bytes >= 2*mean_span -> kept
        Corpus c;
        c.docs.push_back({"a", "xx", std::string(240, 'q')});
        EXPECT_EQ(pack_corpus(c, cfg).size(), 3u);
    }
}

TEST(Pack, ConcatenatesAcrossDocuments) {
    Corpus c;
    c.docs.push_back({"a", "xx", std::string(600, 'a')});
    c.docs.push_back({"b", "xx", std::string(424, 'b')});
    SpanCorruptionConfig cfg;
    cfg.sequence_length = 1024;
    cfg.seed = 3;
    auto examples = pack_corpus(c, cfg);
    ASSERT_EQ(examples.size(), 1u);
    const auto original = reconstruct(examples[0]);
    EXPECT_EQ(decode_ids(original), std::string(600, 'a') + std::string(424, 'b'));
}

TEST(Pack, DeterministicStreams) {
    std::mt19937_64 rng = make_rng(77);
    Corpus c;
    for (int i = 0; i < 5; ++i) c.docs.push_back({"d" + std::to_string(i), "xx", random_bytes(rng, 200, 900)});
    // random corpus bytes may be invalid UTF-8; the codec must not care
    SpanCorruptionConfig cfg;
    cfg.sequence_length = 256;
    cfg.seed = 42;
    auto a = pack_corpus(c, cfg);
    auto b = pack_corpus(c, cfg);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].input_ids, b[i].input_ids);
        EXPECT_EQ(a[i].target_ids, b[i].target_ids);
    }
}

TEST(Records, BinaryRoundTrip) {
    std::mt19937_64 rng = make_rng(31);
    Corpus c;
    c.docs.push_back({"a", "xx", random_bytes(rng, 3000, 5000)});
    SpanCorruptionConfig cfg;
    cfg.sequence_length = 512;
    cfg.seed = 7;
    const auto examples = pack_corpus(c, cfg);
    std::stringstream buf;
    write_examples(examples, buf);
    const auto back = read_examples(buf);
    ASSERT_EQ(back.size(), examples.size());
    for (size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].input_ids, examples[i].input_ids);
        EXPECT_EQ(back[i].target_ids, examples[i].target_ids);
    }
}

TEST(Records, LittleEndianLayout) {
    std::vector<PretrainExample> examples(1);
    examples[0].input_ids = {2, sentinel_id(0)};
    examples[0].target_ids = {sentinel_id(0), 257, kEosId};
    std::stringstream buf;
    write_examples(examples, buf);
    const std::string raw = buf.str();
    ASSERT_EQ(raw.size(), 4 + 2 * 2 + 4 + 3 * 2);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(raw.data());
    EXPECT_EQ(p[0], 2u);  // u32 input length, little-endian
    EXPECT_EQ(p[1], 0u);
    EXPECT_EQ(p[4], 2u);  // id 2
    EXPECT_EQ(p[5], 0u);
    EXPECT_EQ(p[6], 258u & 0xFF);  // sentinel 258 = 0x0102
    EXPECT_EQ(p[7], 258u >> 8);
}
