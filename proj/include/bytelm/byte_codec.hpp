#pragma once

// Byte-level vocabulary and span corruption.
//
// Id layout: PAD=0, EOS=1, byte b -> b+2 (ids 2..257), sentinels S_0..S_99 ->
// ids 258..357, vocab size 358. This layout is compact but deliberately not
// checkpoint-compatible with released byte-level models.
//
// Span corruption replaces n non-adjacent byte spans with sentinels in the
// input; the target lists each sentinel followed by the bytes it replaced,
// then EOS. reconstruct() inverts the transform and doubles as a test oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bytelm/common.hpp"
#include "bytelm/corpus.hpp"

namespace bytelm {

inline constexpr int32_t kPadId = 0;
inline constexpr int32_t kEosId = 1;
inline constexpr int32_t kByteIdBase = 2;
inline constexpr int32_t kSentinelBase = 258;
inline constexpr int32_t kNumSentinels = 100;
inline constexpr int32_t kVocabSize = 358;

inline constexpr int32_t byte_id(unsigned char b) { return kByteIdBase + b; }
inline constexpr int32_t sentinel_id(int k) { return kSentinelBase + k; }
inline constexpr bool is_byte_id(int32_t id) { return id >= kByteIdBase && id < kSentinelBase; }
inline constexpr bool is_sentinel_id(int32_t id) { return id >= kSentinelBase && id < kVocabSize; }

// Length-preserving byte -> id map. No EOS is appended; that is the caller's
// job when building model inputs.
inline std::vector<int32_t> encode_bytes(std::string_view text) {
    std::vector<int32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(byte_id(c));
    return ids;
}

// Inverse map; PAD/EOS/sentinels are dropped. Out-of-range ids are an error.
inline std::string decode_ids(std::span<const int32_t> ids) {
    std::string out;
    out.reserve(ids.size());
    for (int32_t id : ids) {
        if (id < 0 || id >= kVocabSize) throw DataError("decode_ids: id out of range [0,358)");
        if (is_byte_id(id)) out.push_back(static_cast<char>(id - kByteIdBase));
    }
    return out;
}

struct SpanCorruptionConfig {
    double corruption_rate = 0.15;
    double mean_span_length = 20.0;  // bytes
    int sequence_length = 1024;      // window size for pack_corpus
    uint64_t seed = 0;

    void validate() const {
        if (!(corruption_rate > 0.0 && corruption_rate < 1.0))
            throw ConfigError("SpanCorruptionConfig: corruption_rate must be in (0,1)");
        if (mean_span_length < 1.0) throw ConfigError("SpanCorruptionConfig: mean_span_length must be >= 1");
        if (sequence_length < 2) throw ConfigError("SpanCorruptionConfig: sequence_length must be >= 2");
    }
};

struct PretrainExample {
    std::vector<int32_t> input_ids;
    std::vector<int32_t> target_ids;
};

namespace detail {

// Uniform random composition of `total` into `parts` pieces, each >= 1:
// choose parts-1 distinct cut points from the total-1 interior gaps.
inline std::vector<int64_t> random_composition(std::mt19937_64& rng, int64_t total, int64_t parts) {
    std::vector<int64_t> cuts;
    if (parts > 1) {
        std::vector<int64_t> gaps(total - 1);
        for (int64_t i = 0; i < total - 1; ++i) gaps[i] = i + 1;
        for (int64_t i = 0; i < parts - 1; ++i) {
            const int64_t j = i + static_cast<int64_t>(uniform_below(rng, gaps.size() - i));
            std::swap(gaps[i], gaps[j]);
            cuts.push_back(gaps[i]);
        }
        std::sort(cuts.begin(), cuts.end());
    }
    std::vector<int64_t> sizes;
    int64_t prev = 0;
    for (int64_t c : cuts) {
        sizes.push_back(c - prev);
        prev = c;
    }
    sizes.push_back(total - prev);
    return sizes;
}

}  // namespace detail

// Span corruption with an explicit seed (pack_corpus derives one per window).
// Spans are sampled by the segment-partition method: the corrupted byte count
// C = max(1, round(len*rate)) splits into n = max(1, round(len*rate/mean))
// spans of size >= 1, and the uncorrupted remainder splits into n+1 runs that
// are >= 1 between spans (ends may be empty), so spans never touch.
inline PretrainExample corrupt_spans_seeded(std::span<const int32_t> ids, const SpanCorruptionConfig& cfg,
                                            uint64_t seed) {
    cfg.validate();
    const int64_t len = static_cast<int64_t>(ids.size());
    if (len < 2) throw DataError("corrupt_spans: sequence too short to host a span");
    for (int32_t id : ids)
        if (!is_byte_id(id)) throw DataError("corrupt_spans: ids must be pure byte ids");

    int64_t corrupted = std::max<int64_t>(1, std::llround(static_cast<double>(len) * cfg.corruption_rate));
    int64_t spans = std::max<int64_t>(
        1, std::llround(static_cast<double>(len) * cfg.corruption_rate / cfg.mean_span_length));
    spans = std::min<int64_t>(spans, kNumSentinels);
    spans = std::min(spans, corrupted);
    const int64_t uncorrupted = len - corrupted;
    if (uncorrupted < spans - 1) throw DataError("corrupt_spans: sequence too short to host spans");

    std::mt19937_64 rng = make_rng(seed);
    const std::vector<int64_t> span_sizes = detail::random_composition(rng, corrupted, spans);
    // Interior runs must be >= 1; the first and last may be empty. Composing
    // uncorrupted+2 into spans+1 parts >= 1 and trimming the ends gives that.
    std::vector<int64_t> run_sizes = detail::random_composition(rng, uncorrupted + 2, spans + 1);
    run_sizes.front() -= 1;
    run_sizes.back() -= 1;

    PretrainExample ex;
    ex.input_ids.reserve(static_cast<size_t>(uncorrupted + spans));
    ex.target_ids.reserve(static_cast<size_t>(corrupted + spans + 1));
    int64_t pos = 0;
    for (int64_t s = 0; s < spans; ++s) {
        for (int64_t i = 0; i < run_sizes[s]; ++i) ex.input_ids.push_back(ids[pos++]);
        ex.input_ids.push_back(sentinel_id(static_cast<int>(s)));
        ex.target_ids.push_back(sentinel_id(static_cast<int>(s)));
        for (int64_t i = 0; i < span_sizes[s]; ++i) ex.target_ids.push_back(ids[pos++]);
    }
    for (int64_t i = 0; i < run_sizes[spans]; ++i) ex.input_ids.push_back(ids[pos++]);
    ex.target_ids.push_back(kEosId);
    return ex;
}

inline PretrainExample corrupt_spans(std::span<const int32_t> ids, const SpanCorruptionConfig& cfg) {
    return corrupt_spans_seeded(ids, cfg, cfg.seed);
}

// Splices each target span back at its sentinel, recovering the original ids.
// Sentinel sequences in input and target must match exactly and in order.
inline std::vector<int32_t> reconstruct(const PretrainExample& ex) {
    // Parse target into (sentinel, span) pairs; a trailing EOS is allowed.
    std::vector<std::pair<int32_t, std::vector<int32_t>>> spans;
    for (size_t i = 0; i < ex.target_ids.size();) {
        const int32_t id = ex.target_ids[i];
        if (id == kEosId && i + 1 == ex.target_ids.size()) break;
        if (!is_sentinel_id(id)) throw DataError("reconstruct: target must be sentinel-delimited");
        spans.emplace_back(id, std::vector<int32_t>{});
        ++i;
        while (i < ex.target_ids.size() && is_byte_id(ex.target_ids[i])) {
            spans.back().second.push_back(ex.target_ids[i]);
            ++i;
        }
    }

    std::vector<int32_t> out;
    size_t next_span = 0;
    for (int32_t id : ex.input_ids) {
        if (is_byte_id(id)) {
            out.push_back(id);
        } else if (is_sentinel_id(id)) {
            if (next_span >= spans.size() || spans[next_span].first != id)
                throw DataError("reconstruct: sentinel mismatch between input and target");
            for (int32_t b : spans[next_span].second) out.push_back(b);
            ++next_span;
        } else {
            throw DataError("reconstruct: unexpected id in input");
        }
    }
    if (next_span != spans.size()) throw DataError("reconstruct: unconsumed target spans");
    return out;
}

// Concatenates document bytes, cuts sequence_length windows, and corrupts
// each window with a seed derived from (cfg.seed, window index). A trailing
// window shorter than 2*mean_span_length is dropped.
inline std::vector<PretrainExample> pack_corpus(const Corpus& corpus, const SpanCorruptionConfig& cfg) {
    cfg.validate();
    if (corpus.docs.empty()) throw DataError("pack_corpus: corpus is empty");

    std::vector<PretrainExample> out;
    std::vector<int32_t> window;
    window.reserve(static_cast<size_t>(cfg.sequence_length));
    uint64_t window_index = 0;

    auto flush = [&](bool final) {
        const bool keep =
            !window.empty() &&
            (static_cast<int>(window.size()) == cfg.sequence_length ||
             (final && static_cast<double>(window.size()) >= 2.0 * cfg.mean_span_length));
        if (keep) {
            out.push_back(corrupt_spans_seeded(window, cfg, derive_seed(cfg.seed, window_index)));
            ++window_index;
        }
        window.clear();
    };

    for (const auto& doc : corpus.docs) {
        for (unsigned char c : doc.text) {
            window.push_back(byte_id(c));
            if (static_cast<int>(window.size()) == cfg.sequence_length) flush(false);
        }
    }
    flush(true);
    return out;
}

// ---------------------------------------------------------------------------
// Binary record serialization: per example, u32 input length, input ids as
// u16, u32 target length, target ids as u16, all little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& out, uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ostream& out, uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

inline bool get_u32(std::istream& in, uint32_t& v) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
        (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    return true;
}

inline bool get_u16(std::istream& in, uint16_t& v) {
    unsigned char b[2];
    if (!in.read(reinterpret_cast<char*>(b), 2)) return false;
    v = static_cast<uint16_t>(b[0] | (b[1] << 8));
    return true;
}

}  // namespace detail

inline void write_examples(const std::vector<PretrainExample>& examples, std::ostream& out) {
    for (const auto& ex : examples) {
        detail::put_u32(out, static_cast<uint32_t>(ex.input_ids.size()));
        for (int32_t id : ex.input_ids) detail::put_u16(out, static_cast<uint16_t>(id));
        detail::put_u32(out, static_cast<uint32_t>(ex.target_ids.size()));
        for (int32_t id : ex.target_ids) detail::put_u16(out, static_cast<uint16_t>(id));
    }
}

inline std::vector<PretrainExample> read_examples(std::istream& in) {
    std::vector<PretrainExample> out;
    uint32_t input_len;
    while (detail::get_u32(in, input_len)) {
        PretrainExample ex;
        ex.input_ids.resize(input_len);
        for (auto& id : ex.input_ids) {
            uint16_t v;
            if (!detail::get_u16(in, v)) throw DataError("read_examples: truncated record");
            id = v;
        }
        uint32_t target_len;
        if (!detail::get_u32(in, target_len)) throw DataError("read_examples: truncated record");
        ex.target_ids.resize(target_len);
        for (auto& id : ex.target_ids) {
            uint16_t v;
            if (!detail::get_u16(in, v)) throw DataError("read_examples: truncated record");
            id = v;
        }
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace bytelm
