#pragma once

// Synthetic baseline corpora: the hierarchical "nesting parentheses" corpus
// (well-nested Zipf-weighted word pairs) and the nonsense corpus (sentences
// of uniform random gibberish words), generated to a target byte size.
//
// Hierarchical documents are Dyck words: an OPEN event samples a word from
// the vocabulary, emits it and pushes it; a CLOSE event pops and re-emits the
// word that opened the scope. A document never truncates an open scope: once
// the byte target is reached, the remaining stack drains with CLOSE events.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "bytelm/common.hpp"
#include "bytelm/corpus.hpp"

namespace bytelm {

// ---------------------------------------------------------------------------
// Zipf vocabulary
// ---------------------------------------------------------------------------

struct ZipfVocabulary {
    struct Entry {
        std::string word;
        double weight;  // renormalized empirical frequency
    };

    std::vector<Entry> entries;  // sorted by descending weight
    bool fewer_than_requested = false;

    size_t size() const { return entries.size(); }
};

inline constexpr int kDefaultVocabTopK = 50000;
inline constexpr int kDefaultVocabDocLimit = 1000000;

// Top `top_k` whitespace-delimited words over the first `doc_limit` documents,
// weighted by renormalized counts. Ties in count break lexicographically so
// the result is deterministic. No punctuation stripping.
inline ZipfVocabulary build_zipf_vocab(const Corpus& corpus, int top_k = kDefaultVocabTopK,
                                       int doc_limit = kDefaultVocabDocLimit) {
    if (top_k < 1) throw ConfigError("build_zipf_vocab: top_k must be >= 1");
    if (corpus.docs.empty()) throw DataError("build_zipf_vocab: corpus is empty");

    std::unordered_map<std::string, uint64_t> counts;
    const size_t limit = std::min<size_t>(corpus.docs.size(), static_cast<size_t>(doc_limit));
    for (size_t d = 0; d < limit; ++d) {
        const std::string& text = corpus.docs[d].text;
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            size_t start = i;
            while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) ++counts[text.substr(start, i - start)];
        }
    }

    std::vector<std::pair<std::string, uint64_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    ZipfVocabulary vocab;
    vocab.fewer_than_requested = ranked.size() < static_cast<size_t>(top_k);
    const size_t keep = std::min<size_t>(ranked.size(), static_cast<size_t>(top_k));
    uint64_t kept_total = 0;
    for (size_t i = 0; i < keep; ++i) kept_total += ranked[i].second;
    vocab.entries.reserve(keep);
    for (size_t i = 0; i < keep; ++i) {
        vocab.entries.push_back(
            {ranked[i].first, static_cast<double>(ranked[i].second) / static_cast<double>(kept_total)});
    }
    return vocab;
}

// Inverse-CDF sampler over vocabulary weights. One sample consumes exactly
// one uniform01 draw.
class VocabSampler {
  public:
    explicit VocabSampler(const ZipfVocabulary& vocab) : vocab_(&vocab) {
        if (vocab.entries.empty()) throw ConfigError("VocabSampler: empty vocabulary");
        cumulative_.reserve(vocab.entries.size());
        double acc = 0.0;
        for (const auto& e : vocab.entries) {
            acc += e.weight;
            cumulative_.push_back(acc);
        }
        cumulative_.back() = 1.0;
    }

    size_t sample_index(std::mt19937_64& rng) const {
        const double u = uniform01(rng);
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        if (it == cumulative_.end()) --it;
        return static_cast<size_t>(it - cumulative_.begin());
    }

    const std::string& sample(std::mt19937_64& rng) const {
        return vocab_->entries[sample_index(rng)].word;
    }

  private:
    const ZipfVocabulary* vocab_;
    std::vector<double> cumulative_;
};

// ---------------------------------------------------------------------------
// Hierarchical (nesting parentheses) generator
// ---------------------------------------------------------------------------

struct HierarchicalGenConfig {
    double open_probability = 0.5;
    int max_depth = 64;
    uint64_t target_doc_bytes = 4096;
    uint64_t seed = 0;

    void validate() const {
        if (!(open_probability > 0.0 && open_probability < 1.0))
            throw ConfigError("HierarchicalGenConfig: open_probability must be in (0,1)");
        if (max_depth < 1) throw ConfigError("HierarchicalGenConfig: max_depth must be >= 1");
        if (target_doc_bytes < 1) throw ConfigError("HierarchicalGenConfig: target_doc_bytes must be >= 1");
    }
};

struct HierDocStats {
    int max_depth_reached = 0;
    uint64_t open_events = 0;
};

// Stack walk. Draw order per step: with the stack empty (and budget left)
// OPEN is forced and only the word draw occurs; at max depth or with the
// budget spent CLOSE is forced and nothing is drawn; otherwise one uniform01
// decides OPEN (u < open_probability) before any word draw.
inline std::string generate_hierarchical_doc(const ZipfVocabulary& vocab, const HierarchicalGenConfig& cfg,
                                             HierDocStats* stats = nullptr) {
    cfg.validate();
    VocabSampler sampler(vocab);
    std::mt19937_64 rng = make_rng(cfg.seed);

    std::string out;
    std::vector<size_t> stack;
    HierDocStats local;

    auto emit = [&out](const std::string& w) {
        if (!out.empty()) out.push_back(' ');
        out.append(w);
    };
    auto open = [&] {
        const size_t idx = sampler.sample_index(rng);
        emit(vocab.entries[idx].word);
        stack.push_back(idx);
        ++local.open_events;
        local.max_depth_reached = std::max(local.max_depth_reached, static_cast<int>(stack.size()));
    };
    auto close = [&] {
        emit(vocab.entries[stack.back()].word);
        stack.pop_back();
    };

    while (out.size() < cfg.target_doc_bytes) {
        if (stack.empty()) {
            open();
        } else if (static_cast<int>(stack.size()) >= cfg.max_depth) {
            close();
        } else if (uniform01(rng) < cfg.open_probability) {
            open();
        } else {
            close();
        }
    }
    while (!stack.empty()) close();

    if (stats) *stats = local;
    return out;
}

// ---------------------------------------------------------------------------
// Nonsense generator
// ---------------------------------------------------------------------------

struct NonsenseGenConfig {
    int vocab_size = 500;
    std::pair<int, int> word_length_range = {3, 8};      // characters
    std::pair<int, int> sentence_length_range = {4, 12};  // words
    uint64_t target_doc_bytes = 4096;
    uint64_t seed = 0;

    void validate() const {
        if (vocab_size < 1) throw ConfigError("NonsenseGenConfig: vocab_size must be >= 1");
        if (word_length_range.first < 1 || word_length_range.second < word_length_range.first)
            throw ConfigError("NonsenseGenConfig: bad word_length_range");
        if (sentence_length_range.first < 1 || sentence_length_range.second < sentence_length_range.first)
            throw ConfigError("NonsenseGenConfig: bad sentence_length_range");
        if (target_doc_bytes < 1) throw ConfigError("NonsenseGenConfig: target_doc_bytes must be >= 1");
    }
};

namespace detail {
inline uint64_t range_draw(std::mt19937_64& rng, std::pair<int, int> range) {
    return static_cast<uint64_t>(range.first) +
           uniform_below(rng, static_cast<uint64_t>(range.second - range.first + 1));
}
}  // namespace detail

// Fixed per-seed vocabulary of unique lowercase words. The vocabulary depends
// only on (seed, vocab shape), not on which document is being generated.
inline std::vector<std::string> make_nonsense_vocab(const NonsenseGenConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng = make_rng(derive_seed(cfg.seed, 0x766f636162ull));  // "vocab"
    std::vector<std::string> vocab;
    std::unordered_set<std::string> seen;
    uint64_t attempts = 0;
    const uint64_t max_attempts = static_cast<uint64_t>(cfg.vocab_size) * 1000 + 10000;
    while (vocab.size() < static_cast<size_t>(cfg.vocab_size)) {
        if (++attempts > max_attempts)
            throw ConfigError("make_nonsense_vocab: word space too small for unique vocabulary");
        const uint64_t len = detail::range_draw(rng, cfg.word_length_range);
        std::string w(len, 'a');
        for (auto& c : w) c = static_cast<char>('a' + uniform_below(rng, 26));
        if (seen.insert(w).second) vocab.push_back(std::move(w));
    }
    return vocab;
}

namespace detail {
inline std::string nonsense_body(const std::vector<std::string>& vocab, const NonsenseGenConfig& cfg,
                                 uint64_t body_seed) {
    std::mt19937_64 rng = make_rng(body_seed);
    std::string out;
    while (out.size() < cfg.target_doc_bytes) {
        const uint64_t sentence_len = range_draw(rng, cfg.sentence_length_range);
        if (!out.empty()) out.push_back(' ');
        for (uint64_t w = 0; w < sentence_len; ++w) {
            if (w > 0) out.push_back(' ');
            out.append(vocab[uniform_below(rng, vocab.size())]);
        }
        out.push_back('.');
    }
    return out;
}
}  // namespace detail

inline std::string generate_nonsense_doc(const NonsenseGenConfig& cfg) {
    cfg.validate();
    return detail::nonsense_body(make_nonsense_vocab(cfg), cfg,
                                 derive_seed(cfg.seed, 0x626f6479ull));  // "body"
}

// ---------------------------------------------------------------------------
// Corpus-level generation
// ---------------------------------------------------------------------------

inline constexpr const char* kHierLanguageTag = "synthetic-hier";
inline constexpr const char* kNonsenseLanguageTag = "synthetic-nonsense";

namespace detail {
inline std::string doc_id(const char* prefix, uint64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%08llu", prefix, static_cast<unsigned long long>(index));
    return buf;
}
}  // namespace detail

// Emits documents until cumulative bytes reach total_bytes. Document i is
// generated from derive_seed(cfg.seed, i), so shards are order-independent.
inline Corpus generate_corpus(const ZipfVocabulary& vocab, HierarchicalGenConfig cfg, uint64_t total_bytes) {
    cfg.validate();
    if (total_bytes < 1) throw ConfigError("generate_corpus: total_bytes must be >= 1");
    const uint64_t base_seed = cfg.seed;
    Corpus corpus;
    uint64_t bytes = 0;
    for (uint64_t i = 0; bytes < total_bytes; ++i) {
        cfg.seed = derive_seed(base_seed, i);
        Document d{detail::doc_id("hier", i), kHierLanguageTag, generate_hierarchical_doc(vocab, cfg)};
        bytes += d.byte_length();
        corpus.docs.push_back(std::move(d));
    }
    return corpus;
}

inline Corpus generate_corpus(NonsenseGenConfig cfg, uint64_t total_bytes) {
    cfg.validate();
    if (total_bytes < 1) throw ConfigError("generate_corpus: total_bytes must be >= 1");
    const std::vector<std::string> vocab = make_nonsense_vocab(cfg);
    const uint64_t base_seed = cfg.seed;
    Corpus corpus;
    uint64_t bytes = 0;
    for (uint64_t i = 0; bytes < total_bytes; ++i) {
        Document d{detail::doc_id("nonsense", i), kNonsenseLanguageTag,
                   detail::nonsense_body(vocab, cfg, derive_seed(base_seed, i))};
        bytes += d.byte_length();
        corpus.docs.push_back(std::move(d));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Validation (balance scan, frequency fit) for the CLI report
// ---------------------------------------------------------------------------

struct BalanceScan {
    bool balanced = false;
    int max_depth = 0;  // minimal-depth parse; generation depth may be larger
};

// Left-to-right stack scan. A token equal to the current stack top closes
// that scope, anything else opens a new one; this greedy rule accepts exactly
// the well-nested strings over same-word open/close pairs.
inline BalanceScan scan_balance(std::string_view text) {
    BalanceScan r;
    std::vector<std::string_view> stack;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && text[i] == ' ') ++i;
        size_t start = i;
        while (i < text.size() && text[i] != ' ') ++i;
        if (i == start) break;
        std::string_view tok = text.substr(start, i - start);
        if (!stack.empty() && stack.back() == tok) {
            stack.pop_back();
        } else {
            stack.push_back(tok);
            r.max_depth = std::max(r.max_depth, static_cast<int>(stack.size()));
        }
    }
    r.balanced = stack.empty();
    return r;
}

// Total variation distance between observed word frequencies (text counts,
// halved for hierarchical docs where every OPEN emits its word twice) and
// the expected distribution.
inline double word_tv_distance(const Corpus& corpus, const std::vector<std::string>& words,
                               const std::vector<double>& expected_weights) {
    std::unordered_map<std::string_view, size_t> index;
    for (size_t i = 0; i < words.size(); ++i) index[words[i]] = i;
    std::vector<uint64_t> counts(words.size(), 0);
    uint64_t total = 0;
    for (const auto& doc : corpus.docs) {
        std::string_view text = doc.text;
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && text[i] == ' ') ++i;
            size_t start = i;
            while (i < text.size() && text[i] != ' ') ++i;
            if (i == start) break;
            std::string_view tok = text.substr(start, i - start);
            if (!tok.empty() && tok.back() == '.') tok.remove_suffix(1);
            auto it = index.find(tok);
            if (it != index.end()) {
                ++counts[it->second];
                ++total;
            }
        }
    }
    if (total == 0) return 1.0;
    double tv = 0.0;
    for (size_t i = 0; i < words.size(); ++i) {
        tv += std::abs(static_cast<double>(counts[i]) / static_cast<double>(total) - expected_weights[i]);
    }
    return 0.5 * tv;
}

inline nlohmann::json validate_hier_corpus(const Corpus& corpus, const ZipfVocabulary& vocab) {
    uint64_t balanced = 0;
    int max_depth = 0;
    for (const auto& d : corpus.docs) {
        BalanceScan s = scan_balance(d.text);
        if (s.balanced) ++balanced;
        max_depth = std::max(max_depth, s.max_depth);
    }
    std::vector<std::string> words;
    std::vector<double> weights;
    for (const auto& e : vocab.entries) {
        words.push_back(e.word);
        weights.push_back(e.weight);
    }
    nlohmann::json j;
    j["kind"] = "hierarchical";
    j["docs"] = corpus.docs.size();
    j["balanced_docs"] = balanced;
    j["balanced_fraction"] =
        corpus.docs.empty() ? 0.0 : static_cast<double>(balanced) / static_cast<double>(corpus.docs.size());
    j["max_scan_depth"] = max_depth;
    j["tv_distance_to_vocab"] = word_tv_distance(corpus, words, weights);
    return j;
}

inline nlohmann::json validate_nonsense_corpus(const Corpus& corpus, const NonsenseGenConfig& cfg) {
    const std::vector<std::string> vocab = make_nonsense_vocab(cfg);
    std::vector<double> uniform(vocab.size(), 1.0 / static_cast<double>(vocab.size()));
    nlohmann::json j;
    j["kind"] = "nonsense";
    j["docs"] = corpus.docs.size();
    j["tv_distance_to_uniform"] = word_tv_distance(corpus, vocab, uniform);
    return j;
}

}  // namespace bytelm
