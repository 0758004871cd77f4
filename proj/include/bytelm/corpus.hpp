#pragma once

// Corpus ingestion and byte-budget trimming.
//
// Input and output are JSON Lines: one object per line with string fields
// `id`, `lang`, `text`. Documents whose language tag does not match the
// request are filtered out; malformed records are counted and skipped, not
// fatal. Trimming keeps the longest prefix of whole documents that fits the
// budget (documents are never split).

#include <array>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bytelm/common.hpp"

namespace bytelm {

struct Document {
    std::string id;
    std::string language;  // BCP-47-style tag, trusted from the input
    std::string text;      // UTF-8 bytes, nonempty

    uint64_t byte_length() const { return text.size(); }
};

struct Corpus {
    std::vector<Document> docs;

    uint64_t total_bytes() const {
        uint64_t n = 0;
        for (const auto& d : docs) n += d.byte_length();
        return n;
    }
};

struct CorpusBudget {
    uint64_t max_bytes = 0;
};

struct CorpusStats {
    uint64_t doc_count = 0;
    uint64_t total_bytes = 0;
    std::array<uint64_t, 256> byte_histogram{};

    // Associative merge so shards can be reduced in any grouping.
    void merge(const CorpusStats& other) {
        doc_count += other.doc_count;
        total_bytes += other.total_bytes;
        for (size_t i = 0; i < 256; ++i) byte_histogram[i] += other.byte_histogram[i];
    }
};

struct IngestTally {
    uint64_t accepted = 0;
    uint64_t rejects = 0;
};

namespace detail {

// One JSONL record -> Document. Returns false on any malformation: bad JSON,
// missing/mistyped fields, invalid UTF-8, empty text.
inline bool parse_record(const std::string& line, Document& out) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return false;
    auto id = j.find("id");
    auto lang = j.find("lang");
    auto text = j.find("text");
    if (id == j.end() || lang == j.end() || text == j.end()) return false;
    if (!id->is_string() || !lang->is_string() || !text->is_string()) return false;
    out.id = id->get<std::string>();
    out.language = lang->get<std::string>();
    out.text = text->get<std::string>();
    if (out.text.empty()) return false;
    if (!is_valid_utf8(out.text)) return false;
    return true;
}

}  // namespace detail

// Streams matching documents to `sink` in source order. Blank lines are
// ignored; every other unusable line bumps the reject tally.
template <class Sink>
IngestTally ingest_documents(std::istream& in, std::string_view language, Sink&& sink) {
    IngestTally tally;
    std::string line;
    Document doc;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (!detail::parse_record(line, doc)) {
            ++tally.rejects;
            continue;
        }
        if (doc.language != language) continue;
        ++tally.accepted;
        sink(std::move(doc));
        doc = Document{};
    }
    return tally;
}

inline Corpus ingest_to_corpus(std::istream& in, std::string_view language,
                               IngestTally* tally_out = nullptr) {
    Corpus corpus;
    IngestTally tally =
        ingest_documents(in, language, [&](Document d) { corpus.docs.push_back(std::move(d)); });
    if (tally_out) *tally_out = tally;
    return corpus;
}

// Longest prefix of whole documents with cumulative byte length <= budget.
// The first document that would overflow ends the scan; later documents are
// not considered even if they would fit.
inline Corpus trim_to_budget(const Corpus& in, CorpusBudget budget) {
    Corpus out;
    uint64_t used = 0;
    for (const auto& d : in.docs) {
        if (used + d.byte_length() > budget.max_bytes) break;
        used += d.byte_length();
        out.docs.push_back(d);
    }
    return out;
}

inline CorpusStats compute_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.doc_count = corpus.docs.size();
    for (const auto& d : corpus.docs) {
        stats.total_bytes += d.byte_length();
        for (unsigned char c : d.text) ++stats.byte_histogram[c];
    }
    return stats;
}

inline void write_jsonl(const Corpus& corpus, std::ostream& out) {
    for (const auto& d : corpus.docs) {
        nlohmann::json j{{"id", d.id}, {"lang", d.language}, {"text", d.text}};
        out << j.dump() << '\n';
    }
}

inline nlohmann::json stats_to_json(const CorpusStats& stats) {
    nlohmann::json j;
    j["doc_count"] = stats.doc_count;
    j["total_bytes"] = stats.total_bytes;
    j["byte_histogram"] = stats.byte_histogram;
    return j;
}

}  // namespace bytelm
