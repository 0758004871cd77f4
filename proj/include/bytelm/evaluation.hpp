#pragma once

// Task formatting and metrics: NLI (text-to-class-id, accuracy) and QA
// (extractive answers, token-level F1 with max over gold answers).
//
// Inputs are byte-capped: NLI 1024 bytes, QA 2048 bytes; QA answers decode to
// at most 768 bytes. Class outputs must be a bare decimal in range; anything
// else is an invalid prediction and scores as incorrect.

#include <cctype>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "bytelm/common.hpp"
#include "bytelm/model.hpp"

namespace bytelm {

inline constexpr int kNliInputCapBytes = 1024;
inline constexpr int kQaInputCapBytes = 2048;
inline constexpr int kQaDecodeCapBytes = 768;
inline constexpr int kNliDecodeCapBytes = 8;

struct NLIExample {
    std::string premise;
    std::string hypothesis;
    int label = 0;  // in [0, num_classes)
};

struct QAExample {
    std::string question;
    std::string context;
    std::vector<std::string> gold_answers;  // nonempty
};

struct MetricReport {
    std::string task;
    std::string metric;
    double value = 0.0;  // in [0,1]
    std::vector<double> per_seed;
    uint64_t example_count = 0;
};

inline nlohmann::json metric_report_to_json(const MetricReport& r) {
    return nlohmann::json{
        {"task", r.task}, {"metric", r.metric}, {"value", r.value}, {"per_seed", r.per_seed}, {"n", r.example_count}};
}

// ---------------------------------------------------------------------------
// Input formatting
// ---------------------------------------------------------------------------

namespace detail {
inline std::string cap_bytes(std::string s, size_t cap) {
    if (s.size() > cap) s.resize(cap);
    return s;
}
}  // namespace detail

inline std::string format_nli_input(const NLIExample& ex) {
    return detail::cap_bytes("premise: " + ex.premise + " hypothesis: " + ex.hypothesis, kNliInputCapBytes);
}

inline std::string nli_target(const NLIExample& ex) { return std::to_string(ex.label); }

inline std::string format_qa_input(const QAExample& ex) {
    return detail::cap_bytes("question: " + ex.question + " context: " + ex.context, kQaInputCapBytes);
}

// ---------------------------------------------------------------------------
// Output parsing and metrics
// ---------------------------------------------------------------------------

// Bare decimal integer in [0, num_classes) after trimming whitespace;
// anything else is invalid (scored incorrect, never an error).
inline std::optional<int> parse_class_output(std::string_view text, int num_classes) {
    size_t b = 0, e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
    if (b == e) return std::nullopt;
    long value = 0;
    for (size_t i = b; i < e; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) return std::nullopt;
        value = value * 10 + (text[i] - '0');
        if (value >= num_classes) return std::nullopt;
    }
    return static_cast<int>(value);
}

inline double accuracy(const std::vector<std::optional<int>>& predictions, const std::vector<int>& golds) {
    if (predictions.size() != golds.size()) throw DataError("accuracy: length mismatch");
    if (golds.empty()) throw DataError("accuracy: empty inputs");
    uint64_t correct = 0;
    for (size_t i = 0; i < golds.size(); ++i)
        if (predictions[i].has_value() && *predictions[i] == golds[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(golds.size());
}

// SQuAD-style normalization: lowercase, strip ASCII punctuation, drop the
// English articles a/an/the (English only), collapse whitespace.
inline std::string normalize_answer(std::string_view text, std::string_view language = "en") {
    std::string stripped;
    stripped.reserve(text.size());
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::ispunct(u)) continue;
        stripped.push_back(static_cast<char>(std::tolower(u)));
    }
    const bool drop_articles = language == "en" || language.substr(0, 3) == "en-";
    std::string out;
    size_t i = 0;
    while (i < stripped.size()) {
        while (i < stripped.size() && std::isspace(static_cast<unsigned char>(stripped[i]))) ++i;
        size_t start = i;
        while (i < stripped.size() && !std::isspace(static_cast<unsigned char>(stripped[i]))) ++i;
        if (i == start) break;
        std::string_view tok(stripped.data() + start, i - start);
        if (drop_articles && (tok == "a" || tok == "an" || tok == "the")) continue;
        if (!out.empty()) out.push_back(' ');
        out.append(tok);
    }
    return out;
}

namespace detail {
inline std::vector<std::string> whitespace_tokens(std::string_view s) {
    std::vector<std::string> toks;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        size_t start = i;
        while (i < s.size() && s[i] != ' ') ++i;
        if (i > start) toks.emplace_back(s.substr(start, i - start));
    }
    return toks;
}

inline double token_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string, int> gold_counts;
    for (const auto& t : gold) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(pred.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * p * r / (p + r);
}
}  // namespace detail

// Token-level F1 after normalization, max over gold answers.
inline double qa_f1(std::string_view prediction, const std::vector<std::string>& gold_answers,
                    std::string_view language = "en") {
    if (gold_answers.empty()) throw DataError("qa_f1: gold_answers must be nonempty");
    const auto pred_tokens = detail::whitespace_tokens(normalize_answer(prediction, language));
    double best = 0.0;
    for (const auto& gold : gold_answers) {
        best = std::max(best, detail::token_f1(pred_tokens, detail::whitespace_tokens(normalize_answer(gold, language))));
    }
    return best;
}

inline double qa_exact_match(std::string_view prediction, const std::vector<std::string>& gold_answers,
                             std::string_view language = "en") {
    if (gold_answers.empty()) throw DataError("qa_exact_match: gold_answers must be nonempty");
    const std::string p = normalize_answer(prediction, language);
    for (const auto& gold : gold_answers)
        if (p == normalize_answer(gold, language)) return 1.0;
    return 0.0;
}

// ---------------------------------------------------------------------------
// Whole-task evaluation over a decoder
// ---------------------------------------------------------------------------

inline MetricReport evaluate_nli(const TextDecoder& decoder, const std::vector<NLIExample>& examples,
                                 int num_classes) {
    if (examples.empty()) throw DataError("evaluate_nli: empty dataset");
    std::vector<std::optional<int>> preds;
    std::vector<int> golds;
    preds.reserve(examples.size());
    for (const auto& ex : examples) {
        preds.push_back(parse_class_output(decoder(format_nli_input(ex), kNliDecodeCapBytes), num_classes));
        golds.push_back(ex.label);
    }
    MetricReport r;
    r.task = "nli";
    r.metric = "accuracy";
    r.value = accuracy(preds, golds);
    r.example_count = examples.size();
    return r;
}

inline MetricReport evaluate_qa(const TextDecoder& decoder, const std::vector<QAExample>& examples,
                                std::string_view language) {
    if (examples.empty()) throw DataError("evaluate_qa: empty dataset");
    double total = 0.0;
    for (const auto& ex : examples)
        total += qa_f1(decoder(format_qa_input(ex), kQaDecodeCapBytes), ex.gold_answers, language);
    MetricReport r;
    r.task = "qa";
    r.metric = "f1";
    r.value = total / static_cast<double>(examples.size());
    r.example_count = examples.size();
    return r;
}

// ---------------------------------------------------------------------------
// Seq2seq adapters consumed by the finetuning loop
// ---------------------------------------------------------------------------

struct Seq2SeqExample {
    std::string input;
    std::string target;
};

// A scored split: examples for decoding and a closure scoring the decoded
// predictions against the split's gold data.
struct EvalSplit {
    std::vector<Seq2SeqExample> examples;
    std::function<double(const std::vector<std::string>&)> score;
};

inline std::vector<Seq2SeqExample> nli_to_seq2seq(const std::vector<NLIExample>& examples) {
    std::vector<Seq2SeqExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back({format_nli_input(ex), nli_target(ex)});
    return out;
}

inline std::vector<Seq2SeqExample> qa_to_seq2seq(const std::vector<QAExample>& examples) {
    std::vector<Seq2SeqExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back({format_qa_input(ex), ex.gold_answers.front()});
    return out;
}

inline EvalSplit make_nli_split(const std::vector<NLIExample>& examples, int num_classes) {
    EvalSplit split;
    split.examples = nli_to_seq2seq(examples);
    std::vector<int> golds;
    golds.reserve(examples.size());
    for (const auto& ex : examples) golds.push_back(ex.label);
    split.score = [golds = std::move(golds), num_classes](const std::vector<std::string>& preds) {
        std::vector<std::optional<int>> parsed;
        parsed.reserve(preds.size());
        for (const auto& p : preds) parsed.push_back(parse_class_output(p, num_classes));
        return accuracy(parsed, golds);
    };
    return split;
}

inline EvalSplit make_qa_split(const std::vector<QAExample>& examples, std::string language) {
    EvalSplit split;
    split.examples = qa_to_seq2seq(examples);
    std::vector<std::vector<std::string>> golds;
    golds.reserve(examples.size());
    for (const auto& ex : examples) golds.push_back(ex.gold_answers);
    split.score = [golds = std::move(golds), language = std::move(language)](const std::vector<std::string>& preds) {
        if (preds.size() != golds.size()) throw DataError("qa score: length mismatch");
        double total = 0.0;
        for (size_t i = 0; i < preds.size(); ++i) total += qa_f1(preds[i], golds[i], language);
        return preds.empty() ? 0.0 : total / static_cast<double>(preds.size());
    };
    return split;
}

// ---------------------------------------------------------------------------
// JSONL loaders. NLI: {premise, hypothesis, label}; QA: {question, context,
// answers: [string]}.
// ---------------------------------------------------------------------------

inline std::vector<NLIExample> load_nli_jsonl(std::istream& in) {
    std::vector<NLIExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("premise") || !j.contains("hypothesis") ||
            !j.contains("label"))
            throw DataError("load_nli_jsonl: bad record at line " + std::to_string(lineno));
        out.push_back({j["premise"].get<std::string>(), j["hypothesis"].get<std::string>(), j["label"].get<int>()});
    }
    return out;
}

inline std::vector<QAExample> load_qa_jsonl(std::istream& in) {
    std::vector<QAExample> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("question") || !j.contains("context") ||
            !j.contains("answers") || !j["answers"].is_array() || j["answers"].empty())
            throw DataError("load_qa_jsonl: bad record at line " + std::to_string(lineno));
        QAExample ex;
        ex.question = j["question"].get<std::string>();
        ex.context = j["context"].get<std::string>();
        for (const auto& a : j["answers"]) ex.gold_answers.push_back(a.get<std::string>());
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace bytelm
