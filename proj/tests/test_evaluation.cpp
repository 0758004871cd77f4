#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "bytelm/evaluation.hpp"

using namespace bytelm;

TEST(NliFormat, Template) {
    EXPECT_EQ(format_nli_input({"A", "B", 0}), "premise: A hypothesis: B");
    EXPECT_EQ(nli_target({"A", "B", 2}), "2");
}

TEST(NliFormat, CapPreservesPrefix) {
    NLIExample ex{std::string(1500, 'p'), std::string(500, 'h'), 1};
    const std::string s = format_nli_input(ex);
    EXPECT_EQ(s.size(), 1024u);
    EXPECT_EQ(s.substr(0, 9), "premise: ");
    EXPECT_EQ(s.substr(9, 10), std::string(10, 'p'));
}

TEST(ParseClass, AcceptsBareDecimalOnly) {
    EXPECT_EQ(parse_class_output(" 1 ", 3), 1);
    EXPECT_EQ(parse_class_output("0", 3), 0);
    EXPECT_EQ(parse_class_output("entailment", 3), std::nullopt);
    EXPECT_EQ(parse_class_output("7", 3), std::nullopt);
    EXPECT_EQ(parse_class_output("", 3), std::nullopt);
    EXPECT_EQ(parse_class_output("1.5", 3), std::nullopt);
    EXPECT_EQ(parse_class_output("-1", 3), std::nullopt);
    EXPECT_EQ(parse_class_output("999999999999999999999", 3), std::nullopt);
}

TEST(Accuracy, BasicsAndInvalids) {
    EXPECT_DOUBLE_EQ(accuracy({0, 1, 2}, {0, 1, 2}), 1.0);
    // golds [0,1,2,0], preds [0,1,0,invalid] -> 0.5
    EXPECT_DOUBLE_EQ(accuracy({0, 1, 0, std::nullopt}, {0, 1, 2, 0}), 0.5);
    EXPECT_THROW(accuracy({0}, {0, 1}), DataError);
    EXPECT_THROW(accuracy({}, {}), DataError);
}

TEST(Accuracy, InvariantUnderConsistentRelabeling) {
    std::mt19937_64 rng = make_rng(3);
    std::vector<std::optional<int>> preds;
    std::vector<int> golds;
    for (int i = 0; i < 200; ++i) {
        golds.push_back(static_cast<int>(uniform_below(rng, 3)));
        preds.push_back(uniform_below(rng, 5) == 0 ? std::nullopt
                                                   : std::optional<int>(static_cast<int>(uniform_below(rng, 3))));
    }
    const int perm[3] = {2, 0, 1};
    std::vector<std::optional<int>> preds_p;
    std::vector<int> golds_p;
    for (size_t i = 0; i < golds.size(); ++i) {
        golds_p.push_back(perm[golds[i]]);
        preds_p.push_back(preds[i] ? std::optional<int>(perm[*preds[i]]) : std::nullopt);
    }
    EXPECT_DOUBLE_EQ(accuracy(preds, golds), accuracy(preds_p, golds_p));
}

TEST(QaFormat, TemplateAndCap) {
    EXPECT_EQ(format_qa_input({"Q", "C", {"a"}}), "question: Q context: C");
    QAExample big{"what", std::string(5000, 'c'), {"a"}};
    const std::string s = format_qa_input(big);
    EXPECT_EQ(s.size(), 2048u);
    EXPECT_EQ(s.substr(0, 10), "question: ");
}

TEST(Normalize, PipelineSteps) {
    EXPECT_EQ(normalize_answer("The  Cat!", "en"), "cat");
    EXPECT_EQ(normalize_answer("o gato", "pt"), "o gato");  // articles only dropped for en
    EXPECT_EQ(normalize_answer("", "en"), "");
    EXPECT_EQ(normalize_answer("A An The THE", "en"), "");
    EXPECT_EQ(normalize_answer("it's a (test)", "en"), "its test");
    EXPECT_EQ(normalize_answer("  spaced   out  ", "en"), "spaced out");
    EXPECT_EQ(normalize_answer("Theatre", "en"), "theatre");  // no mid-word article removal
}

TEST(QaF1, PinnedCases) {
    EXPECT_DOUBLE_EQ(qa_f1("exact match", {"exact match"}, "en"), 1.0);
    EXPECT_DOUBLE_EQ(qa_f1("alpha beta", {"gamma delta"}, "en"), 0.0);
    EXPECT_NEAR(qa_f1("a b c", {"b c d"}, "pt"), 2.0 / 3.0, 1e-12);  // P=R=2/3
    EXPECT_DOUBLE_EQ(qa_f1("", {""}, "en"), 1.0);
    EXPECT_DOUBLE_EQ(qa_f1("", {"something"}, "en"), 0.0);
    EXPECT_DOUBLE_EQ(qa_f1("something", {""}, "en"), 0.0);
    EXPECT_THROW(qa_f1("x", {}, "en"), DataError);
    // max over golds
    EXPECT_DOUBLE_EQ(qa_f1("b c", {"zzz", "b c"}, "en"), 1.0);
}

TEST(QaF1, SymmetricInPredAndGold) {
    std::mt19937_64 rng = make_rng(5);
    const std::vector<std::string> words{"red", "blue", "tree", "stone", "river", "cloud"};
    for (int iter = 0; iter < 100; ++iter) {
        auto make = [&]() {
            std::string s;
            const uint64_t n = 1 + uniform_below(rng, 5);
            for (uint64_t i = 0; i < n; ++i) {
                if (!s.empty()) s.push_back(' ');
                s += words[uniform_below(rng, words.size())];
            }
            return s;
        };
        const std::string a = make(), b = make();
        EXPECT_DOUBLE_EQ(qa_f1(a, {b}, "pt"), qa_f1(b, {a}, "pt"));
    }
}

// Brute-force oracle: token-multiset F1 recomputed with nested loops over a
// copy of the gold list, plus an exhaustive equality check for the f1 == 1
// iff multisets match property.
namespace {
double oracle_f1(const std::string& pred, const std::string& gold) {
    auto toks = [](const std::string& s) {
        std::vector<std::string> t;
        std::stringstream ss(s);
        std::string w;
        while (ss >> w) t.push_back(w);
        return t;
    };
    std::vector<std::string> p = toks(normalize_answer(pred, "xx"));
    std::vector<std::string> g = toks(normalize_answer(gold, "xx"));
    if (p.empty() && g.empty()) return 1.0;
    if (p.empty() || g.empty()) return 0.0;
    std::vector<bool> used(g.size(), false);
    int overlap = 0;
    for (const auto& t : p)
        for (size_t j = 0; j < g.size(); ++j)
            if (!used[j] && g[j] == t) {
                used[j] = true;
                ++overlap;
                break;
            }
    if (overlap == 0) return 0.0;
    const double prec = double(overlap) / double(p.size());
    const double rec = double(overlap) / double(g.size());
    return 2 * prec * rec / (prec + rec);
}
}  // namespace

TEST(QaF1, MatchesBruteForceOracle) {
    std::mt19937_64 rng = make_rng(7);
    const std::vector<std::string> words{"um", "dois", "tres", "um", "quatro"};
    for (int iter = 0; iter < 50; ++iter) {
        auto make = [&]() {
            std::string s;
            const uint64_t n = uniform_below(rng, 6);
            for (uint64_t i = 0; i < n; ++i) {
                if (!s.empty()) s.push_back(' ');
                s += words[uniform_below(rng, words.size())];
            }
            return s;
        };
        const std::string pred = make(), gold = make();
        EXPECT_DOUBLE_EQ(qa_f1(pred, {gold}, "xx"), oracle_f1(pred, gold)) << pred << " vs " << gold;
        const double f1 = qa_f1(pred, {gold}, "xx");
        EXPECT_GE(f1, 0.0);
        EXPECT_LE(f1, 1.0);
        // f1 == 1 iff normalized token multisets are equal
        auto sorted_tokens = [](const std::string& s) {
            std::stringstream ss(normalize_answer(s, "xx"));
            std::vector<std::string> t;
            std::string w;
            while (ss >> w) t.push_back(w);
            std::sort(t.begin(), t.end());
            return t;
        };
        EXPECT_EQ(f1 == 1.0, sorted_tokens(pred) == sorted_tokens(gold));
    }
}

TEST(ExactMatch, NormalizedEquality) {
    EXPECT_DOUBLE_EQ(qa_exact_match("The Cat", {"cat!"}, "en"), 1.0);
    EXPECT_DOUBLE_EQ(qa_exact_match("a cat", {"dog"}, "en"), 0.0);
}

TEST(EvaluateTask, OracleDecoderScoresPerfectly) {
    std::vector<NLIExample> examples;
    for (int i = 0; i < 30; ++i) examples.push_back({"p" + std::to_string(i), "h", i % 3});
    std::map<std::string, std::string> answers;
    for (const auto& ex : examples) answers[format_nli_input(ex)] = nli_target(ex);
    TextDecoder oracle = [&](std::string_view input, int) { return answers.at(std::string(input)); };
    const MetricReport r = evaluate_nli(oracle, examples, 3);
    EXPECT_DOUBLE_EQ(r.value, 1.0);
    EXPECT_EQ(r.example_count, 30u);
    EXPECT_EQ(r.task, "nli");
    EXPECT_EQ(r.metric, "accuracy");
}

TEST(EvaluateTask, EmptyDecoderScoresZeroOnQa) {
    std::vector<QAExample> examples{{"q1", "c1", {"answer"}}, {"q2", "c2", {"other"}}};
    TextDecoder empty = [](std::string_view, int) { return std::string(); };
    const MetricReport r = evaluate_qa(empty, examples, "en");
    EXPECT_DOUBLE_EQ(r.value, 0.0);
    EXPECT_EQ(r.metric, "f1");
}

TEST(EvaluateTask, EmptyDatasetRejected) {
    TextDecoder empty = [](std::string_view, int) { return std::string(); };
    EXPECT_THROW(evaluate_nli(empty, {}, 3), DataError);
    EXPECT_THROW(evaluate_qa(empty, {}, "en"), DataError);
}

// Report value equals the mean of per-example scores recomputed here.
TEST(EvaluateTask, ReportEqualsPerExampleReaggregation) {
    std::mt19937_64 rng = make_rng(11);
    std::vector<QAExample> examples;
    for (int i = 0; i < 40; ++i)
        examples.push_back({"q" + std::to_string(i), "ctx", {"gold answer " + std::to_string(i % 7)}});
    TextDecoder noisy = [&](std::string_view input, int) {
        const uint64_t h = fnv1a64(input);
        switch (h % 3) {
            case 0: return std::string("gold answer");
            case 1: return std::string("answer");
            default: return std::string("wrong");
        }
    };
    const MetricReport r = evaluate_qa(noisy, examples, "en");
    double mean = 0;
    for (const auto& ex : examples) mean += qa_f1(noisy(format_qa_input(ex), kQaDecodeCapBytes), ex.gold_answers, "en");
    mean /= static_cast<double>(examples.size());
    EXPECT_DOUBLE_EQ(r.value, mean);
}

TEST(Loaders, NliAndQaJsonl) {
    std::stringstream nli(R"({"premise":"p1","hypothesis":"h1","label":2}
{"premise":"p2","hypothesis":"h2","label":0}
)");
    const auto nli_examples = load_nli_jsonl(nli);
    ASSERT_EQ(nli_examples.size(), 2u);
    EXPECT_EQ(nli_examples[0].label, 2);
    EXPECT_EQ(nli_examples[1].premise, "p2");

    std::stringstream qa(R"({"question":"q","context":"c","answers":["a1","a2"]}
)");
    const auto qa_examples = load_qa_jsonl(qa);
    ASSERT_EQ(qa_examples.size(), 1u);
    EXPECT_EQ(qa_examples[0].gold_answers.size(), 2u);

    std::stringstream bad(R"({"question":"q","context":"c","answers":[]}
)");
    EXPECT_THROW(load_qa_jsonl(bad), DataError);
}

TEST(Splits, NliSplitScoresDecodedStrings) {
    std::vector<NLIExample> examples{{"p", "h", 1}, {"p2", "h2", 0}, {"p3", "h3", 2}};
    EvalSplit split = make_nli_split(examples, 3);
    ASSERT_EQ(split.examples.size(), 3u);
    EXPECT_DOUBLE_EQ(split.score({"1", "0", "2"}), 1.0);
    EXPECT_DOUBLE_EQ(split.score({"1", "junk", "0"}), 1.0 / 3.0);
}

TEST(Splits, QaSplitUsesAllGoldAnswers) {
    std::vector<QAExample> examples{{"q", "c", {"first answer", "second answer"}}};
    EvalSplit split = make_qa_split(examples, "en");
    ASSERT_EQ(split.examples.size(), 1u);
    EXPECT_EQ(split.examples[0].target, "first answer");
    EXPECT_DOUBLE_EQ(split.score({"second answer"}), 1.0);  // max over golds
}
