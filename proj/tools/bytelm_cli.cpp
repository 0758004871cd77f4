// Command-line entry point for the byte-level LM pipeline: corpus trimming,
// synthetic corpus generation, span-corruption packing, pretraining,
// finetuning, evaluation and gradient checking.
//
// Exit codes: 0 success, 2 configuration/usage error, 3 data error,
// 4 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bytelm/byte_codec.hpp"
#include "bytelm/checkpoint.hpp"
#include "bytelm/common.hpp"
#include "bytelm/corpus.hpp"
#include "bytelm/evaluation.hpp"
#include "bytelm/gradcheck_suite.hpp"
#include "bytelm/model.hpp"
#include "bytelm/synthetic.hpp"
#include "bytelm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_input(const std::string& path) {
    if (!fs::exists(path)) throw bytelm::ConfigError("input file not found: " + path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bytelm::ConfigError("cannot open input file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    const fs::path dir = fs::path(path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw bytelm::ConfigError("cannot open output file: " + path);
    return out;
}

json load_json_config(const std::string& path) {
    std::ifstream in = open_input(path);
    json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw bytelm::ConfigError("bad JSON config: " + path);
    return j;
}

uint64_t hash_file(const std::string& path) {
    std::ifstream in = open_input(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return bytelm::fnv1a64(ss.str());
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Every command that writes artifacts drops a manifest.json next to them:
// effective config, seed, code version and input hashes. Equal manifests
// mean byte-identical reruns (single-threaded mode).
void write_manifest(const fs::path& dir, const std::string& command, const json& config, uint64_t seed,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["tool"] = "bytelm";
    m["version"] = bytelm::kVersion;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    json in_hashes = json::object();
    for (const auto& p : inputs) in_hashes[p] = hex64(hash_file(p));
    m["input_hashes"] = in_hashes;
    m["outputs"] = outputs;
    fs::create_directories(dir.empty() ? fs::path(".") : dir);
    std::ofstream out((dir.empty() ? fs::path(".") : dir) / "manifest.json");
    out << m.dump(2) << "\n";
}

bytelm::Corpus read_corpus_all_languages(const std::string& path) {
    std::ifstream in = open_input(path);
    bytelm::Corpus corpus;
    std::string line;
    bytelm::Document doc;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (bytelm::detail::parse_record(line, doc)) corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// corpus trim
// ---------------------------------------------------------------------------

struct TrimArgs {
    std::string in, lang, out, stats;
    uint64_t budget_bytes = 0;
};

int cmd_corpus_trim(const TrimArgs& args) {
    std::ifstream in = open_input(args.in);
    bytelm::IngestTally tally;
    bytelm::Corpus corpus = bytelm::ingest_to_corpus(in, args.lang, &tally);
    bytelm::Corpus trimmed = bytelm::trim_to_budget(corpus, {args.budget_bytes});
    {
        std::ofstream out = open_output(args.out);
        bytelm::write_jsonl(trimmed, out);
    }
    const bytelm::CorpusStats stats = bytelm::compute_stats(trimmed);
    json stats_json = bytelm::stats_to_json(stats);
    stats_json["rejects"] = tally.rejects;
    stats_json["ingested_docs"] = tally.accepted;
    if (!args.stats.empty()) {
        std::ofstream out = open_output(args.stats);
        out << stats_json.dump(2) << "\n";
    }
    std::cout << "trimmed " << stats.doc_count << " docs, " << stats.total_bytes << " bytes (rejects "
              << tally.rejects << ")\n";

    json cfg{{"in", args.in}, {"lang", args.lang}, {"budget_bytes", args.budget_bytes}, {"out", args.out}};
    std::vector<std::string> outputs{args.out};
    if (!args.stats.empty()) outputs.push_back(args.stats);
    write_manifest(fs::path(args.out).parent_path(), "corpus trim", cfg, 0, {args.in}, outputs);
    return 0;
}

// ---------------------------------------------------------------------------
// synth generate
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string kind, config, out, report;
    uint64_t bytes = 0;
    uint64_t seed = 0;
    bool seed_set = false;
};

bytelm::ZipfVocabulary vocab_from_config(const json& cfg) {
    if (cfg.contains("vocab")) {
        bytelm::ZipfVocabulary vocab;
        double total = 0.0;
        for (const auto& entry : cfg.at("vocab")) {
            const std::string word = entry.at(0).get<std::string>();
            const double weight = entry.at(1).get<double>();
            if (weight <= 0.0) throw bytelm::ConfigError("vocab weights must be positive");
            vocab.entries.push_back({word, weight});
            total += weight;
        }
        if (vocab.entries.empty()) throw bytelm::ConfigError("vocab must be nonempty");
        for (auto& e : vocab.entries) e.weight /= total;
        std::sort(vocab.entries.begin(), vocab.entries.end(), [](const auto& a, const auto& b) {
            if (a.weight != b.weight) return a.weight > b.weight;
            return a.word < b.word;
        });
        return vocab;
    }
    if (cfg.contains("vocab_from")) {
        const std::string path = cfg.at("vocab_from").get<std::string>();
        bytelm::Corpus corpus;
        if (cfg.contains("vocab_lang")) {
            std::ifstream in = open_input(path);
            corpus = bytelm::ingest_to_corpus(in, cfg.at("vocab_lang").get<std::string>());
        } else {
            corpus = read_corpus_all_languages(path);
        }
        const int top_k = cfg.value("top_k", bytelm::kDefaultVocabTopK);
        const int doc_limit = cfg.value("doc_limit", bytelm::kDefaultVocabDocLimit);
        return bytelm::build_zipf_vocab(corpus, top_k, doc_limit);
    }
    throw bytelm::ConfigError("hierarchical config needs \"vocab\" or \"vocab_from\"");
}

int cmd_synth_generate(const SynthArgs& args) {
    if (args.kind != "hier" && args.kind != "nonsense")
        throw bytelm::ConfigError("unknown --kind (expected hier or nonsense): " + args.kind);
    if (args.bytes < 1) throw bytelm::ConfigError("--bytes must be >= 1");
    json cfg = args.config.empty() ? json::object() : load_json_config(args.config);
    const uint64_t seed = args.seed_set ? args.seed : cfg.value("seed", uint64_t{0});

    bytelm::Corpus corpus;
    json report;
    if (args.kind == "hier") {
        bytelm::HierarchicalGenConfig gen;
        gen.open_probability = cfg.value("open_probability", gen.open_probability);
        gen.max_depth = cfg.value("max_depth", gen.max_depth);
        gen.target_doc_bytes = cfg.value("target_doc_bytes", gen.target_doc_bytes);
        gen.seed = seed;
        const bytelm::ZipfVocabulary vocab = vocab_from_config(cfg);
        corpus = bytelm::generate_corpus(vocab, gen, args.bytes);
        report = bytelm::validate_hier_corpus(corpus, vocab);
    } else {
        bytelm::NonsenseGenConfig gen;
        gen.vocab_size = cfg.value("vocab_size", gen.vocab_size);
        if (cfg.contains("word_length_range"))
            gen.word_length_range = {cfg["word_length_range"][0].get<int>(), cfg["word_length_range"][1].get<int>()};
        if (cfg.contains("sentence_length_range"))
            gen.sentence_length_range = {cfg["sentence_length_range"][0].get<int>(),
                                         cfg["sentence_length_range"][1].get<int>()};
        gen.target_doc_bytes = cfg.value("target_doc_bytes", gen.target_doc_bytes);
        gen.seed = seed;
        corpus = bytelm::generate_corpus(gen, args.bytes);
        report = bytelm::validate_nonsense_corpus(corpus, gen);
    }

    {
        std::ofstream out = open_output(args.out);
        bytelm::write_jsonl(corpus, out);
    }
    const std::string report_path = args.report.empty() ? args.out + ".report.json" : args.report;
    {
        std::ofstream out = open_output(report_path);
        out << report.dump(2) << "\n";
    }
    std::cout << "generated " << corpus.docs.size() << " docs, " << corpus.total_bytes() << " bytes -> "
              << args.out << "\n";

    json manifest_cfg = cfg;
    manifest_cfg["kind"] = args.kind;
    manifest_cfg["bytes"] = args.bytes;
    manifest_cfg["seed"] = seed;
    std::vector<std::string> inputs;
    if (!args.config.empty()) inputs.push_back(args.config);
    if (cfg.contains("vocab_from")) inputs.push_back(cfg["vocab_from"].get<std::string>());
    write_manifest(fs::path(args.out).parent_path(), "synth generate", manifest_cfg, seed, inputs,
                   {args.out, report_path});
    return 0;
}

// ---------------------------------------------------------------------------
// examples build
// ---------------------------------------------------------------------------

struct ExamplesArgs {
    std::string corpus, config, out;
    uint64_t seed = 0;
    bool seed_set = false;
};

int cmd_examples_build(const ExamplesArgs& args) {
    json cfg = args.config.empty() ? json::object() : load_json_config(args.config);
    bytelm::SpanCorruptionConfig scc;
    scc.corruption_rate = cfg.value("corruption_rate", scc.corruption_rate);
    scc.mean_span_length = cfg.value("mean_span_length", scc.mean_span_length);
    scc.sequence_length = cfg.value("sequence_length", scc.sequence_length);
    scc.seed = args.seed_set ? args.seed : cfg.value("seed", uint64_t{0});
    scc.validate();

    const bytelm::Corpus corpus = read_corpus_all_languages(args.corpus);
    if (corpus.docs.empty()) throw bytelm::DataError("examples build: no documents in " + args.corpus);
    const std::vector<bytelm::PretrainExample> examples = bytelm::pack_corpus(corpus, scc);
    {
        std::ofstream out = open_output(args.out);
        bytelm::write_examples(examples, out);
    }
    std::cout << "packed " << examples.size() << " examples -> " << args.out << "\n";

    json manifest_cfg{{"corruption_rate", scc.corruption_rate},
                      {"mean_span_length", scc.mean_span_length},
                      {"sequence_length", scc.sequence_length},
                      {"seed", scc.seed}};
    std::vector<std::string> inputs{args.corpus};
    if (!args.config.empty()) inputs.push_back(args.config);
    write_manifest(fs::path(args.out).parent_path(), "examples build", manifest_cfg, scc.seed, inputs,
                   {args.out});
    return 0;
}

// ---------------------------------------------------------------------------
// pretrain
// ---------------------------------------------------------------------------

struct PretrainArgs {
    std::string examples, config, outdir, resume;
    uint64_t steps = 0;
    bool steps_set = false;
    uint64_t seed = 0;
    bool seed_set = false;
    uint64_t checkpoint_every = 0;
};

int cmd_pretrain(const PretrainArgs& args) {
    json cfg = args.config.empty() ? json::object() : load_json_config(args.config);

    bytelm::PretrainSchedule sched;
    if (cfg.contains("schedule")) {
        const json& s = cfg["schedule"];
        sched.total_steps = s.value("total_steps", sched.total_steps);
        sched.base_lr = s.value("base_lr", sched.base_lr);
        sched.accumulation_steps = s.value("accumulation_steps", sched.accumulation_steps);
        sched.batch_bytes = s.value("batch_bytes", sched.batch_bytes);
        sched.sequence_length = s.value("sequence_length", sched.sequence_length);
    }
    if (args.steps_set) sched.total_steps = args.steps;
    sched.validate();

    bytelm::ModelConfig model_cfg = bytelm::ModelConfig::desk_default();
    if (cfg.contains("model")) model_cfg = cfg["model"].get<bytelm::ModelConfig>();

    bytelm::PretrainOptions opt;
    opt.seed = args.seed_set ? args.seed : cfg.value("seed", uint64_t{0});
    opt.log_every = cfg.value("log_every", opt.log_every);
    opt.smooth_window = cfg.value("smooth_window", opt.smooth_window);
    opt.stop_at_loss_fraction = cfg.value("stop_at_loss_fraction", opt.stop_at_loss_fraction);
    opt.checkpoint_every = args.checkpoint_every > 0 ? args.checkpoint_every
                                                     : cfg.value("checkpoint_every", opt.checkpoint_every);

    std::ifstream in = open_input(args.examples);
    const std::vector<bytelm::PretrainExample> examples = bytelm::read_examples(in);
    if (examples.empty()) throw bytelm::DataError("pretrain: no packed examples in " + args.examples);

    bytelm::Checkpoint<float> resume_ck;
    const bytelm::Checkpoint<float>* resume_from = nullptr;
    if (!args.resume.empty()) {
        std::ifstream rin = open_input(args.resume);
        resume_ck = bytelm::load_checkpoint<float>(rin);
        model_cfg = resume_ck.config;
        resume_from = &resume_ck;
    }

    fs::create_directories(args.outdir);
    const auto periodic = [&](const bytelm::Checkpoint<float>& ck) {
        const std::string p =
            (fs::path(args.outdir) / ("checkpoint_step" + std::to_string(ck.schedule_step) + ".bin")).string();
        std::ofstream out = open_output(p);
        bytelm::save_checkpoint(ck, out);
    };
    const bytelm::PretrainResult<float> result =
        bytelm::pretrain<float>(examples, sched, model_cfg, opt, resume_from, periodic);

    const std::string ckpt_path = (fs::path(args.outdir) / "checkpoint.bin").string();
    {
        std::ofstream out = open_output(ckpt_path);
        bytelm::save_checkpoint(result.checkpoint, out);
    }
    const std::string curve_path = (fs::path(args.outdir) / "loss_curve.csv").string();
    {
        std::ofstream out = open_output(curve_path);
        out << "step,loss\n";
        for (const auto& [step, loss] : result.loss_curve) out << step << "," << loss << "\n";
    }
    json summary{{"initial_loss", result.initial_loss},
                 {"final_smoothed_loss", result.final_smoothed_loss},
                 {"steps_run", result.steps_run},
                 {"examples", examples.size()}};
    const std::string summary_path = (fs::path(args.outdir) / "summary.json").string();
    {
        std::ofstream out = open_output(summary_path);
        out << summary.dump(2) << "\n";
    }
    std::cout << "pretrain: steps=" << result.steps_run << " initial_loss=" << result.initial_loss
              << " final_smoothed=" << result.final_smoothed_loss << "\n";

    json manifest_cfg;
    manifest_cfg["schedule"] = {{"total_steps", sched.total_steps},
                                {"base_lr", sched.base_lr},
                                {"accumulation_steps", sched.accumulation_steps},
                                {"batch_bytes", sched.batch_bytes},
                                {"sequence_length", sched.sequence_length}};
    manifest_cfg["model"] = model_cfg;
    manifest_cfg["seed"] = opt.seed;
    std::vector<std::string> inputs{args.examples};
    if (!args.config.empty()) inputs.push_back(args.config);
    if (!args.resume.empty()) inputs.push_back(args.resume);
    write_manifest(args.outdir, "pretrain", manifest_cfg, opt.seed, inputs,
                   {ckpt_path, curve_path, summary_path});
    return 0;
}

// ---------------------------------------------------------------------------
// finetune
// ---------------------------------------------------------------------------

struct FinetuneArgs {
    std::string checkpoint, task, train, val, test, config, outdir;
    std::string seeds;
    int classes = 3;
    std::string language = "en";
    int epochs = -1;
};

int cmd_finetune(const FinetuneArgs& args) {
    if (args.task != "nli" && args.task != "qa")
        throw bytelm::ConfigError("unknown --task (expected nli or qa): " + args.task);
    json cfg = args.config.empty() ? json::object() : load_json_config(args.config);

    bytelm::FinetuneConfig ft = args.task == "nli" ? bytelm::FinetuneConfig::nli_defaults()
                                                   : bytelm::FinetuneConfig::qa_defaults();
    ft.batch_size = cfg.value("batch_size", ft.batch_size);
    ft.accumulation_steps = cfg.value("accumulation_steps", ft.accumulation_steps);
    ft.lr = cfg.value("lr", ft.lr);
    ft.epochs = cfg.value("epochs", ft.epochs);
    ft.eval_epoch_fraction = cfg.value("eval_epoch_fraction", ft.eval_epoch_fraction);
    ft.patience = cfg.value("patience", ft.patience);
    ft.max_decode_bytes = cfg.value("max_decode_bytes", ft.max_decode_bytes);
    if (cfg.contains("seeds")) ft.seeds = cfg["seeds"].get<std::vector<uint64_t>>();
    if (!args.seeds.empty()) {
        ft.seeds.clear();
        std::stringstream ss(args.seeds);
        std::string tok;
        while (std::getline(ss, tok, ',')) ft.seeds.push_back(std::stoull(tok));
    }
    if (args.epochs >= 0) ft.epochs = args.epochs;
    const int num_classes = cfg.value("num_classes", args.classes);
    const std::string language = cfg.value("language", args.language);
    ft.validate();

    std::ifstream ck_in = open_input(args.checkpoint);
    const bytelm::Checkpoint<float> start = bytelm::load_checkpoint<float>(ck_in);

    bytelm::FinetuneDataset data;
    if (args.task == "nli") {
        std::ifstream tr = open_input(args.train), va = open_input(args.val), te = open_input(args.test);
        data.train = bytelm::nli_to_seq2seq(bytelm::load_nli_jsonl(tr));
        data.validation = bytelm::make_nli_split(bytelm::load_nli_jsonl(va), num_classes);
        data.test = bytelm::make_nli_split(bytelm::load_nli_jsonl(te), num_classes);
    } else {
        std::ifstream tr = open_input(args.train), va = open_input(args.val), te = open_input(args.test);
        data.train = bytelm::qa_to_seq2seq(bytelm::load_qa_jsonl(tr));
        data.validation = bytelm::make_qa_split(bytelm::load_qa_jsonl(va), language);
        data.test = bytelm::make_qa_split(bytelm::load_qa_jsonl(te), language);
    }

    const bytelm::FinetuneReport<float> report = bytelm::finetune(start, data, ft);

    fs::create_directories(args.outdir);
    json out_report;
    out_report["task"] = args.task;
    out_report["metric"] = args.task == "nli" ? "accuracy" : "f1";
    out_report["mean_test_metric"] = report.mean_test_metric;
    out_report["n_test"] = data.test.examples.size();
    std::vector<std::string> outputs;
    for (const auto& run : report.per_seed) {
        json trace = json::array();
        for (const auto& [step, value] : run.validation_trace) trace.push_back({{"step", step}, {"value", value}});
        json seed_j{{"seed", run.seed},
                    {"best_validation", run.best_validation},
                    {"test_metric", run.test_metric},
                    {"validation_trace", trace},
                    {"optimizer_steps", run.optimizer_steps},
                    {"stopped_early", run.stopped_early}};
        out_report["per_seed"].push_back(seed_j);
        const std::string trace_path =
            (fs::path(args.outdir) / ("validation_trace_seed" + std::to_string(run.seed) + ".csv")).string();
        {
            std::ofstream tout = open_output(trace_path);
            tout << "step,value\n";
            for (const auto& [step, value] : run.validation_trace) tout << step << "," << value << "\n";
        }
        outputs.push_back(trace_path);
        const std::string ck_path =
            (fs::path(args.outdir) / ("checkpoint_seed" + std::to_string(run.seed) + ".bin")).string();
        std::ofstream out = open_output(ck_path);
        bytelm::save_checkpoint(run.best_checkpoint, out);
        outputs.push_back(ck_path);
    }
    const std::string report_path = (fs::path(args.outdir) / "report.json").string();
    {
        std::ofstream out = open_output(report_path);
        out << out_report.dump(2) << "\n";
    }
    outputs.push_back(report_path);
    std::cout << "finetune[" << args.task << "]: mean test " << out_report["metric"].get<std::string>() << " = "
              << report.mean_test_metric << " over " << report.per_seed.size() << " seeds\n";

    json manifest_cfg = cfg;
    manifest_cfg["task"] = args.task;
    manifest_cfg["effective"] = {{"batch_size", ft.batch_size},
                                 {"accumulation_steps", ft.accumulation_steps},
                                 {"lr", ft.lr},
                                 {"epochs", ft.epochs},
                                 {"eval_epoch_fraction", ft.eval_epoch_fraction},
                                 {"patience", ft.patience},
                                 {"seeds", ft.seeds},
                                 {"max_decode_bytes", ft.max_decode_bytes}};
    write_manifest(args.outdir, "finetune", manifest_cfg, ft.seeds.front(),
                   {args.checkpoint, args.train, args.val, args.test}, outputs);
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string checkpoint, task, data, out;
    int classes = 3;
    std::string language = "en";
};

int cmd_evaluate(const EvaluateArgs& args) {
    if (args.task != "nli" && args.task != "qa")
        throw bytelm::ConfigError("unknown --task (expected nli or qa): " + args.task);
    std::ifstream ck_in = open_input(args.checkpoint);
    const bytelm::Checkpoint<float> ck = bytelm::load_checkpoint<float>(ck_in);
    bytelm::ModelState<float> state = bytelm::state_from_checkpoint(ck);
    const bytelm::TextDecoder decoder = bytelm::make_model_decoder(state);

    bytelm::MetricReport report;
    std::ifstream data_in = open_input(args.data);
    if (args.task == "nli") {
        report = bytelm::evaluate_nli(decoder, bytelm::load_nli_jsonl(data_in), args.classes);
    } else {
        report = bytelm::evaluate_qa(decoder, bytelm::load_qa_jsonl(data_in), args.language);
    }
    {
        std::ofstream out = open_output(args.out);
        out << bytelm::metric_report_to_json(report).dump(2) << "\n";
    }
    std::cout << report.task << " " << report.metric << " = " << report.value << " (n=" << report.example_count
              << ")\n";
    write_manifest(fs::path(args.out).parent_path(), "evaluate",
                   json{{"task", args.task}, {"classes", args.classes}, {"language", args.language}}, 0,
                   {args.checkpoint, args.data}, {args.out});
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int cmd_gradcheck(const std::string& mode) {
    bool all_passed = true;
    auto print = [&](const std::string& tag, const bytelm::GradCheckCase& c) {
        std::cout << tag << " " << c.name << ": " << (c.result.passed ? "pass" : "FAIL")
                  << " (max_rel=" << c.result.max_rel_error << ")\n";
        all_passed = all_passed && c.result.passed;
    };
    bytelm::ModelConfig mini;
    mini.d_model = 12;
    mini.num_heads = 2;
    mini.d_ff = 20;
    mini.encoder_layers = 1;
    mini.decoder_layers = 1;
    if (mode == "f32" || mode == "both") {
        auto s = bytelm::run_gradcheck_suite<float>(1e-3, 1e-3);
        for (const auto& c : s.cases) print("[f32]", c);
        print("[f32]", bytelm::run_model_gradcheck<float>(mini, 1e-3, 1e-3, 24, "mini_model"));
        print("[f32]", bytelm::run_model_gradcheck<float>(bytelm::ModelConfig::desk_default(), 1e-3, 1e-3, 6,
                                                          "desk_model"));
    }
    if (mode == "f64" || mode == "both") {
        auto s = bytelm::run_gradcheck_suite<double>(1e-6, 1e-4);
        for (const auto& c : s.cases) print("[f64]", c);
        print("[f64]", bytelm::run_model_gradcheck<double>(mini, 1e-6, 1e-4, 24, "mini_model"));
        print("[f64]", bytelm::run_model_gradcheck<double>(bytelm::ModelConfig::desk_default(), 1e-6, 1e-4, 6,
                                                           "desk_model"));
    }
    std::cout << (all_passed ? "gradcheck: all passed\n" : "gradcheck: FAILURES\n");
    return all_passed ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"byte-level language model pipeline"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(bytelm::kVersion));

    // corpus trim
    auto* corpus_cmd = app.add_subcommand("corpus", "corpus operations");
    corpus_cmd->require_subcommand(1);
    TrimArgs trim_args;
    auto* trim_cmd = corpus_cmd->add_subcommand("trim", "filter by language and trim to a byte budget");
    trim_cmd->add_option("--in", trim_args.in, "input JSONL")->required();
    trim_cmd->add_option("--lang", trim_args.lang, "language tag to keep")->required();
    trim_cmd->add_option("--budget-bytes", trim_args.budget_bytes, "byte budget")->required();
    trim_cmd->add_option("--out", trim_args.out, "output JSONL")->required();
    trim_cmd->add_option("--stats", trim_args.stats, "stats JSON path");

    // synth generate
    auto* synth_cmd = app.add_subcommand("synth", "synthetic corpora");
    synth_cmd->require_subcommand(1);
    SynthArgs synth_args;
    auto* gen_cmd = synth_cmd->add_subcommand("generate", "generate a synthetic corpus");
    gen_cmd->add_option("--kind", synth_args.kind, "hier or nonsense")->required();
    gen_cmd->add_option("--config", synth_args.config, "generator config JSON");
    gen_cmd->add_option("--bytes", synth_args.bytes, "total corpus bytes")->required();
    gen_cmd->add_option("--out", synth_args.out, "output JSONL")->required();
    gen_cmd->add_option("--report", synth_args.report, "validation report path");
    auto* synth_seed = gen_cmd->add_option("--seed", synth_args.seed, "seed override");

    // examples build
    auto* examples_cmd = app.add_subcommand("examples", "pretraining examples");
    examples_cmd->require_subcommand(1);
    ExamplesArgs ex_args;
    auto* build_cmd = examples_cmd->add_subcommand("build", "pack a corpus into span-corrupted examples");
    build_cmd->add_option("--corpus", ex_args.corpus, "input JSONL corpus")->required();
    build_cmd->add_option("--config", ex_args.config, "span corruption config JSON");
    build_cmd->add_option("--out", ex_args.out, "output binary records")->required();
    auto* ex_seed = build_cmd->add_option("--seed", ex_args.seed, "seed override");

    // pretrain
    PretrainArgs pre_args;
    auto* pre_cmd = app.add_subcommand("pretrain", "span-denoising pretraining");
    pre_cmd->add_option("--examples", pre_args.examples, "packed examples (.bin)")->required();
    pre_cmd->add_option("--config", pre_args.config, "run config JSON");
    pre_cmd->add_option("--outdir", pre_args.outdir, "output directory")->required();
    auto* pre_steps = pre_cmd->add_option("--steps", pre_args.steps, "override total steps");
    auto* pre_seed = pre_cmd->add_option("--seed", pre_args.seed, "seed override");
    pre_cmd->add_option("--resume", pre_args.resume, "resume from checkpoint");
    pre_cmd->add_option("--checkpoint-every", pre_args.checkpoint_every, "write periodic checkpoints");

    // finetune
    FinetuneArgs ft_args;
    auto* ft_cmd = app.add_subcommand("finetune", "task finetuning with early stopping");
    ft_cmd->add_option("--checkpoint", ft_args.checkpoint, "starting checkpoint")->required();
    ft_cmd->add_option("--task", ft_args.task, "nli or qa")->required();
    ft_cmd->add_option("--train", ft_args.train, "train JSONL")->required();
    ft_cmd->add_option("--val", ft_args.val, "validation JSONL")->required();
    ft_cmd->add_option("--test", ft_args.test, "test JSONL")->required();
    ft_cmd->add_option("--config", ft_args.config, "finetune config JSON");
    ft_cmd->add_option("--outdir", ft_args.outdir, "output directory")->required();
    ft_cmd->add_option("--seeds", ft_args.seeds, "comma-separated seeds");
    ft_cmd->add_option("--classes", ft_args.classes, "NLI class count");
    ft_cmd->add_option("--language", ft_args.language, "QA language tag");
    ft_cmd->add_option("--epochs", ft_args.epochs, "override epochs");

    // evaluate
    EvaluateArgs ev_args;
    auto* ev_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on a task");
    ev_cmd->add_option("--checkpoint", ev_args.checkpoint, "checkpoint")->required();
    ev_cmd->add_option("--task", ev_args.task, "nli or qa")->required();
    ev_cmd->add_option("--data", ev_args.data, "task JSONL")->required();
    ev_cmd->add_option("--out", ev_args.out, "report JSON path")->required();
    ev_cmd->add_option("--classes", ev_args.classes, "NLI class count");
    ev_cmd->add_option("--language", ev_args.language, "QA language tag");

    // gradcheck
    std::string gc_mode = "both";
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cmd->add_option("--mode", gc_mode, "f32, f64 or both")->check(CLI::IsMember({"f32", "f64", "both"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    synth_args.seed_set = synth_seed->count() > 0;
    ex_args.seed_set = ex_seed->count() > 0;
    pre_args.steps_set = pre_steps->count() > 0;
    pre_args.seed_set = pre_seed->count() > 0;

    try {
        if (trim_cmd->parsed()) return cmd_corpus_trim(trim_args);
        if (gen_cmd->parsed()) return cmd_synth_generate(synth_args);
        if (build_cmd->parsed()) return cmd_examples_build(ex_args);
        if (pre_cmd->parsed()) return cmd_pretrain(pre_args);
        if (ft_cmd->parsed()) return cmd_finetune(ft_args);
        if (ev_cmd->parsed()) return cmd_evaluate(ev_args);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc_mode);
    } catch (const bytelm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const bytelm::ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const bytelm::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const bytelm::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
