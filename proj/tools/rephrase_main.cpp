#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rephrase/agents.hpp"
#include "rephrase/core_types.hpp"
#include "rephrase/dataset.hpp"
#include "rephrase/experiment.hpp"
#include "rephrase/knowledge_base.hpp"
#include "rephrase/metrics.hpp"
#include "rephrase/model_backend.hpp"

namespace {

using namespace rephrase;

// Exit code contract: 0 success, 1 user error, 2 runtime failure.
constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitRuntimeError = 2;

void print_support_table(const Dataset& dataset) {
    std::size_t unlabeled = 0;
    for (const auto& rec : dataset.records)
        if (!rec.gold) ++unlabeled;
    if (unlabeled > 0) {
        std::printf("%zu record(s) without gold label; support table omitted\n", unlabeled);
        return;
    }
    if (dataset.records.empty()) return;
    const auto counts = class_support(dataset);
    std::printf("class support:\n");
    for (std::size_t k = 0; k < kCategoryCount; ++k)
        std::printf("  %-18s %zu\n", std::string(category_name(canonical_order()[k])).c_str(),
                    counts[k]);
}

int cmd_ingest(const std::string& input, const std::string& format, const std::string& out) {
    const DatasetFormat fmt =
        format.empty() ? sniff_dataset_format(input) : parse_dataset_format(format);
    Dataset dataset = load_dataset(input, fmt);
    save_dataset_jsonl(dataset, out);
    std::printf("%zu records\n", dataset.records.size());
    print_support_table(dataset);
    std::printf("wrote %s\n", out.c_str());
    return kExitOk;
}

int cmd_kb_build(const std::string& docs_dir, const std::string& out, std::size_t max_words,
                 std::size_t overlap, double k1, double b) {
    const auto docs = load_corpus_dir(docs_dir);
    if (docs.empty()) throw EmptyCorpusError();
    std::vector<Chunk> chunks;
    for (const auto& doc : docs) {
        auto doc_chunks = chunk_document(doc, max_words, overlap);
        chunks.insert(chunks.end(), doc_chunks.begin(), doc_chunks.end());
    }
    auto idx = KnowledgeIndex::build(std::move(chunks), {k1, b});
    idx.save(out);
    std::printf("%zu chunks from %zu documents\n", idx.size(), docs.size());
    std::printf("wrote %s\n", out.c_str());
    return kExitOk;
}

int cmd_kb_query(const std::string& index_path, const std::string& query, std::size_t top_k) {
    auto idx = KnowledgeIndex::load(index_path);
    auto results = idx.retrieve(query, top_k);
    if (results.empty()) {
        std::printf("0 results\n");
        return kExitOk;
    }
    for (const auto& r : results) {
        std::string preview = r.text.substr(0, 80);
        for (char& ch : preview)
            if (ch == '\n' || ch == '\r') ch = ' ';
        std::printf("%s %.6f %s\n", r.chunk_id.c_str(), r.score, preview.c_str());
    }
    return kExitOk;
}

std::unique_ptr<ChatBackend> make_backend(const RunConfig& cfg) {
    const std::string& spec = cfg.backend_spec;
    if (spec == "live") {
        if (cfg.model.empty()) throw UserError("live backend requires a model name");
        return std::make_unique<HttpChatBackend>(http_config_from_env(cfg.model));
    }
    if (spec.rfind("scripted:", 0) == 0) {
        const std::string file = spec.substr(9);
        if (file.empty()) throw UserError("scripted backend requires a file: scripted:<file>");
        return ScriptedBackend::from_file(file);
    }
    throw UserError("unknown backend '" + spec + "' (expected live or scripted:<file>)");
}

int cmd_run(const RunConfig& cfg) {
    cfg.validate();
    Dataset dataset = load_dataset(cfg.dataset_path);
    if (dataset.records.empty()) throw UserError("dataset is empty: " + cfg.dataset_path);

    std::optional<KnowledgeIndex> idx;
    for (ExperimentArm arm : cfg.arms) {
        if (arm_is_informed(arm)) {
            idx = KnowledgeIndex::load(cfg.index_path);
            break;
        }
    }

    for (ExperimentArm arm : cfg.arms) {
        const std::string name(arm_name(arm));
        std::printf("arm %s: running %zu pair(s) with %d worker(s)\n", name.c_str(),
                    dataset.records.size(), cfg.workers);
        // Each arm gets a fresh backend instance: no state flows between arms.
        auto backend = make_backend(cfg);
        auto progress = [&](const std::string& pair_id, const Verdict& verdict, std::size_t done,
                            std::size_t total) {
            std::printf("arm %s: [%zu/%zu] %s %s\n", name.c_str(), done, total, pair_id.c_str(),
                        std::string(verdict_status_name(verdict.status)).c_str());
        };
        const KnowledgeIndex* idx_ptr = arm_is_informed(arm) ? &*idx : nullptr;
        ArmRunStats stats = resume_arm(cfg, arm, dataset, *backend, idx_ptr, progress);
        if (stats.skipped > 0) std::printf("arm %s: skipped %zu\n", name.c_str(), stats.skipped);
        std::printf("arm %s: ok=%zu parse_failure=%zu backend_failure=%zu -> %s\n", name.c_str(),
                    stats.ok, stats.parse_failure, stats.backend_failure,
                    stats.results_path.string().c_str());
    }
    return kExitOk;
}

int cmd_eval(const std::string& predictions_path, const std::string& gold_path,
             const std::string& report_dir, const std::string& formats_csv) {
    const auto records = load_run_records(predictions_path);
    if (records.empty()) throw UserError("predictions file is empty: " + predictions_path);
    Dataset gold = load_dataset(gold_path);

    std::map<std::string, RephraseCategory> gold_by_id;
    for (std::size_t i = 0; i < gold.records.size(); ++i) {
        const auto& rec = gold.records[i];
        if (!rec.gold) throw MissingGoldError(rec.id, i + 1);
        gold_by_id.emplace(rec.id, *rec.gold);
    }

    std::vector<RephraseCategory> gold_labels, pred_labels;
    std::size_t parse_failures = 0, backend_failures = 0;
    std::set<std::string> arms;
    std::vector<std::string> unknown;
    for (const auto& rec : records) {
        auto it = gold_by_id.find(rec.pair_id);
        if (it == gold_by_id.end()) {
            unknown.push_back(rec.pair_id);
            continue;
        }
        arms.insert(std::string(arm_name(rec.arm)));
        switch (rec.verdict.status) {
        case VerdictStatus::Ok:
            gold_labels.push_back(it->second);
            pred_labels.push_back(rec.verdict.category);
            break;
        case VerdictStatus::ParseFailure: ++parse_failures; break;
        case VerdictStatus::BackendFailure: ++backend_failures; break;
        }
    }
    if (!unknown.empty()) throw UnknownIdError(unknown);
    if (gold_labels.empty())
        throw UserError("no scored records: every prediction failed or the file is empty");

    const std::string arm_label = arms.size() == 1 ? *arms.begin() : "mixed";
    EvalReport report =
        evaluate(arm_label, gold_labels, pred_labels, parse_failures, backend_failures);

    std::printf("arm %s: scored %zu excluded parse_failure=%zu backend_failure=%zu\n",
                arm_label.c_str(), report.scored(), report.parse_failures,
                report.backend_failures);
    std::printf("macro_f1 %.2f mcc %.2f\n", report.macro_f1, report.mcc);

    const auto formats = parse_report_formats(formats_csv);
    const auto written = write_report_files(report, report_dir, formats);
    for (const auto& path : written) std::printf("wrote %s\n", path.string().c_str());
    return kExitOk;
}

int cmd_kappa(const std::string& a_path, const std::string& b_path, bool per_category) {
    Dataset da = load_dataset(a_path);
    Dataset db = load_dataset(b_path);

    std::map<std::string, RephraseCategory> b_by_id;
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        const auto& rec = db.records[i];
        if (!rec.gold) throw MissingGoldError(rec.id, i + 1);
        b_by_id.emplace(rec.id, *rec.gold);
    }

    std::vector<RephraseCategory> a_labels, b_labels;
    std::size_t missing_in_b = 0;
    for (std::size_t i = 0; i < da.records.size(); ++i) {
        const auto& rec = da.records[i];
        if (!rec.gold) throw MissingGoldError(rec.id, i + 1);
        auto it = b_by_id.find(rec.id);
        if (it == b_by_id.end()) {
            ++missing_in_b;
            continue;
        }
        a_labels.push_back(*rec.gold);
        b_labels.push_back(it->second);
    }
    if (missing_in_b > 0 || da.records.size() != db.records.size())
        throw UserError("annotation files do not share an identical id set");

    if (per_category) {
        for (RephraseCategory c : canonical_order()) {
            const double k = per_category_kappa(a_labels, b_labels, c);
            const bool degenerate = kappa_is_degenerate(a_labels, b_labels, c);
            std::printf("%-18s %ld%%%s\n", std::string(category_name(c)).c_str(),
                        std::lround(k * 100.0), degenerate ? " (degenerate)" : "");
        }
    }
    std::printf("Overall %ld%%\n", std::lround(cohens_kappa(a_labels, b_labels) * 100.0));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Broker-moderated multi-agent classification of rephrase pairs"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write canonical JSONL");
    std::string in_input, in_format, in_out;
    ingest->add_option("--input", in_input, "Input CSV or JSONL file")->required();
    ingest->add_option("--format", in_format, "csv or jsonl (default: by extension)");
    ingest->add_option("--out", in_out, "Output JSONL path")->required();

    // kb build / kb query
    auto* kb = app.add_subcommand("kb", "Build or query the knowledge index");
    kb->require_subcommand(1);
    auto* kb_build = kb->add_subcommand("build", "Index a directory of plain-text documents");
    std::string kb_docs, kb_out;
    std::size_t kb_max_words = kDefaultMaxChunkWords, kb_overlap = kDefaultOverlapWords;
    double kb_k1 = 1.2, kb_b = 0.75;
    kb_build->add_option("--docs", kb_docs, "Corpus directory (one document per file)")->required();
    kb_build->add_option("--out", kb_out, "Output index path")->required();
    kb_build->add_option("--max-words", kb_max_words, "Chunk size in words");
    kb_build->add_option("--overlap", kb_overlap, "Overlap between consecutive chunks");
    kb_build->add_option("--k1", kb_k1, "BM25 k1");
    kb_build->add_option("--b", kb_b, "BM25 b");
    auto* kb_query = kb->add_subcommand("query", "Rank chunks for a query");
    std::string kb_index, kb_query_text;
    std::size_t kb_top_k = 5;
    kb_query->add_option("--index", kb_index, "Index file")->required();
    kb_query->add_option("--query", kb_query_text, "Query text")->required();
    kb_query->add_option("--top-k", kb_top_k, "Number of results");

    // run
    auto* run = app.add_subcommand("run", "Run experiment arms over a dataset");
    std::string run_config, run_arm_flag, run_dataset, run_index, run_out, run_backend,
        run_model, run_prompts;
    int run_workers = 0, run_rounds = 0, run_reprompts = -1, run_top_k = 0, run_max_tokens = 0;
    double run_temperature = -1.0;
    run->add_option("--config", run_config, "Sectioned key=value config file");
    run->add_option("--arm", run_arm_flag, "single_zero|single_rag|mas_zero|mas_rag|all");
    run->add_option("--dataset", run_dataset, "Dataset file (CSV or JSONL)");
    run->add_option("--index", run_index, "Knowledge index (informed arms)");
    run->add_option("--out", run_out, "Output directory for {arm}.jsonl");
    run->add_option("--backend", run_backend, "live or scripted:<file>");
    run->add_option("--workers", run_workers, "Worker pool size");
    run->add_option("--model", run_model, "Model name for the live backend");
    run->add_option("--temperature", run_temperature, "Sampling temperature");
    run->add_option("--rounds", run_rounds, "Specialist rounds per deliberation");
    run->add_option("--verdict-reprompts", run_reprompts, "Broker re-prompts after a bad verdict");
    run->add_option("--top-k", run_top_k, "Passages per informed turn");
    run->add_option("--max-output-tokens", run_max_tokens, "Completion token cap");
    run->add_option("--prompts", run_prompts, "Directory of role prompt templates");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions against gold labels");
    std::string ev_pred, ev_gold, ev_dir = ".", ev_formats = "text,csv";
    eval->add_option("--predictions", ev_pred, "Results JSONL from run")->required();
    eval->add_option("--gold", ev_gold, "Gold dataset file")->required();
    eval->add_option("--report-dir", ev_dir, "Report output directory");
    eval->add_option("--formats", ev_formats, "Comma list of text,csv,svg");

    // kappa
    auto* kappa = app.add_subcommand("kappa", "Inter-annotator agreement between two files");
    std::string ka_a, ka_b;
    bool ka_per_category = false;
    kappa->add_option("--a", ka_a, "First annotation file")->required();
    kappa->add_option("--b", ka_b, "Second annotation file")->required();
    kappa->add_flag("--per-category", ka_per_category, "Also print one-vs-rest kappa per category");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    }

    try {
        if (*ingest) return cmd_ingest(in_input, in_format, in_out);
        if (*kb_build) return cmd_kb_build(kb_docs, kb_out, kb_max_words, kb_overlap, kb_k1, kb_b);
        if (*kb_query) return cmd_kb_query(kb_index, kb_query_text, kb_top_k);
        if (*run) {
            RunConfig cfg;
            if (!run_config.empty())
                for (const auto& [key, value] : parse_config_file(run_config))
                    apply_config_value(cfg, key, value);
            // Flags override config-file keys of the same name.
            if (run->count("--arm")) apply_config_value(cfg, "arm", run_arm_flag);
            if (run->count("--dataset")) cfg.dataset_path = run_dataset;
            if (run->count("--index")) cfg.index_path = run_index;
            if (run->count("--out")) cfg.output_dir = run_out;
            if (run->count("--backend")) cfg.backend_spec = run_backend;
            if (run->count("--workers")) cfg.workers = run_workers;
            if (run->count("--model")) cfg.model = run_model;
            if (run->count("--temperature")) cfg.temperature = run_temperature;
            if (run->count("--rounds")) cfg.policy.rounds = run_rounds;
            if (run->count("--verdict-reprompts")) cfg.policy.verdict_reprompts = run_reprompts;
            if (run->count("--top-k")) cfg.policy.top_k = static_cast<std::size_t>(run_top_k);
            if (run->count("--max-output-tokens")) cfg.max_output_tokens = run_max_tokens;
            if (run->count("--prompts")) cfg.prompts_dir = run_prompts;
            return cmd_run(cfg);
        }
        if (*eval) return cmd_eval(ev_pred, ev_gold, ev_dir, ev_formats);
        if (*kappa) return cmd_kappa(ka_a, ka_b, ka_per_category);
    } catch (const UserError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kExitRuntimeError;
    }
    return kExitUserError;
}
