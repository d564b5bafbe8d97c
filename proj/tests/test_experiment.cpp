#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <regex>

#include "rephrase/experiment.hpp"

#include "helpers.hpp"

using namespace rephrase;
using test_helpers::TempDir;
using test_helpers::read_file;
using test_helpers::verdict_block;
using test_helpers::write_file;

namespace {

Dataset tiny_dataset(std::size_t n) {
    Dataset d;
    for (std::size_t i = 1; i <= n; ++i) {
        RephrasePair p;
        char id[8];
        std::snprintf(id, sizeof(id), "p%02zu", i);
        p.id = id;
        p.input_text = "input text " + std::to_string(i);
        p.output_text = "output text " + std::to_string(i);
        p.gold = canonical_order()[i % kCategoryCount];
        d.records.push_back(std::move(p));
    }
    return d;
}

// Single-arm script: one broker verdict per pair, category = the pair's gold.
ScriptedBackend::Script single_script(const Dataset& d) {
    ScriptedBackend::Script script;
    for (const auto& pair : d.records)
        script["broker_critic:" + pair.id] = {
            verdict_block(std::string(category_name(*pair.gold)), "scripted")};
    return script;
}

ScriptedBackend::Script mas_script(const Dataset& d, int rounds = 2) {
    ScriptedBackend::Script script = single_script(d);
    for (const auto& pair : d.records) {
        for (const char* role : {"asserting", "arguing", "disagreeing"}) {
            auto& list = script[std::string(role) + ":" + pair.id];
            for (int r = 1; r <= rounds; ++r)
                list.push_back(std::string(role) + " says " + pair.id + " round " +
                               std::to_string(r));
        }
    }
    return script;
}

RunConfig config_for(const TempDir& tmp, int workers = 2) {
    RunConfig cfg;
    cfg.arms = {ExperimentArm::MasZeroShot};
    cfg.dataset_path = "unused";
    cfg.output_dir = (tmp.path() / "results").string();
    cfg.workers = workers;
    return cfg;
}

// Timestamps are wall-clock; blank them for byte-identity comparisons.
std::string strip_timestamps(std::string jsonl) {
    jsonl = std::regex_replace(jsonl, std::regex("\"started_at\":[0-9]+"), "\"started_at\":0");
    jsonl = std::regex_replace(jsonl, std::regex("\"finished_at\":[0-9]+"), "\"finished_at\":0");
    return jsonl;
}

} // namespace

TEST_CASE("run record serialization round-trips") {
    RunRecord rec;
    rec.pair_id = "p01";
    rec.arm = ExperimentArm::MasRag;
    rec.verdict = {RephraseCategory::Specification, "narrows scope", VerdictStatus::Ok};
    rec.transcript.pair_id = "p01";
    rec.transcript.arm = ExperimentArm::MasRag;
    rec.transcript.turns = {{AgentRole::Asserting, 1, "content with \"quotes\"", {"d#0001"}}};
    rec.transcript.verdict = rec.verdict;
    rec.started_at = 1723280000000;
    rec.finished_at = 1723280000500;
    rec.input_tokens = 42;
    rec.output_tokens = 7;
    rec.attempt = 2;

    RunRecord back = parse_run_record(serialize_run_record(rec));
    CHECK(back.pair_id == rec.pair_id);
    CHECK(back.arm == rec.arm);
    CHECK(back.verdict.category == rec.verdict.category);
    CHECK(back.verdict.status == rec.verdict.status);
    CHECK(back.transcript.turns.size() == 1);
    CHECK(back.transcript.turns[0].content == "content with \"quotes\"");
    CHECK(back.transcript.turns[0].retrieved_passage_ids == std::vector<std::string>{"d#0001"});
    CHECK(back.started_at == rec.started_at);
    CHECK(back.finished_at == rec.finished_at);
    CHECK(back.attempt == 2);
    // Serialization is stable.
    CHECK(serialize_run_record(back) == serialize_run_record(rec));
}

TEST_CASE("run_arm writes one Ok record per pair in ascending id order") {
    TempDir tmp;
    Dataset d = tiny_dataset(3);
    ScriptedBackend backend(mas_script(d));
    RunConfig cfg = config_for(tmp);

    ArmRunStats stats = run_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
    CHECK(stats.ok == 3);
    CHECK(stats.parse_failure == 0);
    CHECK(stats.backend_failure == 0);

    auto records = load_run_records(stats.results_path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].pair_id == "p01");
    CHECK(records[1].pair_id == "p02");
    CHECK(records[2].pair_id == "p03");
    for (const auto& rec : records) {
        CHECK(rec.verdict.status == VerdictStatus::Ok);
        CHECK(rec.transcript.turns.size() == 7);
        CHECK(rec.finished_at >= rec.started_at);
        CHECK(rec.attempt == 1);
        CHECK(rec.input_tokens > 0);
    }
}

TEST_CASE("a pair whose script is missing fails alone") {
    TempDir tmp;
    Dataset d = tiny_dataset(3);
    auto script = mas_script(d);
    script.erase("broker_critic:p02"); // pair 2 exhausts at the broker call
    ScriptedBackend backend(std::move(script));
    RunConfig cfg = config_for(tmp);

    ArmRunStats stats = run_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
    CHECK(stats.ok == 2);
    CHECK(stats.backend_failure == 1);

    auto records = load_run_records(stats.results_path);
    REQUIRE(records.size() == 3);
    CHECK(records[0].verdict.status == VerdictStatus::Ok);
    CHECK(records[1].verdict.status == VerdictStatus::BackendFailure);
    CHECK(records[2].verdict.status == VerdictStatus::Ok);
}

TEST_CASE("record bodies are byte-identical across reruns and worker counts") {
    TempDir tmp;
    Dataset d = tiny_dataset(6);

    auto run_with_workers = [&](int workers, const std::string& out_name) {
        RunConfig cfg = config_for(tmp, workers);
        cfg.output_dir = (tmp.path() / out_name).string();
        ScriptedBackend backend(mas_script(d));
        ArmRunStats stats = run_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
        return strip_timestamps(read_file(stats.results_path));
    };

    const std::string one_a = run_with_workers(1, "w1a");
    const std::string one_b = run_with_workers(1, "w1b");
    const std::string four = run_with_workers(4, "w4");
    CHECK(one_a == one_b);
    CHECK(one_a == four);
}

TEST_CASE("resume skips settled pairs and retries backend failures") {
    TempDir tmp;
    Dataset d = tiny_dataset(3);
    RunConfig cfg = config_for(tmp);

    // First pass: p02 has no script entries and fails.
    {
        auto script = mas_script(d);
        script.erase("broker_critic:p02");
        ScriptedBackend backend(std::move(script));
        run_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
    }

    // Resume with a script that only covers p02: settled pairs are skipped,
    // the failed pair re-runs with attempt incremented.
    {
        Dataset only_p02;
        only_p02.records.push_back(d.records[1]);
        ScriptedBackend backend(mas_script(only_p02));
        ArmRunStats stats = resume_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
        CHECK(stats.skipped == 2);
        CHECK(stats.ok == 3);
        CHECK(stats.backend_failure == 0);

        auto records = load_run_records(stats.results_path);
        REQUIRE(records.size() == 3);
        CHECK(records[1].pair_id == "p02");
        CHECK(records[1].attempt == 2);
        CHECK(records[1].verdict.status == VerdictStatus::Ok);
        CHECK(records[0].attempt == 1);
    }

    // A third resume runs nothing at all.
    {
        ScriptedBackend backend(ScriptedBackend::Script{{"unused", {"x"}}});
        ArmRunStats stats = resume_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
        CHECK(stats.skipped == 3);
        CHECK(stats.ok == 3);
    }
}

TEST_CASE("resume also covers pairs missing from the results file") {
    TempDir tmp;
    Dataset two = tiny_dataset(2);
    Dataset three = tiny_dataset(3);
    RunConfig cfg = config_for(tmp);
    {
        ScriptedBackend backend(mas_script(two));
        run_arm(cfg, ExperimentArm::MasZeroShot, two, backend, nullptr);
    }
    {
        Dataset only_p03;
        only_p03.records.push_back(three.records[2]);
        ScriptedBackend backend(mas_script(only_p03));
        ArmRunStats stats = resume_arm(cfg, ExperimentArm::MasZeroShot, three, backend, nullptr);
        CHECK(stats.skipped == 2);
        auto records = load_run_records(stats.results_path);
        REQUIRE(records.size() == 3);
        CHECK(records[2].pair_id == "p03");
        CHECK(records[2].attempt == 1);
    }
}

TEST_CASE("a truncated results line is a corrupt-file error naming the line") {
    TempDir tmp;
    Dataset d = tiny_dataset(2);
    RunConfig cfg = config_for(tmp);
    ScriptedBackend backend(mas_script(d));
    ArmRunStats stats = run_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);

    std::string content = read_file(stats.results_path);
    content = content.substr(0, content.find('\n') + 1) + "{\"pair_id\": trunc\n";
    write_file(stats.results_path, content);

    try {
        resume_arm(cfg, ExperimentArm::MasZeroShot, d, backend, nullptr);
        FAIL("expected CorruptResultsFileError");
    } catch (const CorruptResultsFileError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("config validation catches fatal errors before any model call") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.validate(), UserError); // no arms

    cfg.arms = {ExperimentArm::MasRag};
    cfg.dataset_path = "d.jsonl";
    CHECK_THROWS_AS(cfg.validate(), UserError); // informed arm without index

    cfg.index_path = "kb.json";
    cfg.validate();

    cfg.workers = 0;
    CHECK_THROWS_AS(cfg.validate(), UserError);

    cfg.workers = 4;
    cfg.policy.specialist_order = {AgentRole::Asserting, AgentRole::Asserting,
                                   AgentRole::Disagreeing};
    CHECK_THROWS_AS(cfg.validate(), UserError); // duplicate specialist

    cfg.policy.specialist_order = {AgentRole::Disagreeing, AgentRole::Asserting,
                                   AgentRole::Arguing};
    cfg.validate(); // any permutation of the three specialists is fine
}

TEST_CASE("config file parsing and overrides") {
    TempDir tmp;
    write_file(tmp.file("run.conf"),
               "# experiment configuration\n"
               "[run]\n"
               "arm = all\n"
               "dataset = data/pairs.jsonl\n"
               "out = results\n"
               "workers = 2\n"
               "model = test-model\n"
               "temperature = 0.1\n"
               "\n"
               "[policy]\n"
               "rounds = 3\n"
               "verdict_reprompts = 2\n"
               "top_k = 4\n");
    auto values = parse_config_file(tmp.file("run.conf"));
    RunConfig cfg;
    for (const auto& [k, v] : values) apply_config_value(cfg, k, v);
    CHECK(cfg.arms.size() == 4);
    CHECK(cfg.dataset_path == "data/pairs.jsonl");
    CHECK(cfg.workers == 2);
    CHECK(cfg.model == "test-model");
    CHECK(cfg.temperature == doctest::Approx(0.1));
    CHECK(cfg.policy.rounds == 3);
    CHECK(cfg.policy.verdict_reprompts == 2);
    CHECK(cfg.policy.top_k == 4);

    // CLI-style override wins by being applied after the file.
    apply_config_value(cfg, "workers", "8");
    CHECK(cfg.workers == 8);

    CHECK_THROWS_AS(apply_config_value(cfg, "no_such_key", "1"), UserError);
    CHECK_THROWS_AS(apply_config_value(cfg, "workers", "many"), UserError);

    write_file(tmp.file("bad.conf"), "key_without_value\n");
    CHECK_THROWS_AS(parse_config_file(tmp.file("bad.conf")), UserError);
}

TEST_CASE("informed arms thread the index through to the turns") {
    TempDir tmp;
    Dataset d = tiny_dataset(2);
    Document doc{"theory", "theory",
                 "input text output and more shared vocabulary for retrieval"};
    auto idx = KnowledgeIndex::build(chunk_document(doc, 6, 0));
    ScriptedBackend backend(mas_script(d));
    RunConfig cfg = config_for(tmp);

    ArmRunStats stats = run_arm(cfg, ExperimentArm::MasRag, d, backend, &idx);
    CHECK(stats.ok == 2);
    auto records = load_run_records(stats.results_path);
    for (const auto& rec : records) {
        CHECK(rec.transcript.arm == ExperimentArm::MasRag);
        CHECK(!rec.transcript.turns[0].retrieved_passage_ids.empty());
    }

    CHECK_THROWS_AS(run_arm(cfg, ExperimentArm::MasRag, d, backend, nullptr), UserError);
}
