#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "rephrase/agents.hpp"

#include "helpers.hpp"

using namespace rephrase;
using test_helpers::RecordingBackend;
using test_helpers::TempDir;
using test_helpers::verdict_block;
using test_helpers::write_file;

namespace {

RephrasePair sample_pair() {
    RephrasePair p;
    p.id = "p1";
    p.input_text = "Anderson is doing a great job";
    p.output_text = "Anderson is killing it";
    p.input_illocution = "praising the moderator";
    p.output_illocution = "praising the moderator strongly";
    p.gold = RephraseCategory::Intensification;
    return p;
}

KnowledgeIndex sample_index() {
    Document doc{"theory", "theory",
                 "intensification strengthens a point by reinforcing qualities while "
                 "deintensification weakens the commitment expressed by the speaker and "
                 "generalisation broadens the original claim beyond its first scope"};
    return KnowledgeIndex::build(chunk_document(doc, 12, 0));
}

std::string render_messages(const std::vector<ChatMessage>& messages) {
    std::string out;
    for (const auto& m : messages)
        out += "--- " + std::string(chat_role_name(m.role)) + " ---\n" + m.content + "\n";
    return out;
}

// Drops the delimited knowledge section (inclusive of delimiters).
std::string elide_knowledge(const std::string& text) {
    std::string out;
    std::istringstream in(text);
    std::string line;
    bool inside = false;
    while (std::getline(in, line)) {
        if (line == kKnowledgeSectionBegin) {
            inside = true;
            continue;
        }
        if (line == kKnowledgeSectionEnd) {
            inside = false;
            continue;
        }
        if (!inside) out += line + "\n";
    }
    return out;
}

} // namespace

TEST_CASE("zero-shot prompt carries no knowledge delimiter") {
    auto messages = build_prompt(AgentRole::Asserting, sample_pair(), {}, {});
    const std::string text = render_messages(messages);
    CHECK(text.find(kKnowledgeSectionBegin) == std::string::npos);
    CHECK(messages.size() == 2);
    CHECK(messages[0].role == ChatRole::System);
    CHECK(messages[1].role == ChatRole::User);
}

TEST_CASE("informed prompt lists passages in order inside the delimited section") {
    std::vector<RetrievalResult> passages = {
        {"theory#0001", 2.0, "second chunk text"},
        {"theory#0000", 1.5, "first chunk text"},
    };
    auto messages = build_prompt(AgentRole::Asserting, sample_pair(), {}, passages);
    const std::string user = messages[1].content;
    const auto a = user.find("[theory#0001]");
    const auto b = user.find("[theory#0000]");
    REQUIRE(a != std::string::npos);
    REQUIRE(b != std::string::npos);
    CHECK(a < b); // retrieval order preserved
    CHECK(user.find(kKnowledgeSectionBegin) != std::string::npos);
    CHECK(user.find(kKnowledgeSectionEnd) != std::string::npos);
}

TEST_CASE("every role prompt embeds the category definitions verbatim") {
    for (AgentRole role : {AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing,
                           AgentRole::BrokerCritic}) {
        auto messages = build_prompt(role, sample_pair(), {}, {});
        CHECK(messages[0].content.find("Strengthens a point by reinforcing qualities") !=
              std::string::npos);
        CHECK(messages[0].content.find("Weakens a point") != std::string::npos);
        CHECK(messages[0].content.find("Adds detail or narrows scope") != std::string::npos);
        CHECK(messages[0].content.find("Broadens or abstracts the original point") !=
              std::string::npos);
        CHECK(messages[0].content.find("{definitions}") == std::string::npos);
    }
}

TEST_CASE("prompt renders history as labeled turns") {
    std::vector<Turn> history = {
        {AgentRole::Asserting, 1, "the output strengthens the claim", {}},
        {AgentRole::Arguing, 1, "this is intensification", {}},
    };
    auto messages = build_prompt(AgentRole::Disagreeing, sample_pair(), history, {});
    const std::string user = messages[1].content;
    CHECK(user.find("[round 1] asserting: the output strengthens the claim") != std::string::npos);
    CHECK(user.find("[round 1] arguing: this is intensification") != std::string::npos);

    auto fresh = build_prompt(AgentRole::Asserting, sample_pair(), {}, {});
    CHECK(fresh[1].content.find("(no prior turns)") != std::string::npos);
}

TEST_CASE("informed and zero-shot prompts are byte-identical outside the section") {
    auto passages = sample_index().retrieve("intensification strengthens", 3);
    REQUIRE(!passages.empty());
    for (AgentRole role : {AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing,
                           AgentRole::BrokerCritic}) {
        const std::string informed =
            render_messages(build_prompt(role, sample_pair(), {}, passages));
        const std::string zero = render_messages(build_prompt(role, sample_pair(), {}, {}));
        CHECK(elide_knowledge(informed) == zero);
        CHECK(informed != zero);
    }
}

TEST_CASE("custom role template may position the knowledge slot in the system prompt") {
    TempDir tmp;
    write_file(tmp.file("prompts/asserting.txt"),
               "Custom asserting instructions.\n{definitions}\n{knowledge}\n");
    auto lib = PromptLibrary::load_dir(tmp.file("prompts"));
    std::vector<RetrievalResult> passages = {{"c#0000", 1.0, "passage body"}};
    auto messages = build_prompt(AgentRole::Asserting, sample_pair(), {}, passages, lib);
    CHECK(messages[0].content.find("[c#0000] passage body") != std::string::npos);
    CHECK(messages[1].content.find("[c#0000]") == std::string::npos);
    // Other roles fall back to defaults.
    auto broker = build_prompt(AgentRole::BrokerCritic, sample_pair(), {}, passages, lib);
    CHECK(broker[1].content.find("[c#0000] passage body") != std::string::npos);
}

#ifdef REPHRASE_SOURCE_DIR
TEST_CASE("shipped prompt files match the embedded defaults") {
    const auto dir = std::filesystem::path(REPHRASE_SOURCE_DIR) / "prompts";
    REQUIRE(std::filesystem::is_directory(dir));
    auto lib = PromptLibrary::load_dir(dir);
    for (AgentRole role : {AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing,
                           AgentRole::BrokerCritic}) {
        CHECK(std::filesystem::exists(dir / (std::string(agent_role_name(role)) + ".txt")));
        CHECK(lib.role_template(role) == PromptLibrary::defaults().role_template(role));
    }
}
#endif

TEST_CASE("agents_for_arm yields the right teams with a shared rag flag") {
    auto single = agents_for_arm(ExperimentArm::SingleZeroShot);
    REQUIRE(single.size() == 1);
    CHECK(single[0].role == AgentRole::BrokerCritic);
    CHECK_FALSE(single[0].rag_enabled);

    auto mas = agents_for_arm(ExperimentArm::MasRag);
    REQUIRE(mas.size() == 4);
    CHECK(mas.back().role == AgentRole::BrokerCritic);
    for (const auto& spec : mas) {
        CHECK(spec.rag_enabled);
        CHECK(!spec.system_prompt.empty());
    }
}

TEST_CASE("retrieve_for_pair is deterministic and matches the pair text") {
    auto idx = sample_index();
    auto p = sample_pair();
    auto r1 = retrieve_for_pair(idx, p, 5);
    auto r2 = retrieve_for_pair(idx, p, 5);
    REQUIRE(!r1.empty());
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
        CHECK(r1[i].chunk_id == r2[i].chunk_id);
        CHECK(r1[i].score == r2[i].score);
    }

    RephrasePair miss;
    miss.id = "p2";
    miss.input_text = "zzz yyy";
    miss.output_text = "xxx www";
    CHECK(retrieve_for_pair(idx, miss, 5).empty());
}

// ---------------------------------------------------------------------------
// parse_verdict
// ---------------------------------------------------------------------------

TEST_CASE("parse_verdict extracts category and justification") {
    Verdict v = parse_verdict("preamble text\n===VERDICT===\ncategory: specification\n"
                              "justification: narrows scope\n===END===\n");
    CHECK(v.status == VerdictStatus::Ok);
    CHECK(v.category == RephraseCategory::Specification);
    CHECK(v.justification == "narrows scope");
}

TEST_CASE("parse_verdict uses the last complete block") {
    Verdict v = parse_verdict(verdict_block("other", "first guess") + "\nwait, actually\n" +
                              verdict_block("generalisation", "broadens the point"));
    CHECK(v.status == VerdictStatus::Ok);
    CHECK(v.category == RephraseCategory::Generalisation);
}

TEST_CASE("parse_verdict normalizes aliases") {
    Verdict v = parse_verdict(verdict_block("Generalising", "broader"));
    CHECK(v.status == VerdictStatus::Ok);
    CHECK(v.category == RephraseCategory::Generalisation);
}

TEST_CASE("parse_verdict failure modes") {
    CHECK(parse_verdict("no block here").status == VerdictStatus::ParseFailure);
    CHECK(parse_verdict("===VERDICT===\ncategory: specification\n").status ==
          VerdictStatus::ParseFailure); // unterminated
    CHECK(parse_verdict(verdict_block("sarcasm", "x")).status == VerdictStatus::ParseFailure);
    CHECK(parse_verdict("===VERDICT===\ncategory: other\ncategory: specification\n"
                        "justification: j\n===END===\n")
              .status == VerdictStatus::ParseFailure);
    CHECK(parse_verdict("===VERDICT===\njustification: j only\n===END===\n").status ==
          VerdictStatus::ParseFailure);
}

TEST_CASE("a trailing unterminated opener does not discard a complete block") {
    Verdict v = parse_verdict(verdict_block("specification", "solid") +
                              "\nthe required format again:\n===VERDICT===\ncategory: <label>\n");
    CHECK(v.status == VerdictStatus::Ok);
    CHECK(v.category == RephraseCategory::Specification);
}

TEST_CASE("parse_verdict tolerates key casing and multi-line justification") {
    Verdict v = parse_verdict("===VERDICT===\nCategory: intensification\n"
                              "Justification: stronger wording\nacross two lines\n===END===\n");
    CHECK(v.status == VerdictStatus::Ok);
    CHECK(v.category == RephraseCategory::Intensification);
    CHECK(v.justification == "stronger wording\nacross two lines");
}

// ---------------------------------------------------------------------------
// run_deliberation
// ---------------------------------------------------------------------------

namespace {

ScriptedBackend::Script mas_script(const std::string& pair_id, const std::string& category,
                                   int rounds = 2) {
    ScriptedBackend::Script script;
    for (const char* role : {"asserting", "arguing", "disagreeing"}) {
        auto& list = script[std::string(role) + ":" + pair_id];
        for (int r = 1; r <= rounds; ++r)
            list.push_back(std::string(role) + " analysis round " + std::to_string(r));
    }
    script["broker_critic:" + pair_id] = {verdict_block(category, "synthesized judgement")};
    return script;
}

} // namespace

TEST_CASE("MAS deliberation with rounds=2 yields 7 turns and an Ok verdict") {
    auto pair = sample_pair();
    ScriptedBackend backend(mas_script(pair.id, "intensification"));
    Transcript t = run_deliberation(pair, ExperimentArm::MasZeroShot, backend, nullptr);

    REQUIRE(t.turns.size() == 7); // 2 rounds * 3 specialists + 1 broker
    CHECK(t.verdict.status == VerdictStatus::Ok);
    CHECK(t.verdict.category == RephraseCategory::Intensification);

    // Specialist order is specialist_order repeated rounds times, broker last.
    const DeliberationPolicy policy;
    for (int r = 0; r < policy.rounds; ++r) {
        for (std::size_t s = 0; s < policy.specialist_order.size(); ++s) {
            const auto& turn = t.turns[r * 3 + s];
            CHECK(turn.role == policy.specialist_order[s]);
            CHECK(turn.round == r + 1);
        }
    }
    CHECK(t.turns.back().role == AgentRole::BrokerCritic);
    CHECK(t.turns.back().round == policy.rounds + 1);
    for (const auto& turn : t.turns) CHECK(turn.retrieved_passage_ids.empty());
}

TEST_CASE("a custom specialist order drives the turn schedule") {
    auto pair = sample_pair();
    DeliberationPolicy policy;
    policy.rounds = 1;
    policy.specialist_order = {AgentRole::Disagreeing, AgentRole::Asserting,
                               AgentRole::Arguing};
    ScriptedBackend backend(mas_script(pair.id, "other", 1));
    Transcript t = run_deliberation(pair, ExperimentArm::MasZeroShot, backend, nullptr, policy);
    REQUIRE(t.turns.size() == 4);
    CHECK(t.turns[0].role == AgentRole::Disagreeing);
    CHECK(t.turns[1].role == AgentRole::Asserting);
    CHECK(t.turns[2].role == AgentRole::Arguing);
    CHECK(t.turns[3].role == AgentRole::BrokerCritic);
}

TEST_CASE("single-agent arm takes exactly one turn") {
    auto pair = sample_pair();
    ScriptedBackend backend(ScriptedBackend::Script{
        {"broker_critic:" + pair.id, {verdict_block("no_rephrase", "not a reformulation")}}});
    Transcript t = run_deliberation(pair, ExperimentArm::SingleZeroShot, backend, nullptr);
    REQUIRE(t.turns.size() == 1);
    CHECK(t.turns[0].role == AgentRole::BrokerCritic);
    CHECK(t.verdict.category == RephraseCategory::NoRephrase);
}

TEST_CASE("garbage broker output consumes the reprompt and records ParseFailure") {
    auto pair = sample_pair();
    ScriptedBackend backend(ScriptedBackend::Script{
        {"broker_critic:" + pair.id, {"no block at all", "still no block"}}});
    Transcript t = run_deliberation(pair, ExperimentArm::SingleZeroShot, backend, nullptr);
    REQUIRE(t.turns.size() == 2); // original + 1 reprompt
    CHECK(t.verdict.status == VerdictStatus::ParseFailure);
}

TEST_CASE("reprompt carries a format reminder and can rescue the verdict") {
    auto pair = sample_pair();
    ScriptedBackend scripted(ScriptedBackend::Script{
        {"broker_critic:" + pair.id,
         {"oops not a block", verdict_block("other", "second try")}}});
    RecordingBackend backend(scripted);
    Transcript t = run_deliberation(pair, ExperimentArm::SingleZeroShot, backend, nullptr);
    CHECK(t.verdict.status == VerdictStatus::Ok);
    REQUIRE(t.turns.size() == 2);
    REQUIRE(backend.requests().size() == 2);
    CHECK(backend.requests()[0].messages[1].content.find("could not be parsed") ==
          std::string::npos);
    CHECK(backend.requests()[1].messages[1].content.find("could not be parsed") !=
          std::string::npos);
    // The failed broker reply is part of the visible history on reprompt.
    CHECK(backend.requests()[1].messages[1].content.find("oops not a block") !=
          std::string::npos);
}

TEST_CASE("informed arms retrieve identical passages on every turn") {
    auto pair = sample_pair();
    auto idx = sample_index();
    ScriptedBackend backend(mas_script(pair.id, "intensification"));
    Transcript t = run_deliberation(pair, ExperimentArm::MasRag, backend, &idx);

    REQUIRE(t.turns.size() == 7);
    REQUIRE(!t.turns[0].retrieved_passage_ids.empty());
    for (const auto& turn : t.turns)
        CHECK(turn.retrieved_passage_ids == t.turns[0].retrieved_passage_ids);
}

TEST_CASE("informed arm without an index is a config error") {
    auto pair = sample_pair();
    ScriptedBackend backend(mas_script(pair.id, "other"));
    CHECK_THROWS_AS(run_deliberation(pair, ExperimentArm::MasRag, backend, nullptr), UserError);
}

TEST_CASE("script exhaustion becomes a BackendFailure verdict") {
    auto pair = sample_pair();
    ScriptedBackend backend(ScriptedBackend::Script{{"asserting:" + pair.id, {"only one"}}});
    Transcript t = run_deliberation(pair, ExperimentArm::MasZeroShot, backend, nullptr);
    CHECK(t.verdict.status == VerdictStatus::BackendFailure);
    CHECK(t.turns.size() == 1); // the turns that happened stay on the record
}

TEST_CASE("scripted deliberations are byte-identical across runs") {
    auto pair = sample_pair();
    auto idx = sample_index();
    auto run_once = [&] {
        ScriptedBackend backend(mas_script(pair.id, "generalisation"));
        return run_deliberation(pair, ExperimentArm::MasRag, backend, &idx);
    };
    Transcript a = run_once();
    Transcript b = run_once();
    REQUIRE(a.turns.size() == b.turns.size());
    for (std::size_t i = 0; i < a.turns.size(); ++i) {
        CHECK(a.turns[i].content == b.turns[i].content);
        CHECK(a.turns[i].round == b.turns[i].round);
        CHECK(a.turns[i].retrieved_passage_ids == b.turns[i].retrieved_passage_ids);
    }
    CHECK(a.verdict.category == b.verdict.category);
}

TEST_CASE("live and scripted backends yield identical transcripts for identical texts") {
    auto pair = sample_pair();
    const auto script = mas_script(pair.id, "specification");

    // Flatten the scripted responses into the order the engine will request
    // them, then serve the same texts through the HTTP backend's wire format.
    std::vector<std::string> responses;
    const DeliberationPolicy policy;
    for (int r = 1; r <= policy.rounds; ++r)
        for (AgentRole role : policy.specialist_order)
            responses.push_back(
                script.at(std::string(agent_role_name(role)) + ":" + pair.id)[r - 1]);
    responses.push_back(script.at("broker_critic:" + pair.id)[0]);

    HttpBackendConfig cfg;
    cfg.base_url = "http://unit.test";
    cfg.model = "test-model";
    std::size_t call = 0;
    HttpChatBackend live(
        cfg,
        [&](const std::string&, const std::string&) -> HttpResult {
            nlohmann::json body = {
                {"choices", {{{"message", {{"role", "assistant"},
                                           {"content", responses.at(call++)}}}}}}};
            return {200, body.dump(), ""};
        },
        [](long) {});
    ScriptedBackend scripted(script);

    Transcript via_live = run_deliberation(pair, ExperimentArm::MasZeroShot, live, nullptr);
    Transcript via_script =
        run_deliberation(pair, ExperimentArm::MasZeroShot, scripted, nullptr);

    REQUIRE(via_live.turns.size() == via_script.turns.size());
    for (std::size_t i = 0; i < via_live.turns.size(); ++i) {
        CHECK(via_live.turns[i].role == via_script.turns[i].role);
        CHECK(via_live.turns[i].round == via_script.turns[i].round);
        CHECK(via_live.turns[i].content == via_script.turns[i].content);
    }
    CHECK(via_live.verdict.category == via_script.verdict.category);
    CHECK(via_live.verdict.status == via_script.verdict.status);
    CHECK(via_live.verdict.justification == via_script.verdict.justification);
}

TEST_CASE("usage totals accumulate over all turns") {
    auto pair = sample_pair();
    ScriptedBackend backend(mas_script(pair.id, "other"));
    UsageTotals usage;
    run_deliberation(pair, ExperimentArm::MasZeroShot, backend, nullptr, {}, {},
                     PromptLibrary::defaults(), &usage);
    CHECK(usage.input_tokens > 0);
    CHECK(usage.output_tokens > 0);
}
