#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rephrase/core_types.hpp"
#include "rephrase/knowledge_base.hpp"
#include "rephrase/model_backend.hpp"

namespace rephrase {

struct AgentSpec {
    AgentRole role = AgentRole::BrokerCritic;
    std::string system_prompt;
    bool rag_enabled = false; // per arm, shared by all specialists
};

struct DeliberationPolicy {
    int rounds = 2;
    std::array<AgentRole, 3> specialist_order = {
        AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing};
    int verdict_reprompts = 1;
    std::size_t top_k = 5;
};

struct CompletionSettings {
    double temperature = 0.2;
    int max_output_tokens = 1024;
};

// The six category definitions injected into every system prompt.
std::string category_definitions_text();

// Delimiter lines around retrieved passages in rendered prompts. Zero-shot
// prompts never contain them.
inline constexpr std::string_view kKnowledgeSectionBegin = "=== Theoretical knowledge ===";
inline constexpr std::string_view kKnowledgeSectionEnd = "=== End theoretical knowledge ===";

// Renders the delimited passage block, or "" when passages is empty.
std::string knowledge_section_text(const std::vector<RetrievalResult>& passages);

// Role system-prompt templates. "{definitions}" expands to the category
// definitions; an optional "{knowledge}" slot positions the passage section
// inside the system prompt (templates without it get the section appended to
// the user message instead, which is what the shipped defaults do).
class PromptLibrary {
public:
    static const PromptLibrary& defaults();
    // One text file per role: asserting.txt, arguing.txt, disagreeing.txt,
    // broker_critic.txt. Missing files fall back to the defaults.
    static PromptLibrary load_dir(const std::filesystem::path& dir);

    const std::string& role_template(AgentRole role) const;

private:
    std::map<AgentRole, std::string> templates_;
};

// The agents participating in an arm, broker last. All specialists share one
// rag_enabled flag; the broker sees the same passages as the specialists.
std::vector<AgentSpec> agents_for_arm(ExperimentArm arm,
                                      const PromptLibrary& prompts = PromptLibrary::defaults());

// Builds the [system, user] message pair for one turn. The informed and
// zero-shot renderings are byte-identical except for the delimited knowledge
// section (empty passages render nothing, not even delimiters).
std::vector<ChatMessage> build_prompt(AgentRole role, const RephrasePair& pair,
                                      const std::vector<Turn>& history,
                                      const std::vector<RetrievalResult>& passages,
                                      const PromptLibrary& prompts = PromptLibrary::defaults());

// Pair-derived retrieval query: input text, output text, and both
// illocutions concatenated. Deterministic for a fixed index.
std::vector<RetrievalResult> retrieve_for_pair(const KnowledgeIndex& idx,
                                               const RephrasePair& pair, std::size_t k);

// Extracts the last block fenced by "===VERDICT===" / "===END===" lines with
// "category:" and "justification:" entries. Returns status ParseFailure (with
// the reason in the justification) when no block, multiple category lines, or
// an unknown label is found.
Verdict parse_verdict(const std::string& text);

struct UsageTotals {
    long input_tokens = 0;
    long output_tokens = 0;
};

// Runs one broker-moderated deliberation. MAS arms: each specialist takes one
// turn per round in specialist_order, then the broker synthesizes and emits
// the verdict block; single arms use the broker alone. A failed verdict parse
// re-prompts the broker (with a format reminder) up to verdict_reprompts
// times. Backend failures become Verdict{BackendFailure} on the transcript;
// the deliberation never throws for per-pair backend trouble.
Transcript run_deliberation(const RephrasePair& pair, ExperimentArm arm, ChatBackend& backend,
                            const KnowledgeIndex* idx, const DeliberationPolicy& policy = {},
                            const CompletionSettings& settings = {},
                            const PromptLibrary& prompts = PromptLibrary::defaults(),
                            UsageTotals* usage = nullptr);

} // namespace rephrase
