#include "rephrase/agents.hpp"

#include <fstream>
#include <sstream>

namespace rephrase {

namespace {

constexpr std::string_view kVerdictBegin = "===VERDICT===";
constexpr std::string_view kVerdictEnd = "===END===";

const std::map<AgentRole, std::string>& default_templates() {
    static const std::map<AgentRole, std::string> templates = [] {
        const std::string shared_footer =
            "{definitions}\n"
            "\n"
            "If a theoretical knowledge section is provided, ground your analysis in it "
            "and cite passage ids in square brackets.\n";
        std::map<AgentRole, std::string> t;
        t[AgentRole::Asserting] =
            "You are the asserting agent in a panel analysing how one statement rephrases "
            "another. State the observable linguistic and semantic facts: what the output "
            "text keeps, drops, adds, sharpens, or softens relative to the input text. "
            "Quote the relevant wording of both spans and of their illocutions.\n\n" +
            shared_footer;
        t[AgentRole::Arguing] =
            "You are the arguing agent in a panel analysing how one statement rephrases "
            "another. Build the strongest explicit case for one specific category from the "
            "list below, reasoning step by step from the definitions and from the evidence "
            "raised so far in the conversation.\n\n" +
            shared_footer;
        t[AgentRole::Disagreeing] =
            "You are the disagreeing agent in a panel analysing how one statement rephrases "
            "another. Critically examine the analysis so far: surface overlooked readings, "
            "weaknesses in the proposed category, and plausible alternatives, including the "
            "possibility that the pair is not a rephrase at all.\n\n" +
            shared_footer;
        t[AgentRole::BrokerCritic] =
            "You are the broker critic: you moderate the panel and make the final call. "
            "Weigh the contributions in the conversation, resolve disagreements, and commit "
            "to exactly one category.\n\n" +
            shared_footer +
            "\n"
            "End your reply with exactly one block of this form:\n"
            "===VERDICT===\n"
            "category: <one of: deintensification, intensification, specification, "
            "generalisation, other, no_rephrase>\n"
            "justification: <one concise paragraph>\n"
            "===END===\n";
        return t;
    }();
    return templates;
}

std::string replace_all(std::string text, std::string_view token, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
    return text;
}

std::string render_history(const std::vector<Turn>& history) {
    std::string out = "Conversation so far:\n";
    if (history.empty()) {
        out += "(no prior turns)\n";
        return out;
    }
    for (const auto& turn : history) {
        out += "[round " + std::to_string(turn.round) + "] " +
               std::string(agent_role_name(turn.role)) + ": " + turn.content + "\n";
    }
    return out;
}

std::string render_user_message(const RephrasePair& pair, const std::vector<Turn>& history,
                                const std::string& knowledge_section, bool format_reminder) {
    auto or_none = [](const std::string& s) { return s.empty() ? std::string("(none)") : s; };
    std::string out;
    out += "Classify the rephrase pair below.\n\n";
    out += "Pair id: " + pair.id + "\n";
    out += "Input text: " + pair.input_text + "\n";
    out += "Input illocution: " + or_none(pair.input_illocution) + "\n";
    out += "Output text: " + pair.output_text + "\n";
    out += "Output illocution: " + or_none(pair.output_illocution) + "\n";
    out += "\n";
    out += render_history(history);
    if (format_reminder) {
        out += "\nYour previous reply could not be parsed. Reply again and end with exactly "
               "one block of this form:\n";
        out += std::string(kVerdictBegin) + "\n";
        out += "category: <label>\n";
        out += "justification: <text>\n";
        out += std::string(kVerdictEnd) + "\n";
    }
    out += knowledge_section;
    return out;
}

std::vector<ChatMessage> build_prompt_impl(AgentRole role, const RephrasePair& pair,
                                           const std::vector<Turn>& history,
                                           const std::vector<RetrievalResult>& passages,
                                           const PromptLibrary& prompts, bool format_reminder) {
    const std::string knowledge = knowledge_section_text(passages);
    std::string system = prompts.role_template(role);
    const bool system_has_slot = system.find("{knowledge}") != std::string::npos;
    system = replace_all(std::move(system), "{definitions}", category_definitions_text());
    system = replace_all(std::move(system), "{knowledge}", knowledge);

    std::string user = render_user_message(pair, history, system_has_slot ? "" : knowledge,
                                           format_reminder);
    return {{ChatRole::System, std::move(system)}, {ChatRole::User, std::move(user)}};
}

std::string strip(std::string_view s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(begin, end - begin + 1));
}

bool has_key_prefix(const std::string& line, std::string_view key, std::string& value) {
    // Keys are matched case-insensitively after leading whitespace.
    std::size_t pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos) return false;
    if (line.size() - pos < key.size() + 1) return false;
    for (std::size_t i = 0; i < key.size(); ++i) {
        char a = line[pos + i];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
        if (a != key[i]) return false;
    }
    if (line[pos + key.size()] != ':') return false;
    value = strip(line.substr(pos + key.size() + 1));
    return true;
}

Verdict parse_failure(const std::string& reason) {
    Verdict v;
    v.category = RephraseCategory::Other; // placeholder, excluded from scoring
    v.justification = reason;
    v.status = VerdictStatus::ParseFailure;
    return v;
}

} // namespace

std::string category_definitions_text() {
    // Definitions quoted verbatim in every role prompt.
    return "Category definitions:\n"
           "- deintensification (De-intensification): Weakens a point\n"
           "- intensification (Intensification): Strengthens a point by reinforcing qualities\n"
           "- specification (Specification): Adds detail or narrows scope\n"
           "- generalisation (Generalisation): Broadens or abstracts the original point\n"
           "- other (Other): Rephrase types not covered\n"
           "- no_rephrase (Not a Rephrase): Pairs that do not constitute reformulation "
           "(e.g., inferences)\n";
}

std::string knowledge_section_text(const std::vector<RetrievalResult>& passages) {
    if (passages.empty()) return "";
    std::string out;
    out += std::string(kKnowledgeSectionBegin) + "\n";
    for (const auto& p : passages) out += "[" + p.chunk_id + "] " + p.text + "\n";
    out += std::string(kKnowledgeSectionEnd) + "\n";
    return out;
}

const PromptLibrary& PromptLibrary::defaults() {
    static const PromptLibrary lib = [] {
        PromptLibrary l;
        l.templates_ = default_templates();
        return l;
    }();
    return lib;
}

PromptLibrary PromptLibrary::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw UserError("prompts path is not a directory: " + dir.string());
    PromptLibrary lib = defaults();
    for (AgentRole role : {AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing,
                           AgentRole::BrokerCritic}) {
        const auto file = dir / (std::string(agent_role_name(role)) + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        lib.templates_[role] = buf.str();
    }
    return lib;
}

const std::string& PromptLibrary::role_template(AgentRole role) const {
    return templates_.at(role);
}

std::vector<AgentSpec> agents_for_arm(ExperimentArm arm, const PromptLibrary& prompts) {
    const bool informed = arm_is_informed(arm);
    std::vector<AgentSpec> specs;
    if (arm_is_multi_agent(arm)) {
        for (AgentRole role : {AgentRole::Asserting, AgentRole::Arguing, AgentRole::Disagreeing})
            specs.push_back({role, prompts.role_template(role), informed});
    }
    specs.push_back({AgentRole::BrokerCritic, prompts.role_template(AgentRole::BrokerCritic),
                     informed});
    return specs;
}

std::vector<ChatMessage> build_prompt(AgentRole role, const RephrasePair& pair,
                                      const std::vector<Turn>& history,
                                      const std::vector<RetrievalResult>& passages,
                                      const PromptLibrary& prompts) {
    return build_prompt_impl(role, pair, history, passages, prompts, false);
}

std::vector<RetrievalResult> retrieve_for_pair(const KnowledgeIndex& idx,
                                               const RephrasePair& pair, std::size_t k) {
    const std::string query = pair.input_text + " " + pair.output_text + " " +
                              pair.input_illocution + " " + pair.output_illocution;
    return idx.retrieve(query, k);
}

Verdict parse_verdict(const std::string& text) {
    std::vector<std::string> lines;
    {
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
    }

    // Locate the last complete fenced block; unterminated trailing openers
    // (a model echoing the instructions) do not discard an earlier block.
    std::ptrdiff_t open = -1, begin = -1, end = -1;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string trimmed = strip(lines[i]);
        if (trimmed == kVerdictBegin) {
            open = static_cast<std::ptrdiff_t>(i);
        } else if (trimmed == kVerdictEnd && open >= 0) {
            begin = open;
            end = static_cast<std::ptrdiff_t>(i);
            open = -1;
        }
    }
    if (begin < 0 || end < 0) return parse_failure("no verdict block found");

    std::string label;
    std::string justification;
    bool have_category = false;
    bool in_justification = false;
    for (std::ptrdiff_t i = begin + 1; i < end; ++i) {
        std::string value;
        if (has_key_prefix(lines[i], "category", value)) {
            if (have_category) return parse_failure("multiple category lines in verdict block");
            label = value;
            have_category = true;
            in_justification = false;
        } else if (has_key_prefix(lines[i], "justification", value)) {
            justification = value;
            in_justification = true;
        } else if (in_justification) {
            justification += "\n" + lines[i];
        }
    }
    if (!have_category) return parse_failure("verdict block lacks a category line");

    Verdict v;
    try {
        v.category = parse_category(label);
    } catch (const UnknownLabelError&) {
        return parse_failure("unknown category label '" + label + "'");
    }
    v.justification = strip(justification);
    v.status = VerdictStatus::Ok;
    return v;
}

Transcript run_deliberation(const RephrasePair& pair, ExperimentArm arm, ChatBackend& backend,
                            const KnowledgeIndex* idx, const DeliberationPolicy& policy,
                            const CompletionSettings& settings, const PromptLibrary& prompts,
                            UsageTotals* usage) {
    const bool informed = arm_is_informed(arm);
    if (informed && idx == nullptr)
        throw UserError("informed arm '" + std::string(arm_name(arm)) +
                        "' requires a knowledge index");

    Transcript t;
    t.pair_id = pair.id;
    t.arm = arm;

    // Retrieval is pair-derived and repeated per turn, so every informed turn
    // sees identical passages.
    auto fetch_passages = [&]() -> std::vector<RetrievalResult> {
        if (!informed) return {};
        return retrieve_for_pair(*idx, pair, policy.top_k);
    };
    auto passage_ids = [](const std::vector<RetrievalResult>& passages) {
        std::vector<std::string> ids;
        ids.reserve(passages.size());
        for (const auto& p : passages) ids.push_back(p.chunk_id);
        return ids;
    };
    auto call = [&](AgentRole role, const std::vector<ChatMessage>& messages) {
        CompletionRequest req;
        req.messages = messages;
        req.temperature = settings.temperature;
        req.max_output_tokens = settings.max_output_tokens;
        req.tag = std::string(agent_role_name(role)) + ":" + pair.id;
        CompletionResponse resp = backend.complete(req);
        if (usage) {
            usage->input_tokens += resp.input_tokens;
            usage->output_tokens += resp.output_tokens;
        }
        return resp;
    };

    const bool mas = arm_is_multi_agent(arm);
    try {
        if (mas) {
            for (int round = 1; round <= policy.rounds; ++round) {
                for (AgentRole role : policy.specialist_order) {
                    auto passages = fetch_passages();
                    auto messages = build_prompt_impl(role, pair, t.turns, passages, prompts, false);
                    auto resp = call(role, messages);
                    t.turns.push_back({role, round, resp.content, passage_ids(passages)});
                }
            }
        }

        const int broker_round_base = mas ? policy.rounds : 0;
        for (int attempt = 0; attempt <= policy.verdict_reprompts; ++attempt) {
            auto passages = fetch_passages();
            auto messages = build_prompt_impl(AgentRole::BrokerCritic, pair, t.turns, passages,
                                              prompts, attempt > 0);
            auto resp = call(AgentRole::BrokerCritic, messages);
            t.turns.push_back({AgentRole::BrokerCritic, broker_round_base + attempt + 1,
                               resp.content, passage_ids(passages)});
            Verdict v = parse_verdict(resp.content);
            if (v.status == VerdictStatus::Ok) {
                t.verdict = std::move(v);
                return t;
            }
            t.verdict = std::move(v); // keep the last parse failure
        }
    } catch (const ScriptExhaustedError& e) {
        t.verdict = {RephraseCategory::Other, e.what(), VerdictStatus::BackendFailure};
    } catch (const BackendFailureError& e) {
        t.verdict = {RephraseCategory::Other, e.what(), VerdictStatus::BackendFailure};
    } catch (const AuthFailureError& e) {
        t.verdict = {RephraseCategory::Other, e.what(), VerdictStatus::BackendFailure};
    } catch (const MalformedResponseError& e) {
        t.verdict = {RephraseCategory::Other, e.what(), VerdictStatus::BackendFailure};
    }
    return t;
}

} // namespace rephrase
