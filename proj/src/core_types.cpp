#include "rephrase/core_types.hpp"

#include <unordered_map>

namespace rephrase {

namespace {

// Lowercase and drop hyphens, spaces, and underscores so the spelling
// variants found in real annotation files ("De-intensification",
// "No_rephrase", "no rephrase") collapse to one key.
std::string normalize_label(std::string_view label) {
    std::string out;
    out.reserve(label.size());
    for (char ch : label) {
        if (ch == '-' || ch == ' ' || ch == '_' || ch == '\t') continue;
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
        out.push_back(ch);
    }
    return out;
}

const std::unordered_map<std::string, RephraseCategory>& label_table() {
    // Canonical names plus the fixed alias table. No fuzzy matching.
    static const std::unordered_map<std::string, RephraseCategory> table = {
        {"deintensification", RephraseCategory::Deintensification},
        {"intensification", RephraseCategory::Intensification},
        {"specification", RephraseCategory::Specification},
        {"generalisation", RephraseCategory::Generalisation},
        {"other", RephraseCategory::Other},
        {"norephrase", RephraseCategory::NoRephrase},
        // Aliases.
        {"deintensifying", RephraseCategory::Deintensification},
        {"intensifying", RephraseCategory::Intensification},
        {"generalising", RephraseCategory::Generalisation},
        {"notarephrase", RephraseCategory::NoRephrase},
    };
    return table;
}

} // namespace

const std::array<RephraseCategory, kCategoryCount>& canonical_order() {
    static const std::array<RephraseCategory, kCategoryCount> order = {
        RephraseCategory::Deintensification, RephraseCategory::Intensification,
        RephraseCategory::Specification,     RephraseCategory::Generalisation,
        RephraseCategory::Other,             RephraseCategory::NoRephrase,
    };
    return order;
}

std::string_view category_name(RephraseCategory c) {
    switch (c) {
    case RephraseCategory::Deintensification: return "deintensification";
    case RephraseCategory::Intensification: return "intensification";
    case RephraseCategory::Specification: return "specification";
    case RephraseCategory::Generalisation: return "generalisation";
    case RephraseCategory::Other: return "other";
    case RephraseCategory::NoRephrase: return "no_rephrase";
    }
    return "other";
}

std::size_t category_index(RephraseCategory c) {
    return static_cast<std::size_t>(c);
}

UnknownLabelError::UnknownLabelError(std::string label)
    : UserError("unknown rephrase category label: '" + label + "'"),
      label_(std::move(label)) {}

RephraseCategory parse_category(std::string_view label) {
    const auto& table = label_table();
    auto it = table.find(normalize_label(label));
    if (it == table.end()) throw UnknownLabelError(std::string(label));
    return it->second;
}

std::string_view agent_role_name(AgentRole role) {
    switch (role) {
    case AgentRole::Asserting: return "asserting";
    case AgentRole::Arguing: return "arguing";
    case AgentRole::Disagreeing: return "disagreeing";
    case AgentRole::BrokerCritic: return "broker_critic";
    }
    return "broker_critic";
}

AgentRole parse_agent_role(std::string_view name) {
    if (name == "asserting") return AgentRole::Asserting;
    if (name == "arguing") return AgentRole::Arguing;
    if (name == "disagreeing") return AgentRole::Disagreeing;
    if (name == "broker_critic") return AgentRole::BrokerCritic;
    throw UserError("unknown agent role: '" + std::string(name) + "'");
}

std::string_view verdict_status_name(VerdictStatus s) {
    switch (s) {
    case VerdictStatus::Ok: return "ok";
    case VerdictStatus::ParseFailure: return "parse_failure";
    case VerdictStatus::BackendFailure: return "backend_failure";
    }
    return "ok";
}

VerdictStatus parse_verdict_status(std::string_view name) {
    if (name == "ok") return VerdictStatus::Ok;
    if (name == "parse_failure") return VerdictStatus::ParseFailure;
    if (name == "backend_failure") return VerdictStatus::BackendFailure;
    throw UserError("unknown verdict status: '" + std::string(name) + "'");
}

std::string_view arm_name(ExperimentArm arm) {
    switch (arm) {
    case ExperimentArm::SingleZeroShot: return "single_zero";
    case ExperimentArm::SingleRag: return "single_rag";
    case ExperimentArm::MasZeroShot: return "mas_zero";
    case ExperimentArm::MasRag: return "mas_rag";
    }
    return "single_zero";
}

ExperimentArm parse_arm(std::string_view name) {
    if (name == "single_zero") return ExperimentArm::SingleZeroShot;
    if (name == "single_rag") return ExperimentArm::SingleRag;
    if (name == "mas_zero") return ExperimentArm::MasZeroShot;
    if (name == "mas_rag") return ExperimentArm::MasRag;
    throw UserError("unknown experiment arm: '" + std::string(name) + "'");
}

const std::array<ExperimentArm, kArmCount>& all_arms() {
    static const std::array<ExperimentArm, kArmCount> arms = {
        ExperimentArm::SingleZeroShot,
        ExperimentArm::SingleRag,
        ExperimentArm::MasZeroShot,
        ExperimentArm::MasRag,
    };
    return arms;
}

bool arm_is_informed(ExperimentArm arm) {
    return arm == ExperimentArm::SingleRag || arm == ExperimentArm::MasRag;
}

bool arm_is_multi_agent(ExperimentArm arm) {
    return arm == ExperimentArm::MasZeroShot || arm == ExperimentArm::MasRag;
}

} // namespace rephrase
