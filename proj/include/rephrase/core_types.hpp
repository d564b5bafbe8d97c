#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rephrase/errors.hpp"

namespace rephrase {

// ---------------------------------------------------------------------------
// Label space
// ---------------------------------------------------------------------------

enum class RephraseCategory {
    Deintensification,
    Intensification,
    Specification,
    Generalisation,
    Other,
    NoRephrase,
};

inline constexpr std::size_t kCategoryCount = 6;

// The six categories in the fixed order used for every matrix axis and report
// row. Stable across runs.
const std::array<RephraseCategory, kCategoryCount>& canonical_order();

// Canonical serialized name ("deintensification", ..., "no_rephrase").
std::string_view category_name(RephraseCategory c);

// Position of c within canonical_order().
std::size_t category_index(RephraseCategory c);

class UnknownLabelError : public UserError {
public:
    explicit UnknownLabelError(std::string label);
    const std::string& label() const { return label_; }

private:
    std::string label_;
};

// Maps a label to its category. Matching is case-insensitive and ignores
// hyphens, spaces, and underscores; accepted forms are the canonical names
// plus a fixed alias table ("Deintensifying", "Intensifying", "Generalising",
// "No_rephrase", "Not a Rephrase"). Anything else throws UnknownLabelError.
RephraseCategory parse_category(std::string_view label);

// ---------------------------------------------------------------------------
// Rephrase pair
// ---------------------------------------------------------------------------

struct RephrasePair {
    std::string id;
    std::string input_text;        // rephrasandum
    std::string output_text;       // rephrasans
    std::string input_illocution;  // may be empty
    std::string output_illocution; // may be empty
    std::optional<RephraseCategory> gold;
};

// ---------------------------------------------------------------------------
// Agent roles and deliberation records
// ---------------------------------------------------------------------------

enum class AgentRole {
    Asserting,
    Arguing,
    Disagreeing,
    BrokerCritic,
};

std::string_view agent_role_name(AgentRole role);
AgentRole parse_agent_role(std::string_view name);

enum class VerdictStatus { Ok, ParseFailure, BackendFailure };

std::string_view verdict_status_name(VerdictStatus s);
VerdictStatus parse_verdict_status(std::string_view name);

struct Verdict {
    RephraseCategory category = RephraseCategory::Other;
    std::string justification;
    VerdictStatus status = VerdictStatus::Ok;
};

struct Turn {
    AgentRole role = AgentRole::BrokerCritic;
    int round = 1;
    std::string content;
    std::vector<std::string> retrieved_passage_ids; // empty in zero-shot arms
};

// ---------------------------------------------------------------------------
// Experiment arms
// ---------------------------------------------------------------------------

enum class ExperimentArm {
    SingleZeroShot,
    SingleRag,
    MasZeroShot,
    MasRag,
};

inline constexpr std::size_t kArmCount = 4;

// Serialized arm names: "single_zero", "single_rag", "mas_zero", "mas_rag".
std::string_view arm_name(ExperimentArm arm);
ExperimentArm parse_arm(std::string_view name);

// The fixed order used by "--arm all".
const std::array<ExperimentArm, kArmCount>& all_arms();

bool arm_is_informed(ExperimentArm arm);
bool arm_is_multi_agent(ExperimentArm arm);

struct Transcript {
    std::string pair_id;
    ExperimentArm arm = ExperimentArm::SingleZeroShot;
    std::vector<Turn> turns; // ordered by emission; broker turn(s) last
    Verdict verdict;
};

} // namespace rephrase
