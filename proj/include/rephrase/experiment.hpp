#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rephrase/agents.hpp"
#include "rephrase/core_types.hpp"
#include "rephrase/dataset.hpp"
#include "rephrase/knowledge_base.hpp"
#include "rephrase/model_backend.hpp"

namespace rephrase {

struct RunRecord {
    std::string pair_id;
    ExperimentArm arm = ExperimentArm::SingleZeroShot;
    Verdict verdict;
    Transcript transcript;
    long started_at = 0;  // Unix epoch milliseconds
    long finished_at = 0; // >= started_at
    long input_tokens = 0;
    long output_tokens = 0;
    int attempt = 1;
};

// JSONL bodies with fixed field names; dump() output is byte-stable for
// identical records.
std::string serialize_run_record(const RunRecord& record);
RunRecord parse_run_record(const std::string& line);

class CorruptResultsFileError : public UserError {
public:
    CorruptResultsFileError(const std::filesystem::path& path, std::size_t line,
                            const std::string& why);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct RunConfig {
    std::vector<ExperimentArm> arms;
    std::string dataset_path;
    std::string index_path; // required for informed arms
    std::string output_dir = ".";
    std::string model;
    double temperature = 0.2;
    int workers = 4;
    int max_output_tokens = 1024;
    DeliberationPolicy policy;
    std::string backend_spec = "live"; // "live" or "scripted:<file>"
    std::string prompts_dir;           // optional

    void validate() const; // fatal config errors, checked before any model call
};

// Sectioned key=value config file; every key is overridable by the CLI flag
// of the same name. Returns the flat key -> value map.
std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path);
void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

struct ArmRunStats {
    std::size_t ok = 0;
    std::size_t parse_failure = 0;
    std::size_t backend_failure = 0;
    std::size_t skipped = 0; // resumed pairs not re-run
    std::filesystem::path results_path;
};

using ProgressFn = std::function<void(const std::string& pair_id, const Verdict& verdict,
                                      std::size_t done, std::size_t total)>;

// Runs one arm over the dataset with a pool of cfg.workers workers. One
// RunRecord per pair is written to {output_dir}/{arm}.jsonl in ascending
// pair_id order regardless of completion order. Pairs are processed in
// complete isolation; per-pair failures become BackendFailure records, never
// omissions. Any existing results file is replaced.
ArmRunStats run_arm(const RunConfig& cfg, ExperimentArm arm, const Dataset& dataset,
                    ChatBackend& backend, const KnowledgeIndex* idx,
                    const ProgressFn& progress = nullptr);

// Like run_arm but honors a partial {arm}.jsonl: pairs with Ok or
// ParseFailure records are kept and skipped; BackendFailure pairs are re-run
// with attempt incremented. The rewritten file again holds exactly one
// id-ordered record per pair.
ArmRunStats resume_arm(const RunConfig& cfg, ExperimentArm arm, const Dataset& dataset,
                       ChatBackend& backend, const KnowledgeIndex* idx,
                       const ProgressFn& progress = nullptr);

// Loads an {arm}.jsonl results file, validating every line.
std::vector<RunRecord> load_run_records(const std::filesystem::path& path);

} // namespace rephrase
