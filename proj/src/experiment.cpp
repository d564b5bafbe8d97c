#include "rephrase/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace rephrase {

namespace {

using nlohmann::json;

long wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

json turn_to_json(const Turn& t) {
    return {{"role", std::string(agent_role_name(t.role))},
            {"round", t.round},
            {"content", t.content},
            {"retrieved_passage_ids", t.retrieved_passage_ids}};
}

Turn turn_from_json(const json& obj) {
    Turn t;
    t.role = parse_agent_role(obj.at("role").get<std::string>());
    t.round = obj.at("round").get<int>();
    t.content = obj.at("content").get<std::string>();
    t.retrieved_passage_ids = obj.at("retrieved_passage_ids").get<std::vector<std::string>>();
    return t;
}

json verdict_to_json(const Verdict& v) {
    return {{"category", std::string(category_name(v.category))},
            {"justification", v.justification},
            {"status", std::string(verdict_status_name(v.status))}};
}

Verdict verdict_from_json(const json& obj) {
    Verdict v;
    v.category = parse_category(obj.at("category").get<std::string>());
    v.justification = obj.at("justification").get<std::string>();
    v.status = parse_verdict_status(obj.at("status").get<std::string>());
    return v;
}

json transcript_to_json(const Transcript& t) {
    json turns = json::array();
    for (const auto& turn : t.turns) turns.push_back(turn_to_json(turn));
    return {{"pair_id", t.pair_id},
            {"arm", std::string(arm_name(t.arm))},
            {"turns", std::move(turns)},
            {"verdict", verdict_to_json(t.verdict)}};
}

Transcript transcript_from_json(const json& obj) {
    Transcript t;
    t.pair_id = obj.at("pair_id").get<std::string>();
    t.arm = parse_arm(obj.at("arm").get<std::string>());
    for (const auto& turn : obj.at("turns")) t.turns.push_back(turn_from_json(turn));
    t.verdict = verdict_from_json(obj.at("verdict"));
    return t;
}

void write_records_sorted(const std::filesystem::path& path, std::vector<RunRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.pair_id < b.pair_id; });
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write results file: " + path.string());
        for (const auto& rec : records) out << serialize_run_record(rec) << '\n';
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

struct ExecutionPlan {
    std::vector<const RephrasePair*> to_run;
    std::vector<int> attempts;          // attempt number per to_run entry
    std::vector<RunRecord> kept;        // records carried over from a prior file
    std::size_t skipped = 0;
};

ArmRunStats execute_plan(const RunConfig& cfg, ExperimentArm arm, ChatBackend& backend,
                         const KnowledgeIndex* idx, const ProgressFn& progress,
                         ExecutionPlan plan, const std::filesystem::path& results_path) {
    const PromptLibrary prompts = cfg.prompts_dir.empty()
                                      ? PromptLibrary::defaults()
                                      : PromptLibrary::load_dir(cfg.prompts_dir);
    const CompletionSettings settings{cfg.temperature, cfg.max_output_tokens};

    const std::size_t n = plan.to_run.size();
    std::vector<std::optional<RunRecord>> slots(n);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mu;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            const RephrasePair& pair = *plan.to_run[i];

            RunRecord rec;
            rec.pair_id = pair.id;
            rec.arm = arm;
            rec.attempt = plan.attempts[i];
            rec.started_at = wall_clock_ms();
            UsageTotals usage;
            rec.transcript =
                run_deliberation(pair, arm, backend, idx, cfg.policy, settings, prompts, &usage);
            rec.verdict = rec.transcript.verdict;
            rec.finished_at = wall_clock_ms();
            rec.input_tokens = usage.input_tokens;
            rec.output_tokens = usage.output_tokens;
            slots[i] = std::move(rec);

            const std::size_t finished = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard<std::mutex> lock(progress_mu);
                progress(pair.id, slots[i]->verdict, finished, n);
            }
        }
    };

    const std::size_t pool = std::max<std::size_t>(
        1, std::min<std::size_t>(static_cast<std::size_t>(std::max(cfg.workers, 1)), n ? n : 1));
    std::vector<std::thread> threads;
    threads.reserve(pool);
    for (std::size_t i = 0; i < pool; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    std::vector<RunRecord> records = std::move(plan.kept);
    for (auto& slot : slots) records.push_back(std::move(*slot));

    ArmRunStats stats;
    stats.skipped = plan.skipped;
    stats.results_path = results_path;
    for (const auto& rec : records) {
        switch (rec.verdict.status) {
        case VerdictStatus::Ok: ++stats.ok; break;
        case VerdictStatus::ParseFailure: ++stats.parse_failure; break;
        case VerdictStatus::BackendFailure: ++stats.backend_failure; break;
        }
    }
    write_records_sorted(results_path, std::move(records));
    return stats;
}

std::filesystem::path arm_results_path(const RunConfig& cfg, ExperimentArm arm) {
    return std::filesystem::path(cfg.output_dir) / (std::string(arm_name(arm)) + ".jsonl");
}

} // namespace

std::string serialize_run_record(const RunRecord& record) {
    json obj = {
        {"pair_id", record.pair_id},
        {"arm", std::string(arm_name(record.arm))},
        {"verdict", verdict_to_json(record.verdict)},
        {"transcript", transcript_to_json(record.transcript)},
        {"started_at", record.started_at},
        {"finished_at", record.finished_at},
        {"input_tokens", record.input_tokens},
        {"output_tokens", record.output_tokens},
        {"attempt", record.attempt},
    };
    return obj.dump();
}

RunRecord parse_run_record(const std::string& line) {
    const json obj = json::parse(line);
    RunRecord rec;
    rec.pair_id = obj.at("pair_id").get<std::string>();
    rec.arm = parse_arm(obj.at("arm").get<std::string>());
    rec.verdict = verdict_from_json(obj.at("verdict"));
    rec.transcript = transcript_from_json(obj.at("transcript"));
    rec.started_at = obj.at("started_at").get<long>();
    rec.finished_at = obj.at("finished_at").get<long>();
    rec.input_tokens = obj.at("input_tokens").get<long>();
    rec.output_tokens = obj.at("output_tokens").get<long>();
    rec.attempt = obj.at("attempt").get<int>();
    return rec;
}

CorruptResultsFileError::CorruptResultsFileError(const std::filesystem::path& path,
                                                 std::size_t line, const std::string& why)
    : UserError("corrupt results file " + path.string() + " at line " + std::to_string(line) +
                ": " + why),
      line_(line) {}

std::vector<RunRecord> load_run_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open results file: " + path.string());
    std::vector<RunRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            records.push_back(parse_run_record(line));
        } catch (const std::exception& e) {
            throw CorruptResultsFileError(path, line_no, e.what());
        }
    }
    return records;
}

void RunConfig::validate() const {
    if (arms.empty()) throw UserError("no experiment arms configured");
    if (dataset_path.empty()) throw UserError("dataset path is required");
    if (workers < 1) throw UserError("workers must be >= 1");
    if (policy.rounds < 1) throw UserError("policy rounds must be >= 1");
    const std::set<AgentRole> specialists(policy.specialist_order.begin(),
                                          policy.specialist_order.end());
    if (specialists.size() != policy.specialist_order.size() ||
        specialists.count(AgentRole::BrokerCritic))
        throw UserError("specialist_order must be a permutation of the three specialist roles");
    if (policy.verdict_reprompts < 0) throw UserError("verdict_reprompts must be >= 0");
    if (policy.top_k < 1) throw UserError("top_k must be >= 1");
    if (temperature < 0.0) throw UserError("temperature must be >= 0");
    for (ExperimentArm arm : arms) {
        if (arm_is_informed(arm) && index_path.empty())
            throw UserError("informed arm '" + std::string(arm_name(arm)) +
                            "' requires an index path");
    }
}

std::map<std::string, std::string> parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open config file: " + path.string());
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    auto trim = [](const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos) return std::string();
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    };
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') continue; // section headers group keys only
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UserError("config " + path.string() + " line " + std::to_string(line_no) +
                            ": expected key = value");
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw UserError("config " + path.string() + " line " + std::to_string(line_no) +
                            ": empty key");
        values[key] = value;
    }
    return values;
}

void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto to_int = [&](const std::string& v) {
        try {
            return std::stoi(v);
        } catch (const std::exception&) {
            throw UserError("config key '" + key + "': not an integer: '" + v + "'");
        }
    };
    auto to_double = [&](const std::string& v) {
        try {
            return std::stod(v);
        } catch (const std::exception&) {
            throw UserError("config key '" + key + "': not a number: '" + v + "'");
        }
    };
    if (key == "arm") {
        cfg.arms.clear();
        if (value == "all") {
            cfg.arms.assign(all_arms().begin(), all_arms().end());
        } else {
            cfg.arms.push_back(parse_arm(value));
        }
    } else if (key == "dataset") cfg.dataset_path = value;
    else if (key == "index") cfg.index_path = value;
    else if (key == "out") cfg.output_dir = value;
    else if (key == "model") cfg.model = value;
    else if (key == "temperature") cfg.temperature = to_double(value);
    else if (key == "workers") cfg.workers = to_int(value);
    else if (key == "max_output_tokens") cfg.max_output_tokens = to_int(value);
    else if (key == "backend") cfg.backend_spec = value;
    else if (key == "prompts") cfg.prompts_dir = value;
    else if (key == "rounds") cfg.policy.rounds = to_int(value);
    else if (key == "verdict_reprompts") cfg.policy.verdict_reprompts = to_int(value);
    else if (key == "top_k") cfg.policy.top_k = static_cast<std::size_t>(to_int(value));
    else throw UserError("unknown config key: '" + key + "'");
}

ArmRunStats run_arm(const RunConfig& cfg, ExperimentArm arm, const Dataset& dataset,
                    ChatBackend& backend, const KnowledgeIndex* idx, const ProgressFn& progress) {
    if (arm_is_informed(arm) && idx == nullptr)
        throw UserError("informed arm '" + std::string(arm_name(arm)) +
                        "' requires a knowledge index");
    std::filesystem::create_directories(cfg.output_dir);

    ExecutionPlan plan;
    for (const auto& pair : dataset.records) {
        plan.to_run.push_back(&pair);
        plan.attempts.push_back(1);
    }
    return execute_plan(cfg, arm, backend, idx, progress, std::move(plan),
                        arm_results_path(cfg, arm));
}

ArmRunStats resume_arm(const RunConfig& cfg, ExperimentArm arm, const Dataset& dataset,
                       ChatBackend& backend, const KnowledgeIndex* idx,
                       const ProgressFn& progress) {
    if (arm_is_informed(arm) && idx == nullptr)
        throw UserError("informed arm '" + std::string(arm_name(arm)) +
                        "' requires a knowledge index");
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = arm_results_path(cfg, arm);
    if (!std::filesystem::exists(path))
        return run_arm(cfg, arm, dataset, backend, idx, progress);

    std::unordered_map<std::string, RunRecord> prior;
    for (auto& rec : load_run_records(path)) prior[rec.pair_id] = std::move(rec);

    ExecutionPlan plan;
    for (const auto& pair : dataset.records) {
        auto it = prior.find(pair.id);
        if (it == prior.end()) {
            plan.to_run.push_back(&pair);
            plan.attempts.push_back(1);
        } else if (it->second.verdict.status == VerdictStatus::BackendFailure) {
            plan.to_run.push_back(&pair);
            plan.attempts.push_back(it->second.attempt + 1);
        } else {
            plan.kept.push_back(it->second);
            ++plan.skipped;
        }
    }
    return execute_plan(cfg, arm, backend, idx, progress, std::move(plan), path);
}

} // namespace rephrase
