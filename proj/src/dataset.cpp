#include "rephrase/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace rephrase {

namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string content = buf.str();
    // Strip a UTF-8 BOM if present.
    if (content.rfind("\xEF\xBB\xBF", 0) == 0) content.erase(0, 3);
    return content;
}

bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r\n") == std::string_view::npos;
}

void validate_record(const RephrasePair& rec, std::size_t row) {
    if (is_blank(rec.id)) throw EmptyTextError("id", row);
    if (is_blank(rec.input_text)) throw EmptyTextError("input_text", row);
    if (is_blank(rec.output_text)) throw EmptyTextError("output_text", row);
}

std::optional<RephraseCategory> parse_gold_cell(const std::string& cell, std::size_t row) {
    if (is_blank(cell)) return std::nullopt;
    try {
        return parse_category(cell);
    } catch (const UnknownLabelError&) {
        throw UnknownGoldLabelError(cell, row);
    }
}

Dataset load_csv(const std::filesystem::path& path) {
    auto rows = parse_csv(read_file(path));
    if (rows.empty()) throw DatasetError("empty CSV file: " + path.string());

    const auto& header = rows.front();
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col.emplace(header[i], i);

    for (const char* required : {"id", "input_text", "output_text"}) {
        if (!col.count(required)) throw MissingColumnError(required);
    }
    auto cell = [&](const std::vector<std::string>& fields, const char* name) -> std::string {
        auto it = col.find(name);
        if (it == col.end() || it->second >= fields.size()) return "";
        return fields[it->second];
    };

    Dataset d;
    d.source_path = path.string();
    std::unordered_set<std::string> seen;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const std::size_t row = i + 1; // header is row 1
        const auto& fields = rows[i];
        if (fields.size() == 1 && is_blank(fields[0])) continue;
        if (fields.size() > header.size())
            throw DatasetError("row " + std::to_string(row) + ": more fields than header columns", row);

        RephrasePair rec;
        rec.id = cell(fields, "id");
        rec.input_text = cell(fields, "input_text");
        rec.output_text = cell(fields, "output_text");
        rec.input_illocution = cell(fields, "input_illocution");
        rec.output_illocution = cell(fields, "output_illocution");
        rec.gold = parse_gold_cell(cell(fields, "gold"), row);
        validate_record(rec, row);
        if (!seen.insert(rec.id).second) throw DuplicateIdError(rec.id, row);
        d.records.push_back(std::move(rec));
    }
    return d;
}

Dataset load_jsonl(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    Dataset d;
    d.source_path = path.string();
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (is_blank(line)) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            throw DatasetError("row " + std::to_string(row) + ": invalid JSON: " + e.what(), row);
        }
        for (const char* required : {"id", "input_text", "output_text"}) {
            if (!obj.contains(required)) throw MissingColumnError(required);
        }
        RephrasePair rec;
        rec.id = obj.at("id").get<std::string>();
        rec.input_text = obj.at("input_text").get<std::string>();
        rec.output_text = obj.at("output_text").get<std::string>();
        rec.input_illocution = obj.value("input_illocution", "");
        rec.output_illocution = obj.value("output_illocution", "");
        if (obj.contains("gold") && !obj.at("gold").is_null())
            rec.gold = parse_gold_cell(obj.at("gold").get<std::string>(), row);
        validate_record(rec, row);
        if (!seen.insert(rec.id).second) throw DuplicateIdError(rec.id, row);
        d.records.push_back(std::move(rec));
    }
    return d;
}

} // namespace

MissingColumnError::MissingColumnError(const std::string& column)
    : DatasetError("missing required column: '" + column + "'") {}

DuplicateIdError::DuplicateIdError(const std::string& id, std::size_t row)
    : DatasetError("row " + std::to_string(row) + ": duplicate id '" + id + "'", row) {}

EmptyTextError::EmptyTextError(const std::string& field, std::size_t row)
    : DatasetError("row " + std::to_string(row) + ": field '" + field + "' is empty", row) {}

UnknownGoldLabelError::UnknownGoldLabelError(const std::string& label, std::size_t row)
    : DatasetError("row " + std::to_string(row) + ": unknown gold label '" + label + "'", row) {}

MissingGoldError::MissingGoldError(const std::string& id, std::size_t row)
    : DatasetError("row " + std::to_string(row) + ": record '" + id + "' has no gold label", row) {}

UnknownIdError::UnknownIdError(const std::vector<std::string>& ids)
    : DatasetError([&] {
          std::string msg = "unknown ids:";
          for (const auto& id : ids) msg += " '" + id + "'";
          return msg;
      }()) {}

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "csv") return DatasetFormat::Csv;
    if (name == "jsonl") return DatasetFormat::Jsonl;
    throw UserError("unknown dataset format: '" + std::string(name) + "' (expected csv or jsonl)");
}

DatasetFormat sniff_dataset_format(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? DatasetFormat::Csv : DatasetFormat::Jsonl;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& content) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool row_started = false;

    auto end_field = [&] {
        fields.push_back(field);
        field.clear();
        row_started = true;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(fields);
        fields.clear();
        row_started = false;
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        char ch = content[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
        case '"': in_quotes = true; row_started = true; break;
        case ',': end_field(); break;
        case '\r':
            if (i + 1 < content.size() && content[i + 1] == '\n') ++i;
            end_row();
            break;
        case '\n': end_row(); break;
        default: field.push_back(ch); break;
        }
    }
    if (in_quotes) throw UserError("CSV: unterminated quoted field");
    if (row_started || !field.empty()) end_row();
    return rows;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    return format == DatasetFormat::Csv ? load_csv(path) : load_jsonl(path);
}

Dataset load_dataset(const std::filesystem::path& path) {
    return load_dataset(path, sniff_dataset_format(path));
}

void save_dataset_jsonl(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    for (const auto& rec : d.records) {
        json obj = {
            {"id", rec.id},
            {"input_text", rec.input_text},
            {"output_text", rec.output_text},
            {"input_illocution", rec.input_illocution},
            {"output_illocution", rec.output_illocution},
        };
        if (rec.gold) obj["gold"] = std::string(category_name(*rec.gold));
        out << obj.dump() << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Dataset select_subset(const Dataset& d,
                      const std::optional<std::vector<std::string>>& ids,
                      std::optional<std::size_t> limit) {
    Dataset out;
    out.source_path = d.source_path;
    out.schema_version = d.schema_version;

    if (ids) {
        std::unordered_set<std::string> wanted(ids->begin(), ids->end());
        std::unordered_set<std::string> present;
        for (const auto& rec : d.records) present.insert(rec.id);
        std::vector<std::string> missing;
        for (const auto& id : *ids)
            if (!present.count(id)) missing.push_back(id);
        if (!missing.empty()) throw UnknownIdError(missing);
        for (const auto& rec : d.records)
            if (wanted.count(rec.id)) out.records.push_back(rec);
    } else {
        out.records = d.records;
    }
    if (limit && out.records.size() > *limit) out.records.resize(*limit);
    return out;
}

std::array<std::size_t, kCategoryCount> class_support(const Dataset& d) {
    std::array<std::size_t, kCategoryCount> counts{};
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        const auto& rec = d.records[i];
        if (!rec.gold) throw MissingGoldError(rec.id, i + 1);
        ++counts[category_index(*rec.gold)];
    }
    return counts;
}

} // namespace rephrase
