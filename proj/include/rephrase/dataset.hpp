#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rephrase/core_types.hpp"

namespace rephrase {

struct Dataset {
    std::vector<RephrasePair> records; // file order preserved
    std::string source_path;
    int schema_version = 1;
};

enum class DatasetFormat { Csv, Jsonl };

DatasetFormat parse_dataset_format(std::string_view name);

// Picks the format from the file extension (.csv vs anything else = jsonl).
DatasetFormat sniff_dataset_format(const std::filesystem::path& path);

// Validation errors carry the 1-based file row/line number (header = row 1
// for CSV). row() == 0 means the error is not tied to a specific row.
class DatasetError : public UserError {
public:
    DatasetError(const std::string& what, std::size_t row = 0)
        : UserError(what), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class MissingColumnError : public DatasetError {
public:
    explicit MissingColumnError(const std::string& column);
};

class DuplicateIdError : public DatasetError {
public:
    DuplicateIdError(const std::string& id, std::size_t row);
};

class EmptyTextError : public DatasetError {
public:
    EmptyTextError(const std::string& field, std::size_t row);
};

class UnknownGoldLabelError : public DatasetError {
public:
    UnknownGoldLabelError(const std::string& label, std::size_t row);
};

class MissingGoldError : public DatasetError {
public:
    MissingGoldError(const std::string& id, std::size_t row);
};

class UnknownIdError : public DatasetError {
public:
    explicit UnknownIdError(const std::vector<std::string>& ids);
};

// Loads a delimited dataset file. CSV needs a header row (RFC 4180 quoting);
// JSONL is one object per line with the same field names. Gold labels are
// normalized through parse_category; missing illocution cells become empty
// strings. Records keep file order.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
Dataset load_dataset(const std::filesystem::path& path);

// Writes the canonical JSONL form (ingest output). Loading the result yields
// the same records.
void save_dataset_jsonl(const Dataset& d, const std::filesystem::path& path);

// Restricts to the given ids (dataset order preserved) and/or the first
// `limit` records. With neither argument returns d unchanged.
Dataset select_subset(const Dataset& d,
                      const std::optional<std::vector<std::string>>& ids = std::nullopt,
                      std::optional<std::size_t> limit = std::nullopt);

// Gold-label counts in canonical order; throws MissingGold if any record
// lacks a label.
std::array<std::size_t, kCategoryCount> class_support(const Dataset& d);

// Minimal RFC 4180 reader, exposed for the loaders and tests. Returns rows of
// fields; quoted fields may contain commas, quotes ("" escape), and newlines.
std::vector<std::vector<std::string>> parse_csv(const std::string& content);

} // namespace rephrase
