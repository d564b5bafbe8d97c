#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "rephrase/core_types.hpp"

namespace rephrase {

class LengthMismatchError : public UserError {
public:
    LengthMismatchError(std::size_t a, std::size_t b)
        : UserError("label lists differ in length: " + std::to_string(a) + " vs " +
                    std::to_string(b)) {}
};

class EmptyMatrixError : public UserError {
public:
    EmptyMatrixError() : UserError("confusion matrix has no scored pairs") {}
};

class EmptyInputError : public UserError {
public:
    EmptyInputError() : UserError("label lists are empty") {}
};

// 6x6 count grid, rows = gold, columns = predicted, axes in canonical_order.
struct ConfusionMatrix {
    std::array<std::array<std::size_t, kCategoryCount>, kCategoryCount> counts{};

    std::size_t at(RephraseCategory gold, RephraseCategory pred) const {
        return counts[category_index(gold)][category_index(pred)];
    }
    std::size_t total() const;
    std::size_t row_sum(std::size_t k) const;
    std::size_t col_sum(std::size_t k) const;
};

ConfusionMatrix build_confusion(const std::vector<RephraseCategory>& gold,
                                const std::vector<RephraseCategory>& pred);

struct ClassScores {
    RephraseCategory category = RephraseCategory::Deintensification;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

// Per-class precision/recall/F1 with the zero-division convention: a metric
// whose denominator is 0 scores 0 (never excluded).
std::array<ClassScores, kCategoryCount> per_class_scores(const ConfusionMatrix& cm);

// Unweighted mean of the six per-class F1 values.
double macro_f1(const ConfusionMatrix& cm);

// Multiclass Matthews correlation:
//   (c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))
// with c = trace, s = total, t_k = row sums, p_k = column sums. Returns 0
// when the denominator is 0.
double mcc_multiclass(const ConfusionMatrix& cm);

// kappa = (p_o - p_e) / (1 - p_e); returns 1.0 when p_e = 1 (both lists
// constant, same class).
double cohens_kappa(const std::vector<RephraseCategory>& a,
                    const std::vector<RephraseCategory>& b);
double cohens_kappa_ints(const std::vector<int>& a, const std::vector<int>& b);

// One-vs-rest binarization, then cohens_kappa on the binary lists.
double per_category_kappa(const std::vector<RephraseCategory>& a,
                          const std::vector<RephraseCategory>& b, RephraseCategory category);

// True when the category appears in neither list (kappa degenerates to 1.0).
bool kappa_is_degenerate(const std::vector<RephraseCategory>& a,
                         const std::vector<RephraseCategory>& b, RephraseCategory category);

struct EvalReport {
    std::string arm_label;
    ConfusionMatrix matrix;
    std::array<ClassScores, kCategoryCount> per_class{};
    double macro_f1 = 0.0;
    double mcc = 0.0;
    std::size_t parse_failures = 0;   // excluded from the matrix
    std::size_t backend_failures = 0; // excluded from the matrix

    std::size_t scored() const { return matrix.total(); }
    std::size_t excluded() const { return parse_failures + backend_failures; }
};

EvalReport evaluate(const std::string& arm_label, const std::vector<RephraseCategory>& gold,
                    const std::vector<RephraseCategory>& pred, std::size_t parse_failures,
                    std::size_t backend_failures);

// Recompute-from-per-class path: reported macro scores are re-derived from
// the per-class values so rounding discrepancies in external tables surface.
struct MacroConsistency {
    double recomputed = 0.0;
    double printed = 0.0;
    bool consistent = false;
    std::string note; // non-empty when inconsistent
};

MacroConsistency check_macro_consistency(const std::vector<double>& per_class_f1,
                                         double printed_macro, double tolerance = 0.01);

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

enum class ReportFormat { Text, Csv, Svg };

std::set<ReportFormat> parse_report_formats(const std::string& csv_list);

std::string render_text_report(const EvalReport& report);
// Header is fixed: category,precision,recall,f1,support; summary lines
// macro_f1,<v> and mcc,<v> follow the class rows.
std::string render_csv_report(const EvalReport& report);
// Heatmap with 36 count cells, axes labeled in canonical order.
std::string render_svg_heatmap(const EvalReport& report);

// Writes {arm}.report.txt / {arm}.report.csv / {arm}.confusion.svg into dir;
// returns the written paths.
std::vector<std::filesystem::path> write_report_files(const EvalReport& report,
                                                      const std::filesystem::path& dir,
                                                      const std::set<ReportFormat>& formats);

} // namespace rephrase
