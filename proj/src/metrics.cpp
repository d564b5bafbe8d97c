#include "rephrase/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

namespace rephrase {

namespace {

std::string fmt(const char* format, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, value);
    return buf;
}

} // namespace

std::size_t ConfusionMatrix::total() const {
    std::size_t sum = 0;
    for (const auto& row : counts)
        for (std::size_t v : row) sum += v;
    return sum;
}

std::size_t ConfusionMatrix::row_sum(std::size_t k) const {
    return std::accumulate(counts[k].begin(), counts[k].end(), std::size_t{0});
}

std::size_t ConfusionMatrix::col_sum(std::size_t k) const {
    std::size_t sum = 0;
    for (const auto& row : counts) sum += row[k];
    return sum;
}

ConfusionMatrix build_confusion(const std::vector<RephraseCategory>& gold,
                                const std::vector<RephraseCategory>& pred) {
    if (gold.size() != pred.size()) throw LengthMismatchError(gold.size(), pred.size());
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < gold.size(); ++i)
        ++cm.counts[category_index(gold[i])][category_index(pred[i])];
    return cm;
}

std::array<ClassScores, kCategoryCount> per_class_scores(const ConfusionMatrix& cm) {
    std::array<ClassScores, kCategoryCount> scores{};
    for (std::size_t k = 0; k < kCategoryCount; ++k) {
        const double tp = static_cast<double>(cm.counts[k][k]);
        const double gold_k = static_cast<double>(cm.row_sum(k));
        const double pred_k = static_cast<double>(cm.col_sum(k));

        ClassScores& s = scores[k];
        s.category = canonical_order()[k];
        s.support = cm.row_sum(k);
        s.precision = pred_k > 0.0 ? tp / pred_k : 0.0;
        s.recall = gold_k > 0.0 ? tp / gold_k : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
    }
    return scores;
}

double macro_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw EmptyMatrixError();
    const auto scores = per_class_scores(cm);
    double sum = 0.0;
    for (const auto& s : scores) sum += s.f1;
    return sum / static_cast<double>(kCategoryCount);
}

double mcc_multiclass(const ConfusionMatrix& cm) {
    const double s = static_cast<double>(cm.total());
    if (s == 0.0) throw EmptyMatrixError();

    double c = 0.0, sum_pt = 0.0, sum_pp = 0.0, sum_tt = 0.0;
    for (std::size_t k = 0; k < kCategoryCount; ++k) {
        c += static_cast<double>(cm.counts[k][k]);
        const double t_k = static_cast<double>(cm.row_sum(k));
        const double p_k = static_cast<double>(cm.col_sum(k));
        sum_pt += p_k * t_k;
        sum_pp += p_k * p_k;
        sum_tt += t_k * t_k;
    }
    const double denom = std::sqrt((s * s - sum_pp) * (s * s - sum_tt));
    if (denom == 0.0) return 0.0;
    return (c * s - sum_pt) / denom;
}

double cohens_kappa_ints(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw LengthMismatchError(a.size(), b.size());
    if (a.empty()) throw EmptyInputError();

    const double n = static_cast<double>(a.size());
    std::size_t matches = 0;
    std::map<int, std::size_t> count_a, count_b;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] == b[i]) ++matches;
        ++count_a[a[i]];
        ++count_b[b[i]];
    }
    const double p_o = static_cast<double>(matches) / n;
    double p_e = 0.0;
    for (const auto& [label, ca] : count_a) {
        auto it = count_b.find(label);
        if (it == count_b.end()) continue;
        p_e += (static_cast<double>(ca) / n) * (static_cast<double>(it->second) / n);
    }
    if (p_e >= 1.0) return 1.0; // both lists constant, same class
    return (p_o - p_e) / (1.0 - p_e);
}

double cohens_kappa(const std::vector<RephraseCategory>& a,
                    const std::vector<RephraseCategory>& b) {
    std::vector<int> ia(a.size()), ib(b.size());
    std::transform(a.begin(), a.end(), ia.begin(),
                   [](RephraseCategory c) { return static_cast<int>(category_index(c)); });
    std::transform(b.begin(), b.end(), ib.begin(),
                   [](RephraseCategory c) { return static_cast<int>(category_index(c)); });
    return cohens_kappa_ints(ia, ib);
}

double per_category_kappa(const std::vector<RephraseCategory>& a,
                          const std::vector<RephraseCategory>& b, RephraseCategory category) {
    std::vector<int> ia(a.size()), ib(b.size());
    std::transform(a.begin(), a.end(), ia.begin(),
                   [category](RephraseCategory c) { return c == category ? 1 : 0; });
    std::transform(b.begin(), b.end(), ib.begin(),
                   [category](RephraseCategory c) { return c == category ? 1 : 0; });
    return cohens_kappa_ints(ia, ib);
}

bool kappa_is_degenerate(const std::vector<RephraseCategory>& a,
                         const std::vector<RephraseCategory>& b, RephraseCategory category) {
    auto absent = [category](const std::vector<RephraseCategory>& v) {
        return std::none_of(v.begin(), v.end(),
                            [category](RephraseCategory c) { return c == category; });
    };
    return absent(a) && absent(b);
}

EvalReport evaluate(const std::string& arm_label, const std::vector<RephraseCategory>& gold,
                    const std::vector<RephraseCategory>& pred, std::size_t parse_failures,
                    std::size_t backend_failures) {
    EvalReport report;
    report.arm_label = arm_label;
    report.matrix = build_confusion(gold, pred);
    report.per_class = per_class_scores(report.matrix);
    report.macro_f1 = macro_f1(report.matrix);
    report.mcc = mcc_multiclass(report.matrix);
    report.parse_failures = parse_failures;
    report.backend_failures = backend_failures;
    return report;
}

MacroConsistency check_macro_consistency(const std::vector<double>& per_class_f1,
                                         double printed_macro, double tolerance) {
    if (per_class_f1.empty()) throw EmptyInputError();
    MacroConsistency out;
    out.printed = printed_macro;
    out.recomputed = std::accumulate(per_class_f1.begin(), per_class_f1.end(), 0.0) /
                     static_cast<double>(per_class_f1.size());
    out.consistent = std::fabs(out.recomputed - printed_macro) <= tolerance;
    if (!out.consistent) {
        out.note = "macro F1 recomputed from per-class values is " +
                   fmt("%.3f", out.recomputed) + " but the printed value is " +
                   fmt("%.3f", printed_macro) + " (difference exceeds " +
                   fmt("%.3f", tolerance) + ")";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::set<ReportFormat> parse_report_formats(const std::string& csv_list) {
    std::set<ReportFormat> formats;
    std::size_t pos = 0;
    while (pos <= csv_list.size()) {
        std::size_t comma = csv_list.find(',', pos);
        if (comma == std::string::npos) comma = csv_list.size();
        const std::string item = csv_list.substr(pos, comma - pos);
        if (item == "text") formats.insert(ReportFormat::Text);
        else if (item == "csv") formats.insert(ReportFormat::Csv);
        else if (item == "svg") formats.insert(ReportFormat::Svg);
        else if (!item.empty())
            throw UserError("unknown report format: '" + item + "' (expected text, csv, svg)");
        pos = comma + 1;
    }
    if (formats.empty()) throw UserError("no report formats given");
    return formats;
}

std::string render_text_report(const EvalReport& report) {
    std::string out;
    out += "arm: " + report.arm_label + "\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-18s %9s %9s %9s %9s\n", "category", "precision",
                  "recall", "f1", "support");
    out += line;
    for (const auto& s : report.per_class) {
        std::snprintf(line, sizeof(line), "%-18s %9.4f %9.4f %9.4f %9zu\n",
                      std::string(category_name(s.category)).c_str(), s.precision, s.recall,
                      s.f1, s.support);
        out += line;
    }
    std::snprintf(line, sizeof(line), "macro_f1 %.4f\n", report.macro_f1);
    out += line;
    std::snprintf(line, sizeof(line), "mcc %.4f\n", report.mcc);
    out += line;
    std::snprintf(line, sizeof(line), "scored %zu excluded parse_failure=%zu backend_failure=%zu\n",
                  report.scored(), report.parse_failures, report.backend_failures);
    out += line;
    return out;
}

std::string render_csv_report(const EvalReport& report) {
    std::string out = "category,precision,recall,f1,support\n";
    for (const auto& s : report.per_class) {
        out += std::string(category_name(s.category)) + "," + fmt("%.4f", s.precision) + "," +
               fmt("%.4f", s.recall) + "," + fmt("%.4f", s.f1) + "," +
               std::to_string(s.support) + "\n";
    }
    out += "macro_f1," + fmt("%.4f", report.macro_f1) + "\n";
    out += "mcc," + fmt("%.4f", report.mcc) + "\n";
    return out;
}

std::string render_svg_heatmap(const EvalReport& report) {
    constexpr int cell = 64;
    constexpr int left = 150, top = 60, legend = 40;
    const int grid = cell * static_cast<int>(kCategoryCount);
    const int width = left + grid + 20;
    const int height = top + grid + legend;

    std::size_t max_count = 1;
    for (const auto& row : report.matrix.counts)
        for (std::size_t v : row) max_count = std::max(max_count, v);

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\" font-size=\"11\">\n";
    svg += "<text x=\"" + std::to_string(left + grid / 2) + "\" y=\"16\" text-anchor=\"middle\">" +
           "predicted (" + report.arm_label + ")</text>\n";
    svg += "<text x=\"14\" y=\"" + std::to_string(top + grid / 2) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
           std::to_string(top + grid / 2) + ")\">gold</text>\n";

    const auto& order = canonical_order();
    for (std::size_t k = 0; k < kCategoryCount; ++k) {
        const std::string name(category_name(order[k]));
        // Column labels, rotated to fit.
        const int cx = left + static_cast<int>(k) * cell + cell / 2;
        svg += "<text x=\"" + std::to_string(cx) + "\" y=\"" + std::to_string(top - 8) +
               "\" text-anchor=\"start\" transform=\"rotate(-30 " + std::to_string(cx) + " " +
               std::to_string(top - 8) + ")\">" + name + "</text>\n";
        // Row labels.
        const int ry = top + static_cast<int>(k) * cell + cell / 2 + 4;
        svg += "<text x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(ry) +
               "\" text-anchor=\"end\">" + name + "</text>\n";
    }

    for (std::size_t r = 0; r < kCategoryCount; ++r) {
        for (std::size_t c = 0; c < kCategoryCount; ++c) {
            const std::size_t count = report.matrix.counts[r][c];
            const double intensity = static_cast<double>(count) / static_cast<double>(max_count);
            const int shade = 255 - static_cast<int>(intensity * 180.0);
            const int x = left + static_cast<int>(c) * cell;
            const int y = top + static_cast<int>(r) * cell;
            svg += "<rect class=\"cell\" x=\"" + std::to_string(x) + "\" y=\"" +
                   std::to_string(y) + "\" width=\"" + std::to_string(cell) + "\" height=\"" +
                   std::to_string(cell) + "\" fill=\"rgb(" + std::to_string(shade) + "," +
                   std::to_string(shade) + ",255)\" stroke=\"#444\"/>\n";
            svg += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
                   std::to_string(y + cell / 2 + 4) + "\" text-anchor=\"middle\">" +
                   std::to_string(count) + "</text>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

std::vector<std::filesystem::path> write_report_files(const EvalReport& report,
                                                      const std::filesystem::path& dir,
                                                      const std::set<ReportFormat>& formats) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto write = [&](const std::filesystem::path& path, const std::string& content) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write report file: " + path.string());
        out << content;
        if (!out) throw std::runtime_error("write failed: " + path.string());
        written.push_back(path);
    };
    const std::string stem = report.arm_label.empty() ? "report" : report.arm_label;
    if (formats.count(ReportFormat::Text))
        write(dir / (stem + ".report.txt"), render_text_report(report));
    if (formats.count(ReportFormat::Csv))
        write(dir / (stem + ".report.csv"), render_csv_report(report));
    if (formats.count(ReportFormat::Svg))
        write(dir / (stem + ".confusion.svg"), render_svg_heatmap(report));
    return written;
}

} // namespace rephrase
