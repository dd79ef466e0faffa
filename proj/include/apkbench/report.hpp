#pragma once

// Report files for a scenario result: result.json always, plus csv tables,
// one markdown report and plot-data series on request, and a manifest with
// the config hash, seed and file inventory.

#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "scenario.hpp"

namespace apkbench {

enum class ReportFormat { csv, markdown, plot_data };

inline ReportFormat report_format_from(std::string_view s)
{
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "markdown-table" || s == "md") return ReportFormat::markdown;
    if (s == "plot-data" || s == "plot") return ReportFormat::plot_data;
    throw UsageError("unknown report format '" + std::string(s) + "' (expected csv, markdown or plot-data)");
}

inline const std::set<ReportFormat>& all_report_formats()
{
    static const std::set<ReportFormat> all = {ReportFormat::csv, ReportFormat::markdown, ReportFormat::plot_data};
    return all;
}

namespace report_detail {

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c);
    }
    return out + "\"";
}

/// Integers verbatim, reals at `precision` decimals, null as `absent`.
inline std::string cell_text(const nlohmann::json& c, int precision, const std::string& absent)
{
    if (c.is_null()) return absent;
    if (c.is_string()) return c.get<std::string>();
    if (c.is_number_integer() || c.is_number_unsigned()) return c.dump();
    if (c.is_number_float()) return format_double(c.get<double>(), precision);
    if (c.is_boolean()) return c.get<bool>() ? "true" : "false";
    return c.dump();
}

} // namespace report_detail

inline std::string table_csv(const ReportTable& t)
{
    using namespace report_detail;
    std::ostringstream out;
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        out << (i ? "," : "") << csv_field(t.header[i]);
    }
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            out << (i ? "," : "") << csv_field(cell_text(row[i], 6, ""));
        }
        out << '\n';
    }
    return out.str();
}

inline std::string table_markdown(const ReportTable& t)
{
    using namespace report_detail;
    std::ostringstream out;
    out << "### " << t.title << "\n\n|";
    for (const auto& h : t.header) {
        out << ' ' << h << " |";
    }
    out << "\n|";
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        out << (i ? " ---: |" : " --- |");
    }
    out << '\n';
    for (const auto& row : t.rows) {
        out << '|';
        for (const auto& c : row) {
            out << ' ' << cell_text(c, 3, "-") << " |";
        }
        out << '\n';
    }
    return out.str();
}

/// Whitespace-separated columns; missing points are `-`.
inline std::string series_text(const PlotSeries& s)
{
    using namespace report_detail;
    std::ostringstream out;
    out << "# " << s.x_label;
    for (const auto& l : s.labels) {
        out << '\t' << l;
    }
    out << '\n';
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        out << cell_text(s.x[i], 6, "-");
        for (const auto& col : s.y) {
            out << '\t' << (col[i] ? format_double(*col[i], 6) : "-");
        }
        out << '\n';
    }
    return out.str();
}

inline std::string markdown_report(const ScenarioResult& r)
{
    std::ostringstream out;
    out << "# " << r.name << " (" << to_string(r.kind) << ")\n\n";
    out << "seed " << r.seed << ", config " << r.config_hash << "\n\n";
    for (const auto& t : r.tables) {
        out << table_markdown(t) << '\n';
    }
    if (!r.annotations.empty()) {
        out << "### Directional checks\n\n";
        for (const auto& a : r.annotations) {
            out << "- [" << (a.holds ? "holds" : "does not hold") << "] " << a.check << ": " << a.detail << '\n';
        }
    }
    return out.str();
}

/// Writes the report files into `dir` and returns the manifest.
inline nlohmann::json emit_report(const ScenarioResult& r, const std::filesystem::path& dir,
                                  const std::set<ReportFormat>& formats = all_report_formats())
{
    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("result.json", result_to_json(r).dump(2) + "\n");
    if (formats.contains(ReportFormat::csv)) {
        for (const auto& t : r.tables) {
            files.emplace_back(t.name + ".csv", table_csv(t));
        }
    }
    if (formats.contains(ReportFormat::markdown)) {
        files.emplace_back("report.md", markdown_report(r));
    }
    if (formats.contains(ReportFormat::plot_data)) {
        for (const auto& s : r.series) {
            files.emplace_back(s.name + ".dat", series_text(s));
        }
    }
    std::set<std::string> names;
    nlohmann::json inventory = nlohmann::json::array();
    for (const auto& [name, content] : files) {
        if (!names.insert(name).second) {
            throw RuntimeError("report: two outputs named '" + name + "'");
        }
        write_file_atomic(dir / name, content);
        inventory.push_back({{"path", name}, {"bytes", content.size()}, {"fnv1a64", hex64(fnv1a64(content))}});
    }
    nlohmann::json manifest{{"format", "apkbench-manifest"},
                            {"version", 1},
                            {"scenario", to_string(r.kind)},
                            {"name", r.name},
                            {"seed", r.seed},
                            {"config_hash", r.config_hash},
                            {"files", std::move(inventory)}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

} // namespace apkbench
