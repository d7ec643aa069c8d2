#pragma once

#include "editlab/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace editlab {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr const char* kReportSchemaVersion = "1.0";

// One flat plottable series; written as <name>.csv next to report.json.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

struct RunReport {
    std::string schema_version = kReportSchemaVersion;
    std::string artifact_version = kArtifactVersion;
    std::string experiment;
    std::uint64_t seed = 0;
    nlohmann::json config_echo;          // fully resolved configuration
    nlohmann::json summary;              // experiment-specific scalars
    GeometryReport geometry;
    nlohmann::json efficacy;             // per-fact success, when measured
    std::map<std::string, CsvTable> series;
    std::map<std::string, double> timings; // seconds per phase
};

// 17 significant digits: parses back to the identical double.
std::string format_double(double v);

nlohmann::json report_to_json(const RunReport& report);

// Copy with the timings subtree removed; the determinism contract compares
// these bodies.
nlohmann::json report_body_for_comparison(const nlohmann::json& report_json);

// Writes report.json plus one CSV per series (atomically, temp + rename) and
// returns the list of paths written.
std::vector<std::string> emit_report(const RunReport& report, const std::string& dir);

// Reads report.json back; rejects a schema version with a different major.
nlohmann::json load_report(const std::string& path);

CsvTable load_csv(const std::string& path);

} // namespace editlab
