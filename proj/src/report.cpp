#include "editlab/report.hpp"

#include "editlab/errors.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace editlab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out << content;
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + tmp.string() + " -> " + path.string() + ": " +
                          ec.message());
}

json conflict_to_json(const ConflictDistribution& c) {
    json j;
    j["mean"] = c.mean;
    j["min"] = c.min;
    j["max"] = c.max;
    j["stddev"] = c.stddev;
    j["pair_count"] = c.pairs.size();
    return j;
}

json similarity_to_json(const SimilarityBlocks& s) {
    json j;
    j["labels"] = s.labels;
    json rows = json::array();
    for (std::size_t r = 0; r < s.means.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < s.means.cols(); ++c) row.push_back(s.means(r, c));
        rows.push_back(std::move(row));
    }
    j["means"] = std::move(rows);
    return j;
}

json amplification_to_json(const AmplificationStats& a) {
    json j;
    j["median_r_cov"] = a.median_r_cov;
    j["median_r_id"] = a.median_r_id;
    j["amplified_count"] = a.amplified_count;
    j["delta_count"] = a.r_cov.size();
    j["lambda_max_c_inv"] = a.lambda_max_c_inv;
    j["kappa_c"] = a.kappa_c;
    return j;
}

} // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

json report_to_json(const RunReport& report) {
    json j;
    j["schema_version"] = report.schema_version;
    j["artifact_version"] = report.artifact_version;
    j["experiment"] = report.experiment;
    j["seed"] = report.seed;
    j["config"] = report.config_echo;
    j["summary"] = report.summary;

    json geom;
    if (!report.geometry.radii.empty()) {
        json radii = json::array();
        for (const auto& r : report.geometry.radii)
            radii.push_back({{"subject_id", r.subject_id}, {"r", r.r}});
        geom["radii"] = std::move(radii);
    }
    if (!report.geometry.deviations.empty()) {
        json devs = json::array();
        for (const auto& d : report.geometry.deviations)
            devs.push_back({{"fact_id", d.fact_id}, {"form", d.form}, {"d", d.d}});
        geom["deviations"] = std::move(devs);
    }
    if (!report.geometry.conflicts.pairs.empty())
        geom["conflicts"] = conflict_to_json(report.geometry.conflicts);
    if (!report.geometry.similarity.labels.empty())
        geom["similarity"] = similarity_to_json(report.geometry.similarity);
    if (!report.geometry.amplification.r_cov.empty()) {
        geom["amplification"] = amplification_to_json(report.geometry.amplification);
        geom["spectral"] = {{"lambda_max_c_inv", report.geometry.amplification.lambda_max_c_inv},
                            {"kappa_c", report.geometry.amplification.kappa_c}};
    }
    j["geometry"] = std::move(geom);
    j["efficacy"] = report.efficacy;

    json timings;
    for (const auto& [name, seconds] : report.timings) timings[name] = seconds;
    j["timings"] = std::move(timings);
    return j;
}

json report_body_for_comparison(const json& report_json) {
    json body = report_json;
    body.erase("timings");
    return body;
}

std::vector<std::string> emit_report(const RunReport& report, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());

    std::vector<std::string> written;
    const fs::path report_path = fs::path(dir) / "report.json";
    write_atomic(report_path, report_to_json(report).dump(2) + "\n");
    written.push_back(report_path.string());

    for (const auto& [name, table] : report.series) {
        std::ostringstream out;
        for (std::size_t i = 0; i < table.header.size(); ++i) {
            if (i) out << ',';
            out << table.header[i];
        }
        out << '\n';
        for (const auto& row : table.rows) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (i) out << ',';
                out << row[i];
            }
            out << '\n';
        }
        const fs::path csv_path = fs::path(dir) / (name + ".csv");
        write_atomic(csv_path, out.str());
        written.push_back(csv_path.string());
    }
    return written;
}

json load_report(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError("malformed report " + path + ": " + e.what());
    }
    const std::string schema = j.value("schema_version", "");
    const std::string expected(kReportSchemaVersion);
    const auto major_of = [](const std::string& s) { return s.substr(0, s.find('.')); };
    if (schema.empty() || major_of(schema) != major_of(expected))
        throw ConfigError("report schema version '" + schema + "' is incompatible with '" +
                          expected + "'");
    return j;
}

CsvTable load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open csv: " + path);

    auto split = [](const std::string& line) {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream row(line);
        while (std::getline(row, cell, ',')) out.push_back(cell);
        if (!line.empty() && line.back() == ',') out.emplace_back();
        return out;
    };

    CsvTable table;
    std::string line;
    if (std::getline(in, line)) table.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        table.rows.push_back(split(line));
    }
    return table;
}

} // namespace editlab
