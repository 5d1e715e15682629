#include "vlalab/train/report.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace vlalab::train {

const std::array<const char*, 7> kFamilyColumns = {"Camera", "Robot",      "Language", "Light",
                                                   "Background", "Noise", "Layout"};

namespace {

std::string f1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

std::string fexact(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

std::string report_to_markdown(const EvalReport& report) {
    std::ostringstream out;
    out << "| Model | Suite | Original |";
    for (const char* f : kFamilyColumns) out << " " << f << " |";
    out << " Total |\n";
    out << "|---|---|---|";
    for (size_t i = 0; i < kFamilyColumns.size(); ++i) out << "---|";
    out << "---|\n";
    for (const auto& row : report.rows) {
        out << "| " << row.name << " | " << row.suite << " | ";
        if (row.failed) {
            out << "FAILED |";
            for (size_t i = 0; i < kFamilyColumns.size(); ++i) out << " - |";
            out << " - |\n";
            continue;
        }
        out << f1(row.original) << " |";
        for (double f : row.family) out << " " << f1(f) << " |";
        out << " " << f1(row.total) << " |\n";
    }
    return out.str();
}

std::string report_to_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "name,suite,original";
    for (const char* f : kFamilyColumns) {
        std::string lower(f);
        for (auto& c : lower) c = static_cast<char>(std::tolower(c));
        out << "," << lower;
    }
    out << ",total,trials,wall_seconds,failed\n";
    for (const auto& row : report.rows) {
        out << row.name << "," << row.suite << "," << fexact(row.original);
        for (double f : row.family) out << "," << fexact(f);
        out << "," << fexact(row.total) << "," << row.trials << "," << fexact(row.wall_seconds)
            << "," << (row.failed ? 1 : 0) << "\n";
    }
    return out.str();
}

EvalReport report_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("report csv: empty");
    EvalReport rep;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cols = split_csv_line(line);
        if (cols.size() != 14) throw std::runtime_error("report csv: expected 14 columns");
        ReportRow row;
        row.name = cols[0];
        row.suite = cols[1];
        row.original = std::stod(cols[2]);
        for (int i = 0; i < 7; ++i) row.family[static_cast<size_t>(i)] = std::stod(cols[3 + i]);
        row.total = std::stod(cols[10]);
        row.trials = std::stoi(cols[11]);
        row.wall_seconds = std::stod(cols[12]);
        row.failed = cols[13] == "1";
        rep.rows.push_back(row);
    }
    return rep;
}

std::string loss_log_csv_header() { return "step,lr,total,action,frequency,world\n"; }

}  // namespace vlalab::train
