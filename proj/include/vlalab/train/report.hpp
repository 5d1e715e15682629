#pragma once

#include <array>
#include <string>
#include <vector>

namespace vlalab::train {

// One evaluated configuration on one suite. Family order matches the
// benchmark columns: Camera, Robot, Language, Light, Background, Noise,
// Layout. Rates are percentages; total is the mean of the seven family rates.
struct ReportRow {
    std::string name;
    std::string suite;
    double original = 0.0;
    std::array<double, 7> family = {0, 0, 0, 0, 0, 0, 0};
    double total = 0.0;
    int trials = 0;
    double wall_seconds = 0.0;
    bool failed = false;

    void recompute_total() {
        double s = 0.0;
        for (double f : family) s += f;
        total = s / 7.0;
    }
};

struct EvalReport {
    std::vector<ReportRow> rows;
};

extern const std::array<const char*, 7> kFamilyColumns;

std::string report_to_markdown(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& csv);

std::string loss_log_csv_header();

}  // namespace vlalab::train
