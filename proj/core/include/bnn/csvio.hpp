#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnn/calibration.hpp"
#include "bnn/probe.hpp"
#include "bnn/train.hpp"

namespace bnn {

// All CSV files start with a `# schema=<name>.v<N>` line; readers reject
// unknown schemas. Numbers are written with %.17g so reruns are
// byte-identical. Wall-time columns are opt-in for the same reason.

struct SweepRow {
    double slope = 0.0;
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;
    double val_ece = 0.0;
    double wall_seconds = 0.0;
    bool failed = false;
};

std::string format_double(double v);

void write_run_csv(const std::string& path, const RunRecord& record,
                   bool with_walltime = false);
RunRecord read_run_csv(const std::string& path);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     bool with_walltime = false, const std::string& meta = "");
std::vector<SweepRow> read_sweep_csv(const std::string& path,
                                     std::string* meta = nullptr);

void write_profile_csv(const std::string& path, const ProfileScan& scan);
void write_survey_csv(const std::string& path, const SurveyResult& result);
void write_reliability_csv(const std::string& path, const ReliabilityBins& bins);

}  // namespace bnn
