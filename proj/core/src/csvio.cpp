#include "bnn/csvio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

constexpr const char* kRunSchema = "bnn.run.v1";
constexpr const char* kSweepSchema = "bnn.sweep.v1";
constexpr const char* kProfileSchema = "bnn.profile.v1";
constexpr const char* kSurveySchema = "bnn.survey.v1";
constexpr const char* kReliabilitySchema = "bnn.reliability.v1";

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write file: " + path);
    return out;
}

void expect_schema(std::ifstream& in, const std::string& path,
                   const std::string& schema) {
    std::string line;
    if (!std::getline(in, line) || line != "# schema=" + schema)
        throw BadCsv(path + ":1: expected '# schema=" + schema + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t line) {
    try {
        return std::stod(s);
    } catch (const std::exception&) {
        throw BadCsv(path + ":" + std::to_string(line) + ": bad number '" + s + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_run_csv(const std::string& path, const RunRecord& record,
                   bool with_walltime) {
    auto out = open_out(path);
    out << "# schema=" << kRunSchema << "\n";
    out << "epoch,train_nll,kl,elbo,val_accuracy,val_ece";
    if (with_walltime) out << ",wall_seconds";
    out << "\n";
    for (const auto& r : record.rows) {
        out << r.epoch << ',' << format_double(r.train_nll) << ','
            << format_double(r.kl) << ',' << format_double(r.elbo) << ','
            << format_double(r.val_accuracy) << ',' << format_double(r.val_ece);
        if (with_walltime) out << ',' << format_double(r.wall_seconds);
        out << "\n";
    }
}

RunRecord read_run_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    expect_schema(in, path, kRunSchema);
    std::string line;
    std::getline(in, line);  // header
    RunRecord record;
    std::size_t lineno = 2;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() < 6)
            throw BadCsv(path + ":" + std::to_string(lineno) + ": too few fields");
        EpochRow r;
        r.epoch = static_cast<std::size_t>(parse_double(f[0], path, lineno));
        r.train_nll = parse_double(f[1], path, lineno);
        r.kl = parse_double(f[2], path, lineno);
        r.elbo = parse_double(f[3], path, lineno);
        r.val_accuracy = parse_double(f[4], path, lineno);
        r.val_ece = parse_double(f[5], path, lineno);
        if (f.size() > 6) r.wall_seconds = parse_double(f[6], path, lineno);
        record.rows.push_back(r);
    }
    return record;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows,
                     bool with_walltime, const std::string& meta) {
    auto out = open_out(path);
    out << "# schema=" << kSweepSchema << "\n";
    if (!meta.empty()) out << "# meta=" << meta << "\n";
    out << "slope,seed,val_accuracy,val_ece,status";
    if (with_walltime) out << ",wall_seconds";
    out << "\n";
    for (const auto& r : rows) {
        out << format_double(r.slope) << ',' << r.seed << ','
            << format_double(r.val_accuracy) << ',' << format_double(r.val_ece)
            << ',' << (r.failed ? "failed" : "ok");
        if (with_walltime) out << ',' << format_double(r.wall_seconds);
        out << "\n";
    }
}

std::vector<SweepRow> read_sweep_csv(const std::string& path, std::string* meta) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open file: " + path);
    expect_schema(in, path, kSweepSchema);
    std::string line;
    std::getline(in, line);  // meta comment or header
    std::size_t lineno = 2;
    if (line.rfind("# meta=", 0) == 0) {
        if (meta) *meta = line.substr(7);
        std::getline(in, line);  // header
        ++lineno;
    } else if (meta) {
        meta->clear();
    }
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() < 5)
            throw BadCsv(path + ":" + std::to_string(lineno) + ": too few fields");
        SweepRow r;
        r.slope = parse_double(f[0], path, lineno);
        r.seed = static_cast<std::uint64_t>(parse_double(f[1], path, lineno));
        r.val_accuracy = parse_double(f[2], path, lineno);
        r.val_ece = parse_double(f[3], path, lineno);
        if (f[4] != "ok" && f[4] != "failed")
            throw BadCsv(path + ":" + std::to_string(lineno) +
                         ": bad status '" + f[4] + "'");
        r.failed = f[4] == "failed";
        if (f.size() > 5) r.wall_seconds = parse_double(f[5], path, lineno);
        rows.push_back(r);
    }
    return rows;
}

void write_profile_csv(const std::string& path, const ProfileScan& scan) {
    auto out = open_out(path);
    out << "# schema=" << kProfileSchema << "\n";
    out << "w,loglik,lik_normalized\n";
    // plotted likelihood is exp(loglik - max) to avoid underflow
    const double mx = *std::max_element(scan.loglik.begin(), scan.loglik.end());
    for (std::size_t i = 0; i < scan.grid.size(); ++i)
        out << format_double(scan.grid[i]) << ',' << format_double(scan.loglik[i])
            << ',' << format_double(std::exp(scan.loglik[i] - mx)) << "\n";
}

void write_survey_csv(const std::string& path, const SurveyResult& result) {
    auto out = open_out(path);
    out << "# schema=" << kSurveySchema << "\n";
    out << "layer,out_idx,in_idx,w_star,has_plateau,boundary_est,near_mode\n";
    for (const auto& e : result.entries) {
        out << e.addr.layer << ',' << e.addr.out_idx << ',' << e.addr.in_idx << ','
            << format_double(e.w_star) << ',' << (e.report.has_left_plateau ? 1 : 0)
            << ',' << format_double(e.report.plateau_boundary_est) << ','
            << (e.report.near_mode ? 1 : 0) << "\n";
    }
}

void write_reliability_csv(const std::string& path, const ReliabilityBins& bins) {
    auto out = open_out(path);
    out << "# schema=" << kReliabilitySchema << "\n";
    out << "bin_lo,bin_hi,count,mean_conf,acc\n";
    const double width = 1.0 / static_cast<double>(bins.n_bins);
    for (std::size_t b = 0; b < bins.n_bins; ++b) {
        out << format_double(width * static_cast<double>(b)) << ','
            << format_double(width * static_cast<double>(b + 1)) << ','
            << bins.bins[b].count << ',' << format_double(bins.bins[b].mean_conf)
            << ',' << format_double(bins.bins[b].accuracy) << "\n";
    }
}

}  // namespace bnn
