#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "bnn/config.hpp"
#include "experiments.hpp"

namespace {

bnn::Config load_config(const std::string& path,
                        const std::vector<std::string>& overrides) {
    bnn::Config cfg =
        path.empty() ? bnn::Config{} : bnn::Config::from_file(path);
    for (const auto& kv : overrides) cfg.set_override(kv);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian-neural-network calibration and likelihood-plateau "
                 "experiment driver"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", mode = "map", checkpoint;
    std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::string> overrides, report_inputs;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file of dotted keys");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("overrides", overrides, "key=value config overrides");
    };

    auto* train = app.add_subcommand("train", "train a MAP net or MFVI posterior");
    train->add_option("--mode", mode, "map or mfvi")->check(CLI::IsMember({"map", "mfvi"}));
    add_common(train);

    auto* probe = app.add_subcommand("probe", "likelihood profiles and plateau survey");
    probe->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    add_common(probe);

    auto* sweep = app.add_subcommand("sweep", "MFVI runs over slopes and seeds");
    sweep->add_option("--jobs", jobs, "concurrent trials");
    add_common(sweep);

    auto* decal = app.add_subcommand("decal", "per-epoch calibration curves per slope");
    add_common(decal);

    auto* report = app.add_subcommand("report", "aggregate sweep CSVs into a table");
    report->add_option("--out", out_dir, "output directory");
    report->add_option("csvs", report_inputs, "sweep CSV files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed())
            return bnn::cli::cmd_train(load_config(config_path, overrides), mode, out_dir);
        if (probe->parsed())
            return bnn::cli::cmd_probe(load_config(config_path, overrides), checkpoint, out_dir);
        if (sweep->parsed())
            return bnn::cli::cmd_sweep(load_config(config_path, overrides), out_dir, jobs);
        if (decal->parsed())
            return bnn::cli::cmd_decal(load_config(config_path, overrides), out_dir);
        if (report->parsed()) return bnn::cli::cmd_report(report_inputs, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
