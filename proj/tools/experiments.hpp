#pragma once

#include <string>
#include <vector>

#include "bnn/config.hpp"

namespace bnn::cli {

// Subcommand bodies for the experiment driver. Each returns a process
// exit code and writes its CSV/SVG artifacts into cfg's output directory.

int cmd_train(const Config& cfg, const std::string& mode, const std::string& out_dir);
int cmd_probe(const Config& cfg, const std::string& checkpoint,
              const std::string& out_dir);
int cmd_sweep(const Config& cfg, const std::string& out_dir, std::size_t jobs);
int cmd_decal(const Config& cfg, const std::string& out_dir);
int cmd_report(const std::vector<std::string>& sweep_csvs,
               const std::string& out_dir);

}  // namespace bnn::cli
